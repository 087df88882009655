//! The low-pass D-bar integral equation
//!
//!   μ(z,κ) = 1 + (1/4π²) ∫_{|k|≤R} t(k) e(z,−k) / ((κ−k) k̄) · conj μ(z,k) dk,
//!
//! discretized on the k-grid as μ = 1 + h² G ∗ (w · conj μ) with
//! G(ζ) = 1/(πζ), G(0) = 0 and w = t e(z,−k)/(4π k̄). Because w vanishes
//! outside |k| ≤ R, the real-linear system is solved only on the square index
//! box covering that disc; the FFT size for the box convolution is at least
//! 2B−1 so the circular product is the exact grid sum. The full-grid μ, when
//! wanted, is one more convolution on the doubled grid.

use crate::error::{EitError, Result};
use crate::gmres::{gmres, GmresConfig};
use crate::image::ConductivityImage;
use crate::scattering::{KGrid, ScatteringData};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct MuField {
    pub grid: KGrid,
    /// Row-major over `grid`.
    pub values: Vec<Complex64>,
    pub z: Complex64,
}

impl MuField {
    pub fn at_zero(&self) -> Complex64 {
        let c = self.grid.center();
        self.values[c * self.grid.size + c]
    }
}

#[derive(Debug, Clone)]
pub struct ReconImage {
    pub image: ConductivityImage,
    pub sigma0: f64,
    /// max over pixels of |Im μ(z,0)|.
    pub mu_imag_max: f64,
    /// max over pixels of |Im μ(z,0)| / |μ(z,0)|.
    pub mu_imag_rel_max: f64,
    pub max_iterations: usize,
}

/// Smallest n' ≥ n whose only prime factors are 2, 3, 5.
fn fft_friendly(n: usize) -> usize {
    (n..)
        .find(|&m| {
            let mut k = m;
            for p in [2, 3, 5] {
                while k % p == 0 {
                    k /= p;
                }
            }
            k == 1
        })
        .expect("unbounded search")
}

/// Square 2D FFT on a row-major buffer. `forward` leaves the spectrum
/// transposed and `inverse` expects that layout, which saves two transposes
/// per convolution. Only the first `live` rows of the input may be nonzero.
struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    fn scratch_len(&self) -> usize {
        self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())
    }

    fn transpose(&self, data: &mut [Complex64]) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    fn forward(&self, data: &mut [Complex64], live: usize, scratch: &mut [Complex64]) {
        let n = self.n;
        self.fwd.process_with_scratch(&mut data[..live * n], scratch);
        self.transpose(data);
        self.fwd.process_with_scratch(data, scratch);
    }

    /// Unnormalized inverse; only the first `live` output rows are valid.
    fn inverse(&self, data: &mut [Complex64], live: usize, scratch: &mut [Complex64]) {
        let n = self.n;
        self.inv.process_with_scratch(data, scratch);
        self.transpose(data);
        self.inv.process_with_scratch(&mut data[..live * n], scratch);
    }
}

/// Spectrum of G on offsets (−(b−1)..b−1)² wrapped into an n×n array.
fn green_spectrum(fft: &Fft2, b: usize, h: f64) -> Vec<Complex64> {
    let n = fft.n;
    let mut g = vec![Complex64::new(0.0, 0.0); n * n];
    let span = b as isize - 1;
    for dr in -span..=span {
        for dc in -span..=span {
            if dr == 0 && dc == 0 {
                continue;
            }
            let zeta = Complex64::new(dc as f64 * h, dr as f64 * h);
            let (r, c) = (dr.rem_euclid(n as isize) as usize, dc.rem_euclid(n as isize) as usize);
            g[r * n + c] = 1.0 / (PI * zeta);
        }
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.scratch_len()];
    fft.forward(&mut g, n, &mut scratch);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DbarOptions {
    pub gmres: GmresConfig,
}

/// Precomputed state for solving at many pixels with the same t.
pub struct DbarSolver {
    grid: KGrid,
    /// Box side B and offset of its first node in the full grid.
    side: usize,
    origin: usize,
    /// t(k)/(4π k̄) on the box (zero at k = 0 and outside the support).
    t_over_k: Vec<Complex64>,
    k_box: Vec<Complex64>,
    fft: Fft2,
    green_hat: Vec<Complex64>,
    options: DbarOptions,
    trivial: bool,
}

impl DbarSolver {
    pub fn new(t: &ScatteringData, options: DbarOptions) -> Result<Self> {
        let grid = t.grid;
        if t.values.len() != grid.len() {
            return Err(EitError::DimensionMismatch("scattering values do not match the grid".into()));
        }
        let m = grid.support_radius_nodes();
        let side = 2 * m + 1;
        let origin = grid.center() - m;
        let mut t_over_k = Vec::with_capacity(side * side);
        let mut k_box = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                let k = grid.k(origin + r, origin + c);
                let tk = t.get(origin + r, origin + c);
                k_box.push(k);
                t_over_k.push(if grid.in_support(k) { tk / (4.0 * PI * k.conj()) } else { Complex64::new(0.0, 0.0) });
            }
        }
        // Every nonzero sample must sit inside the box.
        let n = grid.size;
        for (idx, v) in t.values.iter().enumerate() {
            let (r, c) = (idx / n, idx % n);
            let inside = (origin..origin + side).contains(&r) && (origin..origin + side).contains(&c);
            if !inside && *v != Complex64::new(0.0, 0.0) {
                return Err(EitError::InvalidArgument("scattering data is nonzero outside |k| ≤ R".into()));
            }
        }
        let trivial = t_over_k.iter().all(|v| *v == Complex64::new(0.0, 0.0));
        let fft = Fft2::new(fft_friendly(2 * side - 1));
        let green_hat = green_spectrum(&fft, side, grid.step());
        Ok(Self { grid, side, origin, t_over_k, k_box, fft, green_hat, options, trivial })
    }

    /// w(k) = t(k) e(z,−k)/(4π k̄) on the box.
    fn weights(&self, z: Complex64) -> Vec<Complex64> {
        self.t_over_k
            .iter()
            .zip(&self.k_box)
            .map(
                |(tk, k)| {
                    if *tk == Complex64::new(0.0, 0.0) {
                        *tk
                    } else {
                        tk * Complex64::from_polar(1.0, -2.0 * (k * z).re)
                    }
                },
            )
            .collect()
    }

    /// μ on the box, plus GMRES statistics.
    pub fn solve_box(&self, z: Complex64) -> Result<(Vec<Complex64>, usize)> {
        let nb = self.side * self.side;
        if self.trivial {
            return Ok((vec![Complex64::new(1.0, 0.0); nb], 0));
        }
        let w = self.weights(z);
        let h2 = self.grid.step().powi(2);
        let (p, b) = (self.fft.n, self.side);
        let buf = std::cell::RefCell::new((
            vec![Complex64::new(0.0, 0.0); p * p],
            vec![Complex64::new(0.0, 0.0); self.fft.scratch_len()],
        ));
        let apply = |x: &[f64], out: &mut [f64]| {
            let (data, scratch) = &mut *buf.borrow_mut();
            data.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for r in 0..b {
                for c in 0..b {
                    let i = r * b + c;
                    data[r * p + c] = w[i] * Complex64::new(x[i], -x[nb + i]);
                }
            }
            self.fft.forward(data, b, scratch);
            data.iter_mut().zip(&self.green_hat).for_each(|(d, g)| *d *= g);
            self.fft.inverse(data, b, scratch);
            let scale = h2 / (p * p) as f64;
            for r in 0..b {
                for c in 0..b {
                    let i = r * b + c;
                    let conv = data[r * p + c] * scale;
                    out[i] = x[i] - conv.re;
                    out[nb + i] = x[nb + i] - conv.im;
                }
            }
        };
        let mut rhs = vec![0.0; 2 * nb];
        rhs[..nb].iter_mut().for_each(|v| *v = 1.0);
        let res = gmres(apply, &rhs, rhs.clone(), &self.options.gmres);
        if !res.converged {
            return Err(EitError::NoConvergence { iterations: res.iterations, residual: res.residual });
        }
        let mu = (0..nb).map(|i| Complex64::new(res.x[i], res.x[nb + i])).collect();
        Ok((mu, res.iterations))
    }

    pub fn mu_at_zero(&self, z: Complex64) -> Result<(Complex64, usize)> {
        let (mu, it) = self.solve_box(z)?;
        let m = self.side / 2;
        Ok((mu[m * self.side + m], it))
    }

    /// μ on the whole grid: the box solve, then the grid-doubled convolution.
    pub fn solve_full(&self, z: Complex64) -> Result<MuField> {
        let (mu_box, _) = self.solve_box(z)?;
        let n = self.grid.size;
        let mut values = vec![Complex64::new(1.0, 0.0); n * n];
        if !self.trivial {
            let w = self.weights(z);
            let fft = Fft2::new(2 * n);
            let p = fft.n;
            // kernel offsets up to ±(n−1) cover any (κ in grid, k in box) pair
            let green = green_spectrum(&fft, n, self.grid.step());
            let mut data = vec![Complex64::new(0.0, 0.0); p * p];
            for r in 0..self.side {
                for c in 0..self.side {
                    let i = r * self.side + c;
                    data[(self.origin + r) * p + self.origin + c] = w[i] * mu_box[i].conj();
                }
            }
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.scratch_len()];
            fft.forward(&mut data, self.origin + self.side, &mut scratch);
            data.iter_mut().zip(&green).for_each(|(d, g)| *d *= g);
            fft.inverse(&mut data, n, &mut scratch);
            let scale = self.grid.step().powi(2) / (p * p) as f64;
            for r in 0..n {
                for c in 0..n {
                    values[r * n + c] += data[r * p + c] * scale;
                }
            }
            for r in 0..self.side {
                for c in 0..self.side {
                    values[(self.origin + r) * n + self.origin + c] = mu_box[r * self.side + c];
                }
            }
        }
        Ok(MuField { grid: self.grid, values, z })
    }
}

pub fn solve_dbar(t: &ScatteringData, z: Complex64) -> Result<MuField> {
    DbarSolver::new(t, DbarOptions::default())?.solve_full(z)
}

/// σ(z) = (Re μ(z,0))² · σ0.
pub fn recover_sigma(mu: &MuField, sigma0: f64) -> f64 {
    mu.at_zero().re.powi(2) * sigma0
}

/// Per-pixel solves over the `size`×`size` grid on [−1,1]².
pub fn reconstruct_image(t: &ScatteringData, size: usize, sigma0: f64) -> Result<ReconImage> {
    reconstruct_image_with(t, size, sigma0, DbarOptions::default())
}

pub fn reconstruct_image_with(
    t: &ScatteringData,
    size: usize,
    sigma0: f64,
    options: DbarOptions,
) -> Result<ReconImage> {
    if !(sigma0 > 0.0) {
        return Err(EitError::InvalidArgument("sigma0 must be positive".into()));
    }
    let solver = DbarSolver::new(t, options)?;
    let template = ConductivityImage::constant(size, 0.0);
    let results: Vec<Result<(Complex64, usize)>> = (0..size * size)
        .into_par_iter()
        .map(|idx| {
            let p = template.pixel_center(idx / size, idx % size);
            solver.mu_at_zero(Complex64::new(p[0], p[1]))
        })
        .collect();
    let mut values = Vec::with_capacity(size * size);
    let (mut imag_max, mut imag_rel, mut iters) = (0.0f64, 0.0f64, 0usize);
    for r in results {
        let (mu0, it) = r?;
        values.push(mu0.re.powi(2) * sigma0);
        imag_max = imag_max.max(mu0.im.abs());
        imag_rel = imag_rel.max(mu0.im.abs() / mu0.norm());
        iters = iters.max(it);
    }
    Ok(ReconImage {
        image: ConductivityImage::from_values(size, values)?,
        sigma0,
        mu_imag_max: imag_max,
        mu_imag_rel_max: imag_rel,
        max_iterations: iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_gives_unit_mu() {
        let g = KGrid::standard(4.5).unwrap();
        let t = ScatteringData::zeros(g, 24.0);
        let mu = solve_dbar(&t, Complex64::new(0.3, -0.2)).unwrap();
        assert!(mu.values.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        let img = reconstruct_image(&t, 64, 0.3).unwrap();
        assert!(img.image.values.iter().all(|v| (*v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn recover_sigma_examples() {
        let g = KGrid::new(8, 3.0, 2.0).unwrap();
        let mut mu = MuField { grid: g, values: vec![Complex64::new(1.0, 0.0); 64], z: Complex64::new(0.0, 0.0) };
        assert_eq!(recover_sigma(&mu, 1.0), 1.0);
        assert!((recover_sigma(&mu, 0.3) - 0.3).abs() < 1e-15);
        mu.values[4 * 8 + 4] = Complex64::new(1.2, 0.0);
        assert!((recover_sigma(&mu, 1.0) - 1.44).abs() < 1e-14);
    }

    #[test]
    fn fft_sizes() {
        assert_eq!(fft_friendly(53), 54);
        assert_eq!(fft_friendly(64), 64);
        assert_eq!(fft_friendly(97), 100);
    }

    #[test]
    fn data_outside_box_rejected() {
        let g = KGrid::new(16, 4.0, 1.0).unwrap();
        let mut t = ScatteringData::zeros(g, 24.0);
        t.values[0] = Complex64::new(1.0, 0.0);
        assert!(DbarSolver::new(&t, DbarOptions::default()).is_err());
    }
}
