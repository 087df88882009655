//! Born-approximation scattering data t^exp(k) on a square k-grid, from
//! continuum (trig-basis) or electrode (pattern-basis) DN matrices.

use crate::electrode::{BasisInfo, DNMatrix, DiscretePatternSet, MatrixKind};
use crate::error::{EitError, Result};
use crate::io::write_atomic;
use crate::linalg::Matrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;

/// Trapezoid points on the circle for the continuum expansions.
pub const BOUNDARY_QUADRATURE: usize = 512;

/// Computational half-width as a multiple of the cutoff radius.
pub const HALF_WIDTH_FACTOR: f64 = 2.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KGrid {
    pub size: usize,
    /// s: nodes run over [−s, s) with step 2s/size.
    pub half_width: f64,
    pub cutoff_radius: f64,
}

impl KGrid {
    pub fn new(size: usize, half_width: f64, cutoff_radius: f64) -> Result<Self> {
        if size < 4 || size % 2 != 0 {
            return Err(EitError::InvalidArgument(format!("grid size {size} must be even and ≥ 4")));
        }
        if !(cutoff_radius > 0.0) || !(cutoff_radius <= half_width) {
            return Err(EitError::InvalidArgument(format!(
                "need 0 < R ≤ s, got R = {cutoff_radius}, s = {half_width}"
            )));
        }
        Ok(Self { size, half_width, cutoff_radius })
    }

    /// 64×64 grid with s = 2.3R.
    pub fn standard(cutoff_radius: f64) -> Result<Self> {
        Self::new(64, HALF_WIDTH_FACTOR * cutoff_radius, cutoff_radius)
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.size as f64
    }

    pub fn center(&self) -> usize {
        self.size / 2
    }

    /// Node k = k1 + i k2; columns run along k1, rows along k2.
    pub fn k(&self, row: usize, col: usize) -> Complex64 {
        let h = self.step();
        let c = self.center() as f64;
        Complex64::new((col as f64 - c) * h, (row as f64 - c) * h)
    }

    pub fn len(&self) -> usize {
        self.size * self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Grid index of −k, if it is on the grid.
    pub fn negated(&self, row: usize, col: usize) -> Option<(usize, usize)> {
        let c = self.center();
        let (r, q) = (2 * c as isize - row as isize, 2 * c as isize - col as isize);
        let n = self.size as isize;
        ((0..n).contains(&r) && (0..n).contains(&q)).then_some((r as usize, q as usize))
    }

    pub fn in_support(&self, k: Complex64) -> bool {
        k.norm() <= self.cutoff_radius && k != Complex64::new(0.0, 0.0)
    }

    /// Half-width (in nodes) of the square index box around k = 0 that
    /// contains the whole disc |k| ≤ R.
    pub fn support_radius_nodes(&self) -> usize {
        ((self.cutoff_radius / self.step()).floor() as usize).min(self.center() - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringData {
    pub grid: KGrid,
    /// Row-major over the grid.
    pub values: Vec<Complex64>,
    pub threshold: f64,
}

impl ScatteringData {
    pub fn zeros(grid: KGrid, threshold: f64) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()], threshold }
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.grid.size + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    /// max |t(−k) − conj t(k)| over nodes whose mirror is on the grid.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let n = self.grid.size;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                if let Some((rr, cc)) = self.grid.negated(r, c) {
                    worst = worst.max((self.get(rr, cc) - self.get(r, c).conj()).norm());
                }
            }
        }
        worst
    }
}

/// Zeroes values outside 0 < |k| ≤ R and those with |Re| or |Im| above
/// `t_max`. Returns how many nonzero in-support values the threshold removed.
pub fn apply_support_and_threshold(values: &mut [Complex64], grid: &KGrid, t_max: f64) -> usize {
    let n = grid.size;
    let mut removed = 0;
    for r in 0..n {
        for c in 0..n {
            let v = &mut values[r * n + c];
            if !grid.in_support(grid.k(r, c)) {
                *v = Complex64::new(0.0, 0.0);
            } else if v.re.abs() > t_max || v.im.abs() > t_max || !v.re.is_finite() || !v.im.is_finite() {
                *v = Complex64::new(0.0, 0.0);
                removed += 1;
            }
        }
    }
    removed
}

fn check_pair(a: &DNMatrix, b: &DNMatrix) -> Result<Matrix> {
    if !a.scaled_to_unit || !b.scaled_to_unit {
        return Err(EitError::InvalidArgument("DN matrices must be scaled to the unit disc".into()));
    }
    if a.basis != b.basis {
        return Err(EitError::DimensionMismatch("DN matrices are in different bases".into()));
    }
    a.entries.sub(&b.entries)
}

fn evaluate_on_grid(grid: &KGrid, t_max: f64, f: impl Fn(Complex64) -> Complex64 + Sync) -> ScatteringData {
    let n = grid.size;
    let mut values: Vec<Complex64> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let k = grid.k(idx / n, idx % n);
            if grid.in_support(k) {
                f(k)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    apply_support_and_threshold(&mut values, grid, t_max);
    ScatteringData { grid: *grid, values, threshold: t_max }
}

/// t(k) = ∫ e^{ik̄z̄} (Λσ − Λ1) e^{ikz} dθ with both exponentials expanded in
/// the trig basis by trapezoid quadrature.
pub fn scattering_born_continuum(
    dn_sigma: &DNMatrix,
    dn_one: &DNMatrix,
    kgrid: &KGrid,
    threshold: f64,
) -> Result<ScatteringData> {
    let delta = check_pair(dn_sigma, dn_one)?;
    let basis = match (&dn_sigma.basis, dn_sigma.kind) {
        (BasisInfo::Trig { basis, .. }, MatrixKind::Continuum) => basis,
        _ => return Err(EitError::InvalidArgument("continuum scattering needs trig-basis DN matrices".into())),
    };
    let q = BOUNDARY_QUADRATURE;
    let w = TAU / q as f64;
    let thetas: Vec<f64> = (0..q).map(|j| w * j as f64).collect();
    let phis: Vec<Vec<f64>> =
        basis.indices.iter().map(|&n| thetas.iter().map(|&t| crate::electrode::phi(n, t)).collect()).collect();
    let zs: Vec<Complex64> = thetas.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    let i = Complex64::i();
    Ok(evaluate_on_grid(kgrid, threshold, |k| {
        let e: Vec<Complex64> = zs.iter().map(|z| (i * k * z).exp()).collect();
        let eb: Vec<Complex64> = zs.iter().map(|z| (i * k.conj() * z.conj()).exp()).collect();
        let a: Vec<Complex64> =
            phis.iter().map(|p| p.iter().zip(&e).map(|(x, y)| y * x).sum::<Complex64>() * w).collect();
        let b: Vec<Complex64> =
            phis.iter().map(|p| p.iter().zip(&eb).map(|(x, y)| y * x).sum::<Complex64>() * w).collect();
        bilinear(&b, &delta, &a)
    }))
}

fn bilinear(b: &[Complex64], m: &Matrix, a: &[Complex64]) -> Complex64 {
    let d = m.rows();
    let mut s = Complex64::new(0.0, 0.0);
    for r in 0..d {
        let mut row = Complex64::new(0.0, 0.0);
        for c in 0..d {
            row += m[(r, c)] * a[c];
        }
        s += b[r] * row;
    }
    s
}

/// Orthogonal projection of `v` onto the span of the (orthonormal) pattern columns.
pub fn project_onto_patterns(v: &[Complex64], patterns: &DiscretePatternSet) -> Vec<Complex64> {
    let coeffs = pattern_coefficients(v, patterns);
    let c = &patterns.current_matrix;
    (0..c.rows()).map(|e| (0..c.cols()).map(|m| c[(e, m)] * coeffs[m]).sum()).collect()
}

fn pattern_coefficients(v: &[Complex64], patterns: &DiscretePatternSet) -> Vec<Complex64> {
    let c = &patterns.current_matrix;
    (0..c.cols()).map(|m| (0..c.rows()).map(|e| c[(e, m)] * v[e]).sum()).collect()
}

/// e^ψ(k): the electrode samples of e^{ikz} projected onto the pattern span.
pub fn expand_asymptotics(k: Complex64, centers: &[Complex64], patterns: &DiscretePatternSet) -> Vec<Complex64> {
    let e: Vec<Complex64> = centers.iter().map(|z| (Complex64::i() * k * z).exp()).collect();
    project_onto_patterns(&e, patterns)
}

/// t(k) ≈ (2π/L) [e^{ik̄z̄_ℓ}]ᵀ Φ (Lσ − L1) Φᵀ e^ψ(k).
pub fn scattering_born_discrete(
    dn_sigma: &DNMatrix,
    dn_one: &DNMatrix,
    patterns: &DiscretePatternSet,
    centers: &[Complex64],
    kgrid: &KGrid,
    threshold: f64,
) -> Result<ScatteringData> {
    let delta = check_pair(dn_sigma, dn_one)?;
    let l = patterns.l;
    if centers.len() != l || delta.rows() != l - 1 || patterns.current_matrix.cols() != l - 1 {
        return Err(EitError::DimensionMismatch(format!(
            "L = {l}: {} centers, {}x{} DN difference",
            centers.len(),
            delta.rows(),
            delta.cols()
        )));
    }
    if centers.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
        return Err(EitError::InvalidArgument("electrode centers must lie on |z| = 1".into()));
    }
    let i = Complex64::i();
    Ok(evaluate_on_grid(kgrid, threshold, |k| {
        let psi = expand_asymptotics(k, centers, patterns);
        let a = pattern_coefficients(&psi, patterns);
        let eb: Vec<Complex64> = centers.iter().map(|z| (i * k.conj() * z.conj()).exp()).collect();
        let b = pattern_coefficients(&eb, patterns);
        bilinear(&b, &delta, &a) * (TAU / l as f64)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringHeader {
    pub size: usize,
    pub s: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "T_max")]
    pub t_max: f64,
}

/// JSON header at `path`, raw (Re, Im) f64le pairs at `path.with_extension("f64")`.
pub fn write_scattering(data: &ScatteringData, path: &Path) -> Result<()> {
    let header = ScatteringHeader {
        size: data.grid.size,
        s: data.grid.half_width,
        r: data.grid.cutoff_radius,
        t_max: data.threshold,
    };
    let bytes: Vec<u8> =
        data.values.iter().flat_map(|v| v.re.to_le_bytes().into_iter().chain(v.im.to_le_bytes())).collect();
    write_atomic(&path.with_extension("f64"), &bytes)?;
    crate::io::write_json(path, &header)
}

pub fn read_scattering(path: &Path) -> Result<ScatteringData> {
    let h: ScatteringHeader = crate::io::read_json(path)?;
    let grid = KGrid::new(h.size, h.s, h.r)?;
    let bytes = std::fs::read(path.with_extension("f64"))?;
    if bytes.len() != 16 * grid.len() {
        return Err(EitError::Format(format!("scattering payload has {} bytes", bytes.len())));
    }
    let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8 bytes"));
    let values = bytes.chunks_exact(16).map(|c| Complex64::new(f(&c[..8]), f(&c[8..]))).collect();
    Ok(ScatteringData { grid, values, threshold: h.t_max })
}
