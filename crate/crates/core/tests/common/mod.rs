//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's solvers; only plain data types are borrowed.
#![allow(dead_code)]

use dbar_core::image::ConductivityImage;
use dbar_core::scattering::{KGrid, ScatteringData};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// μ on every grid node from the dense real-linear system
///   μ(κ) − h² Σ_{k≠κ} (1/(π(κ−k))) w(k) conj μ(k) = 1,
/// w(k) = t(k) exp(−2i Re(kz)) / (4π k̄), w(0) = 0.
pub fn dense_dbar(t: &ScatteringData, z: Complex64) -> Vec<Complex64> {
    let g = t.grid;
    let n = g.len();
    let h2 = g.step() * g.step();
    let ks: Vec<Complex64> = (0..n).map(|i| g.k(i / g.size, i % g.size)).collect();
    let w: Vec<Complex64> = (0..n)
        .map(|i| {
            let k = ks[i];
            if k.norm() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                t.values[i] * Complex64::from_polar(1.0, -2.0 * (k * z).re) / (4.0 * PI * k.conj())
            }
        })
        .collect();
    // unknowns: [Re μ; Im μ]. For c = a·conj(μ_k): Re c = a.re·x + a.im·y, Im c = a.im·x − a.re·y.
    let mut a = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        a[i][i] = 1.0;
        a[n + i][n + i] = 1.0;
        for j in 0..n {
            if i == j || w[j] == Complex64::new(0.0, 0.0) {
                continue;
            }
            let c = h2 * w[j] / (PI * (ks[i] - ks[j]));
            a[i][j] -= c.re;
            a[i][n + j] -= c.im;
            a[n + i][j] -= c.im;
            a[n + i][n + j] += c.re;
        }
    }
    let mut b = vec![0.0; 2 * n];
    b[..n].iter_mut().for_each(|v| *v = 1.0);
    let x = dense_solve(a, b);
    (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect()
}

/// Random t inside the support, zero at k = 0, entries bounded by `amp`.
pub fn random_admissible_t(grid: KGrid, amp: f64, seed: u64) -> ScatteringData {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut t = ScatteringData::zeros(grid, f64::INFINITY);
    for r in 0..grid.size {
        for c in 0..grid.size {
            let k = grid.k(r, c);
            if grid.in_support(k) {
                t.values[r * grid.size + c] = Complex64::new(amp * next(), amp * next());
            } else {
                next();
                next();
            }
        }
    }
    t
}

/// Smooth small-contrast bump: 1 + amp·(1 − |z−c|²/ρ²)³ inside the disc of radius ρ.
pub fn bump_sigma(x: f64, y: f64, c: [f64; 2], rho: f64, amp: f64) -> f64 {
    let r2 = ((x - c[0]).powi(2) + (y - c[1]).powi(2)) / (rho * rho);
    if r2 < 1.0 {
        1.0 + amp * (1.0 - r2).powi(3)
    } else {
        1.0
    }
}

/// q̂(ξ) = ∫ e^{−iξ·x} q(x) dx for q = Δ√σ / √σ, by a five-point Laplacian
/// and a tensor midpoint rule on [−1,1]² with `n` cells per side.
pub fn q_hat(sigma: impl Fn(f64, f64) -> f64, xi: [f64; 2], n: usize) -> Complex64 {
    let h = 2.0 / n as f64;
    let f = |x: f64, y: f64| sigma(x, y).sqrt();
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let x = -1.0 + (i as f64 + 0.5) * h;
            let y = -1.0 + (j as f64 + 0.5) * h;
            let lap = (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4.0 * f(x, y)) / (h * h);
            if lap == 0.0 {
                continue;
            }
            s += Complex64::from_polar(1.0, -(xi[0] * x + xi[1] * y)) * (lap / f(x, y)) * (h * h);
        }
    }
    s
}

/// Inclusion-region mean and background-annulus mean (0.7 ≤ |z| ≤ 0.9,
/// excluding pixels within `margin` of the inclusion).
pub fn region_means(img: &ConductivityImage, center: [f64; 2], radius: f64, margin: f64) -> (f64, f64) {
    let (mut si, mut ni, mut sb, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for row in 0..img.size {
        for col in 0..img.size {
            let p = img.pixel_center(row, col);
            let dc = (p[0] - center[0]).hypot(p[1] - center[1]);
            let r = p[0].hypot(p[1]);
            if dc < radius {
                si += img.get(row, col);
                ni += 1;
            } else if (0.7..=0.9).contains(&r) && dc > radius + margin {
                sb += img.get(row, col);
                nb += 1;
            }
        }
    }
    (si / ni as f64, sb / nb as f64)
}

/// max over pixels with |z| ≤ radius of |img − value| / value.
pub fn max_rel_deviation(img: &ConductivityImage, value: f64, radius: f64) -> f64 {
    let mut d: f64 = 0.0;
    for row in 0..img.size {
        for col in 0..img.size {
            let p = img.pixel_center(row, col);
            if p[0].hypot(p[1]) <= radius {
                d = d.max((img.get(row, col) - value).abs() / value);
            }
        }
    }
    d
}

/// Hand evaluation of SSIM for two constant images (only the luminance term survives).
pub fn ssim_constants(a: f64, b: f64, dynamic_range: f64) -> f64 {
    let c1 = (0.01 * dynamic_range).powi(2);
    (2.0 * a * b + c1) / (a * a + b * b + c1)
}
