//! Restarted GMRES for real, matrix-free operators.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub max_iter: usize,
    /// Relative residual ‖b − Ax‖/‖b‖ to reach.
    pub tol: f64,
    pub restart: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6, restart: 30 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x0`. `apply(v, out)` writes `A v` into `out`.
pub fn gmres(apply: impl Fn(&[f64], &mut [f64]), b: &[f64], x0: Vec<f64>, cfg: &GmresConfig) -> GmresResult {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0;
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return GmresResult { x, iterations: 0, residual: 0.0, converged: true };
    }
    let m = cfg.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let (mut cs, mut sn, mut g) = (vec![0.0; m], vec![0.0; m], vec![0.0; m + 1]);
    let mut iterations = 0;

    let residual_of = |x: &[f64], r: &mut [f64]| {
        apply(x, r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        norm(r)
    };

    let mut beta = residual_of(&x, &mut r);
    loop {
        if beta / bnorm <= cfg.tol {
            return GmresResult { x, iterations, residual: beta / bnorm, converged: true };
        }
        if iterations >= cfg.max_iter {
            return GmresResult { x, iterations, residual: beta / bnorm, converged: false };
        }
        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut k = 0;
        while k < m && iterations < cfg.max_iter {
            apply(&basis[k], &mut w);
            // modified Gram–Schmidt
            for (j, vj) in basis.iter().enumerate() {
                let hij = dot(&w, vj);
                h[j][k] = hij;
                w.iter_mut().zip(vj).for_each(|(wi, vi)| *wi -= hij * vi);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            (cs[k], sn[k]) = if d == 0.0 { (1.0, 0.0) } else { (h[k][k] / d, h[k + 1][k] / d) };
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            iterations += 1;
            k += 1;
            if (g[k].abs() / bnorm) <= cfg.tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the k×k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[j]).for_each(|(xi, vi)| *xi += yj * vi);
        }
        beta = residual_of(&x, &mut r);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn test_matrix(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| if i == j { 3.0 + i as f64 * 0.1 } else { ((i * 7 + j * 3) as f64).sin() * 0.3 })
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 40;
        let a = test_matrix(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let cfg = GmresConfig { max_iter: 500, tol: 1e-12, restart: 10 };
        let res = gmres(|v, out| out.copy_from_slice(&a.matvec(v)), &b, vec![0.0; n], &cfg);
        assert!(res.converged, "{res:?}");
        let ax = a.matvec(&res.x);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-10);
    }

    #[test]
    fn exact_initial_guess_returns_immediately() {
        let b = vec![1.0; 5];
        let res = gmres(|v, out| out.copy_from_slice(v), &b, b.clone(), &GmresConfig::default());
        assert_eq!(res.iterations, 0);
        assert_eq!(res.x, b);
    }

    #[test]
    fn reports_non_convergence() {
        let n = 30;
        let a = test_matrix(n);
        let b = vec![1.0; n];
        let cfg = GmresConfig { max_iter: 2, tol: 1e-14, restart: 30 };
        let res = gmres(|v, out| out.copy_from_slice(&a.matvec(v)), &b, vec![0.0; n], &cfg);
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
    }
}
