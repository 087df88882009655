//! P1 Galerkin solver for ∇·(σ∇u) = 0 in the disc with σ ∂u/∂ν = f on the circle.
//!
//! Boundary integrals are taken in the angle θ (ds = dθ on the unit circle) with
//! hat functions linear in θ; edges are split at any discontinuity of `f`
//! (electrode arc ends) before 3-point Gauss quadrature. The mean-zero gauge is
//! the Lagrange-multiplier one: solve on the complement of `span{c}` where
//! `c_i = ∫ N_i dθ`, which reduces to a pinned SPD factorization plus a shift.

use crate::error::{EitError, Result};
use crate::mesh::TriMesh;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use std::f64::consts::TAU;

// 3-point Gauss–Legendre on [0, 1].
const GAUSS_X: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const GAUSS_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

#[derive(Debug, Clone)]
pub struct PotentialSolution {
    pub nodal_values: Vec<f64>,
    /// Values at `mesh.boundary_nodes`, in the same order.
    pub boundary_trace: Vec<f64>,
}

pub fn validate_sigma(mesh: &TriMesh, sigma: &[f64]) -> Result<()> {
    if sigma.len() != mesh.triangles.len() {
        return Err(EitError::DimensionMismatch(format!(
            "{} conductivity values for {} triangles",
            sigma.len(),
            mesh.triangles.len()
        )));
    }
    match sigma.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
        Some(index) => Err(EitError::NonPositiveConductivity { index, value: sigma[index] }),
        None => Ok(()),
    }
}

/// A factorized forward problem for one conductivity; reuse it for many currents.
pub struct FemSolver<'m> {
    mesh: &'m TriMesh,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    /// ∫ N_i dθ per boundary node.
    mass: Vec<f64>,
    pin: usize,
}

impl<'m> FemSolver<'m> {
    pub fn new(mesh: &'m TriMesh, sigma: &[f64]) -> Result<Self> {
        validate_sigma(mesh, sigma)?;
        let n = mesh.nodes.len();
        // The centre node is interior at every level; pin it to remove the kernel.
        let pin = 0;
        let reduced = |i: usize| if i > pin { i - 1 } else { i };
        let mut trips = Vec::with_capacity(mesh.triangles.len() * 6);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let p = tri.map(|i| mesh.nodes[i]);
            let area = mesh.signed_area(t);
            let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
            let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
            let scale = sigma[t] / (4.0 * area);
            for i in 0..3 {
                for j in 0..3 {
                    if tri[i] == pin || tri[j] == pin || tri[j] > tri[i] {
                        continue;
                    }
                    let v = scale * (b[i] * b[j] + c[i] * c[j]);
                    trips.push(Triplet::new(reduced(tri[i]), reduced(tri[j]), v));
                }
            }
        }
        let k = SparseColMat::<usize, f64>::try_new_from_triplets(n - 1, n - 1, &trips)
            .map_err(|e| EitError::Internal(format!("stiffness assembly: {e:?}")))?;
        let llt =
            k.sp_cholesky(Side::Lower).map_err(|e| EitError::Internal(format!("stiffness factorization: {e:?}")))?;
        let mass = boundary_mass(mesh);
        Ok(Self { mesh, llt, mass, pin })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.mesh
    }

    pub fn boundary_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Solves for several boundary load vectors (length = boundary node count).
    pub fn solve_loads(&self, loads: &[Vec<f64>]) -> Result<Vec<PotentialSolution>> {
        let n = self.mesh.nodes.len();
        let nb = self.mesh.boundary_nodes.len();
        let msum: f64 = self.mass.iter().sum();
        let mut rhs = Mat::<f64>::zeros(n - 1, loads.len());
        for (col, f) in loads.iter().enumerate() {
            if f.len() != nb {
                return Err(EitError::DimensionMismatch("load vector length".into()));
            }
            let lambda = f.iter().sum::<f64>() / msum;
            for (i, &node) in self.mesh.boundary_nodes.iter().enumerate() {
                let r = if node > self.pin { node - 1 } else { node };
                rhs[(r, col)] = f[i] - lambda * self.mass[i];
            }
        }
        self.llt.solve_in_place(rhs.as_mut());
        let mut out = Vec::with_capacity(loads.len());
        for col in 0..loads.len() {
            let mut u: Vec<f64> = (0..n)
                .map(|i| match i.cmp(&self.pin) {
                    std::cmp::Ordering::Less => rhs[(i, col)],
                    std::cmp::Ordering::Equal => 0.0,
                    std::cmp::Ordering::Greater => rhs[(i - 1, col)],
                })
                .collect();
            if u.iter().any(|v| !v.is_finite()) {
                return Err(EitError::Internal("non-finite FEM solution".into()));
            }
            let shift = self.mesh.boundary_nodes.iter().zip(&self.mass).map(|(&b, m)| m * u[b]).sum::<f64>() / msum;
            u.iter_mut().for_each(|v| *v -= shift);
            let boundary_trace = self.mesh.boundary_nodes.iter().map(|&b| u[b]).collect();
            out.push(PotentialSolution { nodal_values: u, boundary_trace });
        }
        Ok(out)
    }

    pub fn solve_load(&self, load: &[f64]) -> Result<PotentialSolution> {
        Ok(self.solve_loads(&[load.to_vec()])?.remove(0))
    }
}

fn boundary_mass(mesh: &TriMesh) -> Vec<f64> {
    let nb = mesh.boundary_nodes.len();
    let mut m = vec![0.0; nb];
    for (i, (a, b)) in mesh.boundary_edge_spans().into_iter().enumerate() {
        let h = b - a;
        m[i] += 0.5 * h;
        m[(i + 1) % nb] += 0.5 * h;
    }
    m
}

/// Consistent load vector `F_i = ∫ f N_i dθ`. `breaks` lists angles where `f`
/// may jump; quadrature never straddles one.
pub fn load_vector(mesh: &TriMesh, f: &dyn Fn(f64) -> f64, breaks: &[f64]) -> Vec<f64> {
    let nb = mesh.boundary_nodes.len();
    let mut sorted: Vec<f64> = breaks.iter().map(|b| b.rem_euclid(TAU)).collect();
    sorted.sort_by(f64::total_cmp);
    let mut load = vec![0.0; nb];
    let mut cursor = 0;
    let mut pieces = Vec::with_capacity(4);
    for (i, (a, b)) in mesh.boundary_edge_spans().into_iter().enumerate() {
        pieces.clear();
        let mut lo = a;
        while cursor < sorted.len() && sorted[cursor] <= a {
            cursor += 1;
        }
        while cursor < sorted.len() && sorted[cursor] < b {
            pieces.push((lo, sorted[cursor]));
            lo = sorted[cursor];
            cursor += 1;
        }
        pieces.push((lo, b));
        let h = b - a;
        let (mut fa, mut fb) = (0.0, 0.0);
        for &(p, q) in &pieces {
            for (x, w) in GAUSS_X.iter().zip(GAUSS_W) {
                let th = p + x * (q - p);
                let v = f(th) * w * (q - p);
                let nb_ = (th - a) / h;
                fa += v * (1.0 - nb_);
                fb += v * nb_;
            }
        }
        load[i] += fa;
        load[(i + 1) % nb] += fb;
    }
    load
}

/// One-shot solve for a mean-free boundary current density `current(θ)`.
pub fn solve_neumann(mesh: &TriMesh, sigma: &[f64], current: impl Fn(f64) -> f64) -> Result<PotentialSolution> {
    let load = load_vector(mesh, &current, &[]);
    let total: f64 = load.iter().sum();
    let scale: f64 = load.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if total.abs() > 1e-10 * scale {
        return Err(EitError::NotMeanFree(total));
    }
    FemSolver::new(mesh, sigma)?.solve_load(&load)
}

/// `∫ trace · g dθ` computed against a load vector of `g` — the natural pairing
/// under which the discrete ND map is symmetric.
pub fn pair(load: &[f64], sol: &PotentialSolution) -> f64 {
    load.iter().zip(&sol.boundary_trace).map(|(a, b)| a * b).sum()
}
