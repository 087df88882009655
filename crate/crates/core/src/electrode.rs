//! Boundary measurement operators: ND/DN matrices in the orthonormal
//! trigonometric basis (continuum data) or in the normalized trig current
//! pattern basis (electrode data), plus their scalings and noise model.
//!
//! Unit conventions. Continuum matrices are dimensionless unit-disc operators.
//! For electrode data the "calibrated" convention is used throughout: a
//! voltage column `v^n` is what the summation Σ_ℓ t^m_ℓ v^n_ℓ / |e_ℓ| needs
//! to return the pattern-basis ND operator of the unit disc, i.e.
//! `v_ℓ = |e_ℓ| · V_ℓ` with
//! `V_ℓ` the arc-averaged potential when electrode ℓ carries the current
//! density `(2π/L)·t^n_ℓ / w` (w = angular electrode width). Real hardware
//! exports differ by a global unit factor, which `estimate_sigma0` absorbs.

use crate::error::{EitError, Result};
use crate::fem::{load_vector, pair, FemSolver};
use crate::linalg::Matrix;
use crate::mesh::TriMesh;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Inversion is refused above this 2-norm condition number.
pub const MAX_CONDITION: f64 = 1e12;

/// Fourier modes kept in the closed-form homogeneous ND series.
const SERIES_MODES: usize = 8192;

/// φ_n(θ) = sin(nθ)/√π for n < 0, cos(nθ)/√π for n > 0.
pub fn phi(n: i32, theta: f64) -> f64 {
    let x = n as f64 * theta;
    if n < 0 {
        x.sin() / PI.sqrt()
    } else {
        x.cos() / PI.sqrt()
    }
}

/// ∫_a^b φ_n dθ.
fn phi_integral(n: i32, a: f64, b: f64) -> f64 {
    let nf = n as f64;
    if n < 0 {
        ((nf * a).cos() - (nf * b).cos()) / (nf * PI.sqrt())
    } else {
        ((nf * b).sin() - (nf * a).sin()) / (nf * PI.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeArc {
    /// Center angle (rad).
    pub center: f64,
    /// Angular width (rad).
    pub width: f64,
}

impl ElectrodeArc {
    pub fn start(&self) -> f64 {
        self.center - 0.5 * self.width
    }

    pub fn end(&self) -> f64 {
        self.center + 0.5 * self.width
    }

    pub fn contains(&self, theta: f64) -> bool {
        let d = (theta - self.center + PI).rem_euclid(TAU) - PI;
        d.abs() < 0.5 * self.width
    }
}

/// Electrode centers at θ_ℓ = 2πℓ/L, ℓ = 1..L.
pub fn equispaced_arcs(l: usize, width: f64) -> Vec<ElectrodeArc> {
    (1..=l).map(|k| ElectrodeArc { center: TAU * k as f64 / l as f64, width }).collect()
}

pub fn electrode_centers(l: usize) -> Vec<Complex64> {
    (1..=l).map(|k| Complex64::from_polar(1.0, TAU * k as f64 / l as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigBasis {
    #[serde(rename = "L")]
    pub l: usize,
    pub indices: Vec<i32>,
    pub arcs: Vec<ElectrodeArc>,
}

impl TrigBasis {
    pub fn new(l: usize, arcs: Vec<ElectrodeArc>) -> Result<Self> {
        if l < 2 || l % 2 != 0 {
            return Err(EitError::InvalidArgument(format!("L = {l} must be even and ≥ 2")));
        }
        if arcs.len() != l {
            return Err(EitError::DimensionMismatch(format!("{} arcs for L = {l}", arcs.len())));
        }
        let mut turn = 0.0;
        for i in 0..l {
            let (a, b) = (arcs[i], arcs[(i + 1) % l]);
            if !(a.width > 0.0) {
                return Err(EitError::InvalidArgument("electrode width must be positive".into()));
            }
            let gap = (b.center - a.center).rem_euclid(TAU);
            if gap + 1e-12 < 0.5 * (a.width + b.width) {
                return Err(EitError::InvalidArgument(format!("electrodes {i} and {} overlap", (i + 1) % l)));
            }
            turn += gap;
        }
        if (turn - TAU).abs() > 1e-9 {
            return Err(EitError::InvalidArgument("electrode arcs are not ordered counterclockwise".into()));
        }
        let half = (l / 2) as i32;
        let indices = (-half..0).chain(1..=half).collect();
        Ok(Self { l, indices, arcs })
    }

    pub fn equispaced(l: usize, width: f64) -> Result<Self> {
        Self::new(l, equispaced_arcs(l, width))
    }

    /// Electrodes that tile the whole circle (no gaps).
    pub fn full_coverage(l: usize) -> Result<Self> {
        Self::equispaced(l, TAU / l as f64)
    }

    pub fn dim(&self) -> usize {
        self.l
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        self.arcs.iter().flat_map(|a| [a.start(), a.end()]).collect()
    }

    fn arc_at(&self, theta: f64) -> Option<usize> {
        self.arcs.iter().position(|a| a.contains(theta))
    }
}

/// How the continuum boundary data is tied to the electrodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElectrodeModel {
    /// Plain continuum data: no projection (the full-coverage limit).
    Continuum,
    /// Currents and traces replaced by their electrode averages on each arc,
    /// left untouched on the gaps.
    #[default]
    ArcAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePatternSet {
    #[serde(rename = "L")]
    pub l: usize,
    /// L × (L−1), column m is pattern m+1.
    pub current_matrix: Matrix,
    /// |e_ℓ| (mm²).
    pub electrode_areas: Vec<f64>,
    /// Angular electrode width (rad), used only by the analytic homogeneous model.
    pub arc_width: f64,
}

impl DiscretePatternSet {
    pub fn with_areas(mut self, areas: Vec<f64>) -> Result<Self> {
        if areas.len() != self.l {
            return Err(EitError::DimensionMismatch("electrode area count".into()));
        }
        self.electrode_areas = areas;
        Ok(self)
    }

    pub fn with_arc_width(mut self, width: f64) -> Result<Self> {
        if !(width > 0.0 && width <= TAU / self.l as f64 + 1e-12) {
            return Err(EitError::InvalidArgument(format!("arc width {width} out of range")));
        }
        self.arc_width = width;
        Ok(self)
    }

    pub fn arcs(&self) -> Vec<ElectrodeArc> {
        equispaced_arcs(self.l, self.arc_width)
    }
}

/// Normalized trigonometric current patterns t^m_ℓ, θ_ℓ = 2πℓ/L.
pub fn trig_current_patterns(l: usize) -> Result<DiscretePatternSet> {
    if l < 4 || l % 2 != 0 {
        return Err(EitError::InvalidArgument(format!("L = {l} must be even and ≥ 4")));
    }
    let lf = l as f64;
    let half = l / 2;
    let current_matrix = Matrix::from_fn(l, l - 1, |row, col| {
        let m = col + 1;
        let theta = TAU * (row + 1) as f64 / lf;
        if m < half {
            (2.0 / lf).sqrt() * (m as f64 * theta).cos()
        } else if m == half {
            (1.0 / lf).sqrt() * (m as f64 * theta).cos()
        } else {
            (2.0 / lf).sqrt() * ((m - half) as f64 * theta).sin()
        }
    });
    Ok(DiscretePatternSet { l, current_matrix, electrode_areas: vec![1.0; l], arc_width: TAU / lf })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BasisInfo {
    Trig { basis: TrigBasis, model: ElectrodeModel },
    Discrete { patterns: DiscretePatternSet },
}

impl BasisInfo {
    pub fn l(&self) -> usize {
        match self {
            BasisInfo::Trig { basis, .. } => basis.l,
            BasisInfo::Discrete { patterns } => patterns.l,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BasisInfo::Trig { basis, .. } => basis.l,
            BasisInfo::Discrete { patterns } => patterns.l - 1,
        }
    }

    pub fn kind(&self) -> MatrixKind {
        match self {
            BasisInfo::Trig { .. } => MatrixKind::Continuum,
            BasisInfo::Discrete { .. } => MatrixKind::Discrete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Continuum,
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NDMatrix {
    pub entries: Matrix,
    pub basis: BasisInfo,
    pub kind: MatrixKind,
    /// Domain radius (m); DN entries are multiplied by it.
    pub radius_r: f64,
    /// Background conductivity (S/m); DN entries are divided by it.
    pub sigma0: f64,
}

impl NDMatrix {
    pub fn new(entries: Matrix, basis: BasisInfo) -> Result<Self> {
        let d = basis.dim();
        if entries.rows() != d || entries.cols() != d {
            return Err(EitError::DimensionMismatch(format!(
                "{}x{} entries for a basis of dimension {d}",
                entries.rows(),
                entries.cols()
            )));
        }
        let kind = basis.kind();
        Ok(Self { entries, basis, kind, radius_r: 1.0, sigma0: 1.0 })
    }

    pub fn with_scaling(mut self, radius_r: f64, sigma0: f64) -> Self {
        self.radius_r = radius_r;
        self.sigma0 = sigma0;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DNMatrix {
    pub entries: Matrix,
    pub basis: BasisInfo,
    pub kind: MatrixKind,
    pub radius_r: f64,
    pub sigma0: f64,
    pub scaled_to_unit: bool,
}

fn projected_phi(basis: &TrigBasis, model: ElectrodeModel, n: i32) -> impl Fn(f64) -> f64 + '_ {
    let averages: Vec<f64> = basis.arcs.iter().map(|a| phi_integral(n, a.start(), a.end()) / a.width).collect();
    move |theta| match model {
        ElectrodeModel::Continuum => phi(n, theta),
        ElectrodeModel::ArcAverage => match basis.arc_at(theta) {
            Some(j) => averages[j],
            None => phi(n, theta),
        },
    }
}

/// Unsymmetrized `(R ψ_n, ψ_ℓ)` with ψ_n the (model-projected) basis currents.
pub fn nd_entries_continuum(mesh: &TriMesh, sigma: &[f64], basis: &TrigBasis, model: ElectrodeModel) -> Result<Matrix> {
    let solver = FemSolver::new(mesh, sigma)?;
    let breaks = match model {
        ElectrodeModel::Continuum => Vec::new(),
        ElectrodeModel::ArcAverage => basis.breakpoints(),
    };
    let loads: Vec<Vec<f64>> =
        basis.indices.iter().map(|&n| load_vector(mesh, &projected_phi(basis, model, n), &breaks)).collect();
    let sols = solver.solve_loads(&loads)?;
    let d = basis.dim();
    Ok(Matrix::from_fn(d, d, |i, j| pair(&loads[j], &sols[i])))
}

pub fn nd_matrix_continuum(
    mesh: &TriMesh,
    sigma: &[f64],
    basis: &TrigBasis,
    model: ElectrodeModel,
) -> Result<NDMatrix> {
    let raw = nd_entries_continuum(mesh, sigma, basis, model)?;
    NDMatrix::new(raw.symmetrized(), BasisInfo::Trig { basis: basis.clone(), model })
}

/// Raw discrete inner product Σ_ℓ t^m_ℓ v^n_ℓ / |e_ℓ|.
pub fn nd_entries_discrete(patterns: &DiscretePatternSet, voltages: &Matrix) -> Result<Matrix> {
    let l = patterns.l;
    let c = &patterns.current_matrix;
    if c.rows() != l || c.cols() != l - 1 {
        return Err(EitError::DimensionMismatch("pattern matrix must be L×(L−1)".into()));
    }
    if voltages.rows() != l || voltages.cols() != l - 1 {
        return Err(EitError::DimensionMismatch(format!(
            "voltages are {}x{}, expected {l}x{}",
            voltages.rows(),
            voltages.cols(),
            l - 1
        )));
    }
    if patterns.electrode_areas.len() != l {
        return Err(EitError::DimensionMismatch("electrode area count".into()));
    }
    if let Some(i) = patterns.electrode_areas.iter().position(|a| !(*a > 0.0)) {
        return Err(EitError::InvalidArgument(format!("electrode {i} has non-positive area")));
    }
    Ok(Matrix::from_fn(l - 1, l - 1, |m, n| {
        (0..l).map(|e| c[(e, m)] * voltages[(e, n)] / patterns.electrode_areas[e]).sum()
    }))
}

pub fn nd_matrix_discrete(patterns: &DiscretePatternSet, voltages: &Matrix) -> Result<NDMatrix> {
    let raw = nd_entries_discrete(patterns, voltages)?;
    NDMatrix::new(raw.symmetrized(), BasisInfo::Discrete { patterns: patterns.clone() })
}

/// Order of the two voltage normalizations; they commute, both are offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageNormalization {
    #[default]
    ZeroMeanThenScale,
    ScaleThenZeroMean,
}

fn zero_mean_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let mean = (0..m.rows()).map(|i| m[(i, j)]).sum::<f64>() / m.rows() as f64;
        for i in 0..m.rows() {
            m[(i, j)] -= mean;
        }
    }
}

/// Zero-means each voltage column and divides it by the ℓ² norm of its current column.
pub fn normalize_voltages(voltages: &Matrix, currents: &Matrix, order: VoltageNormalization) -> Result<Matrix> {
    if voltages.rows() != currents.rows() || voltages.cols() != currents.cols() {
        return Err(EitError::DimensionMismatch("voltage/current shapes differ".into()));
    }
    let norms: Vec<f64> =
        (0..currents.cols()).map(|j| currents.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(j) = norms.iter().position(|n| *n == 0.0) {
        return Err(EitError::Degenerate(format!("current pattern {j} is zero")));
    }
    let scale = |m: &mut Matrix| {
        for i in 0..m.rows() {
            for (j, n) in norms.iter().enumerate() {
                m[(i, j)] /= n;
            }
        }
    };
    let mut out = voltages.clone();
    match order {
        VoltageNormalization::ZeroMeanThenScale => {
            zero_mean_columns(&mut out);
            scale(&mut out);
        }
        VoltageNormalization::ScaleThenZeroMean => {
            scale(&mut out);
            zero_mean_columns(&mut out);
        }
    }
    Ok(out)
}

/// Voltages the trig patterns would have produced, from any set of applied
/// patterns spanning the mean-free currents: with `C·M = T`, output `= V·M`.
pub fn synthesize_trig_voltages(raw_currents: &Matrix, raw_voltages: &Matrix) -> Result<Matrix> {
    let l = raw_currents.rows();
    if raw_voltages.rows() != l || raw_voltages.cols() != raw_currents.cols() {
        return Err(EitError::DimensionMismatch("currents and voltages must have equal shape".into()));
    }
    let trig = trig_current_patterns(l)?.current_matrix;
    let rank = raw_currents.rank(1e-10)?;
    if rank < l - 1 {
        return Err(EitError::RankDeficient { rank, needed: l - 1 });
    }
    let m = raw_currents.pseudo_inverse(1e-10)?.matmul(&trig)?;
    let resid = raw_currents.matmul(&m)?.sub(&trig)?.frobenius();
    if resid > 1e-8 * trig.frobenius() {
        return Err(EitError::Degenerate(format!(
            "applied currents do not span the trig patterns (residual {resid:.2e}); are they mean-free?"
        )));
    }
    let mut out = raw_voltages.matmul(&m)?;
    zero_mean_columns(&mut out);
    Ok(out)
}

pub fn dn_from_nd(nd: &NDMatrix) -> Result<DNMatrix> {
    if !(nd.radius_r > 0.0) || !(nd.sigma0 > 0.0) {
        return Err(EitError::InvalidArgument("radius and sigma0 must be positive".into()));
    }
    let cond = nd.entries.condition_number()?;
    if !(cond <= MAX_CONDITION) {
        return Err(EitError::IllConditioned(cond));
    }
    log::debug!("inverting ND matrix, condition number {cond:.3e}");
    let entries = nd.entries.inverse()?.scaled(nd.radius_r / nd.sigma0);
    Ok(DNMatrix {
        entries,
        basis: nd.basis.clone(),
        kind: nd.kind,
        radius_r: nd.radius_r,
        sigma0: nd.sigma0,
        scaled_to_unit: true,
    })
}

/// One constant-coefficient piece of a boundary function on [a, b].
enum Piece {
    Const(f64),
    /// coefficient · φ_n
    Trig(i32, f64),
}

/// ĉ_m = (1/2π) ∫ f e^{−imθ} dθ for m = 1..=modes, by phasor recurrences.
fn fourier_coefficients(pieces: &[(f64, f64, Piece)], modes: usize) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); modes + 1];
    let i = Complex64::i();
    for (a, b, piece) in pieces {
        let (ra, rb) = (Complex64::from_polar(1.0, -a), Complex64::from_polar(1.0, -b));
        match piece {
            Piece::Const(v) => {
                let (mut pa, mut pb) = (ra, rb);
                for (m, cm) in c.iter_mut().enumerate().skip(1) {
                    // ∫ e^{−imθ} = (e^{−imb} − e^{−ima}) / (−im)
                    *cm += v * (pb - pa) / (-i * m as f64) / TAU;
                    pa *= ra;
                    pb *= rb;
                }
            }
            Piece::Trig(n, coef) => {
                // φ_n = (α e^{i|n|θ} + β e^{−i|n|θ}) / √π
                let k = n.unsigned_abs() as f64;
                let (alpha, beta) = if *n > 0 {
                    (Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0))
                } else {
                    // sin(nθ) = −sin(kθ)
                    (Complex64::new(0.0, 0.5), Complex64::new(0.0, -0.5))
                };
                let j = |p: f64, m: usize, pa: Complex64, pb: Complex64| -> Complex64 {
                    // ∫_a^b e^{i(p−m)θ}
                    let q = p - m as f64;
                    if q == 0.0 {
                        Complex64::new(b - a, 0.0)
                    } else {
                        (Complex64::from_polar(1.0, p * b) * pb - Complex64::from_polar(1.0, p * a) * pa) / (i * q)
                    }
                };
                let (mut pa, mut pb) = (ra, rb);
                for (m, cm) in c.iter_mut().enumerate().skip(1) {
                    let v = alpha * j(k, m, pa, pb) + beta * j(-k, m, pa, pb);
                    *cm += coef * v / (PI.sqrt() * TAU);
                    pa *= ra;
                    pb *= rb;
                }
            }
        }
    }
    c
}

/// (R₁ f, g) = 4π Σ_{m≥1} Re(f̂_m conj ĝ_m) / m, for mean-free f, g.
fn homogeneous_gram(coeffs: &[Vec<Complex64>]) -> Matrix {
    let d = coeffs.len();
    Matrix::from_fn(d, d, |a, b| {
        let s: f64 =
            coeffs[a].iter().zip(&coeffs[b]).enumerate().skip(1).map(|(m, (x, y))| (x * y.conj()).re / m as f64).sum();
        4.0 * PI * s
    })
    .symmetrized()
}

/// Closed-form ND matrix of σ ≡ 1 on the unit disc, in the given basis.
pub fn homogeneous_nd(basis: &BasisInfo) -> Result<Matrix> {
    match basis {
        BasisInfo::Trig { basis, model: ElectrodeModel::Continuum } => {
            Ok(Matrix::diag(&basis.indices.iter().map(|n| 1.0 / n.unsigned_abs() as f64).collect::<Vec<_>>()))
        }
        BasisInfo::Trig { basis, model: ElectrodeModel::ArcAverage } => {
            let coeffs: Vec<Vec<Complex64>> = basis
                .indices
                .iter()
                .map(|&n| {
                    let mut pieces = vec![(0.0, TAU, Piece::Trig(n, 1.0))];
                    for a in &basis.arcs {
                        let avg = phi_integral(n, a.start(), a.end()) / a.width;
                        pieces.push((a.start(), a.end(), Piece::Trig(n, -1.0)));
                        pieces.push((a.start(), a.end(), Piece::Const(avg)));
                    }
                    fourier_coefficients(&pieces, SERIES_MODES)
                })
                .collect();
            Ok(homogeneous_gram(&coeffs))
        }
        BasisInfo::Discrete { patterns } => {
            let arcs = patterns.arcs();
            let c = &patterns.current_matrix;
            let coeffs: Vec<Vec<Complex64>> = (0..c.cols())
                .map(|m| {
                    let pieces: Vec<_> = arcs
                        .iter()
                        .enumerate()
                        .map(|(e, a)| (a.start(), a.end(), Piece::Const(c[(e, m)] / a.width)))
                        .collect();
                    fourier_coefficients(&pieces, SERIES_MODES)
                })
                .collect();
            Ok(homogeneous_gram(&coeffs).scaled(TAU / patterns.l as f64))
        }
    }
}

/// Best constant conductivity: argmin_c ‖nd/r − H/c‖_F with H the homogeneous
/// unit-disc matrix in the same basis.
pub fn estimate_sigma0(nd: &NDMatrix) -> Result<f64> {
    let h = homogeneous_nd(&nd.basis)?;
    if h.rows() != nd.entries.rows() {
        return Err(EitError::DimensionMismatch("basis does not match entries".into()));
    }
    let num = h.dot(&h);
    let den = nd.entries.dot(&h) / nd.radius_r;
    if !(den > 0.0) || !den.is_finite() {
        return Err(EitError::Degenerate(format!("⟨nd, H⟩ = {den:.3e}; cannot fit a conductivity")));
    }
    Ok(num / den)
}

/// Per-entry relative Gaussian noise, std = √variance · |entry|.
pub fn add_measurement_noise(nd: &NDMatrix, relative_variance: f64, seed: u64) -> Result<NDMatrix> {
    let mut out = nd.clone();
    out.entries = relative_noise(&nd.entries, relative_variance, seed)?;
    Ok(out)
}

/// Entry-wise `a + sqrt(var)·|a|·N(0,1)`; deterministic in `seed`.
pub fn relative_noise(a: &Matrix, relative_variance: f64, seed: u64) -> Result<Matrix> {
    if !(relative_variance >= 0.0) {
        return Err(EitError::InvalidArgument("noise variance must be ≥ 0".into()));
    }
    let mut out = a.clone();
    if relative_variance == 0.0 {
        return Ok(out);
    }
    let std = relative_variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = out[(i, j)];
            out[(i, j)] = v + std * v.abs() * z;
        }
    }
    Ok(out)
}

/// Electrode-level simulation on the FEM mesh: for each pattern the current
/// `(2π/L)·t^n_ℓ` is spread uniformly over arc ℓ; voltages are arc averages,
/// returned in the calibrated file convention (zero-mean, times |e_ℓ|).
pub fn simulate_electrode_voltages(mesh: &TriMesh, sigma: &[f64], patterns: &DiscretePatternSet) -> Result<Matrix> {
    let l = patterns.l;
    let arcs = patterns.arcs();
    let breaks: Vec<f64> = arcs.iter().flat_map(|a| [a.start(), a.end()]).collect();
    let indicator = |e: usize| {
        let arc = arcs[e];
        move |t: f64| if arc.contains(t) { 1.0 / arc.width } else { 0.0 }
    };
    let arc_loads: Vec<Vec<f64>> = (0..l).map(|e| load_vector(mesh, &indicator(e), &breaks)).collect();
    let scale = TAU / l as f64;
    let c = &patterns.current_matrix;
    let loads: Vec<Vec<f64>> = (0..l - 1)
        .map(|m| {
            let mut f = vec![0.0; arc_loads[0].len()];
            for (e, al) in arc_loads.iter().enumerate() {
                let w = scale * c[(e, m)];
                f.iter_mut().zip(al).for_each(|(x, y)| *x += w * y);
            }
            f
        })
        .collect();
    let sols = FemSolver::new(mesh, sigma)?.solve_loads(&loads)?;
    let mut v = Matrix::from_fn(l, l - 1, |e, m| pair(&arc_loads[e], &sols[m]));
    zero_mean_columns(&mut v);
    for e in 0..l {
        for m in 0..l - 1 {
            v[(e, m)] *= patterns.electrode_areas[e];
        }
    }
    Ok(v)
}

/// `{kind, L, radius_r, sigma0, scaled_to_unit, row_major_entries, basis}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    /// "nd" or "dn".
    pub operator: String,
    pub kind: MatrixKind,
    #[serde(rename = "L")]
    pub l: usize,
    pub radius_r: f64,
    pub sigma0: f64,
    #[serde(default)]
    pub sigma0_known: bool,
    pub scaled_to_unit: bool,
    pub row_major_entries: Vec<f64>,
    pub basis: BasisInfo,
}

impl MatrixFile {
    pub fn from_nd(nd: &NDMatrix, sigma0_known: bool) -> Self {
        Self {
            operator: "nd".into(),
            kind: nd.kind,
            l: nd.basis.l(),
            radius_r: nd.radius_r,
            sigma0: nd.sigma0,
            sigma0_known,
            scaled_to_unit: false,
            row_major_entries: nd.entries.as_slice().to_vec(),
            basis: nd.basis.clone(),
        }
    }

    pub fn from_dn(dn: &DNMatrix) -> Self {
        Self {
            operator: "dn".into(),
            kind: dn.kind,
            l: dn.basis.l(),
            radius_r: dn.radius_r,
            sigma0: dn.sigma0,
            sigma0_known: true,
            scaled_to_unit: dn.scaled_to_unit,
            row_major_entries: dn.entries.as_slice().to_vec(),
            basis: dn.basis.clone(),
        }
    }

    fn entries(&self) -> Result<Matrix> {
        let d = self.basis.dim();
        if self.basis.l() != self.l || self.basis.kind() != self.kind {
            return Err(EitError::Format("basis metadata disagrees with L/kind".into()));
        }
        Matrix::from_row_major(d, d, self.row_major_entries.clone())
    }

    pub fn to_nd(&self) -> Result<NDMatrix> {
        if self.operator != "nd" {
            return Err(EitError::Format(format!("expected an ND matrix, found {:?}", self.operator)));
        }
        Ok(NDMatrix::new(self.entries()?, self.basis.clone())?.with_scaling(self.radius_r, self.sigma0))
    }

    pub fn to_dn(&self) -> Result<DNMatrix> {
        if self.operator != "dn" {
            return Err(EitError::Format(format!("expected a DN matrix, found {:?}", self.operator)));
        }
        Ok(DNMatrix {
            entries: self.entries()?,
            basis: self.basis.clone(),
            kind: self.kind,
            radius_r: self.radius_r,
            sigma0: self.sigma0,
            scaled_to_unit: self.scaled_to_unit,
        })
    }
}

/// Hardware-export ingestion format. `currents[ℓ][j]`, `voltages[ℓ][j]`: L rows,
/// one column per applied pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementFile {
    #[serde(rename = "L")]
    pub l: usize,
    pub electrode_area_mm2: f64,
    pub currents: Vec<Vec<f64>>,
    pub voltages: Vec<Vec<f64>>,
    /// Angular electrode width (rad); full coverage when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrode_width_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_r: Option<f64>,
}

impl MeasurementFile {
    /// Trig-basis voltages, pattern set and the resulting ND matrix.
    pub fn to_nd(&self, order: VoltageNormalization) -> Result<NDMatrix> {
        let currents = Matrix::from_rows(&self.currents)?;
        let voltages = Matrix::from_rows(&self.voltages)?;
        if currents.rows() != self.l {
            return Err(EitError::Format(format!("{} current rows for L = {}", currents.rows(), self.l)));
        }
        let norm_v = normalize_voltages(&voltages, &currents, order)?;
        let norms: Vec<f64> =
            (0..currents.cols()).map(|j| currents.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let unit_currents = Matrix::from_fn(currents.rows(), currents.cols(), |i, j| currents[(i, j)] / norms[j]);
        let trig_v = synthesize_trig_voltages(&unit_currents, &norm_v)?;
        let mut patterns = trig_current_patterns(self.l)?.with_areas(vec![self.electrode_area_mm2; self.l])?;
        if let Some(w) = self.electrode_width_rad {
            patterns = patterns.with_arc_width(w)?;
        }
        let nd = nd_matrix_discrete(&patterns, &trig_v)?;
        Ok(nd.with_scaling(self.radius_r.unwrap_or(1.0), self.sigma0.unwrap_or(1.0)))
    }
}
