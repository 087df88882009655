//! Random conductivity phantoms: noisy chest anatomy (tank with organ
//! inclusions and simple lung injuries) and non-overlapping circular targets.
//! Coordinates are normalized to the unit disc; y points up (anterior).

use crate::error::{EitError, Result};
use crate::image::ConductivityImage;
use crate::mesh::TriMesh;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

const CHEST_JSON: &str = include_str!("../configs/act4_chest.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Polygon { points: Vec<[f64; 2]> },
    Circle { center: [f64; 2], radius: f64 },
}

impl Shape {
    /// Even–odd rule for polygons; open disc for circles.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Circle { center, radius } => (p[0] - center[0]).hypot(p[1] - center[1]) < *radius,
            Shape::Polygon { points } => {
                let mut inside = false;
                let n = points.len();
                for i in 0..n {
                    let (a, b) = (points[i], points[(i + 1) % n]);
                    if (a[1] > p[1]) != (b[1] > p[1]) {
                        let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                        if p[0] < x {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Circle { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Polygon { points } => polygon_area(points).abs(),
        }
    }

    /// Largest distance from the origin reached by the shape.
    pub fn max_radius(&self) -> f64 {
        match self {
            Shape::Circle { center, radius } => center[0].hypot(center[1]) + radius,
            Shape::Polygon { points } => points.iter().fold(0.0, |m, p| m.max(p[0].hypot(p[1]))),
        }
    }
}

fn polygon_area(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: String,
    pub shape: Shape,
    /// S/m
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub background_sigma: f64,
    pub regions: Vec<Region>,
    pub provenance: Provenance,
}

impl Phantom {
    pub fn homogeneous(sigma: f64) -> Self {
        Self {
            background_sigma: sigma,
            regions: Vec::new(),
            provenance: Provenance { seed: 0, config_id: "homogeneous".into() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.background_sigma > 0.0) {
            return Err(EitError::InvalidArgument("background conductivity must be positive".into()));
        }
        for r in &self.regions {
            if !(r.sigma > 0.0) {
                return Err(EitError::InvalidArgument(format!("region {} has sigma {}", r.label, r.sigma)));
            }
            if r.shape.max_radius() > 1.0 + 1e-12 {
                return Err(EitError::InvalidArgument(format!("region {} leaves the unit disc", r.label)));
            }
        }
        Ok(())
    }

    /// Region indices from smallest to largest area: the first container wins.
    fn priority(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.regions.len()).collect();
        let areas: Vec<f64> = self.regions.iter().map(|r| r.shape.area()).collect();
        idx.sort_by(|&a, &b| areas[a].total_cmp(&areas[b]));
        idx
    }

    fn sigma_with(&self, order: &[usize], p: [f64; 2]) -> f64 {
        order
            .iter()
            .find(|&&i| self.regions[i].shape.contains(p))
            .map_or(self.background_sigma, |&i| self.regions[i].sigma)
    }

    /// Conductivity at a point; the innermost (smallest) containing region wins.
    pub fn sigma_at(&self, p: [f64; 2]) -> f64 {
        self.sigma_with(&self.priority(), p)
    }

    pub fn sigma_at_points(&self, points: &[[f64; 2]]) -> Vec<f64> {
        let order = self.priority();
        points.iter().map(|&p| self.sigma_with(&order, p)).collect()
    }
}

/// Pixel value = conductivity at the pixel center (background outside the disc too).
pub fn rasterize(phantom: &Phantom, size: usize) -> ConductivityImage {
    let img = ConductivityImage::constant(size, 0.0);
    let points: Vec<[f64; 2]> = (0..size * size).map(|k| img.pixel_center(k / size, k % size)).collect();
    ConductivityImage::from_values(size, phantom.sigma_at_points(&points)).expect("rasterized values are positive")
}

/// Per-triangle conductivity from the value at each centroid.
pub fn phantom_to_mesh_sigma(phantom: &Phantom, mesh: &TriMesh) -> Vec<f64> {
    let c: Vec<[f64; 2]> = (0..mesh.triangles.len()).map(|t| mesh.centroid(t)).collect();
    phantom.sigma_at_points(&c)
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
        return Err(EitError::InvalidArgument(format!("{name}: bad range {r:?}")));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(EitError::InvalidArgument(format!("{name}: probability {p} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganSpec {
    pub name: String,
    pub polygon: Vec<[f64; 2]>,
    pub inclusion_probability: f64,
    pub sigma_range: [f64; 2],
    /// Lungs can receive a split injury.
    #[serde(default)]
    pub injurable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChestConfig {
    pub id: String,
    pub organs: Vec<OrganSpec>,
    /// `None` disables boundary noise.
    pub boundary_snr_db: Option<f64>,
    pub background_range: [f64; 2],
    pub injury_probability: f64,
    pub injury_range: [f64; 2],
    pub max_noise_retries: usize,
}

// Overall span of the tabulated simulation ranges.
const TABLE_BOUNDS: [f64; 2] = [0.01, 1.5];

impl Default for ChestConfig {
    fn default() -> Self {
        serde_json::from_str(CHEST_JSON).expect("bundled chest config parses")
    }
}

impl ChestConfig {
    pub fn validate(&self) -> Result<()> {
        let within = |r: [f64; 2]| r[0] >= TABLE_BOUNDS[0] && r[1] <= TABLE_BOUNDS[1];
        for o in &self.organs {
            check_prob(&o.name, o.inclusion_probability)?;
            check_range(&o.name, o.sigma_range)?;
            if !within(o.sigma_range) {
                return Err(EitError::InvalidArgument(format!("{}: range outside table bounds", o.name)));
            }
            if o.polygon.len() < 3 {
                return Err(EitError::InvalidArgument(format!("{}: polygon needs 3 points", o.name)));
            }
        }
        check_prob("injury", self.injury_probability)?;
        check_range("background", self.background_range)?;
        check_range("injury", self.injury_range)?;
        if !within(self.injury_range) || !within(self.background_range) {
            return Err(EitError::InvalidArgument("range outside table bounds".into()));
        }
        if let Some(snr) = self.boundary_snr_db {
            if !snr.is_finite() {
                return Err(EitError::InvalidArgument("SNR must be finite (use null to disable)".into()));
            }
        }
        Ok(())
    }
}

/// awgn-style perturbation: each coordinate sequence gets white noise with
/// power mean(x²)/10^(snr/10).
fn awgn(points: &[[f64; 2]], snr_db: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let ratio = 10f64.powf(snr_db / 10.0);
    let n = points.len() as f64;
    let std_x = (points.iter().map(|p| p[0] * p[0]).sum::<f64>() / n / ratio).sqrt();
    let std_y = (points.iter().map(|p| p[1] * p[1]).sum::<f64>() / n / ratio).sqrt();
    let nx = Normal::new(0.0, std_x).expect("finite std");
    let ny = Normal::new(0.0, std_y).expect("finite std");
    let xs: Vec<f64> = points.iter().map(|p| p[0] + nx.sample(rng)).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1] + ny.sample(rng)).collect();
    xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect()
}

fn degenerate(points: &[[f64; 2]]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs())).max(1e-300);
    let a = points[0];
    !points.iter().any(|b| {
        points.iter().any(|c| {
            let cross = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            cross.abs() > 1e-9 * scale * scale
        })
    })
}

/// Sutherland–Hodgman clip against `y ≥ cut` (`keep_above`) or `y ≤ cut`.
fn clip_horizontal(points: &[[f64; 2]], cut: f64, keep_above: bool) -> Vec<[f64; 2]> {
    let inside = |p: [f64; 2]| if keep_above { p[1] >= cut } else { p[1] <= cut };
    let mut out = Vec::with_capacity(points.len() + 2);
    let n = points.len();
    for i in 0..n {
        let (cur, next) = (points[i], points[(i + 1) % n]);
        if inside(cur) {
            out.push(cur);
        }
        if inside(cur) != inside(next) {
            let t = (cut - cur[1]) / (next[1] - cur[1]);
            out.push([cur[0] + t * (next[0] - cur[0]), cut]);
        }
    }
    out
}

pub fn gen_chest_phantom(config: &ChestConfig, seed: u64) -> Result<Phantom> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background_sigma = uniform(&mut rng, config.background_range);
    let mut regions = Vec::new();
    for organ in &config.organs {
        let included = rng.random::<f64>() < organ.inclusion_probability;
        if !included {
            continue;
        }
        let polygon = match config.boundary_snr_db {
            None => organ.polygon.clone(),
            Some(snr) => {
                let mut attempt = 0;
                loop {
                    let p = awgn(&organ.polygon, snr, &mut rng);
                    if !degenerate(&p) && p.iter().all(|q| q[0].hypot(q[1]) < 1.0) {
                        break p;
                    }
                    attempt += 1;
                    if attempt >= config.max_noise_retries {
                        return Err(EitError::RejectionBudget(attempt));
                    }
                }
            }
        };
        let sigma = uniform(&mut rng, organ.sigma_range);
        let injured = organ.injurable && rng.random::<f64>() < config.injury_probability;
        if injured {
            let (lo, hi) =
                polygon.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[1]), h.max(p[1])));
            let cut = lo + (0.2 + 0.6 * rng.random::<f64>()) * (hi - lo);
            for (part, above) in [("upper", true), ("lower", false)] {
                let sigma = uniform(&mut rng, config.injury_range);
                regions.push(Region {
                    label: format!("{}:{part}", organ.name),
                    shape: Shape::Polygon { points: clip_horizontal(&polygon, cut, above) },
                    sigma,
                });
            }
        } else {
            regions.push(Region { label: organ.name.clone(), shape: Shape::Polygon { points: polygon }, sigma });
        }
    }
    let phantom = Phantom { background_sigma, regions, provenance: Provenance { seed, config_id: config.id.clone() } };
    phantom.validate()?;
    Ok(phantom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleConfig {
    pub id: String,
    pub count_range: [usize; 2],
    pub radius_range: [f64; 2],
    pub distance_range: [f64; 2],
    pub angle_range: [f64; 2],
    pub conductive_range: [f64; 2],
    pub resistive_range: [f64; 2],
    pub conductive_probability: f64,
    pub background_range: [f64; 2],
    pub max_attempts: usize,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self {
            id: "kit4-circles".into(),
            count_range: [1, 3],
            radius_range: [0.2, 0.4],
            distance_range: [0.0, 0.6],
            angle_range: [0.0, TAU],
            conductive_range: [0.05, 0.12],
            resistive_range: [0.005, 0.015],
            conductive_probability: 0.5,
            background_range: [0.027, 0.033],
            max_attempts: 10_000,
        }
    }
}

impl CircleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count_range[0] == 0 || self.count_range[0] > self.count_range[1] {
            return Err(EitError::InvalidArgument("bad inclusion count range".into()));
        }
        for (n, r) in [
            ("radius", self.radius_range),
            ("distance", self.distance_range),
            ("angle", self.angle_range),
            ("conductive", self.conductive_range),
            ("resistive", self.resistive_range),
            ("background", self.background_range),
        ] {
            check_range(n, r)?;
        }
        if self.radius_range[0] <= 0.0 || self.distance_range[0] < 0.0 {
            return Err(EitError::InvalidArgument("radii must be positive, distances ≥ 0".into()));
        }
        if self.radius_range[1] + self.distance_range[1] > 1.0 {
            return Err(EitError::InvalidArgument("circles could leave the unit disc".into()));
        }
        if self.resistive_range[0] <= 0.0 || self.background_range[0] <= 0.0 {
            return Err(EitError::InvalidArgument("conductivities must be positive".into()));
        }
        check_prob("conductive", self.conductive_probability)
    }
}

/// Count and radii are drawn first; only the placements are rejection-sampled,
/// so the radius distribution is exactly the configured uniform one.
pub fn gen_circle_phantom(config: &CircleConfig, seed: u64) -> Result<Phantom> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background_sigma = uniform(&mut rng, config.background_range);
    let count = rng.random_range(config.count_range[0]..=config.count_range[1]);
    let radii: Vec<f64> = (0..count).map(|_| uniform(&mut rng, config.radius_range)).collect();
    let mut attempts = 0;
    let centers = loop {
        attempts += 1;
        let c: Vec<[f64; 2]> = (0..count)
            .map(|_| {
                let d = uniform(&mut rng, config.distance_range);
                let a = uniform(&mut rng, config.angle_range);
                [d * a.cos(), d * a.sin()]
            })
            .collect();
        let ok = (0..count)
            .all(|i| (i + 1..count).all(|j| (c[i][0] - c[j][0]).hypot(c[i][1] - c[j][1]) > radii[i] + radii[j]));
        if ok {
            break c;
        }
        if attempts >= config.max_attempts {
            return Err(EitError::RejectionBudget(attempts));
        }
    };
    let regions = centers
        .into_iter()
        .zip(radii)
        .enumerate()
        .map(|(i, (center, radius))| {
            let conductive = rng.random::<f64>() < config.conductive_probability;
            let (label, range) = if conductive {
                ("conductive", config.conductive_range)
            } else {
                ("resistive", config.resistive_range)
            };
            Region {
                label: format!("{label}:{i}"),
                shape: Shape::Circle { center, radius },
                sigma: uniform(&mut rng, range),
            }
        })
        .collect();
    let phantom = Phantom { background_sigma, regions, provenance: Provenance { seed, config_id: config.id.clone() } };
    phantom.validate()?;
    Ok(phantom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disc_mesh;

    #[test]
    fn noise_free_chest_is_canonical() {
        let mut cfg = ChestConfig::default();
        cfg.boundary_snr_db = None;
        cfg.injury_probability = 0.0;
        for o in &mut cfg.organs {
            o.inclusion_probability = 1.0;
        }
        let p = gen_chest_phantom(&cfg, 7).unwrap();
        assert_eq!(p.regions.len(), 5);
        for (r, o) in p.regions.iter().zip(&cfg.organs) {
            assert_eq!(r.label, o.name);
            assert_eq!(r.shape, Shape::Polygon { points: o.polygon.clone() });
            assert!(r.sigma >= o.sigma_range[0] && r.sigma <= o.sigma_range[1]);
        }
        assert!((0.29..=0.31).contains(&p.background_sigma));
    }

    #[test]
    fn chest_deterministic() {
        let cfg = ChestConfig::default();
        assert_eq!(gen_chest_phantom(&cfg, 99).unwrap(), gen_chest_phantom(&cfg, 99).unwrap());
        assert_ne!(gen_chest_phantom(&cfg, 99).unwrap(), gen_chest_phantom(&cfg, 100).unwrap());
    }

    #[test]
    fn injury_halves_partition_the_lung() {
        let mut cfg = ChestConfig::default();
        cfg.injury_probability = 1.0;
        cfg.boundary_snr_db = None;
        for o in &mut cfg.organs {
            o.inclusion_probability = 1.0;
        }
        let p = gen_chest_phantom(&cfg, 3).unwrap();
        let upper = p.regions.iter().find(|r| r.label == "left_lung:upper").unwrap();
        let lower = p.regions.iter().find(|r| r.label == "left_lung:lower").unwrap();
        let whole = Shape::Polygon { points: cfg.organs[2].polygon.clone() };
        assert!((upper.shape.area() + lower.shape.area() - whole.area()).abs() < 1e-12);
        for r in [upper, lower] {
            assert!((0.01..=1.5).contains(&r.sigma));
        }
    }

    #[test]
    fn circles_never_overlap() {
        let cfg = CircleConfig::default();
        for seed in 0..500 {
            let p = gen_circle_phantom(&cfg, seed).unwrap();
            assert!((1..=3).contains(&p.regions.len()));
            let circles: Vec<_> = p
                .regions
                .iter()
                .map(|r| match r.shape {
                    Shape::Circle { center, radius } => (center, radius),
                    _ => unreachable!(),
                })
                .collect();
            for (i, a) in circles.iter().enumerate() {
                assert!(a.0[0].hypot(a.0[1]) + a.1 <= 1.0);
                for b in &circles[i + 1..] {
                    assert!((a.0[0] - b.0[0]).hypot(a.0[1] - b.0[1]) > a.1 + b.1);
                }
            }
        }
    }

    #[test]
    fn rasterize_centered_circle() {
        let p = Phantom {
            background_sigma: 1.0,
            regions: vec![Region {
                label: "c".into(),
                shape: Shape::Circle { center: [0.0, 0.0], radius: 0.5 },
                sigma: 2.0,
            }],
            provenance: Provenance { seed: 0, config_id: "t".into() },
        };
        assert_eq!(p.sigma_at([0.0, 0.0]), 2.0);
        assert_eq!(p.sigma_at([0.9, 0.9]), 1.0);
        let img = rasterize(&p, 64);
        let count = img.values.iter().filter(|v| **v == 2.0).count() as f64;
        // area oracle: fraction π·0.25/4 of the square, each pixel is (2/63)² in area
        let h = 2.0 / 63.0;
        let expect = std::f64::consts::PI * 0.25 / (h * h);
        assert!((count - expect).abs() <= 2.0 * (2.0 * std::f64::consts::PI * 0.5 / h), "{count} vs {expect}");
        let empty = rasterize(&Phantom::homogeneous(0.3), 64);
        assert!(empty.values.iter().all(|v| *v == 0.3));
    }

    #[test]
    fn innermost_region_wins() {
        let p = Phantom {
            background_sigma: 1.0,
            regions: vec![
                Region { label: "small".into(), shape: Shape::Circle { center: [0.0, 0.0], radius: 0.1 }, sigma: 5.0 },
                Region { label: "big".into(), shape: Shape::Circle { center: [0.0, 0.0], radius: 0.6 }, sigma: 2.0 },
            ],
            provenance: Provenance { seed: 0, config_id: "t".into() },
        };
        assert_eq!(p.sigma_at([0.0, 0.0]), 5.0);
        assert_eq!(p.sigma_at([0.3, 0.0]), 2.0);
        let mesh = build_disc_mesh(3);
        let s = phantom_to_mesh_sigma(&p, &mesh);
        for t in 0..mesh.triangles.len() {
            assert_eq!(s[t], p.sigma_at(mesh.centroid(t)));
        }
    }

    #[test]
    fn mesh_area_of_inclusion_converges() {
        let p = Phantom {
            background_sigma: 1.0,
            regions: vec![Region {
                label: "c".into(),
                shape: Shape::Circle { center: [0.2, -0.1], radius: 0.35 },
                sigma: 2.0,
            }],
            provenance: Provenance { seed: 0, config_id: "t".into() },
        };
        let exact = p.regions[0].shape.area();
        let errs: Vec<f64> = [2, 4, 6]
            .iter()
            .map(|&l| {
                let mesh = build_disc_mesh(l);
                let s = phantom_to_mesh_sigma(&p, &mesh);
                let a: f64 = (0..mesh.triangles.len()).filter(|&t| s[t] == 2.0).map(|t| mesh.signed_area(t)).sum();
                (a - exact).abs()
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
        assert!(errs[2] < 2e-3);
    }

    #[test]
    fn homogeneous_mesh_sigma_is_constant() {
        let mesh = build_disc_mesh(2);
        assert!(phantom_to_mesh_sigma(&Phantom::homogeneous(0.3), &mesh).iter().all(|v| *v == 0.3));
    }

    #[test]
    fn config_validation() {
        let mut c = CircleConfig::default();
        c.distance_range = [0.0, 0.7];
        assert!(c.validate().is_err());
        let mut ch = ChestConfig::default();
        ch.organs[0].inclusion_probability = 1.5;
        assert!(ch.validate().is_err());
    }

    #[test]
    fn degenerate_polygons_detected() {
        assert!(degenerate(&[[0.0, 0.0], [0.1, 0.1], [0.2, 0.2]]));
        assert!(!degenerate(&[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]]));
    }
}
