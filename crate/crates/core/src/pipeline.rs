//! End-to-end orchestration: presets, the simulate → reconstruct chain,
//! dataset generation with manifests, file-driven reconstruction and
//! metric evaluation against a predictions directory.

use crate::dbar::{reconstruct_image, ReconImage};
use crate::electrode::{
    add_measurement_noise, dn_from_nd, electrode_centers, estimate_sigma0, nd_matrix_continuum, nd_matrix_discrete,
    relative_noise, simulate_electrode_voltages, trig_current_patterns, BasisInfo, DNMatrix, DiscretePatternSet,
    ElectrodeModel, MatrixFile, MeasurementFile, NDMatrix, TrigBasis, VoltageNormalization,
};
use crate::error::{EitError, Result};
use crate::image::{read_eitimg, write_eitimg, IMAGE_SIZE};
use crate::io::{read_json, write_json};
use crate::linalg::Matrix;
use crate::mesh::{build_disc_mesh, TriMesh, DESK_LEVEL};
use crate::metrics::{rel_l2_error, ssim};
use crate::phantom::{
    gen_chest_phantom, gen_circle_phantom, phantom_to_mesh_sigma, rasterize, ChestConfig, CircleConfig, Phantom,
};
use crate::scattering::{scattering_born_continuum, scattering_born_discrete, KGrid, ScatteringData};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_CUTOFF: f64 = 4.5;
pub const DEFAULT_NOISE_VARIANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Act4,
    Kit4,
}

impl std::str::FromStr for Preset {
    type Err = EitError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "act4" => Ok(Preset::Act4),
            "kit4" => Ok(Preset::Kit4),
            other => Err(EitError::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}

impl Preset {
    pub fn electrodes(self) -> usize {
        match self {
            Preset::Act4 => 32,
            Preset::Kit4 => 16,
        }
    }

    pub fn tank_radius_m(self) -> f64 {
        match self {
            Preset::Act4 => 0.15,
            Preset::Kit4 => 0.14,
        }
    }

    pub fn electrode_width_m(self) -> f64 {
        0.025
    }

    /// Electrode width × height (the tank fill height for KIT4), mm².
    pub fn electrode_area_mm2(self) -> f64 {
        match self {
            Preset::Act4 => 25.0 * 22.5,
            Preset::Kit4 => 25.0 * 70.0,
        }
    }

    pub fn threshold(self) -> f64 {
        match self {
            Preset::Act4 => 24.0,
            Preset::Kit4 => 8.0,
        }
    }

    pub fn arc_width(self) -> f64 {
        self.electrode_width_m() / self.tank_radius_m()
    }

    pub fn basis(self) -> TrigBasis {
        TrigBasis::equispaced(self.electrodes(), self.arc_width()).expect("preset arcs are valid")
    }

    pub fn patterns(self) -> DiscretePatternSet {
        let l = self.electrodes();
        trig_current_patterns(l)
            .and_then(|p| p.with_areas(vec![self.electrode_area_mm2(); l]))
            .and_then(|p| p.with_arc_width(self.arc_width()))
            .expect("preset patterns are valid")
    }

    pub fn for_electrodes(l: usize) -> Option<Self> {
        match l {
            32 => Some(Preset::Act4),
            16 => Some(Preset::Kit4),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Act4 => "act4",
            Preset::Kit4 => "kit4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub mesh_level: u32,
    pub cutoff_radius: f64,
    pub threshold: f64,
    pub noise_variance: f64,
    pub electrode_model: ElectrodeModel,
    pub image_size: usize,
    pub chest: ChestConfig,
    pub circles: CircleConfig,
}

impl PipelineConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            preset,
            mesh_level: DESK_LEVEL,
            cutoff_radius: DEFAULT_CUTOFF,
            threshold: preset.threshold(),
            noise_variance: DEFAULT_NOISE_VARIANCE,
            electrode_model: ElectrodeModel::ArcAverage,
            image_size: IMAGE_SIZE,
            chest: ChestConfig::default(),
            circles: CircleConfig::default(),
        }
    }

    pub fn random_phantom(&self, seed: u64) -> Result<Phantom> {
        match self.preset {
            Preset::Act4 => gen_chest_phantom(&self.chest, seed),
            Preset::Kit4 => gen_circle_phantom(&self.circles, seed),
        }
    }
}

/// splitmix64 finalizer; decorrelates per-entry seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub recon: ReconImage,
    pub scattering: ScatteringData,
    pub sigma0: f64,
    pub sigma0_estimated: bool,
}

/// Mesh, basis and the σ ≡ 1 reference DN matrix for one configuration.
pub struct ForwardModel {
    pub config: PipelineConfig,
    pub mesh: TriMesh,
    pub basis: TrigBasis,
    pub dn_one: DNMatrix,
    pub kgrid: KGrid,
}

impl ForwardModel {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let mesh = build_disc_mesh(config.mesh_level);
        let basis = config.preset.basis();
        let ones = vec![1.0; mesh.triangles.len()];
        let dn_one = dn_from_nd(&nd_matrix_continuum(&mesh, &ones, &basis, config.electrode_model)?)?;
        let kgrid = KGrid::standard(config.cutoff_radius)?;
        Ok(Self { config, mesh, basis, dn_one, kgrid })
    }

    /// Noiseless continuum-electrode ND matrix of a phantom (unit disc, r = 1).
    pub fn simulate_nd(&self, phantom: &Phantom) -> Result<NDMatrix> {
        let sigma = phantom_to_mesh_sigma(phantom, &self.mesh);
        nd_matrix_continuum(&self.mesh, &sigma, &self.basis, self.config.electrode_model)
    }

    pub fn simulate_noisy_nd(&self, phantom: &Phantom, noise_seed: u64) -> Result<NDMatrix> {
        add_measurement_noise(&self.simulate_nd(phantom)?, self.config.noise_variance, noise_seed)
    }

    /// ND → DN (σ0 given or estimated) → t^exp → D-bar image.
    pub fn reconstruct_nd(&self, nd: &NDMatrix, sigma0: Option<f64>) -> Result<Reconstruction> {
        let (sigma0, estimated) = match sigma0 {
            Some(s) => (s, false),
            None => (estimate_sigma0(nd)?, true),
        };
        let dn = dn_from_nd(&nd.clone().with_scaling(nd.radius_r, sigma0))?;
        let scattering = scattering_born_continuum(&dn, &self.dn_one, &self.kgrid, self.config.threshold)?;
        let recon = reconstruct_image(&scattering, self.config.image_size, sigma0)?;
        Ok(Reconstruction { recon, scattering, sigma0, sigma0_estimated: estimated })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub truth_path: String,
    pub dbar_path: String,
    pub seed: u64,
    pub threshold: f64,
    pub sigma0: f64,
    pub mu_imag_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFailure {
    pub id: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub requested: usize,
    pub written: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub preset: Preset,
    pub seed: u64,
    pub config: PipelineConfig,
    pub counts: DatasetCounts,
    pub entries: Vec<ManifestEntry>,
    pub failures: Vec<ManifestFailure>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let m: DatasetManifest = read_json(path)?;
        let mut ids = std::collections::HashSet::new();
        for e in &m.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(EitError::Format(format!("duplicate manifest id {}", e.id)));
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

fn entry_id(i: usize) -> String {
    format!("{i:06}")
}

/// Simulates `count` pairs into `out_dir/{truth,dbar}/<id>.json` and writes
/// `out_dir/manifest.json`. Failed entries are listed, not fatal.
pub fn generate_dataset(config: &PipelineConfig, count: usize, seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir.join("truth"))?;
    std::fs::create_dir_all(out_dir.join("dbar"))?;
    let model = ForwardModel::new(config.clone())?;
    let outcomes: Vec<std::result::Result<ManifestEntry, ManifestFailure>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let id = entry_id(i);
            let s = derive_seed(seed, i as u64);
            let run = || -> Result<ManifestEntry> {
                let phantom = config.random_phantom(s)?;
                let nd = model.simulate_noisy_nd(&phantom, derive_seed(s, 0xD1CE))?;
                let rec = model.reconstruct_nd(&nd, None)?;
                let truth = rasterize(&phantom, config.image_size);
                let truth_path = format!("truth/{id}.json");
                let dbar_path = format!("dbar/{id}.json");
                write_eitimg(&truth, &out_dir.join(&truth_path))?;
                write_eitimg(&rec.recon.image, &out_dir.join(&dbar_path))?;
                log::debug!("entry {id}: sigma0 {:.4}, {} GMRES its", rec.sigma0, rec.recon.max_iterations);
                Ok(ManifestEntry {
                    id: id.clone(),
                    truth_path,
                    dbar_path,
                    seed: s,
                    threshold: config.threshold,
                    sigma0: rec.sigma0,
                    mu_imag_max: rec.recon.mu_imag_max,
                })
            };
            run().map_err(|e| {
                log::warn!("entry {id} failed: {e}");
                ManifestFailure { id: id.clone(), seed: s, error: e.to_string() }
            })
        })
        .collect();
    let (mut entries, mut failures) = (Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Ok(e) => entries.push(e),
            Err(f) => failures.push(f),
        }
    }
    let manifest = DatasetManifest {
        preset: config.preset,
        seed,
        config: config.clone(),
        counts: DatasetCounts { requested: count, written: entries.len(), failed: failures.len() },
        entries,
        failures,
    };
    manifest.write(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default)]
pub struct ReconstructOptions {
    pub sigma0: Option<f64>,
    pub preset: Option<Preset>,
    pub mesh_level: Option<u32>,
    pub cutoff_radius: Option<f64>,
    pub threshold: Option<f64>,
    pub normalization: VoltageNormalization,
}

#[derive(Debug, Clone)]
pub struct ReconstructOutcome {
    pub recon: ReconImage,
    pub sigma0: f64,
    pub sigma0_estimated: bool,
    pub input_kind: &'static str,
}

fn resolve_sigma0(nd: &NDMatrix, given: Option<f64>, from_file: Option<f64>) -> Result<(f64, bool)> {
    if let Some(s) = given.or(from_file) {
        return Ok((s, false));
    }
    let s = estimate_sigma0(nd)?;
    log::info!("no sigma0 supplied; best constant conductivity estimate {s:.6} S/m");
    Ok((s, true))
}

/// Reconstructs from a DN/ND matrix file or a measured current/voltage file.
pub fn reconstruct_file(input: &Path, opts: &ReconstructOptions) -> Result<ReconstructOutcome> {
    let text = std::fs::read_to_string(input)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let level = opts.mesh_level.unwrap_or(DESK_LEVEL);
    let mesh = build_disc_mesh(level);
    let ones = vec![1.0; mesh.triangles.len()];
    let kgrid = KGrid::standard(opts.cutoff_radius.unwrap_or(DEFAULT_CUTOFF))?;
    let threshold_for = |l: usize| {
        opts.threshold
            .or(opts.preset.map(Preset::threshold))
            .or(Preset::for_electrodes(l).map(Preset::threshold))
            .unwrap_or(Preset::Act4.threshold())
    };

    if value.get("row_major_entries").is_some() {
        let file: MatrixFile = serde_json::from_value(value)?;
        let (dn, sigma0, estimated) = if file.operator == "dn" {
            let dn = file.to_dn()?;
            if !dn.scaled_to_unit {
                return Err(EitError::InvalidArgument("DN file must be scaled to the unit disc".into()));
            }
            let s = opts.sigma0.unwrap_or(dn.sigma0);
            (dn, s, false)
        } else {
            let nd = file.to_nd()?;
            let (s, est) = resolve_sigma0(&nd, opts.sigma0, file.sigma0_known.then_some(file.sigma0))?;
            (dn_from_nd(&nd.with_scaling(file.radius_r, s))?, s, est)
        };
        let threshold = threshold_for(file.l);
        let t = match &dn.basis {
            BasisInfo::Trig { basis, model } => {
                let one = dn_from_nd(&nd_matrix_continuum(&mesh, &ones, basis, *model)?)?;
                scattering_born_continuum(&dn, &one, &kgrid, threshold)?
            }
            BasisInfo::Discrete { patterns } => {
                let one = discrete_reference_dn(&mesh, patterns)?;
                scattering_born_discrete(&dn, &one, patterns, &electrode_centers(patterns.l), &kgrid, threshold)?
            }
        };
        let recon = reconstruct_image(&t, IMAGE_SIZE, sigma0)?;
        Ok(ReconstructOutcome { recon, sigma0, sigma0_estimated: estimated, input_kind: "matrix" })
    } else if value.get("currents").is_some() {
        let file: MeasurementFile = serde_json::from_value(value)?;
        let nd = file.to_nd(opts.normalization)?;
        let (s, estimated) = resolve_sigma0(&nd, opts.sigma0, file.sigma0)?;
        let dn = dn_from_nd(&nd.clone().with_scaling(nd.radius_r, s))?;
        let patterns = match &nd.basis {
            BasisInfo::Discrete { patterns } => patterns.clone(),
            BasisInfo::Trig { .. } => unreachable!("measurement files give pattern-basis matrices"),
        };
        let one = discrete_reference_dn(&mesh, &patterns)?;
        let t = scattering_born_discrete(
            &dn,
            &one,
            &patterns,
            &electrode_centers(patterns.l),
            &kgrid,
            threshold_for(file.l),
        )?;
        let recon = reconstruct_image(&t, IMAGE_SIZE, s)?;
        Ok(ReconstructOutcome { recon, sigma0: s, sigma0_estimated: estimated, input_kind: "measurement" })
    } else {
        Err(EitError::Format("neither a matrix file nor a measurement file".into()))
    }
}

/// DN matrix of σ ≡ 1 for electrode data, simulated with the same electrode
/// model as `simulate_electrode_voltages`.
pub fn discrete_reference_dn(mesh: &TriMesh, patterns: &DiscretePatternSet) -> Result<DNMatrix> {
    let ones = vec![1.0; mesh.triangles.len()];
    let v = simulate_electrode_voltages(mesh, &ones, patterns)?;
    dn_from_nd(&nd_matrix_discrete(patterns, &v)?)
}

/// Current layout written into synthetic measurement files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurrentPatterns {
    Trig,
    /// Adjacent pairs: +1 on electrode ℓ, −1 on ℓ+1 (L columns, rank L−1).
    Adjacent,
}

/// Synthetic hardware export for a phantom, in the calibrated voltage
/// convention, with relative per-entry voltage noise.
pub fn simulate_measurement_file(
    mesh: &TriMesh,
    phantom: &Phantom,
    preset: Preset,
    currents: CurrentPatterns,
    noise_variance: f64,
    noise_seed: u64,
) -> Result<MeasurementFile> {
    let patterns = preset.patterns();
    let sigma = phantom_to_mesh_sigma(phantom, mesh);
    let v_trig = simulate_electrode_voltages(mesh, &sigma, &patterns)?;
    let l = patterns.l;
    let t = &patterns.current_matrix;
    let (c, v) = match currents {
        CurrentPatterns::Trig => (t.clone(), v_trig),
        CurrentPatterns::Adjacent => {
            let c = Matrix::from_fn(l, l, |e, j| {
                if e == j {
                    1.0
                } else if e == (j + 1) % l {
                    -1.0
                } else {
                    0.0
                }
            });
            // responses are linear in the currents: C = T (Tᵀ C)
            let v = v_trig.matmul(&t.transpose().matmul(&c)?)?;
            (c, v)
        }
    };
    let noisy = relative_noise(&v, noise_variance, noise_seed)?;
    Ok(MeasurementFile {
        l,
        electrode_area_mm2: preset.electrode_area_mm2(),
        currents: c.to_rows(),
        voltages: noisy.to_rows(),
        electrode_width_rad: Some(preset.arc_width()),
        sigma0: None,
        radius_r: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    fn of(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub input_ssim: f64,
    pub input_rel_l2: f64,
    pub output_ssim: f64,
    pub output_rel_l2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ssim: Aggregate,
    pub rel_l2: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
    /// D-bar reconstructions vs truth.
    pub input: MetricSummary,
    /// Predictions vs truth.
    pub output: MetricSummary,
}

impl MetricsReport {
    pub fn table(&self) -> String {
        let mut s =
            format!("{:<10} {:>11} {:>11} {:>11} {:>11}\n", "id", "ssim(in)", "relL2(in)", "ssim(out)", "relL2(out)");
        for m in &self.images {
            s += &format!(
                "{:<10} {:>11.4} {:>11.4} {:>11.4} {:>11.4}\n",
                m.id, m.input_ssim, m.input_rel_l2, m.output_ssim, m.output_rel_l2
            );
        }
        let row = |name: &str, a: &MetricSummary| {
            format!(
                "{name:<10} ssim {:.4} ± {:.4}   relL2 {:.4} ± {:.4}\n",
                a.ssim.mean, a.ssim.std, a.rel_l2.mean, a.rel_l2.std
            )
        };
        s += &row("input", &self.input);
        s += &row("output", &self.output);
        s
    }
}

/// Prediction for entry `id` is `pred_dir/<id>.json` (EITIMG).
pub fn evaluate(manifest_path: &Path, pred_dir: &Path) -> Result<MetricsReport> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let missing: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| !pred_dir.join(format!("{}.json", e.id)).is_file())
        .map(|e| e.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(EitError::InvalidArgument(format!("missing predictions for ids: {}", missing.join(", "))));
    }
    let images: Vec<ImageMetrics> = manifest
        .entries
        .par_iter()
        .map(|e| -> Result<ImageMetrics> {
            let truth = read_eitimg(&root.join(&e.truth_path))?;
            let dbar = read_eitimg(&root.join(&e.dbar_path))?;
            let pred = read_eitimg(&pred_dir.join(format!("{}.json", e.id)))?;
            Ok(ImageMetrics {
                id: e.id.clone(),
                input_ssim: ssim(&dbar, &truth)?,
                input_rel_l2: rel_l2_error(&dbar, &truth)?,
                output_ssim: ssim(&pred, &truth)?,
                output_rel_l2: rel_l2_error(&pred, &truth)?,
            })
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&ImageMetrics) -> f64| images.iter().map(f).collect::<Vec<_>>();
    Ok(MetricsReport {
        input: MetricSummary {
            ssim: Aggregate::of(&col(|m| m.input_ssim)),
            rel_l2: Aggregate::of(&col(|m| m.input_rel_l2)),
        },
        output: MetricSummary {
            ssim: Aggregate::of(&col(|m| m.output_ssim)),
            rel_l2: Aggregate::of(&col(|m| m.output_rel_l2)),
        },
        images,
    })
}

pub fn default_png_path(out: &Path) -> PathBuf {
    out.with_extension("png")
}
