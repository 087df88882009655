use clap::{Parser, Subcommand, ValueEnum};
use dbar_core::electrode::{MatrixFile, VoltageNormalization};
use dbar_core::image::{read_eitimg, render_png, write_eitimg};
use dbar_core::io::write_json;
use dbar_core::mesh::{build_disc_mesh, level_for_triangles, BASE_TRIANGLES, DESK_LEVEL};
use dbar_core::phantom::{rasterize, Phantom};
use dbar_core::pipeline::{
    default_png_path, derive_seed, evaluate, generate_dataset, reconstruct_file, simulate_measurement_file,
    CurrentPatterns, ForwardModel, PipelineConfig, Preset, ReconstructOptions, DEFAULT_CUTOFF,
};
use dbar_core::{EitError, Result};
use serde_json::json;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "dbar", version, about = "D-bar EIT reconstruction and dataset tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Act4,
    Kit4,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Act4 => Preset::Act4,
            PresetArg::Kit4 => Preset::Kit4,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Trig,
    Adjacent,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    ZeroMeanFirst,
    ScaleFirst,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate (truth, D-bar) image pairs and a manifest.
    Generate {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// FEM mesh size; must be 64·4^k.
        #[arg(long)]
        mesh_tris: Option<usize>,
        #[arg(long = "radius-R", default_value_t = DEFAULT_CUTOFF)]
        radius_r: f64,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        noise_variance: Option<f64>,
    },
    /// Reconstruct from a DN/ND matrix file or a current/voltage measurement file.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sigma0: Option<f64>,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        mesh_tris: Option<usize>,
        #[arg(long = "radius-R")]
        radius_r: Option<f64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value = "zero-mean-first")]
        normalization: NormalizationArg,
        /// Rendered image path (default: next to --out, with .png).
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Score D-bar images and predictions against the truth images.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an EITIMG file to PNG.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Blank pixels outside the unit disc.
        #[arg(long)]
        clip_disc: bool,
    },
    /// Write synthetic input files (ND matrix and/or measurement table) for one phantom.
    Simulate {
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long)]
        seed: u64,
        /// Use a homogeneous phantom of this conductivity instead of a random one.
        #[arg(long)]
        homogeneous: Option<f64>,
        #[arg(long)]
        nd_out: Option<PathBuf>,
        #[arg(long)]
        measurement_out: Option<PathBuf>,
        #[arg(long)]
        truth_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "adjacent")]
        patterns: PatternArg,
        #[arg(long, default_value_t = 0.0)]
        noise_variance: f64,
        #[arg(long)]
        mesh_tris: Option<usize>,
    },
}

fn mesh_level(tris: Option<usize>) -> Result<u32> {
    match tris {
        None => Ok(DESK_LEVEL),
        Some(n) => level_for_triangles(n)
            .ok_or_else(|| EitError::InvalidArgument(format!("--mesh-tris {n} is not {BASE_TRIANGLES}·4^k"))),
    }
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    match cli.command {
        Command::Generate { preset, count, seed, out, mesh_tris, radius_r, threshold, noise_variance } => {
            let mut cfg = PipelineConfig::for_preset(preset.into());
            cfg.mesh_level = mesh_level(mesh_tris)?;
            cfg.cutoff_radius = radius_r;
            if let Some(t) = threshold {
                cfg.threshold = t;
            }
            if let Some(v) = noise_variance {
                cfg.noise_variance = v;
            }
            let m = generate_dataset(&cfg, count, seed, &out)?;
            for f in &m.failures {
                log::warn!("entry {} (seed {}) failed: {}", f.id, f.seed, f.error);
            }
            Ok(json!({
                "manifest": out.join(dbar_core::pipeline::MANIFEST_NAME),
                "written": m.counts.written,
                "failed": m.counts.failed,
            }))
        }
        Command::Reconstruct { input, out, sigma0, preset, mesh_tris, radius_r, threshold, normalization, png } => {
            let opts = ReconstructOptions {
                sigma0,
                preset: preset.map(Into::into),
                mesh_level: Some(mesh_level(mesh_tris)?),
                cutoff_radius: radius_r,
                threshold,
                normalization: match normalization {
                    NormalizationArg::ZeroMeanFirst => VoltageNormalization::ZeroMeanThenScale,
                    NormalizationArg::ScaleFirst => VoltageNormalization::ScaleThenZeroMean,
                },
            };
            let res = reconstruct_file(&input, &opts)?;
            let png = png.unwrap_or_else(|| default_png_path(&out));
            write_eitimg(&res.recon.image, &out)?;
            render_png(&res.recon.image, &png, false)?;
            Ok(json!({
                "image": out,
                "png": png,
                "input_kind": res.input_kind,
                "sigma0": res.sigma0,
                "sigma0_estimated": res.sigma0_estimated,
                "mu_imag_max": res.recon.mu_imag_max,
                "gmres_max_iterations": res.recon.max_iterations,
            }))
        }
        Command::Evaluate { manifest, pred, out } => {
            let report = evaluate(&manifest, &pred)?;
            write_json(&out, &report)?;
            print!("{}", report.table());
            Ok(json!({ "report": out, "images": report.images.len() }))
        }
        Command::Render { input, out, clip_disc } => {
            let img = read_eitimg(&input)?;
            render_png(&img, &out, clip_disc)?;
            Ok(json!({ "png": out }))
        }
        Command::Simulate {
            preset,
            seed,
            homogeneous,
            nd_out,
            measurement_out,
            truth_out,
            patterns,
            noise_variance,
            mesh_tris,
        } => {
            let preset: Preset = preset.into();
            let mut cfg = PipelineConfig::for_preset(preset);
            cfg.mesh_level = mesh_level(mesh_tris)?;
            cfg.noise_variance = noise_variance;
            let phantom = match homogeneous {
                Some(s) => Phantom::homogeneous(s),
                None => cfg.random_phantom(seed)?,
            };
            phantom.validate()?;
            let noise_seed = derive_seed(seed, 0xD1CE);
            if let Some(path) = &nd_out {
                let model = ForwardModel::new(cfg.clone())?;
                let nd = model.simulate_noisy_nd(&phantom, noise_seed)?;
                write_json(path, &MatrixFile::from_nd(&nd, false))?;
            }
            if let Some(path) = &measurement_out {
                let mesh = build_disc_mesh(cfg.mesh_level);
                let currents = match patterns {
                    PatternArg::Trig => CurrentPatterns::Trig,
                    PatternArg::Adjacent => CurrentPatterns::Adjacent,
                };
                let file = simulate_measurement_file(&mesh, &phantom, preset, currents, noise_variance, noise_seed)?;
                write_json(path, &file)?;
            }
            if let Some(path) = &truth_out {
                write_eitimg(&rasterize(&phantom, cfg.image_size), path)?;
            }
            Ok(json!({ "nd": nd_out, "measurement": measurement_out, "truth": truth_out }))
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            std::process::exit(1);
        }
    }
}
