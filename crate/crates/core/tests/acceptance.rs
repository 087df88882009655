//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so every line is printed on each `cargo test`. A failing
//! criterion makes the process exit nonzero only with `ACCEPTANCE_STRICT=1`,
//! since cargo skips the remaining test targets after a failed one.

mod common;

use dbar_core::dbar::{reconstruct_image, DbarOptions, DbarSolver};
use dbar_core::electrode::{dn_from_nd, nd_entries_continuum, nd_matrix_continuum, ElectrodeModel, TrigBasis};
use dbar_core::gmres::GmresConfig;
use dbar_core::mesh::{build_disc_mesh, DESK_LEVEL};
use dbar_core::phantom::{gen_chest_phantom, gen_circle_phantom, ChestConfig, CircleConfig, Phantom, Shape};
use dbar_core::pipeline::{ForwardModel, PipelineConfig, Preset};
use dbar_core::scattering::{scattering_born_continuum, KGrid, ScatteringData};
use num_complex::Complex64;
use std::time::{Duration, Instant};

const HOMOGENEITY_TOL: f64 = 0.03;
const HOMOGENEITY_RADIUS: f64 = 0.9;
const HOMOGENEITY_BUDGET: Duration = Duration::from_secs(60);
const ND_DIAG_TOL: f64 = 0.02;
const ND_OFFDIAG_TOL: f64 = 0.01;
const DBAR_ORACLE_TOL: f64 = 1e-8;
const CONJ_SYM_TOL: f64 = 1e-10;
const MU_IMAG_TOL: f64 = 1e-3;
const POLARITY_TRIALS: u64 = 40;
const POLARITY_MARGIN: f64 = 0.2;
const BORN_TOL: f64 = 0.20;
const BORN_K_MAX: f64 = 2.0;
const SINGLE_THREAD_BUDGET: Duration = Duration::from_secs(5);
const PARALLEL_BUDGET: Duration = Duration::from_secs(1);
const GENERATOR_DRAWS: u64 = 10_000;
const TV_SAMPLE_PER_PRESET: u64 = 50;
const TV_FRACTION: f64 = 0.95;

struct Outcome {
    pass: bool,
    detail: String,
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool").install(f)
}

fn homogeneity() -> Outcome {
    let start = Instant::now();
    let (dev, sigma0) = single_threaded(|| {
        let model = ForwardModel::new(PipelineConfig::for_preset(Preset::Kit4)).unwrap();
        let nd = model.simulate_noisy_nd(&Phantom::homogeneous(0.3), 0).unwrap();
        let rec = model.reconstruct_nd(&nd, None).unwrap();
        (common::max_rel_deviation(&rec.recon.image, 0.3, HOMOGENEITY_RADIUS), rec.sigma0)
    });
    let elapsed = start.elapsed();
    // noiseless run, reported for context only
    let clean = {
        let model = ForwardModel::new(PipelineConfig::for_preset(Preset::Kit4)).unwrap();
        let nd = model.simulate_nd(&Phantom::homogeneous(0.3)).unwrap();
        let rec = model.reconstruct_nd(&nd, None).unwrap();
        common::max_rel_deviation(&rec.recon.image, 0.3, HOMOGENEITY_RADIUS)
    };
    Outcome {
        pass: dev <= HOMOGENEITY_TOL && elapsed < HOMOGENEITY_BUDGET,
        detail: format!(
            "max deviation {:.2}% (limit {:.0}%), sigma0 {sigma0:.5}, {:.1} s single-threaded; noiseless deviation {:.3}%",
            100.0 * dev,
            100.0 * HOMOGENEITY_TOL,
            elapsed.as_secs_f64(),
            100.0 * clean
        ),
    }
}

/// (max diagonal relative error, max off-diagonal / min(diag scale)).
fn nd_oracle_errors(level: u32) -> (f64, f64) {
    let mesh = build_disc_mesh(level);
    let basis = TrigBasis::full_coverage(32).unwrap();
    let ones = vec![1.0; mesh.triangles.len()];
    let nd = nd_entries_continuum(&mesh, &ones, &basis, ElectrodeModel::Continuum).unwrap();
    let scale: Vec<f64> = basis.indices.iter().map(|n| 1.0 / n.unsigned_abs() as f64).collect();
    let (mut diag, mut off) = (0.0f64, 0.0f64);
    for i in 0..scale.len() {
        for j in 0..scale.len() {
            if i == j {
                diag = diag.max((nd[(i, i)] - scale[i]).abs() / scale[i]);
            } else {
                off = off.max(nd[(i, j)].abs() / scale[i].min(scale[j]));
            }
        }
    }
    (diag, off)
}

fn analytic_dn_oracle() -> Outcome {
    let (d5, o5) = nd_oracle_errors(DESK_LEVEL);
    let (d6, o6) = nd_oracle_errors(DESK_LEVEL + 1);
    Outcome {
        pass: d5 <= ND_DIAG_TOL && o5 <= ND_OFFDIAG_TOL && d6 < d5,
        detail: format!(
            "16384 tris: diag {:.3}%, off-diag {:.4}%; 65536 tris: diag {:.3}%, off-diag {:.4}%",
            100.0 * d5,
            100.0 * o5,
            100.0 * d6,
            100.0 * o6
        ),
    }
}

fn dbar_oracle() -> Outcome {
    let grid = KGrid::new(16, 2.3 * 4.5, 4.5).unwrap();
    let opts = DbarOptions { gmres: GmresConfig { max_iter: 2000, tol: 1e-14, restart: 60 } };
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let t = common::random_admissible_t(grid, 10.0, seed);
        let solver = DbarSolver::new(&t, opts).unwrap();
        for z in [Complex64::new(0.0, 0.0), Complex64::new(0.37, -0.52), Complex64::new(-0.8, 0.1)] {
            let fast = solver.solve_full(z).unwrap();
            let dense = common::dense_dbar(&t, z);
            let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.norm()));
            let err = fast.values.iter().zip(&dense).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            worst = worst.max(err / scale);
        }
    }
    let zero = ScatteringData::zeros(grid, f64::INFINITY);
    let mu0 = DbarSolver::new(&zero, opts).unwrap().solve_full(Complex64::new(0.3, 0.4)).unwrap();
    let exact = mu0.values.iter().all(|v| *v == Complex64::new(1.0, 0.0));
    Outcome {
        pass: worst <= DBAR_ORACLE_TOL && exact,
        detail: format!("max relative difference vs dense solve {worst:.2e}; t = 0 gives mu = 1 exactly: {exact}"),
    }
}

fn conjugate_symmetry() -> Outcome {
    let mut worst_t = 0.0f64;
    let mut worst_mu = 0.0f64;
    for preset in [Preset::Act4, Preset::Kit4] {
        let cfg = PipelineConfig::for_preset(preset);
        let model = ForwardModel::new(cfg.clone()).unwrap();
        let phantom = cfg.random_phantom(11).unwrap();
        let rec = model.reconstruct_nd(&model.simulate_nd(&phantom).unwrap(), None).unwrap();
        let rel = rec.scattering.conjugate_symmetry_defect() / rec.scattering.max_abs();
        worst_t = worst_t.max(rel);
        worst_mu = worst_mu.max(rec.recon.mu_imag_rel_max);
    }
    Outcome {
        pass: worst_t <= CONJ_SYM_TOL && worst_mu <= MU_IMAG_TOL,
        detail: format!("max|t(-k) - conj t(k)|/max|t| = {worst_t:.2e}; max|Im mu|/|mu| = {worst_mu:.2e}"),
    }
}

fn polarity_trial(model: &ForwardModel, i: u64, noisy: bool) -> bool {
    let mut circles = CircleConfig { count_range: [1, 1], ..CircleConfig::default() };
    let conductive = i < POLARITY_TRIALS / 2;
    circles.conductive_probability = if conductive { 1.0 } else { 0.0 };
    let phantom = gen_circle_phantom(&circles, 1000 + i).unwrap();
    let Shape::Circle { center, radius } = phantom.regions[0].shape else { unreachable!("circle phantom") };
    let nd = if noisy { model.simulate_noisy_nd(&phantom, i).unwrap() } else { model.simulate_nd(&phantom).unwrap() };
    let rec = model.reconstruct_nd(&nd, None).unwrap();
    let (inside, annulus) = common::region_means(&rec.recon.image, center, radius, POLARITY_MARGIN);
    if conductive {
        inside > annulus
    } else {
        inside < annulus
    }
}

fn contrast_polarity() -> Outcome {
    let model = ForwardModel::new(PipelineConfig::for_preset(Preset::Kit4)).unwrap();
    let clean = (0..POLARITY_TRIALS).filter(|&i| polarity_trial(&model, i, false)).count();
    let noisy = (0..POLARITY_TRIALS).filter(|&i| polarity_trial(&model, i, true)).count();
    Outcome {
        pass: clean as u64 == POLARITY_TRIALS,
        detail: format!(
            "{clean}/{POLARITY_TRIALS} correct ordering (noiseless); {noisy}/{POLARITY_TRIALS} with 1e-4 noise (context)"
        ),
    }
}

fn born_fourier() -> Outcome {
    let (c, rho, amp) = ([0.2, 0.1], 0.4, 0.05);
    let sigma_fn = |x: f64, y: f64| common::bump_sigma(x, y, c, rho, amp);
    let cfg = PipelineConfig::for_preset(Preset::Kit4);
    let mesh = build_disc_mesh(cfg.mesh_level);
    let basis = cfg.preset.basis();
    let sigma: Vec<f64> = (0..mesh.triangles.len())
        .map(|t| {
            let p = mesh.centroid(t);
            sigma_fn(p[0], p[1])
        })
        .collect();
    let ones = vec![1.0; sigma.len()];
    let nd = nd_matrix_continuum(&mesh, &sigma, &basis, cfg.electrode_model).unwrap();
    let dn = dn_from_nd(&nd.with_scaling(1.0, 1.0)).unwrap();
    let dn_one = dn_from_nd(&nd_matrix_continuum(&mesh, &ones, &basis, cfg.electrode_model).unwrap()).unwrap();
    let grid = KGrid::standard(cfg.cutoff_radius).unwrap();
    let t = scattering_born_continuum(&dn, &dn_one, &grid, f64::INFINITY).unwrap();
    let (mut num, mut num_literal, mut den) = (0.0, 0.0, 0.0);
    for r in 0..grid.size {
        for col in 0..grid.size {
            let k = grid.k(r, col);
            if k.norm() == 0.0 || k.norm() > BORN_K_MAX {
                continue;
            }
            let q = common::q_hat(sigma_fn, [-2.0 * k.re, 2.0 * k.im], 800);
            num += (t.get(r, col) - q).norm_sqr();
            num_literal += (t.get(r, col) / (4.0 * std::f64::consts::PI) - q).norm_sqr();
            den += q.norm_sqr();
        }
    }
    let rel = (num / den).sqrt();
    Outcome {
        pass: rel <= BORN_TOL,
        detail: format!(
            "relative L2 of t vs q^(-2k1, 2k2) over |k| <= 2: {:.2}% (with an extra 1/(4 pi): {:.1}%)",
            100.0 * rel,
            100.0 * (num_literal / den).sqrt()
        ),
    }
}

fn throughput() -> Outcome {
    let cfg = PipelineConfig::for_preset(Preset::Act4);
    let model = ForwardModel::new(cfg.clone()).unwrap();
    let phantom = cfg.random_phantom(5).unwrap();
    let nd = model.simulate_nd(&phantom).unwrap();
    let sigma0 = dbar_core::electrode::estimate_sigma0(&nd).unwrap();
    let dn = dn_from_nd(&nd.with_scaling(1.0, sigma0)).unwrap();
    let run = || {
        let start = Instant::now();
        let t = scattering_born_continuum(&dn, &model.dn_one, &model.kgrid, cfg.threshold).unwrap();
        let img = reconstruct_image(&t, cfg.image_size, sigma0).unwrap();
        assert_eq!(img.image.size, 64);
        start.elapsed()
    };
    let serial = single_threaded(run);
    let parallel = run();
    let threads = rayon::current_num_threads();
    Outcome {
        pass: serial < SINGLE_THREAD_BUDGET && parallel < PARALLEL_BUDGET,
        detail: format!(
            "single-threaded {:.2} s (limit 5 s); parallel {:.2} s on {threads} thread(s) (limit 1 s)",
            serial.as_secs_f64(),
            parallel.as_secs_f64()
        ),
    }
}

fn generator_statistics() -> Outcome {
    let chest = ChestConfig::default();
    let organs: Vec<String> = chest.organs.iter().map(|o| o.name.clone()).collect();
    let expected = [0.95, 0.95, 0.90, 0.90, 1.00];
    let mut included = vec![0u64; organs.len()];
    let (mut lungs, mut injured) = (0u64, 0u64);
    for seed in 0..GENERATOR_DRAWS {
        let p = gen_chest_phantom(&chest, seed).unwrap();
        for (i, name) in organs.iter().enumerate() {
            let parts: Vec<&str> = p
                .regions
                .iter()
                .map(|r| r.label.as_str())
                .filter(|l| *l == name || l.starts_with(&format!("{name}:")))
                .collect();
            if !parts.is_empty() {
                included[i] += 1;
                if name.ends_with("lung") {
                    lungs += 1;
                    injured += (parts.len() > 1) as u64;
                }
            }
        }
    }
    let rates: Vec<f64> = included.iter().map(|c| *c as f64 / GENERATOR_DRAWS as f64).collect();
    let rates_ok = organs.iter().enumerate().all(|(i, name)| {
        let e = match name.as_str() {
            "heart" => expected[0],
            "aorta" => expected[1],
            "left_lung" => expected[2],
            "right_lung" => expected[3],
            "spine" => expected[4],
            _ => return false,
        };
        (rates[i] - e).abs() <= 0.02
    });
    let injury = injured as f64 / lungs as f64;

    let circles = CircleConfig::default();
    let mut radii = Vec::new();
    for seed in 0..GENERATOR_DRAWS {
        for r in gen_circle_phantom(&circles, seed).unwrap().regions {
            if let Shape::Circle { radius, .. } = r.shape {
                radii.push(radius);
            }
        }
    }
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let in_range = radii.iter().all(|r| (0.2..=0.4).contains(r));
    let rate_text: Vec<String> = organs.iter().zip(&rates).map(|(n, r)| format!("{n} {:.1}%", 100.0 * r)).collect();
    Outcome {
        pass: rates_ok && (0.27..=0.33).contains(&injury) && in_range && (0.29..=0.31).contains(&mean),
        detail: format!(
            "{}; injury {:.1}%; KIT4 radii in [0.2, 0.4]: {in_range}, mean {mean:.4}",
            rate_text.join(", "),
            100.0 * injury
        ),
    }
}

/// Not a primary criterion: D-bar images should have lower total variation
/// than their truth images. Noiseless data, 64×64, both presets.
fn smoothness_tv() -> Outcome {
    let mut counts = Vec::new();
    for preset in [Preset::Act4, Preset::Kit4] {
        let model = ForwardModel::new(PipelineConfig::for_preset(preset)).expect("model");
        let mut smoother = 0;
        for seed in 0..TV_SAMPLE_PER_PRESET {
            let p = model.config.random_phantom(seed).expect("phantom");
            let recon = model.reconstruct_nd(&model.simulate_nd(&p).expect("nd"), None).expect("recon");
            let truth = dbar_core::phantom::rasterize(&p, model.config.image_size);
            smoother += (recon.recon.image.total_variation() < truth.total_variation()) as u64;
        }
        counts.push((preset.name(), smoother));
    }
    let total: u64 = counts.iter().map(|c| c.1).sum();
    let n = 2 * TV_SAMPLE_PER_PRESET;
    Outcome {
        pass: total as f64 >= TV_FRACTION * n as f64,
        detail: format!(
            "TV(recon) < TV(truth) on {total}/{n} ({}: {}, {}: {})",
            counts[0].0, counts[0].1, counts[1].0, counts[1].1
        ),
    }
}

fn report(kind: &str, name: &str, check: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let out = check();
    println!(
        "{} {kind}{name}: {} [{:.1} s]",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        start.elapsed().as_secs_f64()
    );
    out.pass
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("homogeneity", homogeneity),
        ("analytic-dn-oracle", analytic_dn_oracle),
        ("dbar-solver-oracle", dbar_oracle),
        ("conjugate-symmetry", conjugate_symmetry),
        ("contrast-polarity", contrast_polarity),
        ("born-fourier", born_fourier),
        ("throughput", throughput),
        ("generator-statistics", generator_statistics),
    ];
    let failed = criteria.iter().filter(|(name, check)| !report("", name, *check)).count();
    report("property ", "smoothness-tv", smoothness_tv);
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
