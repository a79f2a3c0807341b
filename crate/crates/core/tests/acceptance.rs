//! Acceptance suite. Runs every criterion, prints one `[PASS]`/`[FAIL]` line
//! each and exits non-zero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use tvmap::dataset::{Dataset, DatasetRecord};
use tvmap::fidelity::{gaussian_value_grad, poisson_value_grad};
use tvmap::label::{optimal_mu_image, oracle_mu_map, ssim_at, SearchConfig};
use tvmap::metrics::{ssim, SsimConfig};
use tvmap::nn::{Architecture, WeightBundle};
use tvmap::noise::add_gaussian;
use tvmap::solver::{self, gaussian_residual};
use tvmap::tv::{forward_diff, forward_diff_adjoint, tv_value_grad, GradientField};
use tvmap::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let h = 1e-6;
    let eps = tv::DEFAULT_EPS;
    let eta = noise::DEFAULT_ETA;
    let mut worst = [0.0f64; 3];
    for k in 0..20 {
        let mut r = rng(1000 + k);
        let x = random_image(&mut r, 8, 8, 0.05, 1.0);
        let y = random_image(&mut r, 8, 8, 0.0, 1.0);
        let mu: Vec<f64> = (0..64).map(|_| r.random_range(0.01..50.0)).collect();
        let map = MuMap::new(Image::new(8, 8, mu.clone()).unwrap()).unwrap();

        let (_, g) = tv_value_grad(&x, eps).unwrap();
        let fd = central_diff(|z| tv_oracle(z, eps), &x, h);
        worst[0] = worst[0].max(rel_err(g.as_slice(), &fd));

        let (_, g) = gaussian_value_grad(&x, &y, &map).unwrap();
        let fd = central_diff(|z| gaussian_oracle(z, &y, &mu), &x, h);
        worst[1] = worst[1].max(rel_err(g.as_slice(), &fd));

        // a few exact zeros exercise the 0·log 0 branch
        let mut yp = y.clone();
        yp.as_mut_slice()[..4].fill(0.0);
        let (_, g) = poisson_value_grad(&x, &yp, &map, eta).unwrap();
        let fd = central_diff(|z| kl_oracle(z, &yp, &mu, eta), &x, h);
        worst[2] = worst[2].max(rel_err(g.as_slice(), &fd));
    }
    let elapsed = start.elapsed();
    ensure(worst.iter().all(|&e| e < 1e-6), || {
        format!("max relative error tv/gauss/kl = {worst:?}")
    })?;
    ensure(elapsed < Duration::from_secs(5), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "max rel err tv {:.1e}, gaussian {:.1e}, kl {:.1e}; {elapsed:.2?}",
        worst[0], worst[1], worst[2]
    ))
}

fn adjoint_identity() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..100 {
        let mut r = rng(2000 + k);
        let (w, h) = (r.random_range(1..20), r.random_range(1..20));
        let x = random_image(&mut r, w, h, -1.0, 1.0);
        let p = GradientField {
            width: w,
            height: h,
            dh: (0..w * h).map(|_| r.random_range(-1.0..1.0)).collect(),
            dv: (0..w * h).map(|_| r.random_range(-1.0..1.0)).collect(),
        };
        let dx = forward_diff(&x);
        let lhs = dot(&dx.dh, &p.dh) + dot(&dx.dv, &p.dv);
        let rhs = dot(x.as_slice(), forward_diff_adjoint(&p).as_slice());
        let pn = (norm(&p.dh).powi(2) + norm(&p.dv).powi(2)).sqrt();
        worst = worst.max((lhs - rhs).abs() / (norm(x.as_slice()) * pn));
    }
    ensure(worst < 1e-12, || format!("max normalised gap {worst:.3e}"))?;
    Ok(format!("max normalised gap {worst:.1e} over 100 instances"))
}

fn solver_optimality() -> Outcome {
    // the default 500-iteration budget stops well short of this accuracy
    let cfg = SolverConfig {
        max_iters: 5000,
        rel_tol: 1e-9,
        ..SolverConfig::default()
    };
    let n = 256.0;
    let mut worst_res = 0.0f64;
    let mut worst_obj = 0.0f64;
    let mut default_gap = 0.0f64;
    for k in 0..5u64 {
        let mut r = rng(3000 + k);
        let y = random_image(&mut r, 16, 16, 0.0, 1.0);
        let mu: Vec<f64> = if k < 3 {
            vec![10.0; 256]
        } else {
            (0..256).map(|_| r.random_range(5.0..20.0)).collect()
        };
        let map = MuMap::new(Image::new(16, 16, mu.clone()).unwrap()).unwrap();
        let (x, rep) = solver::solve_gaussian(&y, &map, &cfg).unwrap();
        let res = gaussian_residual(&x, &y, &map, cfg.eps).unwrap();
        worst_res = worst_res.max(res / n);

        let oracle = plain_gd_oracle(&y, &mu, cfg.eps, 50_000);
        let f_oracle = gaussian_oracle(&oracle, &y, &mu) + tv_oracle(&oracle, cfg.eps);
        worst_obj = worst_obj.max((rep.final_objective - f_oracle).abs() / f_oracle.abs());

        let (_, quick) = solver::solve_gaussian(&y, &map, &SolverConfig::default()).unwrap();
        default_gap = default_gap.max((quick.final_objective - f_oracle).abs() / f_oracle.abs());
    }
    ensure(worst_res < 1e-4, || format!("residual/n = {worst_res:.3e}"))?;
    ensure(worst_obj < 1e-6, || {
        format!("objective gap to oracle {worst_obj:.3e}")
    })?;
    Ok(format!(
        "max residual/n {worst_res:.1e}, max objective gap {worst_obj:.1e} \
         (max_iters 5000, rel_tol 1e-9; default config gap {default_gap:.1e})"
    ))
}

fn projection_invariant() -> Outcome {
    let eta = noise::DEFAULT_ETA;
    let mut wins = 0;
    let mut report = Vec::new();
    for k in 0..10u64 {
        let mut r = rng(4000 + k);
        let clean = random_image(&mut r, 16, 16, 0.0, 1.0);
        let y = noise::add_poisson(&clean, 30.0, eta, Seed(k)).unwrap();
        let mu: Vec<f64> = (0..256).map(|_| r.random_range(0.5..50.0)).collect();
        let map = MuMap::new(Image::new(16, 16, mu.clone()).unwrap()).unwrap();
        let cfg = SolverConfig {
            record_iterates: true,
            ..SolverConfig::default()
        };
        let (_, rep) = solver::solve_poisson(&y, &map, &cfg).unwrap();
        for (i, it) in rep.iterates.iter().enumerate() {
            ensure(
                it.as_slice().iter().all(|v| (0.0..=1.0).contains(v)),
                || format!("instance {k}: iterate {i} leaves [0,1]"),
            )?;
        }
        let Backtracking::NonMonotone {
            memory,
            sufficient_decrease,
            ..
        } = cfg.backtrack
        else {
            unreachable!()
        };
        for (i, s) in rep.accepted_steps.iter().enumerate() {
            let window = &rep.objective_trace[(i + 1).saturating_sub(memory)..=i];
            let reference = window.iter().cloned().fold(f64::MIN, f64::max);
            ensure(reference == s.reference, || {
                format!(
                    "instance {k} step {i}: reference {} vs trace max {reference}",
                    s.reference
                )
            })?;
            ensure(
                s.objective <= reference - sufficient_decrease / (2.0 * s.step) * s.sq_dist,
                || format!("instance {k} step {i} violates the acceptance rule"),
            )?;
            ensure(s.objective == rep.objective_trace[i + 1], || {
                format!("instance {k} step {i}: trace disagrees with accepted objective")
            })?;
        }

        let fixed = projected_gd_oracle(&y, &mu, cfg.eps, eta, cfg.eps / 8.0, rep.grad_evals);
        if rep.final_objective <= fixed {
            wins += 1;
        }
        report.push(format!("{:.4} vs {fixed:.4}", rep.final_objective));
    }
    ensure(wins == 10, || {
        format!("backtracked no worse on {wins}/10: {report:?}")
    })?;
    Ok(
        "all iterates in [0,1], rule holds on every step, backtracked beats fixed-step GD on 10/10"
            .into(),
    )
}

fn golden_section_fidelity() -> Outcome {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let grid = log_grid(MU_MIN, MU_MAX, 60);
    let mut worst = f64::MIN;
    for k in 0..20u64 {
        let clean = synth::mixed_scene(k as usize, 32, 5000 + k);
        let noisy = add_gaussian(&clean, 0.01, Seed(5000 + k)).unwrap();
        let label = optimal_mu_image(
            &clean,
            &noisy,
            FidelityKind::Gaussian,
            &cfg,
            &SearchConfig::default(),
        )
        .unwrap();
        let grid_best = grid
            .iter()
            .map(|&mu| ssim_at(&clean, &noisy, mu, FidelityKind::Gaussian, &cfg).unwrap())
            .fold(f64::MIN, f64::max);
        worst = worst.max(grid_best - label.ssim_at_mu);
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-3, || {
        format!("grid beats golden section by {worst:.3e}")
    })?;
    ensure(elapsed < Duration::from_secs(600), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "max shortfall vs 60-point grid {:.1e}; {elapsed:.1?}",
        worst.max(0.0)
    ))
}

fn oracle_map_superiority() -> Outcome {
    let cfg = SolverConfig::default();
    let search = SearchConfig::default();
    let mut gains = Vec::new();
    for i in 0..synth::SCENES {
        let clean = synth::mixed_scene(i, 64, 11);
        let noisy = add_gaussian(&clean, 0.01, Seed(100 + i as u64)).unwrap();
        let scalar =
            optimal_mu_image(&clean, &noisy, FidelityKind::Gaussian, &cfg, &search).unwrap();
        let map = oracle_mu_map(&clean, &noisy, FidelityKind::Gaussian, &cfg, &search, 4).unwrap();
        let (x, _) = solver::solve(&noisy, &map, FidelityKind::Gaussian, &cfg).unwrap();
        let s = ssim(&clean, &x, &SsimConfig::default()).unwrap();
        gains.push(s - scalar.ssim_at_mu);
    }
    let wins = gains.iter().filter(|&&g| g >= 0.01).count();
    let shown: Vec<String> = gains.iter().map(|g| format!("{g:+.4}")).collect();
    ensure(wins >= 4, || {
        format!("gain >= 0.01 on {wins}/5 images: {shown:?}")
    })?;
    Ok(format!(
        "SSIM gains over best scalar mu: {}",
        shown.join(" ")
    ))
}

fn constant_map_equivalence() -> Outcome {
    for k in 0..10u64 {
        let mut r = rng(6000 + k);
        let kind = if k % 2 == 0 {
            FidelityKind::Gaussian
        } else {
            FidelityKind::Poisson
        };
        let y = random_image(&mut r, 20, 17, 0.0, 1.0);
        let c = r.random_range(MU_MIN..MU_MAX);
        let cfg = SolverConfig::default();
        let map = MuMap::new(Image::filled(20, 17, c)).unwrap();
        let (a, ra) = solver::solve(&y, &map, kind, &cfg).unwrap();
        let (b, rb) = solver::solve_scalar(&y, c, kind, &cfg).unwrap();
        let same = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(p, q)| p.to_bits() == q.to_bits());
        ensure(same && ra.objective_trace == rb.objective_trace, || {
            format!("instance {k} ({kind}, mu {c}) differs")
        })?;
    }
    Ok("10/10 instances bit-identical".into())
}

fn ssim_oracle_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let mut r = rng(7000 + k);
        let (w, h) = (r.random_range(11..40), r.random_range(11..40));
        let a = random_image(&mut r, w, h, 0.0, 1.0);
        let b = if k % 2 == 0 {
            random_image(&mut r, w, h, 0.0, 1.0)
        } else {
            add_gaussian(&a, 0.005, Seed(k)).unwrap()
        };
        let ours = ssim(&a, &b, &SsimConfig::default()).unwrap();
        worst = worst.max((ours - ssim_textbook(&a, &b)).abs());
        let self_sim = ssim(&a, &a, &SsimConfig::default()).unwrap();
        ensure(self_sim == 1.0, || format!("ssim(x,x) = {self_sim:.17}"))?;
    }
    ensure(worst < 1e-9, || format!("max deviation {worst:.3e}"))?;
    Ok(format!(
        "max deviation from direct-window SSIM {worst:.1e}; ssim(x,x) = 1"
    ))
}

fn regressor_manifest() -> Outcome {
    let bundle = WeightBundle::random(Architecture::RegressorV1, 8);
    let net = nn::Network::new(&bundle).map_err(|e| e.to_string())?;
    let (out, shapes) = net
        .forward_traced(&[0.5; 32 * 32])
        .map_err(|e| e.to_string())?;
    let layers = Architecture::RegressorV1.layers();
    let mut seen = Vec::new();
    for (layer, shape) in layers.iter().zip(&shapes) {
        match layer {
            nn::LayerSpec::Conv { .. } | nn::LayerSpec::MaxPool2 | nn::LayerSpec::Flatten => {
                seen.push(shape.clone())
            }
            nn::LayerSpec::FullyConnected { .. } => seen.push(shape.clone()),
            _ => {}
        }
    }
    let table: Vec<Vec<usize>> = vec![
        vec![64, 32, 32],
        vec![64, 16, 16],
        vec![128, 16, 16],
        vec![128, 8, 8],
        vec![256, 8, 8],
        vec![256, 4, 4],
        vec![512, 4, 4],
        vec![512, 2, 2],
        vec![2048],
        vec![512],
        vec![128],
        vec![1],
    ];
    ensure(seen == table, || format!("layer shapes {seen:?}"))?;
    ensure(out.len() == 1, || format!("output length {}", out.len()))?;
    let count = bundle.parameter_count();
    ensure(
        count == 2_798_721 && Architecture::RegressorV1.parameter_count() == count,
        || format!("parameter count {count}"),
    )?;
    Ok(format!("12 layer shapes match; {count} parameters"))
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(9000);
    let records = (0..7)
        .map(|i| DatasetRecord {
            source_id: i,
            origin: (r.random_range(0..500), r.random_range(0..500)),
            label: r.random_range(0.01..240.0),
            patch: (0..32 * 32).map(|_| r.random_range(-0.5f32..1.5)).collect(),
        })
        .collect();
    let ds = Dataset {
        patch_size: 32,
        noise_kind: FidelityKind::Poisson,
        noise_param: 30.0,
        records,
    };
    let bytes = ds.encode().map_err(|e| e.to_string())?;
    let path = dir.path().join("d.tvds");
    dataset::write_dataset(&path, &ds).map_err(|e| e.to_string())?;
    let back = dataset::read_dataset(&path).map_err(|e| e.to_string())?;
    ensure(back == ds, || "TVDS records changed".into())?;
    ensure(std::fs::read(&path).unwrap() == bytes, || {
        "TVDS file bytes differ".into()
    })?;
    ensure(back.encode().unwrap() == bytes, || {
        "TVDS re-encode differs".into()
    })?;
    for (what, bad) in corruptions(&bytes, Some(12)) {
        ensure(
            matches!(Dataset::decode(&bad), Err(Error::Format { .. })),
            || format!("TVDS accepted {what}"),
        )?;
    }

    for arch in [Architecture::RegressorV1, Architecture::ClassifierV1] {
        let bundle = WeightBundle::random(arch, 21);
        let bytes = bundle.encode();
        let path = dir.path().join(format!("{arch}.tvmw"));
        nn::save_weights(&path, &bundle).map_err(|e| e.to_string())?;
        let back = nn::load_weights(&path).map_err(|e| e.to_string())?;
        ensure(back == bundle, || format!("{arch} tensors changed"))?;
        ensure(std::fs::read(&path).unwrap() == bytes, || {
            "TVMW file bytes differ".into()
        })?;
        ensure(back.encode() == bytes, || "TVMW re-encode differs".into())?;
        for (what, bad) in corruptions(&bytes, None) {
            ensure(WeightBundle::decode(&bad).is_err(), || {
                format!("TVMW accepted {what}")
            })?;
        }
    }
    let mut wrong = WeightBundle::identity_bn_zeros(Architecture::RegressorV1).encode();
    // first tensor is conv1.weight (64,1,5,5); rewrite its leading extent
    let dims_at = 4 + 4 + 4 + "regressor_v1".len() + 4 + 4 + "conv1.weight".len() + 1;
    wrong[dims_at..dims_at + 8].copy_from_slice(&32u64.to_le_bytes());
    let trimmed: Vec<u8> = [&wrong[..dims_at + 32], &wrong[dims_at + 32 + 32 * 25 * 4..]].concat();
    ensure(
        matches!(
            WeightBundle::decode(&trimmed),
            Err(Error::ShapeMismatch { .. })
        ),
        || "TVMW accepted a wrongly shaped tensor".into(),
    )?;
    Ok("TVDS and TVMW byte-exact; truncation, magic, version, trailing-byte and shape errors detected".into())
}

/// Truncated, bad-magic, bad-version and trailing-byte variants, plus an
/// invalid noise-kind byte when its offset is given.
fn corruptions(bytes: &[u8], kind_at: Option<usize>) -> Vec<(&'static str, Vec<u8>)> {
    let mut out = vec![
        ("truncation", bytes[..bytes.len() - 3].to_vec()),
        ("empty input", Vec::new()),
        ("bad magic", [b"XXXX".as_slice(), &bytes[4..]].concat()),
        ("trailing bytes", [bytes, &[0u8]].concat()),
    ];
    let mut v = bytes.to_vec();
    v[4] = 99;
    out.push(("bad version", v));
    if let Some(at) = kind_at {
        let mut k = bytes.to_vec();
        k[at] = 7;
        out.push(("bad noise kind", k));
    }
    out
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_correctness),
        ("adjoint identity", adjoint_identity),
        ("solver optimality", solver_optimality),
        (
            "projection invariant and backtracking efficiency",
            projection_invariant,
        ),
        ("golden-section fidelity", golden_section_fidelity),
        ("oracle-map superiority", oracle_map_superiority),
        ("constant-map equivalence", constant_map_equivalence),
        ("ssim oracle equivalence", ssim_oracle_equivalence),
        ("regressor shape manifest", regressor_manifest),
        ("format round trips", format_round_trips),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
