use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use tvmap::dataset::{self, BuildOptions, OutlierRule};
use tvmap::image::{load_pgm, save_pgm, MaxVal};
use tvmap::label::SearchConfig;
use tvmap::metrics::{psnr, ssim, SsimConfig};
use tvmap::nn::{self, Classifier, Regressor};
use tvmap::{mapfile, solver, FidelityKind, Image, MuMap, NoiseModel, Seed, SolverConfig};

use crate::args::*;
use crate::error::{require_file, stage, CliError, CliResult};
use crate::manifest::write_manifest;

fn noise_model(args: &NoiseArgs) -> CliResult<NoiseModel> {
    let model = match args.noise {
        NoiseKind::Gaussian => {
            let sigma2 = args
                .sigma2
                .ok_or_else(|| CliError::usage("--noise gaussian needs --sigma2"))?;
            NoiseModel::gaussian(sigma2)
        }
        NoiseKind::Poisson => {
            if args.sigma2.is_some() {
                return Err(CliError::usage(
                    "--sigma2 cannot be used with --noise poisson",
                ));
            }
            let alpha = args
                .alpha
                .ok_or_else(|| CliError::usage("--noise poisson needs --alpha"))?;
            NoiseModel::poisson(alpha, args.eta)
        }
    };
    model.map_err(stage("noise"))
}

fn fidelity(kind: NoiseKind) -> FidelityKind {
    match kind {
        NoiseKind::Gaussian => FidelityKind::Gaussian,
        NoiseKind::Poisson => FidelityKind::Poisson,
    }
}

fn solver_config(args: &SolverArgs, eta: f64) -> SolverConfig {
    SolverConfig {
        eps: args.eps,
        max_iters: args.max_iters,
        rel_tol: args.rel_tol,
        eta,
        ..SolverConfig::default()
    }
}

fn load_image(path: &Path) -> CliResult<Image> {
    require_file(path)?;
    load_pgm(path).map_err(stage("read"))
}

pub fn inject(args: &InjectArgs) -> CliResult<()> {
    let img = load_image(&args.input)?;
    let model = noise_model(&args.noise)?;
    let noisy = model
        .apply(&img, Seed(args.seed))
        .map_err(stage("inject"))?;
    save_pgm(&noisy, &args.output, MaxVal::Sixteen).map_err(stage("write"))?;
    write_manifest(
        "inject",
        args,
        Some(args.seed),
        std::slice::from_ref(&args.input),
        std::slice::from_ref(&args.output),
    )
}

fn labelled_dataset(args: &LabelArgs) -> CliResult<dataset::Dataset> {
    if !args.corpus.is_dir() {
        return Err(CliError::usage(format!(
            "corpus directory not found: {}",
            args.corpus.display()
        )));
    }
    let model = noise_model(&args.noise)?;
    let opts = BuildOptions {
        patch_size: args.patch_size,
        stride: args.stride,
        realisations: args.realisations,
        seed: Seed(args.seed),
        solver: solver_config(&args.solver, args.noise.eta),
        search: SearchConfig {
            budget: args.search.budget,
            bracket_tol: args.search.bracket_tol,
            ..SearchConfig::default()
        },
    };
    dataset::build_dataset(&args.corpus, &model, &opts).map_err(stage("label"))
}

pub fn gen_labels(args: &LabelArgs) -> CliResult<()> {
    let ds = labelled_dataset(args)?;
    info!("labelled {} patches", ds.records.len());
    dataset::write_dataset(&args.output, &ds).map_err(stage("write"))?;
    write_manifest(
        "gen-labels",
        args,
        Some(args.seed),
        std::slice::from_ref(&args.corpus),
        std::slice::from_ref(&args.output),
    )
}

pub fn build_dataset(args: &BuildDatasetArgs) -> CliResult<()> {
    let mut ds = labelled_dataset(&args.labels)?;
    let before = ds.records.len();
    if !args.no_filter {
        let rule = match args.rule {
            Rule::Literal => OutlierRule::Literal,
            Rule::Fence => OutlierRule::Fence,
        };
        ds.records = dataset::iqr_filter(ds.records, rule).map_err(stage("filter"))?;
    }
    info!("kept {} of {before} records", ds.records.len());
    dataset::write_dataset(&args.labels.output, &ds).map_err(stage("write"))?;
    write_manifest(
        "build-dataset",
        args,
        Some(args.labels.seed),
        std::slice::from_ref(&args.labels.corpus),
        std::slice::from_ref(&args.labels.output),
    )
}

fn load_bundle(path: &Path, what: &'static str) -> CliResult<nn::WeightBundle> {
    require_file(path)?;
    nn::load_weights(path).map_err(stage(what))
}

/// Resolves the fidelity and weights for `denoise`; returns the map and the
/// fidelity to solve with plus every weight file read.
fn auto_map(args: &DenoiseArgs, img: &Image) -> CliResult<(MuMap, FidelityKind, Vec<PathBuf>)> {
    let mut used = Vec::new();
    let kind = match args.fidelity {
        Some(k) => fidelity(k),
        None => {
            let path = args.classifier.as_ref().ok_or_else(|| {
                CliError::usage("--mu auto needs --classifier or an explicit --fidelity")
            })?;
            let clf = Classifier::new(&load_bundle(path, "classifier weights")?)
                .map_err(stage("classify"))?;
            used.push(path.clone());
            let c = nn::classify_image(img, &clf).map_err(stage("classify"))?;
            info!(
                "classified as {} ({}/{} patches)",
                c.kind, c.gaussian_votes, c.total_votes
            );
            c.kind
        }
    };
    let path = match kind {
        FidelityKind::Gaussian => args.regressor_gaussian.as_ref(),
        FidelityKind::Poisson => args.regressor_poisson.as_ref(),
    }
    .ok_or_else(|| {
        CliError::usage(format!(
            "--mu auto with {kind} noise needs --regressor-{kind}"
        ))
    })?;
    let reg = Regressor::new(&load_bundle(path, "regressor weights")?).map_err(stage("predict"))?;
    used.push(path.clone());
    let map = nn::predict_mu_map(img, &reg).map_err(stage("predict"))?;
    Ok((map, kind, used))
}

pub fn denoise(args: &DenoiseArgs) -> CliResult<()> {
    let img = load_image(&args.input)?;
    let mut inputs = vec![args.input.clone()];
    let scalar_kind = args
        .fidelity
        .map(fidelity)
        .unwrap_or(FidelityKind::Gaussian);
    let (map, kind, scalar) = match (args.mu, &args.mu_map) {
        (Some(MuSpec::Scalar(mu)), _) => {
            let map = MuMap::constant(img.width(), img.height(), mu).map_err(stage("denoise"))?;
            (map, scalar_kind, true)
        }
        (Some(MuSpec::Auto), _) => {
            let (map, kind, used) = auto_map(args, &img)?;
            inputs.extend(used);
            (map, kind, false)
        }
        (None, Some(path)) => {
            require_file(path)?;
            let map = mapfile::load_mu_map(path).map_err(stage("mu-map"))?;
            if map.width() != img.width() || map.height() != img.height() {
                return Err(CliError::data(format!(
                    "mu-map: map is {}x{} but image is {}x{}",
                    map.width(),
                    map.height(),
                    img.width(),
                    img.height()
                )));
            }
            inputs.push(path.clone());
            (map, scalar_kind, false)
        }
        (None, None) => return Err(CliError::usage("one of --mu or --mu-map is required")),
    };
    let cfg = solver_config(&args.solver, args.eta);
    let (x, report) = solver::solve(&img, &map, kind, &cfg).map_err(stage("solve"))?;
    info!(
        "{kind} solve: {} iterations, objective {:.6}",
        report.iterations, report.final_objective
    );
    save_pgm(&x, &args.output, MaxVal::Sixteen).map_err(stage("write"))?;
    let mut outputs = vec![args.output.clone()];
    if let Some(path) = &args.map_out {
        mapfile::save_mu_map(&map, path).map_err(stage("write"))?;
        outputs.push(path.clone());
        outputs.push(mapfile::sidecar_path(path));
    }
    if let Some(reference) = &args.reference {
        let clean = load_image(reference)?;
        inputs.push(reference.clone());
        let id = stem(&args.input);
        let row = if scalar {
            metrics_row(&id, &clean, Some(&img), Some(&x), None)?
        } else {
            metrics_row(&id, &clean, Some(&img), None, Some(&x))?
        };
        let path = args.metrics.clone().unwrap_or_else(|| {
            let mut name = args.output.as_os_str().to_owned();
            name.push(".metrics.csv");
            PathBuf::from(name)
        });
        write_csv(Some(&path), &row)?;
        outputs.push(path);
    }
    write_manifest("denoise", args, None, &inputs, &outputs)
}

pub fn classify(args: &ClassifyArgs) -> CliResult<()> {
    let img = load_image(&args.input)?;
    let clf = Classifier::new(&load_bundle(&args.classifier, "classifier weights")?)
        .map_err(stage("classify"))?;
    let c = nn::classify_image(&img, &clf).map_err(stage("classify"))?;
    println!(
        "{} confidence={:.6} gaussian_votes={} total_votes={}",
        c.kind, c.confidence, c.gaussian_votes, c.total_votes
    );
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

const HEADER: [&str; 7] = [
    "image_id",
    "ssim_noisy",
    "ssim_scalar",
    "ssim_map",
    "psnr_noisy",
    "psnr_scalar",
    "psnr_map",
];

fn metrics_row(
    id: &str,
    clean: &Image,
    noisy: Option<&Image>,
    scalar: Option<&Image>,
    map: Option<&Image>,
) -> CliResult<Vec<String>> {
    let slots = [noisy, scalar, map];
    let mut ssims = Vec::new();
    let mut psnrs = Vec::new();
    for img in slots {
        match img {
            Some(img) => {
                if !img.same_shape(clean) {
                    return Err(CliError::data(format!(
                        "evaluate: image is {}x{} but reference is {}x{}",
                        img.width(),
                        img.height(),
                        clean.width(),
                        clean.height()
                    )));
                }
                ssims.push(
                    ssim(clean, img, &SsimConfig::default())
                        .map_err(stage("evaluate"))?
                        .to_string(),
                );
                psnrs.push(psnr(clean, img).map_err(stage("evaluate"))?.to_string());
            }
            None => {
                ssims.push(String::new());
                psnrs.push(String::new());
            }
        }
    }
    let mut row = vec![id.to_string()];
    row.extend(ssims);
    row.extend(psnrs);
    Ok(row)
}

fn write_csv(path: Option<&Path>, row: &[String]) -> CliResult<()> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(
            std::fs::File::create(p)
                .map_err(|e| CliError::data(format!("writing {}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER)
        .and_then(|_| w.write_record(row))
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| CliError::data(format!("csv: {e}")))
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let clean = load_image(&args.reference)?;
    let mut positional = args.images.iter();
    let slots: Vec<Option<PathBuf>> = [&args.noisy, &args.scalar, &args.map]
        .into_iter()
        .map(|named| named.clone().or_else(|| positional.next().cloned()))
        .collect();
    if positional.next().is_some() {
        return Err(CliError::usage(
            "more images than free noisy/scalar/map slots",
        ));
    }
    let mut images = Vec::new();
    let mut inputs = vec![args.reference.clone()];
    for slot in &slots {
        images.push(match slot {
            Some(p) => {
                inputs.push(p.clone());
                Some(load_image(p)?)
            }
            None => None,
        });
    }
    let id = args.id.clone().unwrap_or_else(|| stem(&args.reference));
    let row = metrics_row(
        &id,
        &clean,
        images[0].as_ref(),
        images[1].as_ref(),
        images[2].as_ref(),
    )?;
    write_csv(args.out.as_deref(), &row)?;
    if let Some(out) = &args.out {
        write_manifest("evaluate", args, None, &inputs, std::slice::from_ref(out))?;
    }
    Ok(())
}
