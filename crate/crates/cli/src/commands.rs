//! One function per subcommand. `pipeline` chains the same functions, so its
//! artifacts are byte-identical to a manual run with the same flags.

use std::fs;
use std::path::{Path, PathBuf};

use hsic::cube::{
    export_classmap, generate_pair, load_cube_prefix, save_cube, save_cube_prefix, CubePaths, LabelFile, Role,
    SynthSpec,
};
use hsic::frost::filter_cube;
use hsic::metrics::{
    accuracy, classification_time, false_positive_rate, mse_cube, psnr, time_classify, write_report, MetricsReport,
};
use hsic::perceptron::{
    classify_cube, classify_raw, load_model, save_model, train, train_bands, Gallery, PerceptronModel,
};
use hsic::scalespace::{extract_cube_features, FeatureFile, FEATURE_DIM};

use crate::args::{
    ClassifyArgs, EvalArgs, ExtractOpts, FilterOpts, PipelineArgs, Split, SynthOpts, TrainOpts,
};
use crate::files::{read_predictions, read_timing, write_manifest, write_predictions, write_timing, Prediction, Timing};
use crate::CliError;

pub type Written = Vec<PathBuf>;

fn synth_spec(opts: &SynthOpts, seed: u64) -> SynthSpec {
    SynthSpec::new(opts.classes, opts.bands_per_class, opts.width, opts.height, opts.noise, seed)
}

pub fn synth(out: &Path, opts: &SynthOpts, seed: u64) -> Result<Written, CliError> {
    let spec = synth_spec(opts, seed);
    spec.validate()?;
    let s = generate_pair(&spec)?;
    let noisy = CubePaths::from_prefix(out);
    let clean = CubePaths::clean_companion(out);
    save_cube(&s.noisy, &noisy.header, &noisy.data)?;
    s.labels.save(&noisy.labels)?;
    save_cube(&s.clean, &clean.header, &clean.data)?;
    println!("synth: {} bands of {}x{} -> {}", spec.total_bands(), spec.width, spec.height, out.display());
    Ok(vec![noisy.header, noisy.data, noisy.labels, clean.header, clean.data])
}

pub fn filter(input: &Path, out: &Path, opts: &FilterOpts) -> Result<Written, CliError> {
    let cfg = opts.config();
    cfg.validate()?;
    let cube = load_cube_prefix(input)?;
    let filtered = filter_cube(&cube, &cfg)?;
    save_cube_prefix(&filtered, out)?;
    println!("filter: {} bands, window {} -> {}", filtered.bands.len(), cfg.window, out.display());
    let paths = CubePaths::from_prefix(out);
    Ok(vec![paths.header, paths.data])
}

pub fn extract(input: &Path, out: &Path, opts: &ExtractOpts) -> Result<Written, CliError> {
    let cfg = opts.config();
    cfg.validate()?;
    let cube = load_cube_prefix(input)?;
    let features = extract_cube_features(&cube, &cfg)?;
    features.save(out)?;
    println!("extract: {} feature vectors -> {}", features.entries.len(), out.display());
    Ok(vec![out.to_path_buf()])
}

pub fn train_step(
    features: &Path,
    labels: &Path,
    model_out: &Path,
    gallery_out: &Path,
    opts: &TrainOpts,
    seed: u64,
) -> Result<Written, CliError> {
    let cfg = opts.config(seed);
    cfg.validate()?;
    if opts.hidden == 0 || opts.embed == 0 {
        return Err(CliError::Usage("--hidden and --embed must be at least 1".into()));
    }
    let features = FeatureFile::load(features)?;
    let labels = LabelFile::load(labels)?;
    let gallery = Gallery::from_train_split(&features, &labels, opts.gallery_per_band)?;
    let bands = train_bands(&features, &labels)?;
    let init = PerceptronModel::init(FEATURE_DIM, opts.hidden, opts.embed, opts.recurrent, seed);
    let outcome = train(&init, &bands, &gallery, &cfg)?;
    save_model(&outcome.model, model_out)?;
    gallery.save(gallery_out)?;
    let first = outcome.loss_history.first().copied().unwrap_or(f64::NAN);
    let last = outcome.loss_history.last().copied().unwrap_or(f64::NAN);
    println!(
        "train: {} epochs, loss {first:.6} -> {last:.6}, {} gallery references",
        outcome.loss_history.len(),
        gallery.entries.len()
    );
    Ok(vec![model_out.to_path_buf(), gallery_out.to_path_buf()])
}

fn select_bands(features: &FeatureFile, labels: Option<&LabelFile>, split: Split) -> Result<Vec<usize>, CliError> {
    let role = match split {
        Split::All => return Ok(features.entries.iter().map(|(b, _)| *b).collect()),
        Split::Train => Role::Train,
        Split::Test => Role::Test,
    };
    let labels = labels.ok_or_else(|| CliError::Usage("--split train|test needs --labels".into()))?;
    let mut bands: Vec<usize> = labels.with_role(role).map(|e| e.band).collect();
    bands.sort_unstable();
    Ok(bands)
}

pub fn classify(args: &ClassifyArgs) -> Result<Written, CliError> {
    if args.repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be at least 1".into()));
    }
    if args.split != Split::All && args.labels.is_none() {
        return Err(CliError::Usage("--split train|test needs --labels".into()));
    }
    let features = FeatureFile::load(&args.features)?;
    let model = load_model(&args.model)?;
    let gallery = Gallery::load(&args.gallery)?;
    let labels = args.labels.as_deref().map(LabelFile::load).transpose()?;

    let bands = select_bands(&features, labels.as_ref(), args.split)?;
    let inputs = bands
        .iter()
        .map(|&b| {
            let f = features
                .get(b)
                .ok_or_else(|| hsic::Error::DimMismatch(format!("band {b} has no feature vector")))?;
            Ok((b, f.values.as_slice()))
        })
        .collect::<hsic::Result<Vec<_>>>()?;

    let (result, summary) = time_classify(args.repetitions, || classify_cube(&model, &inputs, &gallery));
    let predictions: Vec<Prediction> = result?
        .into_iter()
        .map(|p| Prediction { band: p.band, label: p.result.label, score: p.result.score, distance: p.result.distance })
        .collect();

    let mut written = vec![args.out.clone()];
    write_predictions(&predictions, &args.out)?;
    if let Some(ppm) = &args.ppm {
        let gallery_classes = gallery.entries.iter().map(|(l, _)| l + 1).max().unwrap_or(1);
        let classes = labels.as_ref().map_or(gallery_classes, |l| l.num_classes().max(gallery_classes));
        let predicted: Vec<usize> = predictions.iter().map(|p| p.label).collect();
        export_classmap(&predicted, classes, ppm)?;
        written.push(ppm.clone());
    }
    if let Some(path) = &args.timing {
        write_timing(&Timing { n_bands: predictions.len(), summary: summary.clone() }, path)?;
        written.push(path.clone());
    }
    println!(
        "classify: {} bands, median {:.3} ms over {} repetitions -> {}",
        predictions.len(),
        summary.median_ms,
        summary.repetitions,
        args.out.display()
    );
    Ok(written)
}

pub fn eval(args: &EvalArgs) -> Result<(Written, MetricsReport), CliError> {
    if args.clean.is_some() != args.noisy_or_filtered.is_some() {
        return Err(CliError::Usage("--clean and --noisy-or-filtered go together".into()));
    }
    let predictions = read_predictions(&args.pred)?;
    let truth = LabelFile::load(&args.truth)?;
    let expected = predictions
        .iter()
        .map(|p| {
            truth
                .label_of(p.band)
                .ok_or_else(|| hsic::Error::DimMismatch(format!("band {} has no ground-truth label", p.band)))
        })
        .collect::<hsic::Result<Vec<_>>>()?;
    let predicted: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let accuracy_pct = accuracy(&predicted, &expected)?;
    let fpr_pct = false_positive_rate(&predicted, &expected)?;

    let (psnr_db, mse) = match (&args.clean, &args.noisy_or_filtered) {
        (Some(clean), Some(candidate)) => {
            let clean = load_cube_prefix(clean)?;
            let candidate = load_cube_prefix(candidate)?;
            let mse = mse_cube(&clean, &candidate)?;
            (psnr(mse, clean.header.max_value), mse)
        }
        _ => (f64::NAN, f64::NAN),
    };
    let (classification_time_ms, per_band_time_ms) = match &args.timing {
        Some(path) => {
            let t = read_timing(path)?;
            let per_band = t.summary.median_ms / t.n_bands.max(1) as f64;
            (classification_time(t.n_bands, per_band), per_band)
        }
        None => (f64::NAN, f64::NAN),
    };
    let report = MetricsReport {
        psnr_db,
        mse,
        accuracy_pct,
        fpr_pct,
        classification_time_ms,
        per_band_time_ms,
        n_bands: predictions.len(),
    };
    write_report(&report, &args.report)?;
    println!(
        "eval: accuracy {:.2}%, misclassified {:.2}%, PSNR {:.3} dB -> {}",
        report.accuracy_pct,
        report.fpr_pct,
        report.psnr_db,
        args.report.display()
    );
    Ok((vec![args.report.clone()], report))
}

/// Accuracy of nearest raw class mean on the test split, for comparison.
pub fn untrained_baseline(features: &FeatureFile, labels: &LabelFile) -> Result<f64, CliError> {
    let gallery = Gallery::from_train_split(features, labels, false)?;
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for e in labels.with_role(Role::Test) {
        let f = features
            .get(e.band)
            .ok_or_else(|| hsic::Error::DimMismatch(format!("band {} has no feature vector", e.band)))?;
        predicted.push(classify_raw(&f.values, &gallery)?);
        truth.push(e.label);
    }
    Ok(accuracy(&predicted, &truth)?)
}

pub fn pipeline(args: &PipelineArgs) -> Result<MetricsReport, CliError> {
    // Validate every stage before touching the file system.
    args.filter.config().validate()?;
    args.extract.config().validate()?;
    args.train.config(args.seed).validate()?;
    if args.input.is_none() {
        synth_spec(&args.synth, args.data_seed).validate()?;
    }
    if args.repetitions == 0 {
        return Err(CliError::Usage("--repetitions must be at least 1".into()));
    }

    let work = &args.work_dir;
    fs::create_dir_all(work).map_err(|e| hsic::Error::Io { path: work.clone(), source: e })?;
    let mut written = Written::new();

    let input = match &args.input {
        Some(prefix) => prefix.clone(),
        None => {
            let prefix = work.join("cube");
            written.extend(synth(&prefix, &args.synth, args.data_seed)?);
            prefix
        }
    };
    let labels_path = CubePaths::from_prefix(&input).labels;
    let filtered = work.join("filtered");
    let features = work.join("features.fvec");
    let model = work.join("model.mlp");
    let gallery = work.join("gallery.gal");
    let predictions = work.join("predictions.csv");
    let timing = work.join("timing.csv");

    written.extend(filter(&input, &filtered, &args.filter)?);
    written.extend(extract(&filtered, &features, &args.extract)?);
    written.extend(train_step(&features, &labels_path, &model, &gallery, &args.train, args.seed)?);
    written.extend(classify(&ClassifyArgs {
        features: features.clone(),
        model: model.clone(),
        gallery: gallery.clone(),
        labels: Some(labels_path.clone()),
        split: Split::Test,
        out: predictions.clone(),
        ppm: args.map.clone(),
        timing: Some(timing.clone()),
        repetitions: args.repetitions,
    })?);

    let clean = CubePaths::clean_companion(&input);
    let has_clean = clean.header.exists() && clean.data.exists();
    let mut clean_prefix = input.as_os_str().to_owned();
    clean_prefix.push(".clean");
    let (eval_written, report) = eval(&EvalArgs {
        pred: predictions,
        truth: labels_path.clone(),
        clean: has_clean.then(|| PathBuf::from(clean_prefix)),
        noisy_or_filtered: has_clean.then(|| filtered.clone()),
        timing: Some(timing),
        report: args.report.clone(),
    })?;
    written.extend(eval_written);

    let baseline = untrained_baseline(&FeatureFile::load(&features)?, &LabelFile::load(&labels_path)?)?;
    println!("pipeline: untrained nearest-class-mean baseline {baseline:.2}%");

    let manifest = work.join("manifest.json");
    write_manifest(&manifest, pipeline_config(args), &written)?;
    println!("pipeline: manifest -> {}", manifest.display());
    Ok(report)
}

fn pipeline_config(args: &PipelineArgs) -> serde_json::Value {
    let f = args.filter.config();
    let e = args.extract.config();
    let t = args.train.config(args.seed);
    serde_json::json!({
        "input": args.input.as_ref().map(|p| p.display().to_string()),
        "synth": args.input.is_none().then(|| serde_json::json!({
            "classes": args.synth.classes,
            "bands_per_class": args.synth.bands_per_class,
            "width": args.synth.width,
            "height": args.synth.height,
            "noise": args.synth.noise,
            "seed": args.data_seed,
        })),
        "filter": { "window": f.window, "damping": f.damping, "beta_mode": f.beta_mode.to_string() },
        "extract": {
            "octaves": e.octaves,
            "scales": e.scales_per_octave,
            "sigma0": e.base_sigma,
            "contrast": e.contrast_threshold,
        },
        "train": {
            "hidden": args.train.hidden,
            "embed": args.train.embed,
            "lr": t.learning_rate,
            "epochs": t.max_epochs,
            "tol": t.tolerance,
            "recurrent": t.recurrent,
            "gallery_per_band": args.train.gallery_per_band,
            "seed": t.seed,
        },
        "repetitions": args.repetitions,
    })
}
