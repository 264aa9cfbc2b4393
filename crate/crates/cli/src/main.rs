use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use phyzzy::config::{ConfigError, ExperimentConfig};
use phyzzy::data::{
    extract_experiment_sp, ingest_ims, read_csv, read_sp_csv, write_csv, write_sp_csv, write_synthetic, DataError,
    Dataset, Manifest, SynthSpec, ZScore,
};
use phyzzy::gan::{read_params, write_params, Discriminator, GanError, Generator, TrainReport, Trained, Variant};
use phyzzy::metrics::MetricReport;
use phyzzy::pipeline::{evaluate_run, run, PipelineError, PredictionRow, Prepared};

#[derive(Parser)]
#[command(name = "phyzzy", version, about = "Physics-infused fuzzy GAN bearing prognostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate IMS-layout directories and write a dataset manifest.
    Ingest {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic run-to-failure experiment with ground truth.
    Synth {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the spall-passage feature for every snapshot.
    ExtractSp {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one variant and evaluate it on the held-out split.
    Train {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sp: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate trained parameters on the test split.
    Evaluate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sp: Option<PathBuf>,
        #[arg(long)]
        eval_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect loss curves and prediction pairs from run outputs into CSV.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn data(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Self::data(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Self::data(e),
            _ => Self::usage(e),
        }
    }
}

impl From<GanError> for Failure {
    fn from(e: GanError) -> Self {
        let code = match e {
            GanError::NonFinite { .. } => 3,
            GanError::Data(_) | GanError::Params(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(e) => e.into(),
            PipelineError::Data(e) => e.into(),
            PipelineError::Gan(e) => e.into(),
            PipelineError::Mismatch(m) => Self::data(m),
        }
    }
}

/// Everything needed to rebuild a training run's test split.
#[derive(Serialize, Deserialize)]
struct RunRecord {
    variant: Variant,
    seed: u64,
    manifest: PathBuf,
    sp: Option<PathBuf>,
    config: ExperimentConfig,
    scaler: ZScore,
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(parent) => fs::create_dir_all(parent).map_err(|e| Failure::data(format!("{}: {e}", parent.display()))),
        None => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::data)?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn absolute(path: &Path) -> Result<PathBuf, Failure> {
    fs::canonicalize(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn save_params(path: &Path, trained: &Trained) -> Result<(), Failure> {
    let mut buf = Vec::new();
    write_params(&mut buf, trained.variant, &trained.generator.params, &trained.discriminator.params)?;
    ensure_parent(path)?;
    fs::write(path, buf).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn prepare(manifest_path: &Path, sp: Option<&Path>, config: &ExperimentConfig) -> Result<Prepared, Failure> {
    let manifest = Manifest::load(manifest_path)?;
    let rows = sp.map(read_sp_csv).transpose()?;
    let dataset = Dataset::from_manifest(&manifest, rows.as_deref())?;
    Ok(Prepared::new(dataset, &config.split(), manifest.label_t_max)?)
}

fn ingest(dirs: &[PathBuf], out: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let config = load_config(config)?;
    let mut records = Vec::new();
    for dir in dirs {
        let mut record = ingest_ims(dir, &config.ingest())?;
        record.directory = absolute(dir)?;
        records.push(record);
    }
    let manifest = Manifest::new(records, config.t_max);
    manifest.save(out)?;
    write_text(&sidecar(out, ".resolved.toml"), &config.to_toml())?;
    for e in &manifest.experiments {
        println!("{}: {} snapshots, {} channels", e.record.id, e.snapshots, e.record.channels());
    }
    Ok(())
}

fn synth(spec: Option<&Path>, seed: u64, out: &Path) -> Result<(), Failure> {
    let spec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            SynthSpec::from_toml(&text).map_err(Failure::usage)?
        }
        None => SynthSpec::default(),
    };
    spec.validate().map_err(Failure::usage)?;
    write_synthetic(&spec, seed, out)?;
    write_text(&out.join("spec.resolved.toml"), &format!("# seed = {seed}\n{}", spec.to_toml()))?;
    println!("{} snapshots written to {}", spec.length, out.display());
    Ok(())
}

fn extract(manifest: &Path, out: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let config = load_config(config)?;
    let manifest = Manifest::load(manifest)?;
    let detection = config.detection();
    detection.vmd.validate().map_err(Failure::usage)?;
    let mut rows = Vec::new();
    for record in manifest.records() {
        rows.extend(extract_experiment_sp(record, &detection)?);
    }
    ensure_parent(out)?;
    write_sp_csv(out, &rows)?;
    write_text(&sidecar(out, ".resolved.toml"), &config.to_toml())?;
    let valid = rows.iter().filter(|r| r.valid).count();
    println!("sp extracted for {valid} of {} snapshots", rows.len());
    Ok(())
}

fn train_cmd(
    variant: Variant,
    manifest: &Path,
    sp: Option<&Path>,
    config: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<(), Failure> {
    let config = load_config(config)?;
    config.gan().validate()?;
    if variant.needs_physics() {
        config.spall_model().map_err(|e| match e {
            ConfigError::MissingGeometry => GanError::MissingPhysics { variant }.into(),
            e => Failure::from(e),
        })?;
        if sp.is_none() {
            return Err(Failure::usage(format!("{variant} needs --sp")));
        }
    }
    let prepared = prepare(manifest, sp, &config)?;
    let outcome = match run(&prepared, variant, &config, seed) {
        Ok(outcome) => outcome,
        Err(PipelineError::Gan(GanError::NonFinite {
            which,
            epoch,
            batch,
            checkpoint,
        })) => {
            save_params(out, &checkpoint)?;
            write_json(&sidecar(out, ".train.json"), &checkpoint.report)?;
            return Err(Failure {
                code: 3,
                message: format!("non-finite {which} loss at epoch {epoch}, batch {batch}; last finite parameters kept in {}", out.display()),
            });
        }
        Err(e) => return Err(e.into()),
    };
    save_params(out, &outcome.trained)?;
    write_text(&sidecar(out, ".resolved.toml"), &config.to_toml())?;
    write_json(
        &sidecar(out, ".run.json"),
        &RunRecord {
            variant,
            seed,
            manifest: absolute(manifest)?,
            sp: sp.map(absolute).transpose()?,
            config: config.clone(),
            scaler: prepared.scaler.clone(),
        },
    )?;
    write_json(&sidecar(out, ".train.json"), &outcome.trained.report)?;
    write_json(&sidecar(out, ".metrics.json"), &outcome.metrics)?;
    write_csv(&sidecar(out, ".predictions.csv"), &outcome.predictions)?;
    println!(
        "{variant} seed {seed}: test MAE {:.5}, MSE {:.5} over {} samples",
        outcome.metrics.mae, outcome.metrics.mse, outcome.metrics.samples
    );
    Ok(())
}

fn evaluate_cmd(params: &Path, manifest: &Path, sp: Option<&Path>, eval_seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let record: RunRecord = read_json(&sidecar(params, ".run.json"))?;
    let mut config = record.config;
    if let Some(seed) = eval_seed {
        config.eval_seed = seed;
    }
    let bytes = fs::read(params).map_err(|e| Failure::data(format!("{}: {e}", params.display())))?;
    let (variant, g, d) = read_params(&mut bytes.as_slice())?;
    if variant != record.variant {
        return Err(Failure::data(format!(
            "parameter file holds {variant} but its run record says {}",
            record.variant
        )));
    }
    let sp = sp.map(Path::to_path_buf).or(record.sp);
    let prepared = prepare(manifest, sp.as_deref(), &config)?;
    let gan = config.gan();
    let channels = prepared.dataset.channels();
    let trained = Trained {
        variant,
        generator: Generator::from_params(&gan, variant, channels, g)?,
        discriminator: Discriminator::from_params(&gan, channels, d)?,
        report: TrainReport {
            variant,
            seed: record.seed,
            train_samples: prepared.train.len(),
            epochs: Vec::new(),
            test_mae: None,
            test_mse: None,
            wall_clock_s: 0.0,
        },
    };
    let (metrics, predictions) = evaluate_run(&prepared, &trained, &config, record.seed)?;
    write_json(out, &metrics)?;
    write_csv(&sidecar(out, ".predictions.csv"), &predictions)?;
    write_text(&sidecar(out, ".resolved.toml"), &config.to_toml())?;
    println!("{variant}: test MAE {:.5}, MSE {:.5}", metrics.mae, metrics.mse);
    Ok(())
}

#[derive(Serialize)]
struct LossRow {
    run: String,
    variant: String,
    seed: u64,
    epoch: usize,
    generator_loss: f64,
    discriminator_loss: f64,
}

#[derive(Serialize)]
struct PairRow {
    run: String,
    experiment: usize,
    index: usize,
    y: f64,
    y_hat: f64,
}

fn collect_files(dir: &Path, suffix: &str, out: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(Failure::data)?.path();
        if path.is_dir() {
            collect_files(&path, suffix, out)?;
        } else if path.to_string_lossy().ends_with(suffix) {
            out.push(path);
        }
    }
    Ok(())
}

fn run_name(path: &Path, suffix: &str, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).to_string_lossy().into_owned();
    rel.strip_suffix(suffix).unwrap_or(&rel).to_string()
}

fn report(runs: &Path, out: &Path) -> Result<(), Failure> {
    let mut reports = Vec::new();
    collect_files(runs, ".train.json", &mut reports)?;
    reports.sort();
    let mut losses = Vec::new();
    for path in &reports {
        let r: TrainReport = read_json(path)?;
        let run = run_name(path, ".train.json", runs);
        losses.extend(r.epochs.iter().map(|e| LossRow {
            run: run.clone(),
            variant: r.variant.to_string(),
            seed: r.seed,
            epoch: e.epoch,
            generator_loss: e.generator,
            discriminator_loss: e.discriminator,
        }));
    }
    let mut prediction_files = Vec::new();
    collect_files(runs, ".predictions.csv", &mut prediction_files)?;
    prediction_files.sort();
    let mut pairs = Vec::new();
    for path in &prediction_files {
        let run = run_name(path, ".predictions.csv", runs);
        let rows: Vec<PredictionRow> = read_csv(path)?;
        pairs.extend(rows.into_iter().map(|p| PairRow {
            run: run.clone(),
            experiment: p.experiment,
            index: p.index,
            y: p.y,
            y_hat: p.y_hat,
        }));
    }
    if reports.is_empty() && prediction_files.is_empty() {
        return Err(Failure::data(format!("no run outputs under {}", runs.display())));
    }
    ensure_parent(out)?;
    write_csv(out, &losses)?;
    write_csv(&sidecar(out, ".pairs.csv"), &pairs)?;
    let mut metrics = Vec::new();
    let mut metric_files = Vec::new();
    collect_files(runs, ".metrics.json", &mut metric_files)?;
    metric_files.sort();
    for path in &metric_files {
        let m: MetricReport = read_json(path)?;
        metrics.push(m);
    }
    write_csv(&sidecar(out, ".metrics.csv"), &metrics)?;
    println!("{} runs, {} loss rows, {} prediction pairs", reports.len(), losses.len(), pairs.len());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Ingest { dirs, out, config } => ingest(&dirs, &out, config.as_deref()),
        Command::Synth { spec, seed, out } => synth(spec.as_deref(), seed, &out),
        Command::ExtractSp { manifest, out, config } => extract(&manifest, &out, config.as_deref()),
        Command::Train {
            variant,
            manifest,
            sp,
            config,
            seed,
            out,
        } => train_cmd(variant, &manifest, sp.as_deref(), config.as_deref(), seed, &out),
        Command::Evaluate {
            params,
            manifest,
            sp,
            eval_seed,
            out,
        } => evaluate_cmd(&params, &manifest, sp.as_deref(), eval_seed, &out),
        Command::Report { runs, out } => report(&runs, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("usage error");
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', "; "));
            ExitCode::from(f.code)
        }
    }
}
