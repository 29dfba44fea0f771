use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use plantscope::dataset::{BuildOptions, DatasetManifest, Granularity, Split, StatsScope};
use plantscope::ingest::{HttpProvider, LocalProvider, RasterProvider};
use plantscope::pipeline::{self, CamOptions, EvaluateOptions, IngestOptions, RunManifest};
use plantscope::training::{Architecture, TrainConfig};
use plantscope::{Error, Result, Task};

/// Power plant and cooling-type classification from 10-band satellite patches.
#[derive(Parser)]
#[command(name = "plantscope", version)]
struct Cli {
    /// Maximum worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crop site and background patches from rasters.
    Ingest(IngestArgs),
    /// Split a patch store and compute normalization statistics.
    Build(BuildArgs),
    /// Train a model on a dataset manifest.
    Train(TrainArgs),
    /// Confusion matrix over repeated balanced test draws.
    Evaluate(EvaluateArgs),
    /// Class activation maps and overlays.
    Cam(CamArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Site catalog CSV.
    #[arg(long)]
    catalog: PathBuf,
    /// Directory of rasters; the HTTP endpoint from PLANTSCOPE_PROVIDER_URL is used when absent.
    #[arg(long)]
    rasters: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.10)]
    max_cloud: f64,
    #[arg(long, default_value_t = 10)]
    n_rasters: usize,
    #[arg(long, default_value_t = 2020)]
    year: i32,
    /// Background patches per raster.
    #[arg(long, default_value_t = 4)]
    backgrounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildArgs {
    /// Patch store written by `ingest`.
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "plant_11")]
    task: Task,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// per_image or per_site.
    #[arg(long, default_value = "per_image")]
    granularity: Granularity,
    /// all or train.
    #[arg(long, default_value = "all")]
    stats_scope: StatsScope,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// JSON or `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<Task>,
    #[arg(long)]
    pretrained: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    /// resnet50, standard_resnet50 or tiny.
    #[arg(long, value_parser = parse_architecture)]
    architecture: Option<Architecture>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    sampler_seed: Option<u64>,
    /// Any configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_draws: usize,
    /// Draw size per class; the smallest class of the split by default.
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Manifest whose normalization statistics are applied.
    #[arg(long)]
    manifest: PathBuf,
    /// A patch container or a directory of them.
    #[arg(long)]
    input: PathBuf,
    /// Class index to explain; the predicted class by default.
    #[arg(long = "class")]
    class_index: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_architecture(s: &str) -> std::result::Result<Architecture, String> {
    serde_json::from_value(json!(s.replace('-', "_"))).map_err(|_| format!("unknown architecture {s:?}"))
}

fn ingest(a: &IngestArgs, run: &mut RunManifest) -> Result<()> {
    let opts = IngestOptions {
        year: a.year,
        max_cloud: a.max_cloud,
        n_rasters: a.n_rasters,
        backgrounds_per_raster: a.backgrounds,
        seed: a.seed,
    };
    run.config = json!(opts);
    run.seeds.insert("seed".into(), a.seed);
    run.input("catalog", &a.catalog);
    let provider: Box<dyn RasterProvider> = match &a.rasters {
        Some(dir) => {
            run.input("rasters", dir);
            Box::new(LocalProvider::open(dir)?)
        }
        None => Box::new(HttpProvider::from_env()?),
    };
    let summary = pipeline::run_ingest(&a.catalog, provider.as_ref(), &a.out, &opts)?;
    log::info!(
        "{} site and {} background patches; {} written, {} unchanged",
        summary.site_patches,
        summary.background_patches,
        summary.written,
        summary.unchanged
    );
    run.output("patches", &a.out.join("patches"));
    run.output("index", &a.out.join(pipeline::STORE_INDEX_FILE));
    run.config["summary"] = json!(summary);
    Ok(())
}

fn build(a: &BuildArgs, run: &mut RunManifest) -> Result<()> {
    let opts = BuildOptions {
        seed: a.split_seed,
        granularity: a.granularity,
        stats_scope: a.stats_scope,
        ..Default::default()
    };
    run.config = json!({"task": a.task, "options": opts});
    run.seeds.insert("split_seed".into(), a.split_seed);
    run.input("store", &a.store);
    let (_, path) = pipeline::run_build(&a.store, &a.out, a.task, &opts)?;
    run.output("manifest", &path);
    Ok(())
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::from_file(p)?,
        None => TrainConfig::default(),
    };
    let flags: [(&str, Option<String>); 9] = [
        ("task", a.task.map(|t| json!(t).as_str().unwrap_or_default().to_string())),
        ("pretrained", a.pretrained.as_ref().map(|p| json!(p).to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("learning_rate", a.learning_rate.map(|v| v.to_string())),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
        ("per_class", a.per_class.map(|v| v.to_string())),
        ("architecture", a.architecture.map(|v| json!(v).as_str().unwrap_or_default().to_string())),
        ("init_seed", a.init_seed.map(|v| v.to_string())),
        ("sampler_seed", a.sampler_seed.map(|v| v.to_string())),
    ];
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {o:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn train(a: &TrainArgs, run: &mut RunManifest) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mut cfg = train_config(a)?;
    if a.task.is_none() && a.config.is_none() && !a.overrides.iter().any(|o| o.starts_with("task")) {
        cfg.task = manifest.task;
    }
    run.config = json!(cfg);
    run.seeds.insert("init_seed".into(), cfg.init_seed);
    run.seeds.insert("sampler_seed".into(), cfg.sampler_seed);
    run.input("manifest", &a.manifest);
    if let Some(p) = &cfg.pretrained {
        run.input("pretrained", p);
    }
    let outcome = pipeline::run_train(&manifest, &cfg, &a.out)?;
    if let Some(p) = &outcome.checkpoint {
        run.output("checkpoint", p);
    }
    if let Some(p) = &outcome.log {
        run.output("log", p);
    }
    log::info!(
        "best validation accuracy {:.4} at epoch {}",
        outcome.state.best_val_accuracy,
        outcome.state.best_epoch
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs, run: &mut RunManifest) -> Result<()> {
    let opts = EvaluateOptions {
        split: a.split,
        n_draws: a.n_draws,
        per_class: a.per_class,
        seed: a.seed,
    };
    run.config = json!(opts);
    run.seeds.insert("seed".into(), a.seed);
    run.input("checkpoint", &a.checkpoint);
    run.input("manifest", &a.manifest);
    let manifest = DatasetManifest::load(&a.manifest)?;
    let report = pipeline::run_evaluate(&a.checkpoint, &manifest, &a.out, &opts)?;
    for name in [pipeline::REPORT_FILE, "confusion.csv", "confusion.svg"] {
        run.output(name, &a.out.join(name));
    }
    log::info!("overall accuracy {:.2}%", report.overall_accuracy);
    Ok(())
}

fn cam(a: &CamArgs, run: &mut RunManifest) -> Result<()> {
    let opts = CamOptions {
        class_index: a.class_index,
        alpha: a.alpha,
    };
    run.config = json!(opts);
    run.input("checkpoint", &a.checkpoint);
    run.input("manifest", &a.manifest);
    run.input("input", &a.input);
    let manifest = DatasetManifest::load(&a.manifest)?;
    let done = pipeline::run_cam(&a.checkpoint, &manifest, &a.input, &a.out, &opts)?;
    run.output("maps", &a.out);
    log::info!("{} class activation maps written", done.len());
    Ok(())
}

fn out_dir(c: &Command) -> &Path {
    match c {
        Command::Ingest(a) => &a.out,
        Command::Build(a) => &a.out,
        Command::Train(a) => &a.out,
        Command::Evaluate(a) => &a.out,
        Command::Cam(a) => &a.out,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not limit worker threads: {e}");
        }
    }
    let name = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Build(_) => "build",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Cam(_) => "cam",
    };
    let mut run = RunManifest::start(name);
    let result = match &cli.command {
        Command::Ingest(a) => ingest(a, &mut run),
        Command::Build(a) => build(a, &mut run),
        Command::Train(a) => train(a, &mut run),
        Command::Evaluate(a) => evaluate(a, &mut run),
        Command::Cam(a) => cam(a, &mut run),
    };
    if let Err(e) = run.finish(out_dir(&cli.command), result.as_ref().copied()) {
        log::error!("could not write run manifest: {e}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
