//! The `vwsd` command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use crate::backend::decode_image;
use crate::config::{ConfigSource, RunConfig};
use crate::dataset::{load_dataset, SampleSet, SplitName, CANDIDATES};
use crate::error::{Result, VwsdError};
use crate::eval::{
    comparison_table, comparison_tsv, evaluate, run_ablation, tune_hyperparameters, ParamRange,
    QuasiRandomSearch, SearchSpace,
};
use crate::pipeline::{generate_image_views, predict};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "vwsd", version, about = "Visual word sense disambiguation")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a dataset and write a JSON report.
    Evaluate(EvaluateArgs),
    /// Evaluate several configurations on the same samples.
    Ablate(AblateArgs),
    /// Search fusion weights and temperature on an internal split.
    Tune(TuneArgs),
    /// Rank ten candidate images for one phrase.
    Predict(PredictArgs),
    /// Write every augmented view of one image as PNG.
    DumpViews(DumpViewsArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Config file; defaults apply when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// Override a config key (`key=value`); may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Augmentation seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Report path.
    #[arg(short, long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// A named configuration, `name=path/to/config.toml`; at least one.
    #[arg(long = "variant", value_name = "NAME=PATH", required = true)]
    pub variants: Vec<String>,
    /// Directory for per-variant reports and `comparison.tsv`.
    #[arg(long, default_value = "ablation")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Seed of the internal split and the search.
    #[arg(long, default_value_t = 0)]
    pub search_seed: u64,
    /// Photo weight range `lo:hi`.
    #[arg(long, default_value = "0:1")]
    pub beta_p: String,
    /// Semantic weight range `lo:hi`.
    #[arg(long, default_value = "0:1")]
    pub beta_s: String,
    /// Temperature range `lo:hi`; `none` keeps the configured value.
    #[arg(long, default_value = "0.1:1")]
    pub tau: String,
    /// Directory for the best config and the trial log.
    #[arg(long, default_value = "tune")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub word: String,
    #[arg(long)]
    pub phrase: String,
    /// Exactly ten candidate image paths.
    #[arg(required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpViewsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, default_value = "views")]
    pub out_dir: PathBuf,
}

fn load_source(common: &CommonArgs, config: Option<&Path>, data: Option<&DataArgs>) -> Result<ConfigSource> {
    let mut source = match config {
        Some(path) => ConfigSource::load(path)?,
        None => ConfigSource::default(),
    };
    for o in &common.overrides {
        source.apply_override(o)?;
    }
    if let Some(seed) = common.seed {
        source.set("seed", Value::Integer(seed as i64))?;
    }
    if let Some(d) = data {
        for (key, value) in [("data", &d.data), ("gold", &d.gold), ("images", &d.images)] {
            if let Some(p) = value {
                source.set(key, Value::String(p.to_string_lossy().into_owned()))?;
            }
        }
    }
    Ok(source)
}

fn load_run(common: &CommonArgs, data: Option<&DataArgs>) -> Result<RunConfig> {
    load_source(common, common.config.as_deref(), data)?.build()
}

fn load_samples(run: &RunConfig) -> Result<SampleSet> {
    let data = run
        .data
        .as_deref()
        .ok_or_else(|| VwsdError::Config("no dataset given (--data or `data`)".into()))?;
    let images = match &run.images {
        Some(p) => p.clone(),
        None => data.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    let set = load_dataset(data, run.gold.as_deref(), &images, SplitName::Custom)?;
    for warning in set.validate()? {
        log::warn!("{warning}");
    }
    Ok(set)
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| VwsdError::io(format!("creating {}", dir.display()), e))?;
    }
    fs::write(path, body).map_err(|e| VwsdError::io(format!("writing {}", path.display()), e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| VwsdError::io(format!("creating {}", dir.display()), e))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let run = load_run(&args.common, Some(&args.data))?;
    let set = load_samples(&run)?;
    let backend = run.backend()?;
    let resources = run.resources()?;
    let report = evaluate(&set, &run.pipeline, backend.as_ref(), &resources)?;
    write(&args.out, &report.to_json()?)?;
    println!("{}", report.summary_line());
    Ok(())
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    let mut variants = Vec::with_capacity(args.variants.len());
    for spec in &args.variants {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| VwsdError::Config(format!("variant `{spec}` is not name=path")))?;
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(VwsdError::Config(format!("bad variant name `{name}`")));
        }
        if variants.iter().any(|(n, _): &(String, RunConfig)| n == name) {
            return Err(VwsdError::Config(format!("duplicate variant `{name}`")));
        }
        let run = load_source(&args.common, Some(Path::new(path)), Some(&args.data))?.build()?;
        variants.push((name.to_string(), run));
    }

    // Data, backend and resources come from the first variant.
    let first = &variants[0].1;
    let set = load_samples(first)?;
    let backend = first.backend()?;
    let resources = first.resources()?;
    for (name, run) in &variants[1..] {
        run.resources()
            .map_err(|e| VwsdError::Config(format!("variant `{name}`: {e}")))?;
    }
    let configs: Vec<_> = variants
        .iter()
        .map(|(n, r)| (n.clone(), r.pipeline.clone()))
        .collect();
    let reports = run_ablation(&set, &configs, backend.as_ref(), &resources)?;

    create_dir(&args.out_dir)?;
    for r in &reports {
        write(&args.out_dir.join(format!("{}.json", r.name)), &r.report.to_json()?)?;
    }
    write(&args.out_dir.join("comparison.tsv"), &comparison_tsv(&reports))?;
    print!("{}", comparison_table(&reports));
    Ok(())
}

fn parse_range(name: &str, spec: &str) -> Result<Option<ParamRange>> {
    if spec == "none" {
        return Ok(None);
    }
    let bad = || VwsdError::Config(format!("--{name} expects lo:hi or none, got `{spec}`"));
    let (lo, hi) = spec.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok(Some(ParamRange::new(lo, hi)))
}

pub fn cmd_tune(args: &TuneArgs) -> Result<()> {
    let source = load_source(&args.common, args.common.config.as_deref(), Some(&args.data))?;
    let run = source.build()?;
    let set = load_samples(&run)?;
    let backend = run.backend()?;
    let resources = run.resources()?;
    let space = SearchSpace {
        beta_p: parse_range("beta-p", &args.beta_p)?,
        beta_s: parse_range("beta-s", &args.beta_s)?,
        tau: parse_range("tau", &args.tau)?,
    };
    let mut strategy = QuasiRandomSearch::new(args.search_seed);
    let outcome = tune_hyperparameters(
        &set,
        &run.pipeline,
        &space,
        &mut strategy,
        args.trials,
        args.search_seed,
        backend.as_ref(),
        &resources,
    )?;

    let best = &outcome.best;
    let mut best_source = source.clone();
    best_source.set("beta_p", Value::Float(best.fusion.beta_p))?;
    best_source.set("beta_s", Value::Float(best.fusion.beta_s))?;
    best_source.set("tau", Value::Float(best.tau))?;

    create_dir(&args.out_dir)?;
    write(&args.out_dir.join("best.toml"), &best_source.to_toml_string())?;
    write(&args.out_dir.join("trials.tsv"), &outcome.trials_tsv())?;
    let mut json = serde_json::to_string_pretty(&outcome)?;
    json.push('\n');
    write(&args.out_dir.join("tune.json"), &json)?;

    let score = outcome.trials[outcome.best_trial].mrr.unwrap_or(f64::NAN);
    println!(
        "best trial {} of {}: beta_p={:.4} beta_s={:.4} tau={:.4} validation MRR {:.4}",
        outcome.best_trial,
        outcome.trials.len(),
        best.fusion.beta_p,
        best.fusion.beta_s,
        best.tau,
        score
    );
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    if args.images.len() != CANDIDATES {
        return Err(VwsdError::CandidateCount {
            expected: CANDIDATES,
            actual: args.images.len(),
        });
    }
    let run = load_run(&args.common, None)?;
    let backend = run.backend()?;
    let resources = run.resources()?;
    let images = args
        .images
        .iter()
        .map(|p| Ok((image_key(p), decode_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let ranking = predict(&args.word, &args.phrase, &images, &run.pipeline, backend.as_ref(), &resources)?;
    for (rank, &idx) in ranking.order.iter().enumerate() {
        println!(
            "{}\t{}\t{}\t{}",
            rank + 1,
            idx,
            ranking.scores[idx],
            args.images[idx].display()
        );
    }
    Ok(())
}

/// The key used to salt view generation: the file name, matching the
/// reference a dataset row would use.
pub fn image_key(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

pub fn cmd_dump_views(args: &DumpViewsArgs) -> Result<()> {
    let run = load_run(&args.common, None)?;
    let backend = run.backend()?;
    let image = decode_image(&args.image)?;
    let views = generate_image_views(&image, &image_key(&args.image), &run.pipeline, backend.as_ref())?;
    create_dir(&args.out_dir)?;
    for (i, (view, label)) in views.views.iter().zip(&views.provenance).enumerate() {
        let path = args.out_dir.join(format!("{i:02}_{}.png", label.slug()));
        view.save(&path)
            .map_err(|e| VwsdError::image(path.display().to_string(), e))?;
    }
    println!("wrote {} views to {}", views.len(), args.out_dir.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Predict(a) => cmd_predict(a),
        Command::DumpViews(a) => cmd_dump_views(a),
    }
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
