//! Command-line front end for data generation, training, evaluation and
//! single-sample inference.

mod plots;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use molforge::catalog::{catalog, get_equation, EquationSpec, InitialCondition, ParameterSet};
use molforge::dataset::{build_dataset, plan, BuildConfig, DatasetManifest, Split};
use molforge::evaluation::{evaluate_extrapolation, evaluate_split, EvalContext, EvalReport, TableEmbedder};
use molforge::model::{Model, ModelConfig, OperatorModel, TextOperatorModel};
use molforge::numerics::{uniform_times, SNAPSHOTS};
use molforge::training::{load_train_items, TrainItem, Trainer, TrainingConfig};

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("MOLFORGE_BUILD_HASH"), ")");
const SEED_ENV: &str = "MOLFORGE_SEED";

#[derive(Parser, Debug)]
#[command(name = "molforge", version = VERSION, about = "Multimodal operator learning for parametric differential equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the catalog and write a dataset directory.
    GenerateData(GenerateArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one protocol.
    Evaluate(EvaluateArgs),
    /// Two-stage time extrapolation on the supported families.
    Extrapolate(ExtrapolateArgs),
    /// List the equation families.
    Catalog(CatalogArgs),
    /// Predict one trajectory and description from a checkpoint.
    Infer(InferArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scale {
    Paper,
    Desk,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// JSON build config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed (the MOLFORGE_SEED environment variable overrides it).
    #[arg(long)]
    seed: Option<u64>,
    /// Sample-count preset used when no config file is given.
    #[arg(long, value_enum, default_value = "desk")]
    scale: Scale,
    /// Comma-separated family indices to build (default: all).
    #[arg(long, value_delimiter = ',')]
    families: Vec<usize>,
    /// Print the manifest plan without solving anything.
    #[arg(long)]
    plan_only: bool,
    /// Allow writing into a non-empty directory.
    #[arg(long)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelSize {
    Small,
    Standard,
}

/// Schema of the `train --config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TrainRunConfig {
    model_size: ModelSize,
    training: TrainingConfig,
    /// Test-split samples scored during training.
    heldout_samples: usize,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            model_size: ModelSize::Small,
            training: TrainingConfig::desk(),
            heldout_samples: 32,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// JSON run config with `model_size`, `training` and `heldout_samples`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for metrics and checkpoints.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    model_size: Option<ModelSize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Training seed (the MOLFORGE_SEED environment variable overrides it).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    force: bool,
    /// Worker threads (default: 1).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Protocol {
    Id,
    Ood20,
    Ood30,
    Extrap,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint stem (the path without `.json` / `.bin`).
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, value_enum)]
    protocol: Protocol,
    /// CSV report path.
    #[arg(long)]
    report: PathBuf,
    /// Directory for truth / prediction / error PNG triptychs.
    #[arg(long)]
    plots: Option<PathBuf>,
    /// Comma-separated family indices (default: all available).
    #[arg(long, value_delimiter = ',')]
    families: Vec<usize>,
    /// Skip text generation and scoring.
    #[arg(long)]
    no_text: bool,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct ExtrapolateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Subset of 13, 19, 24, 29, 30.
    #[arg(long, value_delimiter = ',')]
    families: Vec<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct CatalogArgs {
    /// Print the full specs as a JSON array.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Family index, 1 to 52.
    #[arg(long)]
    family: usize,
    /// Parameter values in catalog order, or `symbol=value` pairs; missing
    /// symbols take their nominal value.
    #[arg(long, value_delimiter = ',')]
    params: Vec<String>,
    /// File with the initial state or profile, numbers separated by
    /// whitespace or commas.
    #[arg(long)]
    ic: PathBuf,
    /// Skip description generation.
    #[arg(long)]
    no_text: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Dataset(#[from] molforge::dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] molforge::model::ModelError),
    #[error(transparent)]
    Training(#[from] molforge::training::TrainingError),
    #[error(transparent)]
    Eval(#[from] molforge::evaluation::EvalError),
    #[error(transparent)]
    Catalog(#[from] molforge::catalog::CatalogError),
}

impl CliError {
    fn tag(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::Dataset(_) => "dataset",
            CliError::Model(_) => "model",
            CliError::Training(_) => "training",
            CliError::Eval(_) => "evaluation",
            CliError::Catalog(_) => "catalog",
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            if matches!(e.kind(), DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == DisplayHelpOnMissingArgumentOrSubcommand {
                    ExitCode::from(2)
                } else {
                    ExitCode::SUCCESS
                };
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("molforge-error[usage]: {first}");
            eprintln!("{}", e.render().to_string().lines().skip(1).collect::<Vec<_>>().join("\n"));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("molforge-error[{}]: {}", e.tag(), e.to_string().replace('\n', " "));
            ExitCode::from(if matches!(e, CliError::Usage(_)) { 2 } else { 1 })
        }
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenerateData(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Extrapolate(a) => extrapolate(a),
        Command::Catalog(a) => list_catalog(a),
        Command::Infer(a) => infer(a),
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Creates `dir`, refusing a non-empty one unless `force` is set.
fn prepare_out(dir: &Path, force: bool) -> Result<(), CliError> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(CliError::Usage(format!(
                "{} is not empty; pass --force to write into it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn generate(a: GenerateArgs) -> Result<(), CliError> {
    set_jobs(a.jobs)?;
    let mut cfg = match &a.config {
        Some(p) => read_json(p)?,
        None => match a.scale {
            Scale::Paper => BuildConfig::paper(),
            Scale::Desk => BuildConfig::desk(),
        },
    };
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(s) = env_seed()? {
        cfg.master_seed = s;
    }
    if !a.families.is_empty() {
        cfg.families = a.families.clone();
    }
    if a.plan_only {
        let m = plan(&cfg)?;
        println!(
            "{} parameterized equations, {} records planned",
            m.parameterized_equations(),
            m.total_records()
        );
        return Ok(());
    }
    prepare_out(&a.out, a.force)?;
    let m = build_dataset(&cfg, &a.out)?;
    let rejected: usize = m.families.iter().map(|f| f.rejected.len()).sum();
    println!(
        "wrote {} records for {} families to {} ({} rejected draws)",
        m.total_records(),
        m.families.len(),
        a.out.display(),
        rejected
    );
    Ok(())
}

/// Every `n / k`-th item, so the subset spans all families.
fn spread<T: Clone>(items: &[T], k: usize) -> Vec<T> {
    if k >= items.len() {
        return items.to_vec();
    }
    (0..k).map(|i| items[i * items.len() / k].clone()).collect()
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    set_jobs(Some(a.jobs))?;
    let mut run: TrainRunConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainRunConfig::default(),
    };
    let t = &mut run.training;
    if let Some(v) = a.max_steps {
        t.max_steps = Some(v);
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.adam.lr = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = env_seed()? {
        t.seed = v;
    }
    if let Some(v) = a.model_size {
        run.model_size = v;
    }
    prepare_out(&a.out, a.force)?;
    let manifest = DatasetManifest::read(&a.data)?;
    let vocab = manifest.vocab(&a.data)?;
    let (items, skipped) = load_train_items(&a.data, &manifest, Split::Train, &vocab)?;
    let heldout: Vec<TrainItem> = match load_train_items(&a.data, &manifest, Split::TestId, &vocab) {
        Ok((h, _)) => spread(&h, run.heldout_samples),
        Err(molforge::training::TrainingError::Dataset(molforge::dataset::DatasetError::MissingSplit(_))) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mcfg = match run.model_size {
        ModelSize::Small => ModelConfig::small(vocab.len()),
        ModelSize::Standard => ModelConfig::standard(vocab.len()),
    };
    let model = Model::<f32>::new(mcfg, run.training.seed)?;
    eprintln!(
        "training on {} samples ({} skipped), {} held out, {} parameters",
        items.len(),
        skipped,
        heldout.len(),
        model.params.scalar_count()
    );
    let run_path = a.out.join("run.json");
    fs::write(&run_path, serde_json::to_string_pretty(&run).expect("config serializes")).map_err(|e| io_err(&run_path, e))?;
    let mut trainer = Trainer::new(model, run.training.clone()).with_vocab(vocab);
    let summary = trainer.fit(&items, &heldout, Some(&a.out), |s, e| {
        if s.step % 50 == 0 || e.is_some() {
            let e = e.map_or(String::new(), |v| format!(" heldout {v:.4}"));
            eprintln!("step {:6} numeric {:.4} text {:.4}{e}", s.step, s.numeric, s.text);
        }
    })?;
    println!(
        "trained {} steps in {:.0}s; checkpoint {}",
        summary.steps,
        summary.seconds,
        a.out.join("model").display()
    );
    if let Some(e) = summary.heldout_rel_err {
        println!("held-out relative error {e:.4}");
    }
    Ok(())
}

fn load_model(ckpt: &Path) -> Result<TextOperatorModel, CliError> {
    Ok(TextOperatorModel::load(ckpt)?)
}

fn report_out(rep: &EvalReport, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    rep.write_csv(path)?;
    print!("{}", rep.to_csv());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    set_jobs(a.jobs)?;
    let manifest = DatasetManifest::read(&a.data)?;
    let model = load_model(&a.ckpt)?;
    let embedder = TableEmbedder::new(&model.vocab, &model.model.text_head_table().data, model.model.config.d_model);
    let ctx = EvalContext {
        dir: &a.data,
        manifest: &manifest,
        embedder: if a.no_text { None } else { Some(&embedder) },
        model_hash: model.model.config.hash(),
        families: a.families.clone(),
    };
    let (rep, split) = match a.protocol {
        Protocol::Id => (evaluate_split(&model, &ctx, Split::TestId)?, Split::TestId),
        Protocol::Ood20 => (evaluate_split(&model, &ctx, Split::Ood20)?, Split::Ood20),
        Protocol::Ood30 => (evaluate_split(&model, &ctx, Split::Ood30)?, Split::Ood30),
        Protocol::Extrap => (evaluate_extrapolation(&model, &ctx, Split::TestId)?, Split::TestId),
    };
    report_out(&rep, &a.report)?;
    if let Some(dir) = &a.plots {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let n = plots::write_triptychs(&model, &ctx, split, dir)?;
        eprintln!("wrote {n} plots to {}", dir.display());
    }
    Ok(())
}

fn extrapolate(a: ExtrapolateArgs) -> Result<(), CliError> {
    set_jobs(a.jobs)?;
    let manifest = DatasetManifest::read(&a.data)?;
    let model = load_model(&a.ckpt)?;
    let ctx = EvalContext {
        dir: &a.data,
        manifest: &manifest,
        embedder: None,
        model_hash: model.model.config.hash(),
        families: a.families.clone(),
    };
    let rep = evaluate_extrapolation(&model, &ctx, Split::TestId)?;
    report_out(&rep, &a.report)
}

fn list_catalog(a: CatalogArgs) -> Result<(), CliError> {
    let specs = catalog();
    if a.json {
        println!("{}", serde_json::to_string_pretty(specs).expect("catalog serializes"));
        return Ok(());
    }
    for s in specs {
        let params: Vec<String> = s.params.iter().map(|p| format!("{}={}", p.symbol, p.nominal)).collect();
        println!("{:2}  {:<18} {:<45} {}", s.index, s.class.label(), s.name, params.join(" "));
    }
    Ok(())
}

fn parse_params(spec: &EquationSpec, raw: &[String]) -> Result<ParameterSet, CliError> {
    let mut set = spec.nominal_parameters();
    let bad = |m: String| CliError::Usage(m);
    let named = raw.iter().any(|r| r.contains('='));
    if !named && !raw.is_empty() && raw.len() != set.values.len() {
        return Err(bad(format!(
            "family {} takes {} parameters ({}), got {}",
            spec.index,
            set.values.len(),
            set.values.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join(", "),
            raw.len()
        )));
    }
    for (i, r) in raw.iter().enumerate() {
        let (slot, value) = match r.split_once('=') {
            Some((sym, v)) => {
                let slot = set
                    .values
                    .iter()
                    .position(|(s, _)| s == sym.trim())
                    .ok_or_else(|| bad(format!("family {} has no parameter {sym}", spec.index)))?;
                (slot, v)
            }
            None if named => return Err(bad("mix of positional and named parameters".into())),
            None => (i, r.as_str()),
        };
        set.values[slot].1 = value
            .trim()
            .parse()
            .map_err(|_| bad(format!("parameter value {value:?} is not a number")))?;
    }
    Ok(set)
}

fn read_ic(spec: &EquationSpec, path: &Path) -> Result<InitialCondition, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let values = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::Usage(format!("{}: {t:?} is not a number", path.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != spec.frame_width() {
        return Err(CliError::Usage(format!(
            "family {} needs {} initial values, {} has {}",
            spec.index,
            spec.frame_width(),
            path.display(),
            values.len()
        )));
    }
    Ok(InitialCondition::from_values(spec.ic_family, values))
}

fn infer(a: InferArgs) -> Result<(), CliError> {
    let spec = get_equation(a.family).map_err(|e| CliError::Usage(e.to_string()))?;
    let params = parse_params(spec, &a.params)?;
    let ic = read_ic(spec, &a.ic)?;
    let model = load_model(&a.ckpt)?;
    let times = uniform_times(spec.time_horizon, SNAPSHOTS);
    let width = spec.frame_width();
    let ode = spec.is_ode();
    let queries: Vec<[f64; 2]> = if ode {
        times.iter().map(|&t| [t / spec.time_horizon, 0.0]).collect()
    } else {
        times
            .iter()
            .flat_map(|&t| (0..width).map(move |j| [t / spec.time_horizon, j as f64 / width as f64]))
            .collect()
    };
    let pred = model.predict(spec, &params, &ic, &queries)?;
    let mut out = String::new();
    if ode {
        let cols: Vec<String> = spec.state_names.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!("t,{}\n", cols.join(",")));
        for (t, y) in times.iter().zip(&pred) {
            let vals: Vec<String> = y[..width].iter().map(|v| format!("{v:.6e}")).collect();
            out.push_str(&format!("{t:.6},{}\n", vals.join(",")));
        }
    } else {
        out.push_str("t,x,u\n");
        let dx = spec.domain_length / width as f64;
        for (q, y) in queries.iter().zip(&pred) {
            let t = q[0] * spec.time_horizon;
            let x = (q[1] * width as f64).round() * dx;
            out.push_str(&format!("{t:.6},{x:.6},{:.6e}\n", y[0]));
        }
    }
    print!("{out}");
    if !a.no_text {
        let text = model.describe(spec, &params, &ic)?.unwrap_or_default();
        println!("# description: {text}");
    }
    Ok(())
}
