//! Command-line experiments over the fcp fault models.
//!
//! Every command reads only the files named in its flags and writes only to
//! the output paths it is given (stdout when none is). Outputs are written
//! atomically.

mod data;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fcp_core::deep::{
    sweep_hidden_sizes, sweep_sparsity, write_size_csv, write_sparsity_csv, StackConfig, SweepData,
};
use fcp_core::error::FcpError;
use fcp_core::eval::{kfold, Predictions};
use fcp_core::ingest::{
    assemble_features, load_telstra, split, stratified_sample, write_kde_table, DesignMatrix,
};
use fcp_core::model::{fit, fit_predict, Algo};
use fcp_core::persist::{load_model, save_model, write_atomic};
use fcp_core::pipeline::{write_verdict_csv, PipelineConfig, PipelineReport};
use fcp_core::shallow::{AdtHyper, KernelChoice, RfHyper, ShallowAlgo, SvmHyper};
use fcp_core::simulate::{simulate, write_tables, SimConfig};
use fcp_core::synthgen::{generate_dataset, BandwidthRule, ChainConfig};

pub use data::DEFAULT_TAXONOMY;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "fcp", version, about = "Fault detection, localization and severity models for network telemetry")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic KDE table from a class taxonomy.
    Synth(SynthArgs),
    /// Write simulated fault tables in the Telstra competition layout.
    Simulate(SimulateArgs),
    /// Turn a Telstra-format directory into a feature CSV.
    Ingest(IngestArgs),
    /// Train a model and save it.
    Train(TrainArgs),
    /// Score a model, a predictions file or a cross-validation run.
    Eval(EvalArgs),
    /// Hidden-size or sparsity grid for the stacked autoencoder.
    Sweep(SweepArgs),
    /// Route records through a configured pipeline.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    /// Fault versus no fault.
    Detect1,
    /// Manifest versus impending fault.
    Detect2,
    /// Fault category, or fine class within `--category`.
    Localize,
    /// Fault severity.
    Severity,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Detect1 => "detect1",
            Task::Detect2 => "detect2",
            Task::Localize => "localize",
            Task::Severity => "severity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Svm,
    Adt,
    Rf,
    Sae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Bandwidth {
    Silverman,
    Scott,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    /// fault_severity as given (0, 1, 2).
    Severity,
    /// 1 when fault_severity > 0.
    Binary,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Taxonomy JSON; defaults to the shipped mobile-network taxonomy.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 10)]
    thin: usize,
    #[arg(long, default_value_t = 1.0)]
    proposal_scale: f64,
    #[arg(long, value_enum, default_value_t = Bandwidth::Silverman)]
    bandwidth: Bandwidth,
    /// Add the class column.
    #[arg(long)]
    with_class: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7381)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Directory holding train.csv, event_type.csv, log_feature.csv,
    /// resource_type.csv and severity_type.csv.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Target::Severity)]
    target: Target,
    /// Also write the fitted feature schema (JSON).
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct HyperArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// SVM box constraint.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// RBF width; defaults to 1 / (features · variance).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    linear: bool,
    /// ADT boosting rounds.
    #[arg(long, default_value_t = 10)]
    rounds: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 100)]
    h1: usize,
    #[arg(long, default_value_t = 50)]
    h2: usize,
    #[arg(long, default_value_t = 4.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, default_value_t = 0.001)]
    l2: f64,
    /// Pre-training epochs of the first autoencoder.
    #[arg(long, default_value_t = 400)]
    ae1_epochs: usize,
    #[arg(long, default_value_t = 100)]
    ae2_epochs: usize,
    #[arg(long, default_value_t = 400)]
    softmax_epochs: usize,
    #[arg(long, default_value_t = 400)]
    finetune_epochs: usize,
}

impl HyperArgs {
    fn stack(&self) -> StackConfig {
        let mut cfg = StackConfig {
            seed: self.seed,
            softmax_epochs: self.softmax_epochs,
            finetune_epochs: self.finetune_epochs,
            ..StackConfig::default()
        }
        .with_sizes(vec![self.h1, self.h2])
        .with_sparsity(self.beta, self.rho);
        for (layer, epochs) in cfg.layers.iter_mut().zip([self.ae1_epochs, self.ae2_epochs]) {
            layer.l2 = self.l2;
            layer.epochs = epochs;
        }
        cfg
    }

    fn algo(&self, kind: ModelKind) -> Algo {
        match kind {
            ModelKind::Svm => Algo::Shallow(ShallowAlgo::Svm(SvmHyper {
                c: self.c,
                kernel: if self.linear {
                    KernelChoice::Linear
                } else {
                    KernelChoice::Rbf { gamma: self.gamma }
                },
                seed: self.seed,
                ..SvmHyper::default()
            })),
            ModelKind::Adt => Algo::Shallow(ShallowAlgo::Adt(AdtHyper { rounds: self.rounds })),
            ModelKind::Rf => Algo::Shallow(ShallowAlgo::Rf(RfHyper {
                n_trees: self.trees,
                mtry: self.mtry,
                seed: self.seed,
                ..RfHyper::default()
            })),
            ModelKind::Sae => Algo::Sae(self.stack()),
        }
    }
}

#[derive(Args, Debug)]
struct TaskArgs {
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Feature CSV (`id,label,...`) or KDE table.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Taxonomy for KDE tables; defaults to the shipped one.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Localize within this fault category.
    #[arg(long)]
    category: Option<String>,
    /// Draw this many rows, stratified by label, before training.
    #[arg(long)]
    sample: Option<usize>,
}

impl TaskArgs {
    fn load(&self, seed: u64) -> Result<DesignMatrix, CliError> {
        let path = self.data.as_deref().ok_or_else(|| usage("--data is required"))?;
        let task = self.task.ok_or_else(|| usage("--task is required"))?;
        if self.category.is_some() && task != Task::Localize {
            return Err(usage("--category only applies to --task localize"));
        }
        let tax = data::taxonomy(self.taxonomy.as_deref())?;
        let m = data::task_matrix(path, task, &tax, self.category.as_deref())?;
        Ok(match self.sample {
            Some(n) => stratified_sample(&m, n, seed)?,
            None => m,
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[command(flatten)]
    data: TaskArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Saved model to score on `--data`.
    #[arg(long, conflicts_with_all = ["predictions", "cv"])]
    model: Option<PathBuf>,
    /// Predictions CSV (`id,label,p_<class>...`) to score directly.
    #[arg(long, conflicts_with_all = ["cv"])]
    predictions: Option<PathBuf>,
    /// Stratified k-fold cross-validation of `--model-type` on `--data`.
    #[arg(long)]
    cv: Option<usize>,
    #[arg(long, value_enum, requires = "cv")]
    model_type: Option<ModelKind>,
    #[command(flatten)]
    data: TaskArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `metric,class,value` CSV.
    #[arg(long)]
    metrics_csv: Option<PathBuf>,
    #[arg(long)]
    confusion_csv: Option<PathBuf>,
    /// Per-row class probabilities of a model evaluation.
    #[arg(long)]
    predictions_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: TaskArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [25, 50, 100, 150])]
    h1_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [25, 50])]
    h2_grid: Vec<usize>,
    /// Sweep (β, ρ) instead of hidden sizes.
    #[arg(long)]
    sparsity: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0])]
    beta_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05, 0.1, 0.2])]
    rho_grid: Vec<f64>,
    /// Train/validation/test fractions; cells are scored on validation.
    #[arg(long, value_delimiter = ',', default_values_t = [0.7, 0.15, 0.15])]
    split: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// KDE table or feature CSV.
    #[arg(long)]
    records: PathBuf,
    /// Verdict CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report with route counts and full verdicts.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Fcp(FcpError),
}

impl From<FcpError> for CliError {
    fn from(e: FcpError) -> Self {
        CliError::Fcp(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Fcp(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Fcp(e) if e.is_data_error() => EXIT_DATA,
            CliError::Fcp(_) => EXIT_USAGE,
        }
    }
}

fn usage(msg: &str) -> CliError {
    CliError::Usage(msg.to_string())
}

/// Writes to `path` atomically, or to stdout.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => Ok(write_atomic(p, bytes)?),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| FcpError::io("<stdout>", e))?;
            Ok(())
        }
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> fcp_core::error::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let tax = data::taxonomy(a.taxonomy.as_deref())?;
    let cfg = ChainConfig {
        burn_in: a.burn_in,
        thin: a.thin,
        proposal_scale: a.proposal_scale,
        seed: a.seed,
    };
    let rule = match a.bandwidth {
        Bandwidth::Silverman => BandwidthRule::Silverman,
        Bandwidth::Scott => BandwidthRule::Scott,
    };
    let records = generate_dataset(&tax, a.n, &cfg, &rule)?;
    let bytes = csv_bytes(|b| write_kde_table(b, &records, a.with_class))?;
    emit(a.out.as_deref(), &bytes)
}

fn simulate_cmd(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = SimConfig {
        n_ids: a.n,
        seed: a.seed,
        ..SimConfig::default()
    };
    let tables = simulate(&cfg)?;
    write_tables(&tables, &a.out_dir)?;
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let tables = load_telstra(&a.dir)?;
    let (mut m, schema) = assemble_features(&tables)?;
    if a.target == Target::Binary {
        m = m.relabel(m.labels.iter().map(|&l| i64::from(l > 0)).collect())?;
    }
    if let Some(p) = &a.schema {
        let text = serde_json::to_string_pretty(&schema).map_err(|e| FcpError::Config(e.to_string()))?;
        write_atomic(p, (text + "\n").as_bytes())?;
    }
    let bytes = csv_bytes(|b| m.write_csv(b))?;
    emit(a.out.as_deref(), &bytes)
}

fn train(a: &TrainArgs) -> Result<(), CliError> {
    let m = a.data.load(a.hyper.seed)?;
    let algo = a.hyper.algo(a.model);
    let task = a.data.task.expect("checked by load");
    let model = fit(&m, &algo, task.name())?;
    save_model(&model, &a.out)?;
    log::info!("saved {} model for {} to {}", model.model_type(), task.name(), a.out.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let json = |s: fcp_core::error::Result<String>| s.map(String::into_bytes);
    let (report, extra) = if let Some(p) = &a.predictions {
        if a.data.data.is_some() {
            return Err(usage("--predictions is scored on its own; drop --data"));
        }
        let file = std::fs::File::open(p).map_err(|e| {
            if p.exists() {
                FcpError::io(p, e)
            } else {
                FcpError::FileMissing(p.clone())
            }
        })?;
        let preds = Predictions::read_csv(std::io::BufReader::new(file), &p.display().to_string())?;
        (preds.report()?, None)
    } else if let Some(model_path) = &a.model {
        let model = load_model(model_path)?;
        let m = a.data.load(a.hyper.seed)?;
        let probs = model.predict_proba_batch(&m.rows)?;
        let truth = m
            .labels
            .iter()
            .map(|l| {
                model.label_vocabulary.iter().position(|c| c == l).ok_or_else(|| {
                    FcpError::Label(format!("label {l} unknown to the model {:?}", model.label_vocabulary))
                })
            })
            .collect::<fcp_core::error::Result<Vec<usize>>>()?;
        let preds = Predictions {
            ids: m.ids.clone(),
            classes: model.label_vocabulary.clone(),
            truth,
            probs,
        };
        (preds.report()?, Some(preds))
    } else if let Some(k) = a.cv {
        let kind = a.model_type.ok_or_else(|| usage("--cv needs --model-type"))?;
        let m = a.data.load(a.hyper.seed)?;
        let algo = a.hyper.algo(kind);
        let task = a.data.task.expect("checked by load").name();
        let trainer = |tr: &DesignMatrix, te: &DesignMatrix, c: &[i64]| fit_predict(tr, te, c, &algo, task);
        let r = kfold(&m, k, &trainer, a.hyper.seed)?;
        log::info!("{k}-fold accuracy {:.4}", r.pooled.accuracy);
        if a.metrics_csv.is_some() || a.confusion_csv.is_some() {
            write_tables_for(a, &r.pooled)?;
        }
        return emit(a.out.as_deref(), &json(r.to_json())?);
    } else {
        return Err(usage("eval needs one of --model, --predictions or --cv"));
    };
    write_tables_for(a, &report)?;
    if let (Some(path), Some(p)) = (&a.predictions_out, &extra) {
        write_atomic(path, &csv_bytes(|b| p.write_csv(b))?)?;
    }
    emit(a.out.as_deref(), &json(report.to_json())?)
}

fn write_tables_for(a: &EvalArgs, r: &fcp_core::eval::MetricsReport) -> Result<(), CliError> {
    if let Some(p) = &a.metrics_csv {
        write_atomic(p, &csv_bytes(|b| r.write_csv(b))?)?;
    }
    if let Some(p) = &a.confusion_csv {
        write_atomic(p, &csv_bytes(|b| r.write_confusion_csv(b))?)?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let fractions = match a.split.as_slice() {
        &[tr, va, te] => (tr, va, te),
        _ => return Err(usage("--split takes three fractions")),
    };
    let m = a.data.load(a.hyper.seed)?;
    let (tr, va, _) = split(&m, fractions, a.hyper.seed)?;
    let data = SweepData {
        train_x: &tr.rows,
        train_y: &tr.labels,
        val_x: &va.rows,
        val_y: &va.labels,
    };
    let base = a.hyper.stack();
    let bytes = if a.sparsity {
        let cells = sweep_sparsity(&data, &a.beta_grid, &a.rho_grid, &base)?;
        csv_bytes(|b| write_sparsity_csv(b, &cells))?
    } else {
        let cells = sweep_hidden_sizes(&data, &a.h1_grid, &a.h2_grid, &base)?;
        csv_bytes(|b| write_size_csv(b, &cells))?
    };
    emit(a.out.as_deref(), &bytes)
}

fn run_pipeline(a: &RunArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let pipeline = cfg.build(base)?;
    let records = data::records(&a.records)?;
    pipeline.validate(records.n_features())?;
    let verdicts = pipeline.run(&records);
    if let Some(p) = &a.report {
        let text = PipelineReport::new(verdicts.clone()).to_json()?;
        write_atomic(p, text.as_bytes())?;
    }
    let bytes = csv_bytes(|b| write_verdict_csv(b, &verdicts))?;
    emit(a.out.as_deref(), &bytes)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Run(a) => run_pipeline(a),
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("fcp: {e}");
            e.exit_code()
        }
    }
}
