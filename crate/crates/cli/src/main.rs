//! `cbm`: synthesize data, train, evaluate, grade and serve.
//!
//! Output is JSON on stdout unless `--pretty` is given. Exit codes: 0
//! success, 2 invalid input, 3 runtime or model failure.

mod pretty;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use essaycbm::data::{generate_synthetic, load_jsonl, save_jsonl, split, LabeledEssay, Vocab, DEFAULT_MIN_FREQUENCY};
use essaycbm::inference::{grade_essay, intervene, InterventionRequest};
use essaycbm::model::{load_any, save_checkpoint, AnyModel, BaselineModel, EssayCbmModel, ModelDims, ModelKind};
use essaycbm::train::{cross_validate, evaluate, fit, save_history, EvalReport, TrainingConfig};
use essaycbm_service::ModelRegistry;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "cbm", version, about = "Concept-bottleneck essay grading")]
struct Cli {
    /// Human-readable output instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic labelled dataset as JSONL.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and report on the held-out test split.
    Train(TrainArgs),
    /// Evaluate a checkpoint, or cross-validate its configuration.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Number of folds; retrains fresh models with the checkpoint's
        /// architecture and training configuration.
        #[arg(long)]
        cv: Option<usize>,
        /// Fail unless the checkpoint holds this kind of model.
        #[arg(long)]
        arch: Option<ModelKind>,
    },
    /// Grade one essay, optionally overriding concept scores.
    Grade {
        #[arg(long)]
        ckpt: PathBuf,
        /// Essay text, or a path to a file containing it.
        #[arg(long)]
        text: String,
        /// `index=score` with a 1-based concept index (or concept name).
        #[arg(long = "override", value_name = "K=V")]
        overrides: Vec<String>,
        /// Identifier reported in the result; defaults to the checkpoint
        /// file stem.
        #[arg(long)]
        model_id: Option<String>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "cbm")]
    arch: ModelKind,
    #[arg(long)]
    out: PathBuf,
    /// History JSONL path; defaults to `<out>.history.jsonl`.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    /// Train/validation/test ratios.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    split: Vec<f64>,
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<essaycbm::Error> for CliError {
    fn from(e: essaycbm::Error) -> Self {
        use essaycbm::Error as E;
        match e {
            E::Validation(_)
            | E::Load { .. }
            | E::EmptyEssay
            | E::Split(_)
            | E::Contract(_)
            | E::DegenerateInput(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Writes one block to stdout. A closed pipe is not an error.
fn out(text: &str) -> CliResult {
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}").and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit<T: Serialize>(value: &T) -> CliResult {
    out(&serde_json::to_string(value).map_err(|e| CliError::Runtime(e.to_string()))?)
}

fn emit_pretty_json<T: Serialize>(value: &T) -> CliResult {
    out(&serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?)
}

fn synth(n: usize, seed: u64, out: &Path) -> CliResult {
    if n == 0 {
        return Err(CliError::Invalid("--n must be at least 1".into()));
    }
    let essays = generate_synthetic(n, seed);
    save_jsonl(out, &essays)?;
    tracing::info!(n, path = %out.display(), "wrote synthetic dataset");
    Ok(())
}

fn training_config(args: &TrainArgs) -> CliResult<TrainingConfig> {
    let d = TrainingConfig::default();
    let config = TrainingConfig {
        learning_rate: args.lr.unwrap_or(d.learning_rate),
        batch_size: args.batch_size.unwrap_or(d.batch_size),
        max_epochs: args.epochs.unwrap_or(d.max_epochs),
        patience: args.patience.unwrap_or(d.patience),
        lambda: args.lambda.unwrap_or(d.lambda),
        seed: args.seed,
        stop_metric: d.stop_metric,
    };
    config.validate()?;
    Ok(config)
}

fn report_for(model: &AnyModel, essays: &[LabeledEssay]) -> CliResult<EvalReport> {
    Ok(match model {
        AnyModel::Cbm(m) => evaluate(m, essays)?,
        AnyModel::Baseline(m) => evaluate(m, essays)?,
    })
}

fn train(args: &TrainArgs, pretty: bool) -> CliResult {
    let config = training_config(args)?;
    let d = ModelDims::default();
    let dims = ModelDims {
        embed_dim: args.embed_dim.unwrap_or(d.embed_dim),
        hidden_dim: args.hidden_dim.unwrap_or(d.hidden_dim),
        grade_hidden: d.grade_hidden,
    };
    let ratios: [f64; 3] = args
        .split
        .clone()
        .try_into()
        .map_err(|_| CliError::Invalid("--split takes three ratios".into()))?;
    let essays = load_jsonl(&args.data)?;
    let parts = split(&essays, ratios, args.seed)?;
    let vocab = Vocab::build(parts.train.iter().map(|e| e.text.as_str()), DEFAULT_MIN_FREQUENCY);
    tracing::info!(
        train = parts.train.len(),
        validation = parts.validation.len(),
        test = parts.test.len(),
        vocab = vocab.len(),
        arch = %args.arch,
        "training"
    );
    let (model, history) = match args.arch {
        ModelKind::Cbm => {
            let m = EssayCbmModel::new(vocab, &dims, args.seed)?;
            let out = fit(m, &parts.train, &parts.validation, &config)?;
            save_checkpoint(&out.model, &args.out)?;
            (AnyModel::Cbm(out.model), out.history)
        }
        ModelKind::Baseline => {
            let m = BaselineModel::new(vocab, &dims, args.seed)?;
            let out = fit(m, &parts.train, &parts.validation, &config)?;
            save_checkpoint(&out.model, &args.out)?;
            (AnyModel::Baseline(out.model), out.history)
        }
    };
    let history_path = args.history.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".history.jsonl");
        PathBuf::from(p)
    });
    save_history(&history_path, &history)?;
    let report = report_for(&model, &parts.test)?;
    if pretty {
        out(&pretty::report(&report))
    } else {
        emit(&report)
    }
}

#[derive(Serialize)]
struct CvOutput {
    k: usize,
    reports: Vec<EvalReport>,
    folds: Vec<essaycbm::train::FoldReport>,
    mean: essaycbm::train::MetricSummary,
    std: essaycbm::train::MetricSummary,
}

fn stored_config(model: &AnyModel) -> TrainingConfig {
    model
        .provenance()
        .training
        .as_ref()
        .and_then(|t| t.get("config"))
        .and_then(|c| serde_json::from_value(c.clone()).ok())
        .unwrap_or_default()
}

fn evaluate_cmd(data: &Path, ckpt: &Path, cv: Option<usize>, arch: Option<ModelKind>, pretty: bool) -> CliResult {
    let model = load_any(ckpt)?;
    if let Some(expected) = arch {
        if model.kind() != expected {
            return Err(essaycbm::Error::KindMismatch {
                found: model.kind().to_string(),
                expected: expected.to_string(),
            }
            .into());
        }
    }
    let essays = load_jsonl(data)?;
    let Some(k) = cv else {
        let report = report_for(&model, &essays)?;
        if pretty {
            return out(&pretty::report(&report));
        }
        return emit(&report);
    };

    let config = stored_config(&model);
    let dims = model.dims();
    let seed = model.provenance().init_seed.unwrap_or(config.seed);
    let vocab_for = |train: &[LabeledEssay]| Vocab::build(train.iter().map(|e| e.text.as_str()), DEFAULT_MIN_FREQUENCY);
    let result = match model.kind() {
        ModelKind::Cbm => cross_validate(&essays, k, &config, |train| {
            EssayCbmModel::new(vocab_for(train), &dims, seed)
        })?,
        ModelKind::Baseline => cross_validate(&essays, k, &config, |train| {
            BaselineModel::new(vocab_for(train), &dims, seed)
        })?,
    };
    let out = CvOutput {
        k: result.k,
        reports: result.folds.iter().map(|f| f.report.clone()).collect(),
        folds: result.folds,
        mean: result.mean,
        std: result.std,
    };
    if pretty {
        emit_pretty_json(&out)
    } else {
        emit(&out)
    }
}

fn parse_overrides(raw: &[String]) -> CliResult<BTreeMap<String, i64>> {
    let mut out = BTreeMap::new();
    for item in raw {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("override {item:?} is not of the form K=V")))?;
        let v: i64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("override {item:?}: {v:?} is not an integer")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn read_text(arg: &str) -> CliResult<String> {
    let path = Path::new(arg);
    if arg.len() < 4096 && path.is_file() {
        std::fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
    } else {
        Ok(arg.to_string())
    }
}

fn grade_cmd(ckpt: &Path, text: &str, overrides: &[String], model_id: Option<String>, pretty: bool) -> CliResult {
    let overrides = parse_overrides(overrides)?;
    let model = load_any(ckpt)?;
    let cbm = model.as_cbm()?;
    let model_id = model_id.unwrap_or_else(|| {
        ckpt.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let result = grade_essay(cbm, &model_id, &read_text(text)?)?;
    if overrides.is_empty() {
        if pretty {
            return out(&pretty::grading(&result));
        }
        return emit(&result);
    }
    let request = InterventionRequest::from_raw(&result.concept_vector.scores().map(i64::from), &overrides)?;
    let outcome = intervene(cbm, &request);
    if pretty {
        out(&pretty::intervention(&result, &outcome))
    } else {
        emit(&outcome)
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    tracing::info!("shutting down");
}

fn serve_cmd(models: &Path, host: &str, port: u16) -> CliResult {
    let registry = ModelRegistry::from_manifest(models)
        .map_err(|e| CliError::Runtime(format!("cannot read model manifest: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .map_err(|e| CliError::Runtime(format!("cannot listen on {host}:{port}: {e}")))?;
        let addr: SocketAddr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        emit(&serde_json::json!({ "listening": addr.to_string() }))?;
        essaycbm_service::serve(listener, Arc::new(registry), shutdown_signal())
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("CBM_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth { n, seed, out } => synth(n, seed, &out),
        Command::Train(args) => train(&args, cli.pretty),
        Command::Evaluate { data, ckpt, cv, arch } => evaluate_cmd(&data, &ckpt, cv, arch, cli.pretty),
        Command::Grade {
            ckpt,
            text,
            overrides,
            model_id,
        } => grade_cmd(&ckpt, &text, &overrides, model_id, cli.pretty),
        Command::Serve { models, host, port } => serve_cmd(&models, &host, port),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
