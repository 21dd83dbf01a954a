use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use criterion_lab::aggregation::Threshold;
use criterion_lab::classifier::adapter::{connect_adapter, AdapterEndpoint};
use criterion_lab::classifier::{
    load_model, save_model, ClassifierError, LabeledText, Mode, Predictor, TrainConfig, TrainingSet,
};
use criterion_lab::corpus::{
    corpus_stats, read_corpus_file, write_corpus, write_stats_sidecar, Corpus, CorpusError, Criterion,
};
use criterion_lab::harness::{
    emit_report, evaluate, read_report, run_experiment, EvalSettings, ExperimentSpec, HarnessError, ReportFormat,
};
use criterion_lab::review::{ReviewBook, ReviewError};
use criterion_lab::syngen::{builtin_profiles, dialect_shift, generate, SynthProfile};
use criterion_lab::{Learner, Model};
use criterion_review_service::ReviewState;
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "criterion-lab",
    version,
    about = "Criterion-level ASD note labelling toolkit"
)]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Print dataset statistics.
    Stats { corpus: PathBuf },
    /// Train a model, or tune one with --init.
    Train(TrainArgs),
    /// Evaluate a model on a corpus.
    Eval(EvalArgs),
    /// Run experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Re-emit report tables from an experiment directory.
    Report {
        dir: PathBuf,
        /// Comma-separated list of json, csv, md.
        #[arg(long, default_value = "md,csv")]
        format: String,
    },
    /// Serve the review API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Built-in profile name (addm-like, cdw-like).
    #[arg(long, conflicts_with = "profile_file")]
    profile: Option<String>,
    /// Profile as a JSON file.
    #[arg(long)]
    profile_file: Option<PathBuf>,
    /// Vocabulary shift applied on top of the profile.
    #[arg(long)]
    dialect_intensity: Option<f64>,
    #[arg(long)]
    n_cases: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    corpus: PathBuf,
    /// TrainConfig as JSON; baseline settings when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model to tune; the default config then uses the tuning rate.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "adapter")]
    model: Option<PathBuf>,
    /// External model: `tcp://host:port` or a command line.
    #[arg(long, conflicts_with = "model")]
    adapter: Option<String>,
    /// Mode of the external model.
    #[arg(long, default_value = "transparent")]
    mode: Mode,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_evidence: usize,
    /// Comma-separated black-box thresholds.
    #[arg(long, default_value = "0.2,0.4,0.5,0.6,0.8")]
    thresholds: String,
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Run every sequence of an experiment spec.
    Run {
        #[arg(long)]
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// 0 picks a free port; the bound address is printed on start.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Audit log (JSON Lines); created when missing.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value_t = 1)]
    min_evidence: usize,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ClassifierError> for CliError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::CorruptModel(_)
            | ClassifierError::VersionMismatch { .. }
            | ClassifierError::InvalidConfig(_)
            | ClassifierError::EmptyData
            | ClassifierError::InitMismatch(_)
            | ClassifierError::TargetWidth { .. } => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidSpec(_) | HarnessError::TooFewCases { .. } | HarnessError::Corpus(_) => {
                CliError::Data(e.to_string())
            }
            HarnessError::Model(inner) => inner.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ReviewError> for CliError {
    fn from(e: ReviewError) -> Self {
        match e {
            ReviewError::Storage(_) => CliError::Runtime(e.to_string()),
            ReviewError::Model(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn runtime(context: &str) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{what} {}: {e}", path.display())))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Runtime(e.to_string())),
        _ => Ok(()),
    }
}

fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    read_corpus_file(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn synth(args: SynthArgs, seed: u64) -> Result<(), CliError> {
    let mut profile: SynthProfile = match (&args.profile, &args.profile_file) {
        (_, Some(path)) => read_json(path, "profile")?,
        (Some(name), None) => builtin_profiles().remove(name).ok_or_else(|| {
            let known: Vec<String> = builtin_profiles().into_keys().collect();
            CliError::Usage(format!("unknown profile {name:?}; known: {}", known.join(", ")))
        })?,
        (None, None) => return Err(CliError::Usage("one of --profile or --profile-file is required".into())),
    };
    if let Some(n) = args.n_cases {
        profile.n_cases = n;
    }
    if let Some(intensity) = args.dialect_intensity {
        profile = dialect_shift(&profile, intensity);
    }
    let corpus = generate(&profile, seed).map_err(|e| CliError::Data(e.to_string()))?;
    let file = File::create(&args.output).map_err(runtime("cannot create output"))?;
    let mut out = BufWriter::new(file);
    write_corpus(&corpus, &mut out)?;
    out.flush().map_err(runtime("cannot write output"))?;
    let stats = corpus_stats(&corpus);
    write_stats_sidecar(&args.output, &stats)?;
    print_json(&stats)
}

fn training_set(corpus: &Corpus, mode: Mode) -> TrainingSet<'_> {
    let examples = corpus
        .cases
        .iter()
        .flat_map(|case| {
            case.sentences.iter().map(move |s| LabeledText {
                case_id: &case.case_id,
                text: &s.text,
                targets: match mode {
                    Mode::Transparent => Criterion::ALL.iter().map(|c| s.gold_criteria.contains(*c)).collect(),
                    Mode::Blackbox => vec![s.gold_line_asd.unwrap_or(case.gold_case_asd)],
                },
            })
        })
        .collect();
    TrainingSet {
        mode,
        dataset: corpus.dataset_id.clone(),
        examples,
    }
}

fn train(args: TrainArgs, seed: Option<u64>) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus)?;
    let init: Option<Model> = args.init.as_deref().map(load_model).transpose()?;
    if let Some(m) = &init {
        if m.mode != args.mode {
            return Err(CliError::Data(format!(
                "--init model is {:?}, not {:?}",
                m.mode, args.mode
            )));
        }
    }
    let mut config: TrainConfig = match &args.config {
        Some(path) => read_json(path, "config")?,
        None if init.is_some() => TrainConfig::baseline().tuning(),
        None => TrainConfig::baseline(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let data = training_set(&corpus, args.mode);
    let model: Model = criterion_lab::classifier::train(&data, &config, init.as_ref())?;
    save_model(&model, &args.output)?;
    print_json(&model.provenance)
}

fn parse_thresholds(list: &str) -> Result<Vec<Threshold>, CliError> {
    list.split(',')
        .map(|t| {
            let value: f64 = t
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bad threshold {t:?}")))?;
            Threshold::from_decimal(value).map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let thresholds = parse_thresholds(&args.thresholds)?;
    let corpus = read_corpus(&args.corpus)?;
    let settings = EvalSettings {
        thresholds,
        min_evidence: args.min_evidence,
        ..EvalSettings::default()
    };
    let cases: Vec<_> = corpus.cases.iter().collect();
    let evaluation = match (&args.model, &args.adapter) {
        (Some(path), _) => {
            let model: Model = load_model(path)?;
            evaluate(&model, &cases, &settings)?
        }
        (None, Some(endpoint)) => {
            let endpoint: AdapterEndpoint = endpoint.parse()?;
            let model = connect_adapter(&endpoint, args.mode)?;
            evaluate(&model as &(dyn Predictor + Sync), &cases, &settings)?
        }
        (None, None) => unreachable!("clap requires one"),
    };
    print_json(&evaluation)
}

fn experiment(command: ExperimentCommand, seed: Option<u64>) -> Result<(), CliError> {
    match command {
        ExperimentCommand::Run { spec, output } => {
            let mut spec = ExperimentSpec::load(&spec).map_err(|e| match e {
                HarnessError::Io { .. } => CliError::Data(e.to_string()),
                other => other.into(),
            })?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let report = run_experiment(&Learner::new(), &spec, Some(&output))?;
            eprintln!(
                "{} stages, {} comparison cells; report in {}",
                report.stages.len(),
                report.grid.len(),
                output.display()
            );
            Ok(())
        }
    }
}

fn report(dir: &Path, format: &str) -> Result<(), CliError> {
    let formats = format
        .split(',')
        .map(str::parse::<ReportFormat>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = read_report(dir).map_err(|e| CliError::Data(e.to_string()))?;
    emit_report(&report, dir, &formats)?;
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let corpus = read_corpus(&args.corpus)?;
    let model: Model = load_model(&args.model)?;
    let book = ReviewBook::new(&corpus, &model, args.min_evidence)?;
    let state = Arc::new(ReviewState::open(book, &args.store)?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime("cannot start runtime"))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Runtime(format!("cannot bind {addr}: {e}")))?;
        let bound = listener.local_addr().map_err(runtime("no local address"))?;
        println!("listening on http://{bound}");
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        criterion_review_service::serve(listener, state, shutdown)
            .await
            .map_err(runtime("server failed"))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(args) => synth(args, seed.unwrap_or(0)),
        Command::Stats { corpus } => print_json(&corpus_stats(&read_corpus(&corpus)?)),
        Command::Train(args) => train(args, seed),
        Command::Eval(args) => eval(args),
        Command::Experiment(command) => experiment(command, seed),
        Command::Report { dir, format } => report(&dir, &format),
        Command::Serve(args) => serve(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
