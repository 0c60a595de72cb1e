use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crowdqc_core::evalharness::{run_robustness, LabeledResponse};
use crowdqc_core::io::{read_jsonl, read_to_string, LoadError};
use crowdqc_core::postqc::{self, load_expert, load_ratings, run_postqc, PostQcConfig, ResponseRecord};
use crowdqc_core::prequal::{summarize_demographics, WorkerProfile};
use crowdqc_core::realtime::QcConfig;
use crowdqc_core::search::CorpusIndex;
use crowdqc_core::text::{Lexicon, TextError};
use crowdqc_service::{AppState, ConfigError, StartupError, StudyConfig};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "crowdqc", version, about = "Quality control for crowdsourced free-text responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the validation service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Build a search index from a corpus JSONL file.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Duplicate, agreement, completion-time and expert-rating reports.
    Postqc {
        #[arg(long)]
        responses: PathBuf,
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        expert: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Jaccard threshold for near-duplicates.
        #[arg(long, default_value_t = postqc::DEFAULT_DUPLICATE_THRESHOLD)]
        duplicate_threshold: f64,
        /// Responses completed faster than this are flagged.
        #[arg(long, default_value_t = 20.0)]
        min_seconds: f64,
    },
    /// Run labeled responses through the validation pipeline.
    Robustness {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// QC settings (TOML or JSON), either top-level or under `qc`.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Word list replacing the bundled English lexicon.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Participant characteristics table for a worker roster.
    Demographics {
        #[arg(long)]
        roster: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<TextError> for CliError {
    fn from(e: TextError) -> Self {
        match e {
            TextError::LexiconIo { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<StartupError> for CliError {
    fn from(e: StartupError) -> Self {
        let io = match &e {
            StartupError::Config(c) => c.is_io(),
            StartupError::Log(crowdqc_service::events::LogError::Io { .. }) => true,
            StartupError::Load(l) => l.is_io(),
            StartupError::Lexicon(TextError::LexiconIo { .. }) => true,
            _ => false,
        };
        if io {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_report(dir: &Path, files: &[(&str, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, contents) in files {
        write_file(&dir.join(name), contents)?;
    }
    Ok(())
}

fn load_qc_config(path: &Path) -> Result<QcConfig, CliError> {
    let text = read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value: serde_json::Value = if is_json {
        serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
    };
    let qc = value.get("qc").cloned().unwrap_or(value);
    let cfg: QcConfig = serde_json::from_value(qc)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    cfg.check()
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Serve { config, port, host } => serve(&config, &host, port),
        Command::Index { corpus, out } => {
            let index = CorpusIndex::from_jsonl(&corpus)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            index.save(&out)?;
            println!(
                "indexed {} documents, {} distinct tokens -> {}",
                index.len(),
                index.token_count(),
                out.display()
            );
            Ok(())
        }
        Command::Postqc {
            responses,
            ratings,
            expert,
            out,
            duplicate_threshold,
            min_seconds,
        } => {
            let responses: Vec<ResponseRecord> = read_jsonl(&responses)?;
            let ratings = load_ratings(&ratings)?;
            let expert = expert.as_deref().map(load_expert).transpose()?;
            let cfg = PostQcConfig {
                duplicate_threshold,
                min_completion_seconds: min_seconds,
                ..Default::default()
            };
            let report = run_postqc(&responses, &ratings, expert.as_deref(), &cfg)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            write_report(&out, &report.files())?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Robustness {
            items,
            corpus,
            config,
            out,
            lexicon,
        } => {
            let items: Vec<LabeledResponse> = read_jsonl(&items)?;
            let index = CorpusIndex::from_jsonl(&corpus)?;
            let qc = load_qc_config(&config)?;
            let lex = match lexicon {
                Some(path) => Lexicon::load(path)?,
                None => Lexicon::builtin_english(),
            };
            let report = run_robustness(&items, &qc, &index, &lex);
            write_report(
                &out,
                &[
                    ("robustness.csv", report.summary_csv()),
                    ("robustness_items.csv", report.items_csv()),
                    ("robustness.txt", report.to_text()),
                ],
            )?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Demographics { roster, out } => {
            let cohort: Vec<WorkerProfile> = read_jsonl(&roster)?;
            let summary =
                summarize_demographics(&cohort).map_err(|e| CliError::Invalid(e.to_string()))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            write_file(&out, &summary.to_csv())?;
            println!("{} workers summarized -> {}", summary.n, out.display());
            Ok(())
        }
    }
}

fn serve(config: &Path, host: &str, port: u16) -> Result<(), CliError> {
    let cfg = StudyConfig::load(config)?;
    let app = AppState::from_config(cfg)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Io(format!("bind {addr}: {e}")))?;
        let bound = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
        tracing::info!(%bound, "listening");
        println!("listening on http://{bound}");
        let shutdown = async {
            tokio::signal::ctrl_c().await.ok();
            tracing::info!("shutting down");
        };
        crowdqc_service::serve(listener, app, shutdown)
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
