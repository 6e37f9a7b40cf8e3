//! `tums` — run ToolQA-style question suites through the TUMS pipeline,
//! ask one-off questions, or validate a data/prompt tree.

mod config;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use config::{BackendKind, CliConfig, Overrides};
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tums::datastore::{load_questions, DataStores, QuestionMode};
use tums::decomposer::format_history;
use tums::gateway::{Gateway, GenerationConfig, HttpBackend, RetryPolicy, ScriptedBackend};
use tums::harness::{load_suite, run_suite, Pipeline, VariantConfig, VariantName};
use tums::processor::HandlerRegistry;
use tums::prompting::PromptCatalog;
use tums::toolkit::Executor;
use tums::types::{DatasetClass, Difficulty, HintFlavor, Question, Termination};

#[derive(Parser)]
#[command(name = "tums", version, about = "Tool-use agent pipeline and benchmark harness")]
struct Cli {
    /// Commented key=value config file; flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the dataset stores and a questions/ subdirectory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Directory holding the prompt templates, exemplars, and hints.
    #[arg(long, global = true)]
    prompts_dir: Option<PathBuf>,
    /// Pipeline variant: tums, tums-nir, tums-os, tums-pre.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Backend kind: http or scripted.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Chat-completion endpoint URL (http backend).
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Model name sent with each request (http backend).
    #[arg(long, global = true)]
    model: Option<String>,
    /// NAME of the environment variable holding the API key (never the key).
    #[arg(long, global = true)]
    api_key_env: Option<String>,
    /// Script file for the scripted backend (JSON lines).
    #[arg(long, global = true)]
    script: Option<PathBuf>,
    /// Handler registry override file (TOML).
    #[arg(long, global = true)]
    handlers: Option<PathBuf>,
    /// Episode step budget.
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Concurrent questions (forced to 1 with the scripted backend).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for run artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a question suite and write a report.
    Run {
        /// `all`, or a comma-separated list of question-file stems
        /// (`flight-easy,coffee-hard`).
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Run one ad-hoc question and print its trajectory.
    Ask {
        /// The question text.
        question: String,
    },
    /// Load datasets, prompts, and the registry; print counts and checksums.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let flags = Overrides {
        data_dir: cli.data_dir,
        prompts_dir: cli.prompts_dir,
        variant: cli.variant,
        backend: cli.backend,
        endpoint: cli.endpoint,
        model: cli.model,
        api_key_env: cli.api_key_env,
        script: cli.script,
        handlers: cli.handlers,
        max_steps: cli.max_steps,
        workers: cli.workers,
        out_dir: cli.out,
    };
    let config = config::resolve(cli.config.as_deref(), flags)?;
    match cli.command {
        Command::Run { suite } => cmd_run(&suite, &config),
        Command::Ask { question } => cmd_ask(&question, &config),
        Command::Validate => cmd_validate(&config),
    }
}

fn variant_config(config: &CliConfig) -> Result<VariantConfig> {
    let name = VariantName::parse(&config.variant)
        .with_context(|| format!("unknown variant {:?}", config.variant))?;
    Ok(VariantConfig::of(name))
}

fn load_registry(config: &CliConfig, variant: VariantConfig) -> Result<HandlerRegistry> {
    match &config.handlers {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            Ok(HandlerRegistry::from_toml(&text)?)
        }
        None => Ok(variant.registry()),
    }
}

fn build_pipeline(config: &CliConfig) -> Result<Pipeline> {
    let variant = variant_config(config)?;
    let catalog = PromptCatalog::load(&config.prompts_dir)?;
    let registry = load_registry(config, variant)?;
    registry.validate_prompts(&catalog)?;
    let stores = DataStores::load_dir(&config.data_dir)?;
    let backend: Box<dyn tums::gateway::Backend> = match config.backend {
        BackendKind::Http => {
            let endpoint = config
                .endpoint
                .clone()
                .context("backend http needs --endpoint <url>")?;
            Box::new(HttpBackend::new(
                endpoint,
                config.api_key_env.clone(),
                config.model.clone(),
            ))
        }
        BackendKind::Scripted => {
            let path = config.script.as_ref().expect("validated in resolve");
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            Box::new(ScriptedBackend::from_jsonl(&text)?)
        }
    };
    Ok(Pipeline {
        gateway: Gateway::new(backend, GenerationConfig::default(), RetryPolicy::default()),
        catalog,
        registry,
        executor: Executor::new(std::sync::Arc::new(stores)),
        variant,
        max_steps: config.max_steps,
    })
}

/// A fresh run directory under `out`: timestamp-named, suffixed on collision.
fn run_dir(out: &Path) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%d-%H%M%S").to_string();
    let mut candidate = out.join(&stamp);
    let mut counter = 1;
    while candidate.exists() {
        counter += 1;
        candidate = out.join(format!("{stamp}-{counter}"));
    }
    std::fs::create_dir_all(&candidate)
        .with_context(|| format!("cannot create run directory {}", candidate.display()))?;
    Ok(candidate)
}

fn effective_workers(config: &CliConfig) -> usize {
    if config.backend == BackendKind::Scripted && config.workers > 1 {
        eprintln!("note: scripted backend replays in order; forcing workers=1");
        1
    } else {
        config.workers
    }
}

fn cmd_run(suite: &str, config: &CliConfig) -> Result<()> {
    let pipeline = build_pipeline(config)?;
    let questions = load_suite(&config.data_dir, suite)?;
    if questions.is_empty() {
        bail!("suite {suite:?} selected no questions");
    }
    let out_dir = run_dir(&config.out_dir)?;
    let workers = effective_workers(config);
    let report = run_suite(&pipeline, &questions, workers, Some(&out_dir))?;

    println!("variant: {}", report.variant.as_str());
    println!(
        "questions: {}, correct: {} ({})",
        report.total_questions,
        report.total_correct,
        paint(&format!("{:.2}%", report.average_correct_rate), GREEN),
    );
    for (dataset, score) in &report.per_dataset {
        println!(
            "  {}: {}/{} ({:.2}%)",
            dataset.label(),
            score.correct,
            score.n,
            score.correct_rate
        );
    }
    match report.average_cost {
        Some(cost) => println!("total cost: {} responses, average cost: {cost:.2}", report.total_cost),
        None => println!("total cost: {} responses, average cost: undefined", report.total_cost),
    }
    if !report.aborted.is_empty() {
        println!("aborted: {}", report.aborted.join(", "));
    }
    println!("report: {}", out_dir.join("report.json").display());
    Ok(())
}

fn cmd_ask(question_text: &str, config: &CliConfig) -> Result<()> {
    let pipeline = build_pipeline(config)?;
    let question = Question::new("ask", question_text, Difficulty::Easy, None, None)?;
    let run = pipeline.run_question(&question);
    let trajectory = &run.trajectory;

    println!("Question: {}", question.text());
    if let Some(hint) = trajectory.hint() {
        println!("Hint: {}", hint.text());
    }
    let history = format_history(trajectory.steps());
    if !history.is_empty() {
        println!("{history}");
    }
    match trajectory.termination() {
        Termination::Finished => {
            println!(
                "Final Answer: {}",
                paint(trajectory.final_answer().unwrap_or(""), GREEN)
            );
            Ok(())
        }
        Termination::MaxStepsExceeded => {
            println!("no answer (max steps)");
            Ok(())
        }
        Termination::Aborted => bail!("episode aborted on an infrastructure error"),
    }
}

fn cmd_validate(config: &CliConfig) -> Result<()> {
    let catalog = PromptCatalog::load(&config.prompts_dir)?;
    println!(
        "prompts: {} templates, {} hints, checksum {}",
        catalog.template_count(),
        catalog.hint_count(),
        catalog.checksum()
    );

    let variant = variant_config(config)?;
    let registry = load_registry(config, variant)?;
    registry.validate_prompts(&catalog)?;
    let mut direct = 0;
    let mut described: Vec<String> = Vec::new();
    for (tool, structure) in registry.entries() {
        match structure {
            tums::processor::HandlerStructure::Direct => direct += 1,
            tums::processor::HandlerStructure::Parallel { categories } => {
                described.push(format!("{tool}=parallel({})", categories.join(", ")))
            }
            tums::processor::HandlerStructure::Serial { stages } => {
                described.push(format!("{tool}=serial({})", stages.join(", ")))
            }
        }
    }
    described.push(format!("{direct} tools direct"));
    println!("registry: {}", described.join("; "));

    let stores = DataStores::load_dir(&config.data_dir)?;
    println!(
        "stores: {} tables, {} graphs, {} corpora",
        stores.tables().len(),
        stores.graphs().len(),
        stores.corpora().len()
    );
    for (name, table) in stores.tables() {
        println!("  table {name}: {} rows, {} columns", table.row_count(), table.columns().len());
    }
    for (name, graph) in stores.graphs() {
        println!("  graph {name}: {} nodes, {} edges", graph.node_count(), graph.edge_count());
    }
    for (name, corpus) in stores.corpora() {
        println!("  corpus {name}: {} documents", corpus.len());
    }

    let questions_dir = config.data_dir.join("questions");
    let mut question_files: Vec<PathBuf> = std::fs::read_dir(&questions_dir)
        .with_context(|| format!("cannot read {}", questions_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    question_files.sort();
    let mut total_questions = 0;
    let mut per_class: std::collections::BTreeMap<DatasetClass, Vec<String>> = Default::default();
    for file in &question_files {
        let questions = load_questions(file, QuestionMode::Open)?;
        total_questions += questions.len();
        let stem = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(dataset) = questions.first().and_then(|q| q.dataset()) {
            per_class
                .entry(dataset)
                .or_default()
                .push(format!("{stem} ({})", questions.len()));
        }
    }
    println!("datasets:");
    for dataset in DatasetClass::ALL {
        let standard = catalog.hint(dataset, HintFlavor::Standard).is_some();
        let preference = catalog
            .hint(dataset, HintFlavor::Preference)
            .map(|h| h.flavor() == HintFlavor::Preference)
            .unwrap_or(false);
        let hints = match (standard, preference) {
            (true, true) => "standard+preference",
            (true, false) => "standard",
            _ => "missing",
        };
        let files = per_class
            .get(&dataset)
            .map(|f| f.join(", "))
            .unwrap_or_else(|| "none".to_string());
        println!("  {}: hints {hints}; questions {files}", dataset.label());
    }
    println!(
        "questions: {} files, {total_questions} questions",
        question_files.len()
    );
    println!("{}", paint("validate ok", GREEN));
    Ok(())
}

const GREEN: &str = "\x1b[32m";

/// ANSI color only on a terminal and only when NO_COLOR is unset.
fn paint(text: &str, code: &str) -> String {
    let colored = std::env::var_os("NO_COLOR").is_none() && std::io::stdout().is_terminal();
    if colored {
        format!("{code}{text}\x1b[0m")
    } else {
        text.to_string()
    }
}
