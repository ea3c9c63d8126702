use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use compat_repair::agents::{
    LiveBackend, LiveConfig, LlmBackend, PromptTemplates, ScriptedBackend,
};
use compat_repair::eval::{
    bundled_corpus, derive_seed, emit_report, evaluate, judge, load_bug_file, load_corpus,
    report_from_sessions, BugRecord, ReportFormat,
};
use compat_repair::kb::{render, ApiLevel, KnowledgeBase};
use compat_repair::orchestrator::{
    load_sessions, persist_session, repair_bug, ClockMode, FeedbackMode, RepairConfig,
    RepairRequest,
};
use compat_repair::xml::{parse_document, serialize_preserving};

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BACKEND: u8 = 3;

#[derive(Parser)]
#[command(
    name = "compat-repair",
    version,
    about = "Repair API-level compatibility bugs in Android layouts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Repair one bug and print the outcome and the repaired layout.
    Repair(RepairArgs),
    /// Repair every bug of a corpus k times and print the metrics.
    Evaluate(EvaluateArgs),
    /// Print what a layout renders to at one API level.
    Oracle(OracleArgs),
    /// Rebuild a report from saved session logs.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Knowledge base JSON; the bundled one when omitted.
    #[arg(long)]
    kb: Option<PathBuf>,
    /// `live` or `scripted:<path to script JSON>`.
    #[arg(long)]
    backend: String,
    /// TOML file with the live endpoint, model and timeout.
    #[arg(long)]
    backend_config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Feedback::Coarse)]
    feedback: Feedback,
    /// Repairer round budget.
    #[arg(long, default_value_t = 10)]
    n: u32,
    #[arg(long, default_value = "120m", value_parser = humantime::parse_duration)]
    time_budget: Duration,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    /// Values tried per candidate attribute.
    #[arg(long, default_value_t = 50)]
    search_budget: usize,
    /// Draws made by the combination fallback.
    #[arg(long, default_value_t = 10)]
    samples: usize,
    /// Directory with prompt template overrides (`<name>.txt`).
    #[arg(long)]
    prompts: Option<PathBuf>,
    /// Save one session log per run here.
    #[arg(long)]
    sessions: Option<PathBuf>,
    #[arg(long, default_value = "compat-repair")]
    method: String,
    #[arg(long, value_enum, default_value_t = Clock::Wall)]
    clock: Clock,
}

#[derive(Args)]
struct RepairArgs {
    /// Bug id in the corpus, or a JSON file holding one manifest entry.
    #[arg(long)]
    bug: String,
    /// Corpus manifest used to look up bug ids; the bundled corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Corpus manifest; the bundled corpus when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    k: u32,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    fixture: PathBuf,
    #[arg(long)]
    level: u8,
    #[arg(long)]
    kb: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory of session logs.
    #[arg(long)]
    from: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Feedback {
    Coarse,
    Fine,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Wall,
    Logical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Machine,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Machine => ReportFormat::Machine,
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn input(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.to_string(),
    }
}

fn backend_failure(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_BACKEND,
        message: message.to_string(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
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
    let result = match cli.command {
        Command::Repair(a) => run_repair(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Oracle(a) => run_oracle(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase, Failure> {
    match path {
        Some(p) => KnowledgeBase::load(p).map_err(input),
        None => Ok(KnowledgeBase::bundled()),
    }
}

fn load_records(path: Option<&Path>, kb: &KnowledgeBase) -> Result<Vec<BugRecord>, Failure> {
    match path {
        Some(p) => load_corpus(p, kb).map_err(input),
        None => bundled_corpus(kb).map_err(input),
    }
}

struct Setup {
    kb: KnowledgeBase,
    backend: Box<dyn LlmBackend>,
    templates: PromptTemplates,
    config: RepairConfig,
}

fn setup(common: CommonArgs, runs_k: u32) -> Result<Setup, Failure> {
    let config = RepairConfig {
        loop_budget: common.n,
        time_budget: common.time_budget,
        runs_k,
        temperature: common.temperature,
        feedback: match common.feedback {
            Feedback::Coarse => FeedbackMode::Coarse,
            Feedback::Fine => FeedbackMode::Fine,
        },
        search_budget: common.search_budget,
        n_samples: common.samples,
        seed: common.seed,
        method: common.method,
        clock: match common.clock {
            Clock::Wall => ClockMode::Wall,
            Clock::Logical => ClockMode::Logical,
        },
    };
    config.validate().map_err(usage)?;
    let templates = match &common.prompts {
        Some(dir) => PromptTemplates::with_overrides(dir).map_err(|e| usage(e.to_string()))?,
        None => PromptTemplates::bundled(),
    };
    let kb = load_kb(common.kb.as_deref())?;
    let backend = build_backend(&common.backend, common.backend_config.as_deref())?;
    Ok(Setup {
        kb,
        backend,
        templates,
        config,
    })
}

fn build_backend(spec: &str, config: Option<&Path>) -> Result<Box<dyn LlmBackend>, Failure> {
    if spec == "live" {
        let cfg = match config {
            Some(p) => LiveConfig::load(p).map_err(backend_failure)?,
            None => LiveConfig::default(),
        };
        return Ok(Box::new(
            LiveBackend::from_env(cfg).map_err(backend_failure)?,
        ));
    }
    if let Some(path) = spec.strip_prefix("scripted:") {
        if config.is_some() {
            return Err(usage("--backend-config only applies to the live backend"));
        }
        return Ok(Box::new(
            ScriptedBackend::load(Path::new(path)).map_err(input)?,
        ));
    }
    Err(usage(format!(
        "unknown backend `{spec}`; expected `live` or `scripted:<path>`"
    )))
}

fn save_sessions<'a>(
    dir: Option<&Path>,
    logs: impl IntoIterator<Item = &'a compat_repair::orchestrator::SessionLog>,
) -> Result<(), Failure> {
    if let Some(dir) = dir {
        for log in logs {
            persist_session(log, dir).map_err(input)?;
        }
    }
    Ok(())
}

fn run_repair(a: RepairArgs) -> Result<(), Failure> {
    let sessions = a.common.sessions.clone();
    let s = setup(a.common, 1)?;
    let as_path = Path::new(&a.bug);
    let record = if as_path.is_file() {
        load_bug_file(as_path, &s.kb).map_err(input)?
    } else {
        load_records(a.corpus.as_deref(), &s.kb)?
            .into_iter()
            .find(|r| r.id == a.bug)
            .ok_or_else(|| input(format!("no bug `{}` in the corpus", a.bug)))?
    };
    let seed = derive_seed(s.config.seed, &record.id, 0);
    let req = RepairRequest {
        bug_id: &record.id,
        run: 0,
        bug: &record.bug,
        seed,
    };
    let (outcome, mut log) = repair_bug(&req, &s.kb, s.backend.as_ref(), &s.config, &s.templates);
    let judgment = judge(&outcome.final_document, &record.bug, &s.kb);
    log.judgment = Some(judgment);
    save_sessions(sessions.as_deref(), [&log])?;

    println!("bug: {}", record.id);
    println!("outcome: {}", outcome.kind);
    println!("judgment: {judgment}");
    println!("rounds: {}", outcome.rounds_used);
    println!("backend calls: {}", outcome.backend_calls);
    println!("patch: {}", outcome.patch);
    println!();
    print!("{}", serialize_preserving(&outcome.final_document));
    match outcome.backend_error {
        Some(e) => Err(backend_failure(format!(
            "backend failed, fell back to search: {e}"
        ))),
        None => Ok(()),
    }
}

fn run_evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let sessions = a.common.sessions.clone();
    let s = setup(a.common, a.k)?;
    let corpus = load_records(a.corpus.as_deref(), &s.kb)?;
    let (report, logs) = evaluate(&corpus, &s.kb, s.backend.as_ref(), &s.config, &s.templates);
    save_sessions(sessions.as_deref(), &logs)?;
    print!("{}", emit_report(&report, a.format.into()));
    let failed = logs
        .iter()
        .filter(|l| {
            l.outcome
                .as_ref()
                .is_some_and(|o| o.backend_error.is_some())
        })
        .count();
    if failed > 0 {
        return Err(backend_failure(format!(
            "{failed} run(s) hit a backend error"
        )));
    }
    Ok(())
}

fn run_oracle(a: OracleArgs) -> Result<(), Failure> {
    let kb = load_kb(a.kb.as_deref())?;
    let level = ApiLevel(a.level);
    if !kb.levels().contains(level) {
        let b = kb.levels();
        return Err(usage(format!(
            "API level {} is outside {}..={}",
            a.level, b.min, b.max
        )));
    }
    let text = std::fs::read_to_string(&a.fixture)
        .map_err(|e| input(format!("{}: {e}", a.fixture.display())))?;
    let doc = parse_document(&text).map_err(input)?;
    let state = render(&doc, level, &kb);
    println!(
        "{}",
        serde_json::to_string_pretty(&state).expect("render states serialize")
    );
    Ok(())
}

fn run_report(a: ReportArgs) -> Result<(), Failure> {
    let logs = load_sessions(&a.from).map_err(input)?;
    print!(
        "{}",
        emit_report(&report_from_sessions(&logs), a.format.into())
    );
    Ok(())
}
