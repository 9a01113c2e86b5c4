use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nuggetrag_core::evaluation::JudgeMode;
use nuggetrag_core::ingest::load_gold_nuggets;
use nuggetrag_core::pipeline::{
    collect_stats, cost_report, files, read_ledger, read_reports, BackendKind, Outcome, Pipeline, PipelineConfig,
};
use nuggetrag_core::retrieval::RetrievalMode;
use nuggetrag_core::Result;

/// Nugget-first report generation with cited sentences.
#[derive(Debug, Parser)]
#[command(name = "nuggetrag", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings that override the config file.
#[derive(Debug, Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    topics: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Directory for cached model responses.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// remote, replay or synthetic.
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    #[arg(long, global = true)]
    model: Option<String>,
    /// Fixture file for the replay backend.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    /// Maximum model calls in flight.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Documents to scan: from-nuggets, run:<path> or lexical.
    #[arg(long, global = true)]
    retrieval: Option<RetrievalMode>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    /// Initial ideation pool: lexical or run:<path>.
    #[arg(long, global = true)]
    pool_retrieval: Option<RetrievalMode>,
    #[arg(long, global = true)]
    pool_depth: Option<usize>,
    #[arg(long, global = true)]
    pool_target: Option<usize>,
    #[arg(long, global = true)]
    bank_size: Option<usize>,
    /// JSON object of per-feature weights for the weighted-mean scorer.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// JSON linear model (`intercept`, `coefficients`) to score features.
    #[arg(long, global = true)]
    linear_model: Option<PathBuf>,
    /// Sentences kept per nugget.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Filter candidates with support and coverage checks.
    #[arg(long, global = true)]
    verify: bool,
    /// Coverage and citation judge: oracle or llm.
    #[arg(long, global = true)]
    judge: Option<JudgeMode>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Chunk the corpus.
    Ingest,
    /// Retrieve the initial document pool per request.
    Retrieve,
    /// Summarize pool documents, draft nuggets and merge paraphrases.
    Ideate,
    /// Score, fuse and cut the nugget pool into the bank.
    Rank,
    /// Scan retrieved chunks for every bank nugget.
    Scan,
    /// Keep candidates passing the support and coverage checks.
    Verify,
    /// Select sentences and assemble reports.
    Assemble,
    /// Score reports against gold nuggets.
    Evaluate {
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Every stage from retrieval to reports (and metrics, given gold).
    Run,
    /// Check ledger call counts against the closed forms.
    CostReport {
        /// Ledger files to add up (default: the run ledger).
        #[arg(long)]
        ledger: Vec<PathBuf>,
        /// Also require zero network calls.
        #[arg(long)]
        expect_warm: bool,
    },
}

fn config(o: &Overrides) -> Result<PipelineConfig> {
    let mut c = match &o.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $flag:expr),* $(,)?) => {
            $(if let Some(v) = $flag.clone() { c.$field = v; })*
        };
    }
    set!(
        corpus_path <- o.corpus,
        topics_path <- o.topics,
        output_dir <- o.output_dir,
        backend <- o.backend,
        jobs <- o.jobs,
        retrieval <- o.retrieval,
        depth <- o.depth,
        pool_retrieval <- o.pool_retrieval,
        pool_depth <- o.pool_depth,
        pool_target <- o.pool_target,
        bank_size <- o.bank_size,
        k <- o.k,
        judge <- o.judge,
    );
    if o.cache_dir.is_some() {
        c.cache_dir = o.cache_dir.clone();
    }
    if o.model.is_some() {
        c.model = o.model.clone();
    }
    if o.replay.is_some() {
        c.replay_path = o.replay.clone();
    }
    if o.weights.is_some() {
        c.weights_path = o.weights.clone();
        c.linear_model_path = None;
    }
    if o.linear_model.is_some() {
        c.linear_model_path = o.linear_model.clone();
        c.weights_path = None;
    }
    if o.verify {
        c.verify = true;
    }
    Ok(c)
}

fn finish(p: &Pipeline, stage: &str, outcome: Outcome) -> Result<u8> {
    if stage != "run" {
        p.write_ledger(&format!("ledger-{stage}.jsonl"))?;
    }
    for (id, message) in &outcome.failures {
        eprintln!("failed {id}: {message}");
    }
    if !outcome.failures.is_empty() {
        eprintln!(
            "{stage}: {} of {} requests failed",
            outcome.failures.len(),
            p.topics.len()
        );
    }
    Ok(outcome.exit_code() as u8)
}

fn execute(cli: Cli) -> Result<u8> {
    let cfg = config(&cli.overrides)?;
    let p = Pipeline::open(cfg)?;
    match cli.command {
        Command::Ingest => {
            let n = p.stage_ingest()?;
            println!("{n} chunks -> {}", p.path(files::CHUNKS).display());
            Ok(0)
        }
        Command::Retrieve => finish(&p, "retrieve", p.stage_retrieve()?),
        Command::Ideate => finish(&p, "ideate", p.stage_ideate()?),
        Command::Rank => finish(&p, "rank", p.stage_rank()?),
        Command::Scan => finish(&p, "scan", p.stage_scan()?),
        Command::Verify => finish(&p, "verify", p.stage_verify()?),
        Command::Assemble => finish(&p, "assemble", p.stage_assemble()?),
        Command::Evaluate { report, gold } => {
            let reports = read_reports(&report.unwrap_or_else(|| p.path(files::REPORTS)))?;
            let gold_path = gold
                .or_else(|| p.config.gold_path.clone())
                .ok_or_else(|| nuggetrag_core::Error::Invalid("no gold nuggets given (--gold)".into()))?;
            let (metrics, outcome) = p.evaluate(&reports, &load_gold_nuggets(&gold_path)?)?;
            print!("{}", nuggetrag_core::evaluation::metrics_table(&metrics));
            finish(&p, "evaluate", outcome)
        }
        Command::Run => {
            let (artifacts, outcome) = p.run()?;
            let reports = artifacts.iter().filter(|a| a.report.is_some()).count();
            println!("{reports} reports -> {}", p.path(files::REPORTS).display());
            if p.config.gold_path.is_some() {
                print!(
                    "{}",
                    std::fs::read_to_string(p.path(files::METRICS_TABLE)).unwrap_or_default()
                );
            }
            finish(&p, "run", outcome)
        }
        Command::CostReport { ledger, expect_warm } => {
            let paths = if ledger.is_empty() {
                vec![p.path(files::LEDGER)]
            } else {
                ledger
            };
            let mut records = Vec::new();
            for path in &paths {
                records.extend(read_ledger(path)?);
            }
            let stats = collect_stats(&p.config.output_dir, &p.topics, &p.corpus)?;
            let report = cost_report(&records, &stats, expect_warm);
            println!("{report}");
            Ok(if report.pass { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
