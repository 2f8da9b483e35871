use std::error::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kbbind::binder::KbIndexes;
use kbbind::draft_gen::{ExemplarMode, HttpLlm, LlmClient, MockLlm, PipelineConfig, Preset};
use kbbind::executor::{SparqlEndpoint, VoteMode};
use kbbind::harness::{
    Execution, Pipeline, diagnose, evaluate_predictions, exemplar_pool, load_dataset,
    read_predictions, sweep, write_predictions, write_sweep_csv,
};
use kbbind::kb_store::{EntityCatalog, HopMode, TripleStore};
use kbbind::retrieval::Bm25Params;
use kbbind::throttle::{RetryPolicy, Throttle};

#[derive(Parser)]
#[command(
    name = "kbbind",
    version,
    about = "Answer questions over a knowledge base from LLM-drafted logical forms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the KB and catalog, build the retrieval indexes and report their sizes.
    Index(KbArgs),
    /// Answer every question of a dataset and write predictions as JSON lines.
    Run(RunArgs),
    /// Score predictions against gold logical forms and answers.
    Eval(ScoreArgs),
    /// Entity, relation and frame recall from full (non-compact) predictions.
    Diagnose(ScoreArgs),
    /// Run a grid over shot and draft counts and write CSV.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct KbArgs {
    /// Triples file: subject<TAB>relation<TAB>object per line.
    #[arg(long)]
    kb: PathBuf,
    /// Entity catalog: mid<TAB>friendly name<TAB>popularity per line.
    #[arg(long)]
    catalog: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Grailqa,
    Webqsp,
    Graphqa,
    Metaqa,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExemplarModeArg {
    Random,
    Retrieved,
}

#[derive(Clone, Copy, ValueEnum)]
enum VoteModeArg {
    All,
    PerDraft,
}

#[derive(Clone, Copy, ValueEnum)]
enum HopModeArg {
    Undirected,
    Directed,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    kb: KbArgs,
    /// Questions to answer (JSON lines).
    #[arg(long)]
    dataset: PathBuf,
    /// Training split supplying exemplars (JSON lines with s_expression).
    #[arg(long)]
    train: PathBuf,
    /// `mock:<drafts.jsonl>` or `openai:<model>`.
    #[arg(long)]
    llm: String,
    /// Completions URL for `openai:` backends.
    #[arg(long, default_value = "https://api.openai.com/v1/completions")]
    llm_url: String,
    /// Environment variable holding the LLM API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    /// SPARQL endpoint for execution; binding still uses the local KB.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, value_enum, default_value = "grailqa")]
    preset: PresetArg,
    /// N: exemplars per prompt.
    #[arg(long)]
    shots: Option<usize>,
    /// K: drafts per question.
    #[arg(long)]
    drafts: Option<usize>,
    /// n: entity candidates per slot.
    #[arg(long)]
    entity_top: Option<usize>,
    /// m: relation candidates per slot.
    #[arg(long)]
    relation_top: Option<usize>,
    #[arg(long, value_enum)]
    exemplar_mode: Option<ExemplarModeArg>,
    #[arg(long, value_enum)]
    vote_mode: Option<VoteModeArg>,
    #[arg(long, value_enum)]
    hop_mode: Option<HopModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grounded candidates per draft.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Questions processed concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// Concurrent requests to remote backends.
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    /// Minimum gap between remote request starts, in milliseconds.
    #[arg(long, default_value_t = 0)]
    min_interval_ms: u64,
    /// Timeout per remote request, in seconds.
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit only qid and answers.
    #[arg(long)]
    compact: bool,
    /// Include per-question wall-clock time.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Shot counts to try.
    #[arg(long, value_delimiter = ',', required = true)]
    shots_grid: Vec<usize>,
    /// Draft counts to try.
    #[arg(long, value_delimiter = ',', required = true)]
    drafts_grid: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
}

type Result<T> = std::result::Result<T, Box<dyn Error>>;

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Index(args) => index(&args),
        Command::Run(args) => run(&args),
        Command::Eval(args) => {
            let records = load_dataset(&args.dataset)?;
            let preds = read_predictions(File::open(&args.predictions)?)?;
            print_json(&evaluate_predictions(&records, &preds))
        }
        Command::Diagnose(args) => {
            let records = load_dataset(&args.dataset)?;
            let preds = read_predictions(File::open(&args.predictions)?)?;
            print_json(&diagnose(&records, &preds)?)
        }
        Command::Sweep(args) => run_sweep(&args),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    writeln!(
        io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(value)?
    )?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

struct Loaded {
    store: TripleStore,
    catalog: EntityCatalog,
    indexes: KbIndexes,
}

fn load_kb(args: &KbArgs) -> Result<Loaded> {
    let store = TripleStore::load(&args.kb).map_err(|e| format!("{}: {e}", args.kb.display()))?;
    let catalog = EntityCatalog::load(&args.catalog)
        .map_err(|e| format!("{}: {e}", args.catalog.display()))?;
    let indexes = KbIndexes::build(&store, &catalog, Bm25Params::default())?;
    Ok(Loaded {
        store,
        catalog,
        indexes,
    })
}

fn index(args: &KbArgs) -> Result<()> {
    let kb = load_kb(args)?;
    print_json(&serde_json::json!({
        "triples": kb.store.len(),
        "relations": kb.store.relations().len(),
        "classes": kb.store.classes().len(),
        "entities": kb.catalog.len(),
        "names": kb.indexes.names.len(),
    }))
}

fn config(args: &PipelineArgs) -> PipelineConfig {
    let preset = match args.preset {
        PresetArg::Grailqa => Preset::Grailqa,
        PresetArg::Webqsp => Preset::Webqsp,
        PresetArg::Graphqa => Preset::Graphqa,
        PresetArg::Metaqa => Preset::Metaqa,
    };
    let mut c = PipelineConfig::preset(preset);
    c.shots = args.shots.unwrap_or(c.shots);
    c.drafts = args.drafts.unwrap_or(c.drafts);
    c.entity_top = args.entity_top.unwrap_or(c.entity_top);
    c.relation_top = args.relation_top.unwrap_or(c.relation_top);
    c.seed = args.seed.unwrap_or(c.seed);
    c.budget = args.budget.unwrap_or(c.budget);
    c.temperature = args.temperature.unwrap_or(c.temperature);
    c.workers = args.workers.unwrap_or(c.workers);
    if let Some(m) = args.exemplar_mode {
        c.exemplar_mode = match m {
            ExemplarModeArg::Random => ExemplarMode::Random,
            ExemplarModeArg::Retrieved => ExemplarMode::Retrieved,
        };
    }
    if let Some(m) = args.vote_mode {
        c.vote_mode = match m {
            VoteModeArg::All => VoteMode::All,
            VoteModeArg::PerDraft => VoteMode::PerDraft,
        };
    }
    if let Some(m) = args.hop_mode {
        c.hop_mode = match m {
            HopModeArg::Undirected => HopMode::Undirected,
            HopModeArg::Directed => HopMode::Directed,
        };
    }
    c
}

/// Everything a pipeline borrows, loaded from the command line.
struct Resources {
    kb: Loaded,
    pool: kbbind::draft_gen::ExemplarPool,
    llm: Box<dyn LlmClient>,
    endpoint: Option<SparqlEndpoint>,
    records: Vec<kbbind::harness::DatasetRecord>,
}

fn resources(args: &PipelineArgs) -> Result<Resources> {
    let kb = load_kb(&args.kb)?;
    let train = load_dataset(&args.train).map_err(|e| format!("{}: {e}", args.train.display()))?;
    let (pool, skipped) = exemplar_pool(&train, &kb.catalog);
    for (qid, e) in &skipped {
        eprintln!("warning: exemplar {qid} skipped: {e}");
    }
    let records =
        load_dataset(&args.dataset).map_err(|e| format!("{}: {e}", args.dataset.display()))?;
    let throttle = Arc::new(Throttle::new(
        args.max_in_flight,
        Duration::from_millis(args.min_interval_ms),
    ));
    let timeout = Duration::from_secs(args.timeout_secs);
    let llm: Box<dyn LlmClient> = match args.llm.split_once(':') {
        Some(("mock", path)) => Box::new(MockLlm::load(path)?),
        Some(("openai", model)) => Box::new(HttpLlm::new(
            &args.llm_url,
            model,
            &args.api_key_env,
            timeout,
            throttle.clone(),
        )),
        _ => {
            return Err(format!(
                "unrecognized --llm `{}` (expected mock:<path> or openai:<model>)",
                args.llm
            )
            .into());
        }
    };
    let endpoint = args
        .endpoint
        .as_ref()
        .map(|url| SparqlEndpoint::new(url, timeout, RetryPolicy::default(), throttle));
    Ok(Resources {
        kb,
        pool,
        llm,
        endpoint,
        records,
    })
}

fn pipeline<'a>(res: &'a Resources, args: &PipelineArgs, timing: bool) -> Pipeline<'a> {
    Pipeline {
        store: &res.kb.store,
        catalog: &res.kb.catalog,
        indexes: &res.kb.indexes,
        pool: &res.pool,
        llm: res.llm.as_ref(),
        execution: match &res.endpoint {
            Some(e) => Execution::Remote(e),
            None => Execution::Local,
        },
        retry: RetryPolicy::default(),
        config: config(args),
        timing,
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let res = resources(&args.pipeline)?;
    let preds = pipeline(&res, &args.pipeline, args.timing).run(&res.records)?;
    let mut out = output(args.out.as_deref())?;
    write_predictions(&mut out, &preds, args.compact)?;
    out.flush()?;
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let res = resources(&args.pipeline)?;
    let rows = sweep(
        &pipeline(&res, &args.pipeline, false),
        &res.records,
        &args.shots_grid,
        &args.drafts_grid,
    );
    let mut out = output(args.out.as_deref())?;
    write_sweep_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(())
}
