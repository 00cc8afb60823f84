use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, Context};
use chrono::{NaiveDate, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use websight_core::exec::Execution;
use websight_core::gateway::{LanguageModel, ModelEndpoint, OpenAiCompatible, OracleStub, ScriptedStub};
use websight_core::harness::{
    apply_cutoff_filter, emit_report, generate_fixtures, load_dataset, score_run, HarnessError, QueryResult,
    ReportFormat, ResultsDir, RunManifest, TaskResult,
};
use websight_core::imaging::{asset_from_encoded, decode, encode_png, slim_screenshot};
use websight_core::model::{ErrorLabel, ImageKind, PipelineConfig, QueryRecord, TaskKind};
use websight_core::pipeline::{Engine, TtcConfig};
use websight_core::webio::{
    DuckDuckGoHtml, FixtureMode, FixtureStore, HttpClient, HttpFetcher, HttpRenderer, Politeness, SearchProvider,
    Searxng, WebClient,
};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser)]
#[command(name = "websight", version, about = "Multimodal search pipeline and step-wise evaluation harness")]
struct Cli {
    /// Pipeline config as JSON; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Disable data-parallel execution.
    #[arg(long, global = true)]
    sequential: bool,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one task (or all four) over a dataset.
    Run {
        task: TaskArg,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Best-of-N sampling over the end-to-end task.
    Ttc {
        /// Samples per stage: requery,rerank,answer.
        #[arg(long, default_value = "5,5,5")]
        n: TtcConfig,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a stored run and write its report.
    Score {
        #[arg(long)]
        run_id: String,
        #[arg(long, env = "RESULTS_DIR", default_value = "results")]
        results_dir: PathBuf,
        /// Error labels: JSON object of query id to label.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Print a scored run's report.
    Report {
        #[arg(long)]
        run_id: String,
        #[arg(long, env = "RESULTS_DIR", default_value = "results")]
        results_dir: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Remove blank horizontal bands from a screenshot.
    SlimScreenshot {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        min_band: Option<usize>,
    },
    /// Load and validate a dataset, listing every problem.
    ValidateDataset { path: PathBuf },
    /// Synthetic datasets and replay fixtures.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Write dataset/, fixtures/ and stub.json under OUT.
    Generate {
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        count: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    E2e,
    Requery,
    Rerank,
    Summarize,
    All,
}

impl TaskArg {
    fn kinds(self) -> Vec<TaskKind> {
        match self {
            TaskArg::E2e => vec![TaskKind::EndToEnd],
            TaskArg::Requery => vec![TaskKind::RequeryOnly],
            TaskArg::Rerank => vec![TaskKind::RerankOnly],
            TaskArg::Summarize => vec![TaskKind::SummarizeOnly],
            TaskArg::All => TaskKind::ALL.to_vec(),
        }
    }

    fn label(self) -> &'static str {
        match self {
            TaskArg::E2e => "e2e",
            TaskArg::Requery => "requery",
            TaskArg::Rerank => "rerank",
            TaskArg::Summarize => "summarize",
            TaskArg::All => "all",
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// `openai` (LMM_API_BASE, LMM_API_KEY, LMM_MODEL), `oracle`, or `stub:<file>`.
    #[arg(long, default_value = "openai")]
    endpoint: String,
    #[arg(long, env = "FIXTURE_MODE", default_value = "live")]
    mode: FixtureMode,
    #[arg(long, env = "FIXTURE_DIR")]
    fixture_dir: Option<PathBuf>,
    #[arg(long, env = "RESULTS_DIR", default_value = "results")]
    results_dir: PathBuf,
    /// `duckduckgo` or `searxng:<base url>`.
    #[arg(long, env = "SEARCH_PROVIDER", default_value = "duckduckgo")]
    search_provider: String,
    #[arg(long, env = "RENDERER_ENDPOINT")]
    renderer_endpoint: Option<String>,
    #[arg(long)]
    run_id: Option<String>,
    /// Drop News queries dated on or before this day.
    #[arg(long)]
    cutoff: Option<NaiveDate>,
    /// Score the run once it finishes.
    #[arg(long)]
    score: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn harness_code(e: &HarnessError) -> u8 {
    match e {
        HarnessError::Web(w) if w.is_transport() => EXIT_TRANSPORT,
        _ => EXIT_VALIDATION,
    }
}

fn harness<T>(r: Result<T, HarnessError>) -> Result<T, Failure> {
    r.map_err(|e| Failure { code: harness_code(&e), error: e.into() })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Run { task, run } => {
            let label = task.label();
            execute_run(&run, &config, exec, task.kinds(), None, label)
        }
        Command::Ttc { n, run } => execute_run(&run, &config, exec, vec![TaskKind::EndToEnd], Some(n), "ttc"),
        Command::Score { run_id, results_dir, labels, format } => {
            let labels = match labels {
                Some(path) => read_labels(&path)?,
                None => BTreeMap::new(),
            };
            score(&ResultsDir::new(results_dir), &run_id, &labels, exec, format)
        }
        Command::Report { run_id, results_dir, format } => {
            let results = ResultsDir::new(results_dir);
            results.load_manifest(&run_id).map_err(|e| Failure { code: harness_code(&e), error: e.into() })?;
            let report = results
                .load_report(&run_id)
                .map_err(|e| anyhow!(e).context(format!("run {run_id} has no report; run `score` first")))
                .exit_with(EXIT_VALIDATION)?;
            print_bytes(&emit_report(&report, format));
            Ok(())
        }
        Command::SlimScreenshot { input, output, threshold, min_band } => {
            slim(&input, &output, threshold.unwrap_or(config.slim_threshold), min_band.unwrap_or(config.min_blank_band))
        }
        Command::ValidateDataset { path } => {
            let records = load_dataset(&path).exit_with(EXIT_VALIDATION)?;
            println!("{}: {} valid records", path.display(), records.len());
            Ok(())
        }
        Command::Fixtures { command: FixturesCommand::Generate { out, count } } => {
            let fx = harness(generate_fixtures(&out, count, &config))?;
            println!("dataset:  {}", fx.dataset_dir.display());
            println!("fixtures: {}", fx.fixture_dir.display());
            println!("stub:     {}", fx.stub_path.display());
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let config = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .exit_with(EXIT_VALIDATION)?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))
                .exit_with(EXIT_VALIDATION)?
        }
        None => PipelineConfig::default(),
    };
    config.validate().exit_with(EXIT_VALIDATION)?;
    Ok(config)
}

fn read_labels(path: &Path) -> Result<BTreeMap<String, ErrorLabel>, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()));
    let text = text.exit_with(EXIT_VALIDATION)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())).exit_with(EXIT_VALIDATION)
}

fn load_records(dataset: &Path, cutoff: Option<NaiveDate>) -> Result<Vec<QueryRecord>, Failure> {
    let records = load_dataset(dataset).exit_with(EXIT_VALIDATION)?;
    let Some(cutoff) = cutoff else {
        return Ok(records);
    };
    let filtered = apply_cutoff_filter(&records, cutoff);
    for warning in &filtered.warnings {
        log::warn!("{warning}");
    }
    log::info!("cutoff {cutoff}: kept {}, excluded {}", filtered.kept.len(), filtered.excluded.len());
    Ok(filtered.kept)
}

fn search_provider(name: &str, client: HttpClient) -> Result<Arc<dyn SearchProvider>, Failure> {
    match name.split_once(':') {
        None if name == "duckduckgo" => Ok(Arc::new(DuckDuckGoHtml::new(client))),
        Some(("searxng", base)) if !base.is_empty() => Ok(Arc::new(Searxng::new(base, client))),
        _ => Err(anyhow!("unknown SEARCH_PROVIDER {name:?} (expected duckduckgo or searxng:<base url>)"))
            .exit_with(EXIT_USAGE),
    }
}

fn web_client(run: &RunArgs, exec: Execution) -> Result<WebClient, Failure> {
    let mut web = WebClient::new(run.mode).with_execution(exec);
    if run.mode != FixtureMode::Live {
        let dir = run.fixture_dir.as_ref().ok_or_else(|| Failure {
            code: EXIT_USAGE,
            error: anyhow!(
                "--mode {} needs a fixture directory: set FIXTURE_DIR or pass --fixture-dir",
                format!("{:?}", run.mode).to_lowercase()
            ),
        })?;
        web = web.with_store(FixtureStore::new(dir));
    }
    if run.mode != FixtureMode::Replay {
        let client = HttpClient::new(Politeness::default());
        web = web
            .with_search(search_provider(&run.search_provider, client.clone())?)
            .with_fetcher(Arc::new(HttpFetcher::new(client)));
        if let Some(endpoint) = &run.renderer_endpoint {
            let local = HttpClient::new(Politeness { min_interval: Duration::ZERO, ..Politeness::default() });
            web = web.with_renderer(Arc::new(HttpRenderer::new(endpoint.clone(), local)));
        }
    }
    Ok(web)
}

fn model(endpoint: &str, records: &[QueryRecord]) -> Result<(Arc<dyn LanguageModel>, String), Failure> {
    if endpoint == "oracle" {
        return Ok((Arc::new(OracleStub::from_records(records)), "oracle".into()));
    }
    if let Some(path) = endpoint.strip_prefix("stub:") {
        let stub = ScriptedStub::load(Path::new(path)).exit_with(EXIT_VALIDATION)?;
        return Ok((Arc::new(stub), endpoint.to_string()));
    }
    if endpoint == "openai" {
        let endpoint = ModelEndpoint::from_env().exit_with(EXIT_USAGE)?;
        let name = endpoint.name.clone();
        return Ok((Arc::new(OpenAiCompatible::new(endpoint)), name));
    }
    Err(anyhow!("unknown endpoint {endpoint:?} (expected openai, oracle or stub:<file>)")).exit_with(EXIT_USAGE)
}

fn execute_run(
    run: &RunArgs,
    config: &PipelineConfig,
    exec: Execution,
    tasks: Vec<TaskKind>,
    ttc: Option<TtcConfig>,
    label: &str,
) -> Result<(), Failure> {
    let web = web_client(run, exec)?;
    let records = load_records(&run.dataset, run.cutoff)?;
    let (model, endpoint) = model(&run.endpoint, &records)?;
    let engine = Engine::new(web, model, config.clone());

    let run_id = run.run_id.clone().unwrap_or_else(|| format!("{label}-{}", Utc::now().format("%Y%m%dT%H%M%S")));
    let manifest = RunManifest {
        run_id: run_id.clone(),
        dataset: std::fs::canonicalize(&run.dataset).unwrap_or_else(|_| run.dataset.clone()),
        endpoint,
        config: config.clone(),
        tasks: tasks.clone(),
        created_at: Utc::now(),
        fixture_mode: run.mode,
        ttc,
        cutoff: run.cutoff,
    };
    let results = ResultsDir::new(&run.results_dir);
    let dir = harness(results.create_run(&manifest))?;
    log::info!("run {run_id}: {} queries into {}", records.len(), dir.display());

    let outcomes: Vec<Result<(usize, bool), HarnessError>> = exec.map(&records, |record| {
        let mut result = QueryResult::new(&record.id);
        match ttc {
            Some(n) => match engine.run_ttc(record, n) {
                Ok(outcome) => result.ttc = Some(outcome),
                Err(e) => {
                    result.tasks.insert(TaskKind::EndToEnd, TaskResult::from_outcome(Err(e)));
                }
            },
            None => {
                for &kind in &tasks {
                    let outcome = engine.run_task(kind, record).map(|o| o.transcript);
                    result.tasks.insert(kind, TaskResult::from_outcome(outcome));
                }
            }
        }
        let mut failed = 0;
        let mut transport = false;
        for (kind, task) in &result.tasks {
            if let Some(err) = &task.error {
                log::warn!("{} {kind:?} failed: {}", record.id, err.message);
                failed += 1;
                transport |= err.transport;
            }
        }
        results.write_query_result(&run_id, &result)?;
        log::info!("{} done", record.id);
        Ok((failed, transport))
    });

    let mut failed = 0;
    let mut transport = false;
    for outcome in outcomes {
        let (f, t) = harness(outcome)?;
        failed += f;
        transport |= t;
    }
    eprintln!("run {run_id}: {} queries, {failed} failed task(s); results in {}", records.len(), dir.display());
    if run.score {
        score(&results, &run_id, &BTreeMap::new(), exec, ReportFormat::Table)?;
    }
    if transport {
        return Err(anyhow!("run {run_id} hit transport failures; see the per-query results"))
            .exit_with(EXIT_TRANSPORT);
    }
    Ok(())
}

fn score(
    results: &ResultsDir,
    run_id: &str,
    labels: &BTreeMap<String, ErrorLabel>,
    exec: Execution,
    format: ReportFormat,
) -> Result<(), Failure> {
    let manifest = harness(results.load_manifest(run_id))?;
    let records = load_records(&manifest.dataset, manifest.cutoff)?;
    let stored = harness(results.load_results(run_id))?;
    let report = harness(score_run(&stored, &records, labels, exec))?;
    let path = harness(results.write_report(run_id, &report))?;
    log::info!("report written to {}", path.display());
    print_bytes(&emit_report(&report, format));
    Ok(())
}

fn slim(input: &Path, output: &Path, threshold: f64, min_band: usize) -> Result<(), Failure> {
    let bytes =
        std::fs::read(input).with_context(|| format!("reading {}", input.display())).exit_with(EXIT_VALIDATION)?;
    let asset = asset_from_encoded(input.display().to_string(), ImageKind::FullpageSegment, bytes)
        .exit_with(EXIT_VALIDATION)?;
    let slimmed = slim_screenshot(&asset, threshold, min_band).exit_with(EXIT_VALIDATION)?;
    let png = encode_png(&decode(&slimmed).exit_with(EXIT_VALIDATION)?.to_rgba8()).exit_with(EXIT_VALIDATION)?;
    std::fs::write(output, png).with_context(|| format!("writing {}", output.display())).exit_with(EXIT_VALIDATION)?;
    println!("{}x{} -> {}x{}", asset.width, asset.height, slimmed.width, slimmed.height);
    Ok(())
}

fn print_bytes(bytes: &[u8]) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(bytes);
}
