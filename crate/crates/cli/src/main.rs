use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use monitor_core::census::{
    build_census, format_census, parse_census, parse_manual_labels, read_stream, update_census, BBox, CensusParams,
    FollowGraph,
};
use monitor_core::config::MonitorConfig;
use monitor_core::context::MonitorContext;
use monitor_core::ingest::{parse_sources, DefaultFetcher, ReplaySpeed, SourceConfig, SourceType};
use monitor_core::pipeline::{run_pipeline, PipelineReport, PipelineSettings};
use monitor_core::polarity::{cross_validate, evaluate, read_dataset, train, PolarityModel, TrainConfig};
use monitor_core::resources::{ResourceSource, Resources, LANGUAGES};
use monitor_core::store::SourceRow;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "monitor", version, about = "Multilingual social media and press monitor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, classify and store mentions from the configured sources.
    Run(RunArgs),
    /// Train a polarity model, reporting cross-validation first.
    Train(TrainArgs),
    /// Score a polarity model on a labeled dataset.
    Eval(EvalArgs),
    /// Regional user census.
    #[command(subcommand)]
    Census(CensusCommand),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// `max`, `realtime` or messages per second.
    #[arg(long)]
    replay_speed: Option<ReplaySpeed>,
    /// Also serve the API from the same process.
    #[arg(long)]
    serve: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    lang: String,
    /// Soft-margin cost.
    #[arg(long = "C", alias = "c")]
    cost: Option<f64>,
    /// Cross-validation folds; 0 skips cross-validation.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Resource directory instead of the bundled resources.
    #[arg(long)]
    resources: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    resources: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CensusCommand {
    /// Build (or update) the census from a stream sample and follow graph.
    Build(CensusArgs),
}

#[derive(Args)]
struct CensusArgs {
    /// JSON-lines stream sample.
    #[arg(long)]
    stream: PathBuf,
    /// Follow edges, `follower<TAB>followed`.
    #[arg(long)]
    graph: PathBuf,
    /// Region bounding box `west,south,east,north`.
    #[arg(long, allow_hyphen_values = true)]
    bbox: String,
    /// Manual judgements, `user_id<TAB>1|0`.
    #[arg(long)]
    manual: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Earlier census to merge into.
    #[arg(long)]
    previous: Option<PathBuf>,
    #[arg(long)]
    n_manual: Option<usize>,
    #[arg(long)]
    n_auto: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Census(CensusCommand::Build(a)) => census_build(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_resources(dir: Option<PathBuf>) -> Result<Arc<Resources>> {
    Ok(match dir {
        None => Resources::bundled(),
        Some(d) => Arc::new(Resources::load(&ResourceSource::Dir(d), &LANGUAGES, monitor_core::nlp::LEXICON_BACKEND)?),
    })
}

fn stop_on_interrupt() -> Result<Arc<AtomicBool>> {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)).context("installing the interrupt handler")?;
    Ok(stop)
}

/// Sources from the sources file, registered in the store, plus sources
/// registered only in the store.
fn collect_sources(cfg: &MonitorConfig, ctx: &MonitorContext) -> Result<Vec<SourceConfig>> {
    let mut by_id: BTreeMap<String, SourceConfig> = BTreeMap::new();
    for row in ctx.store.sources()? {
        let Some(kind) = SourceType::parse(&row.kind) else {
            tracing::warn!(source = %row.source_id, kind = %row.kind, "stored source has an unknown kind; skipped");
            continue;
        };
        by_id.insert(
            row.source_id.clone(),
            SourceConfig {
                source_id: row.source_id,
                kind,
                endpoint: row.endpoint,
                poll_interval: row.poll_interval,
                enabled: row.enabled,
            },
        );
    }
    if let Some(path) = &cfg.sources {
        for s in parse_sources(&read(path)?)? {
            ctx.store.upsert_source(&SourceRow {
                source_id: s.source_id.clone(),
                kind: s.kind.as_str().to_string(),
                endpoint: s.endpoint.clone(),
                poll_interval: s.poll_interval,
                enabled: s.enabled,
            })?;
            by_id.insert(s.source_id.clone(), s);
        }
    }
    Ok(by_id.into_values().collect())
}

fn print_report(report: &PipelineReport) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    eprintln!(
        "{} mentions from {} messages in {:.1}s ({:.0}/s)",
        report.mentions,
        report.admitted,
        report.elapsed_secs,
        report.mentions_per_sec()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = MonitorConfig::load(&args.config)?;
    if let Some(w) = args.workers {
        if w == 0 {
            bail!("--workers must be positive");
        }
        cfg.pipeline.workers = w;
    }
    let mut settings = PipelineSettings::try_from(&cfg.pipeline)?;
    if let Some(speed) = args.replay_speed {
        settings.speed = speed;
    }
    let ctx = Arc::new(MonitorContext::from_config(&cfg)?);
    let sources = collect_sources(&cfg, &ctx)?;
    if sources.iter().all(|s| !s.enabled) {
        bail!("no enabled sources");
    }
    let stop = stop_on_interrupt()?;
    let pipeline = {
        let (ctx, stop) = (ctx.clone(), stop.clone());
        std::thread::spawn(move || {
            run_pipeline(
                ctx,
                &sources,
                &settings,
                Arc::new(DefaultFetcher::default()),
                |s| {
                    tracing::warn!(source = %s.source_id, "no live stream adapter available; source skipped");
                    None
                },
                stop,
            )
        })
    };
    if args.serve {
        let served = tokio::runtime::Runtime::new()?.block_on(monitor_api::serve_until(ctx, &cfg.api, wait_for(stop.clone())));
        stop.store(true, Ordering::Relaxed);
        let report = pipeline.join().expect("pipeline thread panicked")?;
        print_report(&report)?;
        served?;
    } else {
        let report = pipeline.join().expect("pipeline thread panicked")?;
        print_report(&report)?;
    }
    Ok(())
}

async fn wait_for(stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::Relaxed) {
        tokio::time::sleep(Duration::from_millis(200)).await;
    }
}

fn serve_cmd(args: ServeArgs) -> Result<()> {
    let cfg = MonitorConfig::load(&args.config)?;
    let ctx = Arc::new(MonitorContext::from_config(&cfg)?);
    let stop = stop_on_interrupt()?;
    tokio::runtime::Runtime::new()?.block_on(monitor_api::serve_until(ctx, &cfg.api, wait_for(stop)))?;
    Ok(())
}

fn load_examples(path: &Path, lang: Option<&str>) -> Result<Vec<monitor_core::polarity::LabeledExample>> {
    let examples = read_dataset(&read(path)?)?;
    if let Some(lang) = lang {
        if let Some(e) = examples.iter().find(|e| e.lang != lang) {
            bail!("{} contains a {:?} example; expected only {lang:?}", path.display(), e.lang);
        }
    }
    if examples.is_empty() {
        bail!("{} holds no examples", path.display());
    }
    Ok(examples)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let res = load_resources(args.resources)?;
    let examples = load_examples(&args.data, Some(&args.lang))?;
    let mut config = TrainConfig::default();
    if let Some(c) = args.cost {
        if !(c > 0.0) {
            bail!("--C must be positive");
        }
        config.solver.c = c;
    }
    if let Some(seed) = args.seed {
        config.solver.seed = seed;
    }
    if args.folds > 0 {
        let report = cross_validate(&examples, args.folds, &config, &res)?;
        eprintln!("{}-fold cross-validation over {} examples", args.folds, examples.len());
        print!("{}", report.table());
    }
    let model = train(&examples, &config, &res)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    model.save(&args.out)?;
    eprintln!("model with {} features written to {}", model.space.len(), args.out.display());
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let res = load_resources(args.resources)?;
    let model = PolarityModel::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let examples = load_examples(&args.data, Some(&model.lang))?;
    print!("{}", evaluate(&model, &examples, &res)?.table());
    Ok(())
}

fn census_build(args: CensusArgs) -> Result<()> {
    let stream = read_stream(&read(&args.stream)?)?;
    let graph = FollowGraph::parse(&read(&args.graph)?)?;
    let bbox = BBox::parse(&args.bbox)?;
    let manual = parse_manual_labels(&read(&args.manual)?)?;
    let mut params = CensusParams::default();
    if let Some(n) = args.n_manual {
        params.n_manual = n;
    }
    if let Some(n) = args.n_auto {
        params.n_auto = n;
    }
    let outcome = match &args.previous {
        Some(p) => update_census(&parse_census(&read(p)?)?, &stream, &graph, &bbox, Some(&manual), &params)?,
        None => build_census(&stream, &graph, &bbox, Some(&manual), &params)?,
    };
    std::fs::write(&args.out, format_census(&outcome.entries)).with_context(|| format!("writing {}", args.out.display()))?;
    match &outcome.classifier {
        Some((_, r)) => eprintln!(
            "classifier {}-fold accuracy {:.4}, recall {:.4}",
            r.folds,
            r.accuracy,
            r.recall()
        ),
        None => eprintln!("labeled users cover a single class; automatic expansion skipped"),
    }
    println!("{} census entries ({} labeled, {} examined)", outcome.entries.len(), outcome.labeled.len(), outcome.examined.len());
    Ok(())
}
