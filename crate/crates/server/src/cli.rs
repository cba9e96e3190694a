//! The `hoi` command line. Each subcommand is a thin wrapper over library
//! calls and prints one JSON document (or CSV) to stdout.

use std::fs;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use hoi_core::completion::ReferenceAdapter;
use hoi_core::config::EngineConfig;
use hoi_core::controller::CalibrationStore;
use hoi_core::engine::{dims_for, train_adapter, Engine};
use hoi_core::event::Event;
use hoi_core::exec::{Executor, LogicalClock, TraceRecord};
use hoi_core::ingest::{load_events, save_statistics, StatisticsBundle, DEFAULT_BINS};
use hoi_core::metrics::{run_oracle_protocol, run_oracle_session, ManualActionModel, MatchConfig, SessionMetrics};
use hoi_core::session::{layout, ClipAssets, DataRoot, DATA_ROOT_ENV, DOCUMENT_VERSION};
use hoi_core::synth::{adversarial_scores, demo_ontology, generate, perfect_scores, SynthConfig};

use crate::api::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "hoi", version, about = "Lock-aware hand-object interaction annotation engine")]
pub struct Cli {
    /// Directory holding `clips/` and `sessions/`.
    #[arg(long, global = true, env = DATA_ROOT_ENV, default_value = "hoi-data")]
    pub data_root: PathBuf,
    /// Engine configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoreKind {
    /// Confident scores at the reference values.
    Perfect,
    /// Confident scores at plausible wrong values.
    Adversarial,
    /// No score file; sessions fall back to the untrained adapter.
    None,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a synthetic two-hand clip with reference events.
    GenDemo {
        #[arg(long, default_value = "demo")]
        clip: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        events_per_hand: usize,
        #[arg(long, value_enum, default_value_t = ScoreKind::Perfect)]
        scores: ScoreKind,
    },
    /// Loads and validates every asset of a clip.
    IngestCheck {
        #[arg(long)]
        clip: String,
    },
    /// Rebuilds the clip's statistics bundle from annotated events.
    BuildStats {
        #[arg(long)]
        clip: String,
        /// Events to count; defaults to the clip's reference events.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Trains the reference adapter on the clip's reference events and
    /// stores it next to the clip.
    TrainAdapter {
        #[arg(long)]
        clip: String,
        #[arg(long, default_value_t = 300)]
        epochs: usize,
        #[arg(long, default_value_t = 0.3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sequential oracle correction over the clip's reference events.
    RunOracle {
        #[arg(long)]
        clip: String,
        #[arg(long)]
        csv: bool,
    },
    /// Closed-loop session with an oracle annotator.
    SimulateSession {
        #[arg(long)]
        clip: String,
        /// Also write the trace log here (JSON lines).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Computes metrics from a trace log.
    ReportMetrics {
        /// A stored session; its log and clip references are used.
        #[arg(long, conflicts_with = "log", required_unless_present = "log")]
        session: Option<String>,
        /// A log file (JSON lines).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Clip whose reference events score accuracy for `--log`.
        #[arg(long, requires = "log")]
        clip: Option<String>,
        #[arg(long)]
        csv: bool,
    },
    /// Runs the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Serialize)]
pub struct IngestReport {
    pub version: u32,
    pub clip: String,
    pub frames: usize,
    pub feature_dim: usize,
    pub tracks: usize,
    pub verbs: usize,
    pub nouns: usize,
    pub onset_bins: usize,
    pub reference_events: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct TrainReport {
    pub version: u32,
    pub clip: String,
    pub examples: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub adapter: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub version: u32,
    pub clip: String,
    pub events: usize,
    pub edits: usize,
    pub zero_edit_rate: Option<f64>,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Serialize)]
pub struct SimulationReport {
    pub version: u32,
    pub clip: String,
    pub steps: usize,
    pub complete_events: usize,
    pub metrics: SessionMetrics,
}

pub fn load_config(path: Option<&PathBuf>) -> Result<EngineConfig> {
    let config = match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => EngineConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

pub fn gen_demo(root: &DataRoot, clip: &str, seed: u64, events_per_hand: usize, scores: ScoreKind) -> Result<PathBuf> {
    let ontology = demo_ontology();
    let corpus = generate(
        &SynthConfig {
            seed,
            clip_id: clip.to_string(),
            events_per_hand,
            ..SynthConfig::default()
        },
        &ontology,
    );
    let dir = root.clip_dir(clip);
    corpus.write_to(&dir)?;
    let scores = match scores {
        ScoreKind::Perfect => Some(perfect_scores(&corpus.events, &ontology)),
        ScoreKind::Adversarial => Some(adversarial_scores(&corpus.events, &ontology, 6)?),
        ScoreKind::None => None,
    };
    let path = dir.join(layout::SCORES);
    match scores {
        Some(s) => fs::write(&path, s.render())?,
        None if path.exists() => fs::remove_file(&path)?,
        None => {}
    }
    Ok(dir)
}

pub fn ingest_check(root: &DataRoot, clip: &str) -> Result<IngestReport> {
    let assets = ClipAssets::load(root, clip)?;
    Ok(IngestReport {
        version: DOCUMENT_VERSION,
        clip: clip.to_string(),
        frames: assets.clip.features.frame_count(),
        feature_dim: assets.clip.features.dim(),
        tracks: assets.clip.tracks.len(),
        verbs: assets.ontology.num_verbs(),
        nouns: assets.ontology.num_nouns(),
        onset_bins: assets.stats.bins(),
        reference_events: assets.references.as_ref().map(Vec::len),
    })
}

pub fn build_stats(root: &DataRoot, clip: &str, events: Option<&PathBuf>, bins: usize) -> Result<StatisticsBundle> {
    let assets = ClipAssets::load(root, clip)?;
    let events: Vec<Event> = match events {
        Some(p) => load_events(p, &assets.ontology)?,
        None => assets.references.context("the clip has no reference events; pass --events")?,
    };
    let stats = StatisticsBundle::build(&events, &assets.ontology, bins)?;
    save_statistics(root.clip_dir(clip).join(layout::STATISTICS), &stats, &assets.ontology)?;
    Ok(stats)
}

pub fn train(root: &DataRoot, clip: &str, config: EngineConfig, epochs: usize, lr: f64, seed: u64) -> Result<TrainReport> {
    let assets = ClipAssets::load(root, clip)?;
    let references = assets.references.context("training needs the clip's reference events")?;
    let dims = dims_for(&assets.ontology, &assets.clip.features);
    let engine = Engine::new(assets.ontology, assets.stats, Arc::new(ReferenceAdapter::zeros(dims)), config);
    let examples = references
        .iter()
        .map(|e| engine.training_example(e, &assets.clip))
        .collect::<Result<Vec<_>, _>>()?;
    let initial = ReferenceAdapter::random(dims, 0.01, &mut ChaCha8Rng::seed_from_u64(seed));
    let (adapter, losses) = train_adapter(initial, &examples, epochs, lr)?;
    let final_loss = adapter.loss(&examples)?;
    let path = root.clip_dir(clip).join(layout::ADAPTER);
    let mut bytes = Vec::new();
    adapter.write_to(&mut bytes)?;
    fs::write(&path, bytes)?;
    Ok(TrainReport {
        version: DOCUMENT_VERSION,
        clip: clip.to_string(),
        examples: examples.len(),
        initial_loss: losses.first().copied().unwrap_or(final_loss),
        final_loss,
        adapter: path,
    })
}

fn engine_and_references(root: &DataRoot, clip: &str, config: EngineConfig) -> Result<(Engine, ClipAssets, Vec<Event>)> {
    let assets = ClipAssets::load(root, clip)?;
    let references = assets.references.clone().context("the clip has no reference events")?;
    let engine = Engine::new(assets.ontology.clone(), assets.stats.clone(), assets.adapter.clone(), config);
    Ok((engine, assets, references))
}

pub fn run_oracle(root: &DataRoot, clip: &str, config: EngineConfig) -> Result<OracleReport> {
    let hash = config.hash();
    let (engine, assets, references) = engine_and_references(root, clip, config)?;
    let mut executor = Executor::new(format!("oracle-{clip}"), hash, Box::new(LogicalClock::default()));
    let cfg = MatchConfig::default();
    let run = run_oracle_protocol(
        &engine,
        &assets.clip,
        &references,
        &cfg,
        &mut executor,
        &mut CalibrationStore::default(),
    )?;
    let metrics =
        SessionMetrics::from_log(&run.log, &ManualActionModel::default()).with_accuracy(&run.annotations(), &references, &cfg);
    Ok(OracleReport {
        version: DOCUMENT_VERSION,
        clip: clip.to_string(),
        events: run.events.len(),
        edits: run.edits(),
        zero_edit_rate: run.zero_edit_rate(),
        metrics,
    })
}

pub fn simulate(root: &DataRoot, clip: &str, config: EngineConfig) -> Result<(SimulationReport, Vec<TraceRecord>)> {
    let hash = config.hash();
    let (engine, assets, references) = engine_and_references(root, clip, config)?;
    let mut executor = Executor::new(format!("simulated-{clip}"), hash, Box::new(LogicalClock::default()));
    let cfg = MatchConfig::default();
    let run = run_oracle_session(
        &engine,
        &assets.clip,
        &references,
        &cfg,
        &mut executor,
        &mut CalibrationStore::default(),
    )?;
    let annotations: Vec<Event> = run.states.iter().filter_map(|s| s.partial().complete()).collect();
    let metrics =
        SessionMetrics::from_log(&run.log, &ManualActionModel::default()).with_accuracy(&annotations, &references, &cfg);
    let report = SimulationReport {
        version: DOCUMENT_VERSION,
        clip: clip.to_string(),
        steps: run.log.len(),
        complete_events: annotations.len(),
        metrics,
    };
    Ok((report, run.log))
}

pub fn render_log(log: &[TraceRecord]) -> Result<String> {
    let mut out = String::new();
    for record in log {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_log(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("log line {}", i + 1)))
        .collect()
}

pub fn report_metrics(
    root: &DataRoot,
    session: Option<&str>,
    log: Option<&PathBuf>,
    clip: Option<&str>,
) -> Result<SessionMetrics> {
    if let Some(id) = session {
        let session = hoi_core::session::Session::open(root, id, Box::new(LogicalClock::default()))?;
        return Ok(session.metrics());
    }
    let Some(path) = log else {
        bail!("pass --session or --log");
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = parse_log(&text)?;
    hoi_core::exec::replay(&records, None)?;
    let metrics = SessionMetrics::from_log(&records, &ManualActionModel::default());
    let Some(clip) = clip else {
        return Ok(metrics);
    };
    let assets = ClipAssets::load(root, clip)?;
    let references = assets.references.context("the clip has no reference events")?;
    let annotations: Vec<Event> = hoi_core::exec::replay(&records, None)?
        .iter()
        .filter_map(|s| s.partial().complete())
        .collect();
    Ok(metrics.with_accuracy(&annotations, &references, &MatchConfig::default()))
}

fn print_json(value: &impl Serialize) -> Result<()> {
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn print_metrics(metrics: &SessionMetrics, csv: bool, report: &impl Serialize) -> Result<()> {
    if csv {
        write!(std::io::stdout(), "{}", metrics.to_csv())?;
        Ok(())
    } else {
        print_json(report)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let root = DataRoot::new(&cli.data_root);
    let config = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::GenDemo {
            clip,
            seed,
            events_per_hand,
            scores,
        } => {
            let dir = gen_demo(&root, &clip, seed, events_per_hand, scores)?;
            print_json(&serde_json::json!({ "version": DOCUMENT_VERSION, "clip": clip, "dir": dir }))
        }
        Command::IngestCheck { clip } => print_json(&ingest_check(&root, &clip)?),
        Command::BuildStats { clip, events, bins } => {
            let stats = build_stats(&root, &clip, events.as_ref(), bins)?;
            print_json(&serde_json::json!({
                "version": DOCUMENT_VERSION,
                "clip": clip,
                "verbs": stats.num_verbs(),
                "nouns": stats.num_nouns(),
                "bins": stats.bins(),
            }))
        }
        Command::TrainAdapter {
            clip,
            epochs,
            learning_rate,
            seed,
        } => print_json(&train(&root, &clip, config, epochs, learning_rate, seed)?),
        Command::RunOracle { clip, csv } => {
            let report = run_oracle(&root, &clip, config)?;
            print_metrics(&report.metrics, csv, &report)
        }
        Command::SimulateSession { clip, log, csv } => {
            let (report, records) = simulate(&root, &clip, config)?;
            if let Some(path) = log {
                fs::write(&path, render_log(&records)?).with_context(|| format!("writing {}", path.display()))?;
            }
            print_metrics(&report.metrics, csv, &report)
        }
        Command::ReportMetrics {
            session,
            log,
            clip,
            csv,
        } => {
            let metrics = report_metrics(&root, session.as_deref(), log.as_ref(), clip.as_deref())?;
            print_metrics(&metrics, csv, &metrics)
        }
        Command::Serve { host, port } => {
            let state = AppState::new(root, config);
            tokio::runtime::Runtime::new()?.block_on(serve(state, SocketAddr::new(host, port)))?;
            Ok(())
        }
    }
}
