//! Persistent annotation sessions: clip assets, the append-only log, crash
//! recovery by replay, per-hand outstanding interventions and saving.
//!
//! On disk, under the data root:
//!
//! * `clips/<clip>/`: `tracks.jsonl`, `features.lfho`, `ontology.json`,
//!   `statistics.json`, optional `adapter.lfad` or `scores.jsonl`, optional
//!   reference `events.jsonl`
//! * `sessions/<id>/meta.json`: clip id, config and config hash
//! * `sessions/<id>/log.jsonl`: one trace record per line
//! * `sessions/<id>/snapshot.json`: event states after the last step
//! * `sessions/<id>/activation.json`: active events picked by hand
//! * `sessions/<id>/summary.json`, `annotations.jsonl`: written on save

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::completion::{CompletionError, ReferenceAdapter, ScoreAdapter, ScoreFileAdapter};
use crate::config::{ConfigError, EngineConfig};
use crate::controller::{Assignment, Authority, CalibrationStore, Intervention};
use crate::engine::{dims_for, Clip, Engine};
use crate::event::{
    check_validity, Event, EventError, EventState, Field, Frame, Hand, NounValue, Origin, Violation, VerbId,
    Window,
};
use crate::exec::{
    replay, update_calibration, AnnotatorResponse, Clock, ExecError, Executor, FieldDiff, TraceAction, TraceRecord,
};
use crate::ingest::{
    load_events, load_features, load_hand_tracks, load_ontology, load_statistics, render_events, IngestError,
};
use crate::metrics::{ManualActionModel, MatchConfig, SessionMetrics};

/// Version tag on every document the session writes or serves.
pub const DOCUMENT_VERSION: u32 = 1;

/// File names inside a clip directory.
pub mod layout {
    pub const TRACKS: &str = "tracks.jsonl";
    pub const FEATURES: &str = "features.lfho";
    pub const ONTOLOGY: &str = "ontology.json";
    pub const STATISTICS: &str = "statistics.json";
    pub const EVENTS: &str = "events.jsonl";
    pub const ADAPTER: &str = "adapter.lfad";
    pub const SCORES: &str = "scores.jsonl";
}

/// Environment variable naming the data root.
pub const DATA_ROOT_ENV: &str = "HOI_DATA_ROOT";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("clip `{clip}` is missing its {asset}")]
    MissingAsset { clip: String, asset: &'static str },
    #[error("clip `{clip}` has an unusable {asset}: {reason}")]
    InvalidAsset {
        clip: String,
        asset: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown event #{0}")]
    UnknownEvent(usize),
    #[error("no active event for the {0} hand")]
    NoActiveEvent(Hand),
    #[error("intervention {got} is stale; outstanding is {outstanding:?}")]
    StaleIntervention { got: u64, outstanding: Option<u64> },
    #[error("validation failed for {} event(s)", .0.len())]
    ValidationFailed(Vec<EventIssue>),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
    #[error("session storage: {0}")]
    Storage(String),
}

impl SessionError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::MissingAsset { .. } => "missing_asset",
            SessionError::InvalidAsset { .. } => "invalid_asset",
            SessionError::Config(_) => "config_error",
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::UnknownEvent(_) => "unknown_event",
            SessionError::NoActiveEvent(_) => "no_active_event",
            SessionError::StaleIntervention { .. } => "stale_intervention",
            SessionError::ValidationFailed(_) => "validation_failed",
            SessionError::Exec(ExecError::Event(EventError::OntologyViolation(_))) => "ontology_violation",
            SessionError::Exec(ExecError::Event(EventError::TemporalViolation(_))) => "temporal_violation",
            SessionError::Exec(ExecError::Event(EventError::InvalidSpan { .. })) => "invalid_span",
            SessionError::Exec(_) => "invalid_request",
            SessionError::Completion(_) => "completion_error",
            SessionError::Storage(_) => "storage_error",
        }
    }
}

fn storage(path: &Path, e: impl std::fmt::Display) -> SessionError {
    SessionError::Storage(format!("{}: {e}", path.display()))
}

/// Why one event cannot be saved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventIssue {
    pub event: usize,
    pub missing: Vec<Field>,
    pub violations: Vec<Violation>,
}

/// Root directory holding clips and sessions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataRoot(PathBuf);

impl DataRoot {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        DataRoot(path.into())
    }

    /// Reads the data root from the environment, defaulting to `hoi-data`.
    pub fn from_env() -> Self {
        DataRoot(std::env::var_os(DATA_ROOT_ENV).map_or_else(|| PathBuf::from("hoi-data"), PathBuf::from))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }

    pub fn clip_dir(&self, clip: &str) -> PathBuf {
        self.0.join("clips").join(clip)
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.0.join("sessions").join(id)
    }

    /// Ids of every session directory with a metadata file, sorted.
    pub fn session_ids(&self) -> Vec<String> {
        let Ok(entries) = fs::read_dir(self.0.join("sessions")) else {
            return Vec::new();
        };
        let mut ids: Vec<String> = entries
            .filter_map(Result::ok)
            .filter(|e| e.path().join("meta.json").is_file())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        ids.sort();
        ids
    }
}

/// Everything loaded from a clip directory.
#[derive(Clone)]
pub struct ClipAssets {
    pub clip: Clip,
    pub ontology: crate::event::Ontology,
    pub stats: crate::ingest::StatisticsBundle,
    pub adapter: Arc<dyn ScoreAdapter>,
    pub references: Option<Vec<Event>>,
}

impl ClipAssets {
    /// Loads a clip directory. Tracks, features, ontology and statistics are
    /// required. The adapter comes from `adapter.lfad`, else `scores.jsonl`,
    /// else an all-zero reference adapter that leaves decoding to the
    /// statistics.
    pub fn load(root: &DataRoot, clip: &str) -> Result<ClipAssets, SessionError> {
        let dir = root.clip_dir(clip);
        let missing = |asset| SessionError::MissingAsset {
            clip: clip.to_string(),
            asset,
        };
        let invalid = |asset, e: &dyn std::fmt::Display| SessionError::InvalidAsset {
            clip: clip.to_string(),
            asset,
            reason: e.to_string(),
        };
        let need = |name: &str, asset| {
            let p = dir.join(name);
            if p.is_file() {
                Ok(p)
            } else {
                Err(missing(asset))
            }
        };
        let tracks_path = need(layout::TRACKS, "hand tracks")?;
        let features_path = need(layout::FEATURES, "feature table")?;
        let ontology_path = need(layout::ONTOLOGY, "ontology")?;
        let stats_path = need(layout::STATISTICS, "statistics")?;
        let ontology = load_ontology(&ontology_path).map_err(|e| invalid("ontology", &e))?;
        let tracks = load_hand_tracks(&tracks_path).map_err(|e| invalid("hand tracks", &e))?;
        let mut features = load_features(&features_path).map_err(|e| invalid("feature table", &e))?;
        features.clip_id = clip.to_string();
        let stats = load_statistics(&stats_path, &ontology).map_err(|e| invalid("statistics", &e))?;
        let dims = dims_for(&ontology, &features);
        let adapter: Arc<dyn ScoreAdapter> = if dir.join(layout::ADAPTER).is_file() {
            let bytes = fs::read(dir.join(layout::ADAPTER)).map_err(|e| invalid("adapter", &e))?;
            let adapter = ReferenceAdapter::read_from(bytes.as_slice()).map_err(|e| invalid("adapter", &e))?;
            if adapter.dims() != dims {
                return Err(invalid("adapter", &"dimensions do not match the ontology and features"));
            }
            Arc::new(adapter)
        } else if dir.join(layout::SCORES).is_file() {
            let text = fs::read_to_string(dir.join(layout::SCORES)).map_err(|e| invalid("score file", &e))?;
            Arc::new(ScoreFileAdapter::parse(&text).map_err(|e| invalid("score file", &e))?)
        } else {
            Arc::new(ReferenceAdapter::zeros(dims))
        };
        let references = match dir.join(layout::EVENTS) {
            p if p.is_file() => Some(load_events(&p, &ontology).map_err(|e: IngestError| invalid("reference events", &e))?),
            _ => None,
        };
        Ok(ClipAssets {
            clip: Clip {
                id: clip.to_string(),
                tracks,
                features,
            },
            ontology,
            stats,
            adapter,
            references,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub version: u32,
    pub id: String,
    pub clip: String,
    pub config_hash: String,
    pub config: EngineConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    session: String,
    /// Steps folded into this snapshot.
    steps: u64,
    events: Vec<EventState>,
    active: BTreeMap<Hand, usize>,
}

/// Active events chosen by hand, valid until a later event is created.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Activation {
    version: u32,
    /// Log length when written.
    steps: u64,
    active: BTreeMap<Hand, usize>,
}

/// Compact view of the hypothesis behind an intervention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisView {
    pub t_o: Frame,
    pub verb: VerbId,
    pub noun: NounValue,
    pub joint_score: f64,
}

/// An intervention issued to the annotator and not yet answered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssuedIntervention {
    pub version: u32,
    pub id: u64,
    pub event: usize,
    pub hand: Hand,
    pub intervention: Intervention,
    pub hypothesis: Option<HypothesisView>,
    /// Onset band for display; never part of the event state.
    pub band: Option<Window>,
    pub score: f64,
}

/// State change produced by one step, as pushed to clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    pub version: u32,
    pub session: String,
    pub step: u64,
    pub event: usize,
    pub hand: Hand,
    pub diff: Vec<FieldDiff>,
    pub rollback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback_reason: Option<String>,
    pub state_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum NextIntervention {
    /// Every field of the active event is confirmed.
    Done { event: usize },
    /// No executable candidate remains; the annotator must finish by hand.
    ManualCompletionRequired { event: usize },
    /// A human-facing intervention awaiting a response.
    Ask(IssuedIntervention),
    /// A safe-local intervention applied immediately, possibly rolled back.
    Applied {
        intervention: IssuedIntervention,
        delta: StateDelta,
    },
}

/// Messages for the push channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum PushMessage {
    Delta(StateDelta),
    Intervention(IssuedIntervention),
    Saved { session: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventView {
    pub index: usize,
    pub hand: Hand,
    pub active: bool,
    pub state: EventState,
    pub violations: Vec<Violation>,
}

/// Full session state for client rehydration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub version: u32,
    pub id: String,
    pub clip: String,
    pub config_hash: String,
    pub steps: u64,
    pub events: Vec<EventView>,
    pub outstanding: BTreeMap<Hand, IssuedIntervention>,
    pub saved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaveSummary {
    pub version: u32,
    pub session: String,
    pub clip: String,
    pub steps: u64,
    pub events: Vec<Event>,
    pub metrics: SessionMetrics,
}

/// One open session. Mutations go through a single executor; callers must
/// serialize access (the service holds each session behind a mutex).
pub struct Session {
    root: DataRoot,
    meta: SessionMeta,
    engine: Engine,
    clip: Clip,
    references: Option<Vec<Event>>,
    executor: Executor,
    log: Vec<TraceRecord>,
    events: Vec<EventState>,
    active: BTreeMap<Hand, usize>,
    outstanding: BTreeMap<Hand, IssuedIntervention>,
    next_id: u64,
    store: CalibrationStore,
    summary: Option<SaveSummary>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), SessionError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| storage(path, e))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| storage(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| storage(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SessionError> {
    let text = fs::read_to_string(path).map_err(|e| storage(path, e))?;
    serde_json::from_str(&text).map_err(|e| storage(path, e))
}

/// Reads a log file. A final line without its newline is an interrupted
/// append: it is dropped and the file truncated to the last full record.
fn read_log(path: &Path) -> Result<Vec<TraceRecord>, SessionError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(storage(path, e)),
    };
    let complete = text.rfind('\n').map_or(0, |i| i + 1);
    if complete < text.len() {
        fs::write(path, &text[..complete]).map_err(|e| storage(path, e))?;
    }
    text[..complete]
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| storage(path, e)))
        .collect()
}

impl Session {
    /// Creates and persists a new session over a clip.
    pub fn create(
        root: &DataRoot,
        clip: &str,
        config: EngineConfig,
        clock: Box<dyn Clock>,
    ) -> Result<Session, SessionError> {
        config.validate()?;
        let assets = ClipAssets::load(root, clip)?;
        let mut rng = rand::thread_rng();
        let (id, dir) = loop {
            let id = format!("{clip}-{:012x}", rng.gen::<u64>() & 0xffff_ffff_ffff);
            let dir = root.session_dir(&id);
            if !dir.exists() {
                break (id, dir);
            }
        };
        fs::create_dir_all(&dir).map_err(|e| storage(&dir, e))?;
        let meta = SessionMeta {
            version: DOCUMENT_VERSION,
            id: id.clone(),
            clip: clip.to_string(),
            config_hash: config.hash(),
            config,
        };
        write_json(&dir.join("meta.json"), &meta)?;
        fs::write(dir.join("log.jsonl"), "").map_err(|e| storage(&dir, e))?;
        let session = Session::assemble(root.clone(), meta, assets, clock);
        session.write_snapshot()?;
        Ok(session)
    }

    /// Reopens a session, rebuilding state by replaying its log.
    pub fn open(root: &DataRoot, id: &str, clock: Box<dyn Clock>) -> Result<Session, SessionError> {
        let dir = root.session_dir(id);
        if !dir.join("meta.json").is_file() {
            return Err(SessionError::UnknownSession(id.to_string()));
        }
        let meta: SessionMeta = read_json(&dir.join("meta.json"))?;
        if meta.config.hash() != meta.config_hash {
            return Err(ConfigError::Invalid("session config does not match its recorded hash".into()).into());
        }
        let assets = ClipAssets::load(root, &meta.clip)?;
        let mut session = Session::assemble(root.clone(), meta, assets, clock);
        let log = read_log(&dir.join("log.jsonl"))?;
        session.events = replay(&log, Some(&session.meta.config_hash))?;
        let steps = log.last().map_or(0, |r| r.step + 1);
        // Activation is not a logged step: it comes from the activation file
        // and is overridden by events created after it was written.
        let (mut active, since) = match read_json::<Activation>(&dir.join("activation.json")) {
            Ok(a) if a.steps <= steps => (a.active, a.steps),
            _ => (BTreeMap::new(), 0),
        };
        let snapshot = read_json::<Snapshot>(&dir.join("snapshot.json")).ok();
        for rec in &log {
            update_calibration(&mut session.store, rec);
            if let TraceAction::CreateEvent { hand, .. } = rec.action {
                if rec.step >= since {
                    active.insert(hand, rec.event);
                }
            }
            if let Some((id, _)) = rec.intervention() {
                session.next_id = session.next_id.max(id + 1);
            }
        }
        if let Some(snap) = snapshot.filter(|s| s.steps == steps) {
            if snap.events != session.events {
                return Err(SessionError::Storage("snapshot disagrees with the replayed log".into()));
            }
        }
        let events = &session.events;
        active.retain(|hand, &mut event| events.get(event).is_some_and(|e| e.hand() == *hand));
        session.active = active;
        session.executor.resume_at(steps);
        session.log = log;
        if let Ok(summary) = read_json::<SaveSummary>(&dir.join("summary.json")) {
            if summary.steps == steps {
                session.summary = Some(summary);
            }
        }
        session.write_snapshot()?;
        Ok(session)
    }

    fn assemble(root: DataRoot, meta: SessionMeta, assets: ClipAssets, clock: Box<dyn Clock>) -> Session {
        let engine = Engine::new(assets.ontology, assets.stats, assets.adapter, meta.config.clone());
        Session {
            executor: Executor::new(meta.id.clone(), meta.config_hash.clone(), clock),
            root,
            meta,
            engine,
            clip: assets.clip,
            references: assets.references,
            log: Vec::new(),
            events: Vec::new(),
            active: BTreeMap::new(),
            outstanding: BTreeMap::new(),
            next_id: 0,
            store: CalibrationStore::default(),
            summary: None,
        }
    }

    fn dir(&self) -> PathBuf {
        self.root.session_dir(&self.meta.id)
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn meta(&self) -> &SessionMeta {
        &self.meta
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn log(&self) -> &[TraceRecord] {
        &self.log
    }

    pub fn events(&self) -> &[EventState] {
        &self.events
    }

    pub fn calibration(&self) -> &CalibrationStore {
        &self.store
    }

    pub fn outstanding(&self, hand: Hand) -> Option<&IssuedIntervention> {
        self.outstanding.get(&hand)
    }

    pub fn active_event(&self, hand: Hand) -> Option<usize> {
        self.active.get(&hand).copied()
    }

    fn write_snapshot(&self) -> Result<(), SessionError> {
        write_json(
            &self.dir().join("snapshot.json"),
            &Snapshot {
                version: DOCUMENT_VERSION,
                session: self.meta.id.clone(),
                steps: self.executor.step(),
                events: self.events.clone(),
                active: self.active.clone(),
            },
        )
    }

    /// Appends a record to the log file, then to memory, then refreshes the
    /// snapshot. The log line is the commit point.
    fn commit(&mut self, rec: TraceRecord, state: EventState) -> Result<StateDelta, SessionError> {
        let path = self.dir().join("log.jsonl");
        let mut line = serde_json::to_string(&rec).map_err(|e| storage(&path, e))?;
        line.push('\n');
        let mut file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| storage(&path, e))?;
        file.write_all(line.as_bytes())
            .and_then(|_| file.sync_data())
            .map_err(|e| storage(&path, e))?;
        update_calibration(&mut self.store, &rec);
        let hand = state.hand();
        if rec.event == self.events.len() {
            self.events.push(state);
        } else {
            self.events[rec.event] = state;
        }
        let delta = StateDelta {
            version: DOCUMENT_VERSION,
            session: self.meta.id.clone(),
            step: rec.step,
            event: rec.event,
            hand,
            diff: rec.diff.clone(),
            rollback: rec.rollback,
            rollback_reason: rec.rollback_reason.clone(),
            state_hash: rec.state_hash.clone(),
        };
        self.log.push(rec);
        self.summary = None;
        self.write_snapshot()?;
        Ok(delta)
    }

    fn state(&self, event: usize) -> Result<&EventState, SessionError> {
        self.events.get(event).ok_or(SessionError::UnknownEvent(event))
    }

    fn active_for(&self, hand: Hand) -> Result<usize, SessionError> {
        self.active_event(hand).ok_or(SessionError::NoActiveEvent(hand))
    }

    /// Creates an event span and makes it the hand's active event.
    pub fn create_event(&mut self, hand: Hand, t_s: Frame, t_e: Frame) -> Result<StateDelta, SessionError> {
        let index = self.events.len();
        let (state, rec) = self.executor.create_event(index, hand, t_s, t_e)?;
        let delta = self.commit(rec, state)?;
        self.active.insert(hand, index);
        self.outstanding.remove(&hand);
        self.write_snapshot()?;
        Ok(delta)
    }

    /// Makes an existing event its hand's active event.
    pub fn activate(&mut self, event: usize) -> Result<(), SessionError> {
        let hand = self.state(event)?.hand();
        let mut active = self.active.clone();
        active.insert(hand, event);
        write_json(
            &self.dir().join("activation.json"),
            &Activation {
                version: DOCUMENT_VERSION,
                steps: self.executor.step(),
                active: active.clone(),
            },
        )?;
        if std::mem::replace(&mut self.active, active).get(&hand) != Some(&event) {
            self.outstanding.remove(&hand);
        }
        self.write_snapshot()
    }

    /// Decodes the hand's active event and selects the next intervention.
    /// A safe-local choice is executed on the spot.
    pub fn next_intervention(&mut self, hand: Hand) -> Result<NextIntervention, SessionError> {
        let event = self.active_for(hand)?;
        let state = self.state(event)?.clone();
        if state.is_fully_confirmed() {
            self.outstanding.remove(&hand);
            return Ok(NextIntervention::Done { event });
        }
        let proposal = self.engine.propose(&state, &self.clip, &self.store)?;
        let Some(selection) = proposal.selection else {
            self.outstanding.remove(&hand);
            return Ok(NextIntervention::ManualCompletionRequired { event });
        };
        let id = self.next_id;
        self.next_id += 1;
        let issued = IssuedIntervention {
            version: DOCUMENT_VERSION,
            id,
            event,
            hand,
            intervention: selection.chosen.intervention.clone(),
            hypothesis: proposal.inference.hypothesis.as_ref().map(|h| HypothesisView {
                t_o: h.t_o,
                verb: h.verb,
                noun: h.noun,
                joint_score: h.joint_score,
            }),
            band: proposal.inference.prior.map(|p| p.band),
            score: selection.chosen.score,
        };
        if issued.intervention.authority == Authority::SafeLocal {
            self.outstanding.remove(&hand);
            let (next, rec) =
                self.executor
                    .execute(event, &state, id, &issued.intervention, None, &self.engine.ontology)?;
            let delta = self.commit(rec, next)?;
            return Ok(NextIntervention::Applied {
                intervention: issued,
                delta,
            });
        }
        self.outstanding.insert(hand, issued.clone());
        Ok(NextIntervention::Ask(issued))
    }

    /// Answers the hand's outstanding intervention.
    pub fn respond(&mut self, hand: Hand, id: u64, response: AnnotatorResponse) -> Result<StateDelta, SessionError> {
        let outstanding = self.outstanding.get(&hand).map(|o| o.id);
        let issued = match self.outstanding.get(&hand) {
            Some(o) if o.id == id => o.clone(),
            _ => return Err(SessionError::StaleIntervention { got: id, outstanding }),
        };
        let state = self.state(issued.event)?.clone();
        let (next, rec) = self.executor.execute(
            issued.event,
            &state,
            id,
            &issued.intervention,
            Some(response),
            &self.engine.ontology,
        )?;
        self.outstanding.remove(&hand);
        self.commit(rec, next)
    }

    /// Direct confirmation of fields on any event.
    pub fn confirm(&mut self, event: usize, fields: &[Field], origin: Origin) -> Result<StateDelta, SessionError> {
        let state = self.state(event)?.clone();
        let (next, rec) = self.executor.confirm(event, &state, fields, origin)?;
        self.outstanding.remove(&state.hand());
        self.commit(rec, next)
    }

    /// Direct edit of fields on any event.
    pub fn edit(&mut self, event: usize, values: &[Assignment], origin: Origin) -> Result<StateDelta, SessionError> {
        let state = self.state(event)?.clone();
        let (next, rec) = self.executor.edit(event, &state, values, origin, &self.engine.ontology)?;
        self.outstanding.remove(&state.hand());
        self.commit(rec, next)
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            version: DOCUMENT_VERSION,
            id: self.meta.id.clone(),
            clip: self.meta.clip.clone(),
            config_hash: self.meta.config_hash.clone(),
            steps: self.executor.step(),
            events: self
                .events
                .iter()
                .enumerate()
                .map(|(index, state)| EventView {
                    index,
                    hand: state.hand(),
                    active: self.active.get(&state.hand()) == Some(&index),
                    state: state.clone(),
                    violations: check_validity(&state.partial(), &self.engine.ontology).violations,
                })
                .collect(),
            outstanding: self.outstanding.clone(),
            saved: self.summary.is_some(),
        }
    }

    /// Metrics over the log so far, with accuracy against the clip's
    /// reference events when present.
    pub fn metrics(&self) -> SessionMetrics {
        let metrics = SessionMetrics::from_log(&self.log, &ManualActionModel::default());
        match &self.references {
            Some(refs) => {
                let annotations: Vec<Event> = self.events.iter().filter_map(|s| s.partial().complete()).collect();
                metrics.with_accuracy(&annotations, refs, &MatchConfig::default())
            }
            None => metrics,
        }
    }

    fn issues(&self) -> Vec<EventIssue> {
        self.events
            .iter()
            .enumerate()
            .filter_map(|(event, state)| {
                let partial = state.partial();
                let missing: Vec<Field> = Field::ALL.into_iter().filter(|&f| partial.get(f).is_none()).collect();
                let violations = check_validity(&partial, &self.engine.ontology).violations;
                (!missing.is_empty() || !violations.is_empty()).then_some(EventIssue {
                    event,
                    missing,
                    violations,
                })
            })
            .collect()
    }

    /// Validates every event, persists the final snapshot, annotations and
    /// summary. Saving again without intervening steps returns the same
    /// summary.
    pub fn save(&mut self) -> Result<SaveSummary, SessionError> {
        if let Some(summary) = &self.summary {
            return Ok(summary.clone());
        }
        let issues = self.issues();
        if !issues.is_empty() {
            return Err(SessionError::ValidationFailed(issues));
        }
        let events: Vec<Event> = self.events.iter().filter_map(|s| s.partial().complete()).collect();
        let summary = SaveSummary {
            version: DOCUMENT_VERSION,
            session: self.meta.id.clone(),
            clip: self.meta.clip.clone(),
            steps: self.executor.step(),
            events,
            metrics: self.metrics(),
        };
        self.write_snapshot()?;
        let dir = self.dir();
        fs::write(dir.join("annotations.jsonl"), render_events(&summary.events, &self.engine.ontology))
            .map_err(|e| storage(&dir, e))?;
        write_json(&dir.join("summary.json"), &summary)?;
        self.summary = Some(summary.clone());
        Ok(summary)
    }
}
