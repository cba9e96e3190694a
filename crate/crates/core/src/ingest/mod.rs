//! File loaders for hand tracks, features, ontology, events and statistics.
//!
//! Line-delimited files hold one JSON document per line; blank lines are
//! skipped. Schemas:
//!
//! * hand track line: `{"hand":"Left","t":12,"box":[x,y,w,h],"center":[x,y],"area":a,"motion":m,"handedness":p}`
//! * event line: `{"hand":"Left","t_s":0,"t_o":12,"t_e":40,"verb":"grasp","noun":"bolt"}`, `"noun":null` for no object
//! * ontology document: `{"verbs":[{"id","noun_required","phase_family"}],"nouns":[..],"valid_pairs":[[verb,noun]],"family_template_ratio":{..}}`
//! * statistics document: see [`StatisticsDocument`]
//! * feature container: see [`features`]

pub mod features;
pub mod stats;
pub mod tracks;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::FeatureTable;
pub use stats::{onset_bin, StatisticsBundle, StatisticsDocument, DEFAULT_BINS};
pub use tracks::{HandFrameState, HandTrack};

use crate::event::{
    Event, Frame, Hand, NounValue, Ontology, OntologyError, PhaseFamily, VerbDef,
    DEFAULT_TEMPLATE_RATIOS,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), IngestError> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(contents))
        .map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })
}

/// Parses one JSON document, separating malformed JSON from shape errors.
fn parse_doc<T: DeserializeOwned>(text: &str, what: &str) -> Result<T, IngestError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| IngestError::Parse(format!("{what}: {e}")))?;
    serde_json::from_value(value).map_err(|e| IngestError::Schema(format!("{what}: {e}")))
}

fn parse_lines<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_doc(l, &format!("{what} line {}", i + 1)))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackLine {
    hand: Hand,
    t: Frame,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    center: [f64; 2],
    area: f64,
    motion: f64,
    handedness: f64,
}

/// Parses a hand-track file body. Returns one track per hand present, Left first.
pub fn parse_hand_tracks(text: &str) -> Result<Vec<HandTrack>, IngestError> {
    let lines: Vec<TrackLine> = parse_lines(text, "hand track")?;
    let mut per_hand: BTreeMap<Hand, Vec<HandFrameState>> = BTreeMap::new();
    for line in lines {
        per_hand.entry(line.hand).or_default().push(HandFrameState {
            t: line.t,
            bbox: line.bbox,
            center: line.center,
            area: line.area,
            motion: line.motion,
            handedness: line.handedness,
        });
    }
    per_hand
        .into_iter()
        .map(|(hand, frames)| HandTrack::new(hand, frames).map_err(IngestError::Invariant))
        .collect()
}

pub fn load_hand_tracks(path: impl AsRef<Path>) -> Result<Vec<HandTrack>, IngestError> {
    parse_hand_tracks(&read(path.as_ref())?)
}

pub fn write_hand_tracks(path: impl AsRef<Path>, tracks: &[HandTrack]) -> Result<(), IngestError> {
    let mut out = String::new();
    for track in tracks {
        for f in track.frames() {
            let line = TrackLine {
                hand: track.hand,
                t: f.t,
                bbox: f.bbox,
                center: f.center,
                area: f.area,
                motion: f.motion,
                handedness: f.handedness,
            };
            out.push_str(&serde_json::to_string(&line).expect("track line"));
            out.push('\n');
        }
    }
    write(path.as_ref(), out.as_bytes())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OntologyDocument {
    pub verbs: Vec<VerbDef>,
    pub nouns: Vec<String>,
    pub valid_pairs: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_template_ratio: Option<BTreeMap<PhaseFamily, f64>>,
}

impl OntologyDocument {
    pub fn into_ontology(self) -> Result<Ontology, IngestError> {
        let mut ratios = DEFAULT_TEMPLATE_RATIOS;
        if let Some(map) = &self.family_template_ratio {
            for (family, &r) in map {
                ratios[family.index()] = r;
            }
        }
        let index_v = |id: &str| {
            self.verbs
                .iter()
                .position(|v| v.id == id)
                .map(crate::event::VerbId)
                .ok_or_else(|| OntologyError::UnknownVerb(id.to_string()))
        };
        let index_n = |id: &str| {
            self.nouns
                .iter()
                .position(|n| n == id)
                .map(crate::event::NounId)
                .ok_or_else(|| OntologyError::UnknownNoun(id.to_string()))
        };
        let pairs = self
            .valid_pairs
            .iter()
            .map(|(v, n)| Ok((index_v(v)?, index_n(n)?)))
            .collect::<Result<Vec<_>, OntologyError>>()?;
        Ok(Ontology::new(self.verbs, self.nouns, pairs, ratios)?)
    }

    pub fn from_ontology(ontology: &Ontology) -> Self {
        OntologyDocument {
            verbs: ontology.verbs().to_vec(),
            nouns: ontology.nouns().to_vec(),
            valid_pairs: ontology
                .valid_pairs()
                .map(|(v, n)| (ontology.verb_name(v).to_string(), ontology.noun_name(n).to_string()))
                .collect(),
            family_template_ratio: Some(
                PhaseFamily::ALL
                    .iter()
                    .map(|&f| (f, ontology.template_ratio(f)))
                    .collect(),
            ),
        }
    }
}

pub fn parse_ontology(text: &str) -> Result<Ontology, IngestError> {
    parse_doc::<OntologyDocument>(text, "ontology")?.into_ontology()
}

pub fn load_ontology(path: impl AsRef<Path>) -> Result<Ontology, IngestError> {
    parse_ontology(&read(path.as_ref())?)
}

pub fn save_ontology(path: impl AsRef<Path>, ontology: &Ontology) -> Result<(), IngestError> {
    let doc = OntologyDocument::from_ontology(ontology);
    write(path.as_ref(), serde_json::to_string_pretty(&doc).expect("ontology").as_bytes())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EventLine {
    hand: Hand,
    t_s: Frame,
    t_o: Frame,
    t_e: Frame,
    verb: String,
    noun: Option<String>,
}

/// Parses an event file and resolves identifiers against `ontology`.
/// Ordering and pair validity are checked per line.
pub fn parse_events(text: &str, ontology: &Ontology) -> Result<Vec<Event>, IngestError> {
    let lines: Vec<EventLine> = parse_lines(text, "event")?;
    lines
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let verb = ontology
                .verb_index(&l.verb)
                .ok_or_else(|| IngestError::Schema(format!("event {}: unknown verb `{}`", i + 1, l.verb)))?;
            let noun = match &l.noun {
                None => NounValue::NoNoun,
                Some(id) => NounValue::Noun(
                    ontology
                        .noun_index(id)
                        .ok_or_else(|| IngestError::Schema(format!("event {}: unknown noun `{id}`", i + 1)))?,
                ),
            };
            let event = Event {
                hand: l.hand,
                t_s: l.t_s,
                t_o: l.t_o,
                t_e: l.t_e,
                verb,
                noun,
            };
            let report = crate::event::check_validity(&event.partial(), ontology);
            if let Some(v) = report.violations.first() {
                return Err(IngestError::Invariant(format!("event {}: {v}", i + 1)));
            }
            Ok(event)
        })
        .collect()
}

pub fn load_events(path: impl AsRef<Path>, ontology: &Ontology) -> Result<Vec<Event>, IngestError> {
    parse_events(&read(path.as_ref())?, ontology)
}

pub fn render_events(events: &[Event], ontology: &Ontology) -> String {
    let mut out = String::new();
    for e in events {
        let line = EventLine {
            hand: e.hand,
            t_s: e.t_s,
            t_o: e.t_o,
            t_e: e.t_e,
            verb: ontology.verb_name(e.verb).to_string(),
            noun: e.noun.noun().map(|n| ontology.noun_name(n).to_string()),
        };
        out.push_str(&serde_json::to_string(&line).expect("event line"));
        out.push('\n');
    }
    out
}

pub fn write_events(path: impl AsRef<Path>, events: &[Event], ontology: &Ontology) -> Result<(), IngestError> {
    write(path.as_ref(), render_events(events, ontology).as_bytes())
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureTable, IngestError> {
    let path = path.as_ref();
    let clip_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    FeatureTable::read_from(clip_id, bytes.as_slice())
}

pub fn save_features(path: impl AsRef<Path>, table: &FeatureTable) -> Result<(), IngestError> {
    let mut buf = Vec::new();
    table.write_to(&mut buf).expect("in-memory write");
    write(path.as_ref(), &buf)
}

pub fn parse_statistics(text: &str, ontology: &Ontology) -> Result<StatisticsBundle, IngestError> {
    let doc: StatisticsDocument = parse_doc(text, "statistics")?;
    StatisticsBundle::from_document(&doc, ontology)
}

pub fn load_statistics(path: impl AsRef<Path>, ontology: &Ontology) -> Result<StatisticsBundle, IngestError> {
    parse_statistics(&read(path.as_ref())?, ontology)
}

pub fn render_statistics(stats: &StatisticsBundle, ontology: &Ontology) -> String {
    serde_json::to_string_pretty(&stats.to_document(ontology)).expect("statistics document")
}

pub fn save_statistics(
    path: impl AsRef<Path>,
    stats: &StatisticsBundle,
    ontology: &Ontology,
) -> Result<(), IngestError> {
    write(path.as_ref(), render_statistics(stats, ontology).as_bytes())
}
