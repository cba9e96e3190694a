//! Evaluation: temporal overlap, event matching, behavioral and operational
//! metrics from traces, and the sequential oracle-correction protocol.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::controller::{Assignment, Authority, CalibrationStore, Intervention, Surface};
use crate::engine::{Clip, Engine};
use crate::event::{Event, EventState, Field, FieldStatus, FieldValue, Frame, Origin, Window};
use crate::exec::{
    run_session, update_calibration, AnnotatorResponse, Executor, Reply, Responder, ResponseContext, ResponseKind,
    SessionError, TraceAction, TraceRecord,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Onset tolerance in frames.
    pub onset_tolerance: u32,
    /// Minimum temporal IoU.
    pub tiou_threshold: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            onset_tolerance: 5,
            tiou_threshold: 0.5,
        }
    }
}

/// Temporal IoU over a continuous frame axis. Two identical single-frame
/// intervals score 1.
pub fn tiou(a: Window, b: Window) -> f64 {
    let inter = a.end.min(b.end) as f64 - a.start.max(b.start) as f64;
    let union = a.end.max(b.end) as f64 - a.start.min(b.start) as f64;
    if union == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter.max(0.0) / union).clamp(0.0, 1.0)
}

pub fn onset_error(predicted: Frame, reference: Frame) -> u32 {
    predicted.abs_diff(reference)
}

pub fn is_complete_match(onset_err: u32, overlap: f64, verb_ok: bool, noun_ok: bool, cfg: &MatchConfig) -> bool {
    onset_err <= cfg.onset_tolerance && overlap >= cfg.tiou_threshold && verb_ok && noun_ok
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub annotation: usize,
    pub reference: usize,
    pub tiou: f64,
    pub onset_error: u32,
    pub verb_correct: bool,
    pub noun_correct: bool,
    pub complete: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_annotations: Vec<usize>,
    pub unmatched_references: Vec<usize>,
}

fn span(e: &Event) -> Window {
    Window {
        start: e.t_s,
        end: e.t_e,
    }
}

/// Greedy matching within each hand by descending temporal IoU. Pairs
/// below the IoU threshold are never matched. Ties are broken by event
/// content, so the matched pairs do not depend on input order.
pub fn match_events(annotations: &[Event], references: &[Event], cfg: &MatchConfig) -> Matching {
    let mut cands = Vec::new();
    for (i, a) in annotations.iter().enumerate() {
        for (j, r) in references.iter().enumerate() {
            if a.hand != r.hand {
                continue;
            }
            let o = tiou(span(a), span(r));
            if o >= cfg.tiou_threshold {
                cands.push((o, i, j));
            }
        }
    }
    let content = |e: &Event| (e.t_s, e.t_e, e.t_o, e.verb, e.noun);
    cands.sort_by(|x, y| {
        y.0.total_cmp(&x.0)
            .then(content(&annotations[x.1]).cmp(&content(&annotations[y.1])))
            .then(content(&references[x.2]).cmp(&content(&references[y.2])))
            .then((x.1, x.2).cmp(&(y.1, y.2)))
    });
    let mut used_a = BTreeSet::new();
    let mut used_r = BTreeSet::new();
    let mut pairs = Vec::new();
    for (o, i, j) in cands {
        if used_a.contains(&i) || used_r.contains(&j) {
            continue;
        }
        used_a.insert(i);
        used_r.insert(j);
        let (a, r) = (&annotations[i], &references[j]);
        let err = onset_error(a.t_o, r.t_o);
        let verb_ok = a.verb == r.verb;
        let noun_ok = a.noun == r.noun;
        pairs.push(MatchedPair {
            annotation: i,
            reference: j,
            tiou: o,
            onset_error: err,
            verb_correct: verb_ok,
            noun_correct: noun_ok,
            complete: is_complete_match(err, o, verb_ok, noun_ok, cfg),
        });
    }
    Matching {
        pairs,
        unmatched_annotations: (0..annotations.len()).filter(|i| !used_a.contains(i)).collect(),
        unmatched_references: (0..references.len()).filter(|j| !used_r.contains(j)).collect(),
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyMetrics {
    pub matched: usize,
    pub references: usize,
    pub annotations: usize,
    pub onset_errors: Vec<u32>,
    pub tious: Vec<f64>,
    pub mean_onset_error: Option<f64>,
    pub mean_tiou: Option<f64>,
    pub verb_accuracy: Option<f64>,
    pub noun_accuracy: Option<f64>,
    /// Complete matches over references.
    pub complete_match_rate: Option<f64>,
}

pub fn accuracy(annotations: &[Event], references: &[Event], cfg: &MatchConfig) -> AccuracyMetrics {
    let m = match_events(annotations, references, cfg);
    let n = m.pairs.len();
    AccuracyMetrics {
        matched: n,
        references: references.len(),
        annotations: annotations.len(),
        onset_errors: m.pairs.iter().map(|p| p.onset_error).collect(),
        tious: m.pairs.iter().map(|p| p.tiou).collect(),
        mean_onset_error: mean(m.pairs.iter().map(|p| p.onset_error as f64)),
        mean_tiou: mean(m.pairs.iter().map(|p| p.tiou)),
        verb_accuracy: ratio(m.pairs.iter().filter(|p| p.verb_correct).count(), n),
        noun_accuracy: ratio(m.pairs.iter().filter(|p| p.noun_correct).count(), n),
        complete_match_rate: ratio(m.pairs.iter().filter(|p| p.complete).count(), references.len()),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuthorityCounts {
    pub human_only: usize,
    pub human_confirm: usize,
    pub safe_local: usize,
}

impl AuthorityCounts {
    pub fn total(&self) -> usize {
        self.human_only + self.human_confirm + self.safe_local
    }

    fn bump(&mut self, a: Authority) {
        match a {
            Authority::HumanOnly => self.human_only += 1,
            Authority::HumanConfirm => self.human_confirm += 1,
            Authority::SafeLocal => self.safe_local += 1,
        }
    }

    pub fn share(&self, a: Authority) -> Option<f64> {
        let n = match a {
            Authority::HumanOnly => self.human_only,
            Authority::HumanConfirm => self.human_confirm,
            Authority::SafeLocal => self.safe_local,
        };
        ratio(n, self.total())
    }
}

/// Interaction metrics read from a trace log.
///
/// A suggestion is any human-confirm intervention that reached the
/// annotator, timeouts included. An operation is any answered
/// intervention (timeouts excluded) plus every committed silent
/// application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehavioralMetrics {
    pub events: usize,
    pub suggestions: usize,
    pub accepted: usize,
    pub edited: usize,
    pub rejected: usize,
    pub timeouts: usize,
    /// Accepted suggestions later overwritten by a human.
    pub accepted_then_edited: usize,
    /// Accepted over all suggestions.
    pub accept_rate: Option<f64>,
    /// Edited over all suggestions.
    pub rework_rate_all: Option<f64>,
    /// Accepted-then-edited over accepted.
    pub correction_rate_accepted: Option<f64>,
    pub operations: AuthorityCounts,
    pub human_only_share: Option<f64>,
    pub human_confirm_share: Option<f64>,
    pub safe_local_share: Option<f64>,
    pub actions_per_event: Option<f64>,
    pub rollbacks: usize,
    pub confirmed_field_violations: usize,
    /// Wall time from the first step's start to the last step's end, seconds.
    pub total_time_s: Option<f64>,
    pub total_latency_s: f64,
}

/// Whether any diff in the trace changed a confirmed field's value under
/// machine origin.
pub fn violations_in(trace: &TraceRecord) -> usize {
    trace
        .diff
        .iter()
        .filter(|d| d.old.status == FieldStatus::Confirmed)
        .filter(|d| {
            let machine = d.new.provenance.is_none_or(|p| p.origin == Origin::Machine);
            machine && (d.new.value != d.old.value || d.new.status != FieldStatus::Confirmed)
        })
        .count()
}

pub fn behavioral_metrics(log: &[TraceRecord]) -> BehavioralMetrics {
    let mut m = BehavioralMetrics {
        events: 0,
        suggestions: 0,
        accepted: 0,
        edited: 0,
        rejected: 0,
        timeouts: 0,
        accepted_then_edited: 0,
        accept_rate: None,
        rework_rate_all: None,
        correction_rate_accepted: None,
        operations: AuthorityCounts::default(),
        human_only_share: None,
        human_confirm_share: None,
        safe_local_share: None,
        actions_per_event: None,
        rollbacks: 0,
        confirmed_field_violations: 0,
        total_time_s: None,
        total_latency_s: 0.0,
    };
    let mut accepted_ids = BTreeSet::new();
    let mut reworked_ids = BTreeSet::new();
    for rec in log {
        m.rollbacks += rec.rollback as usize;
        m.confirmed_field_violations += violations_in(rec);
        for d in &rec.diff {
            let human = d.new.provenance.is_some_and(|p| p.origin.confirms()) && d.new.human_edits > d.old.human_edits;
            if let Some(id) = d.old.provenance.and_then(|p| p.intervention) {
                if human && d.old.value != d.new.value && accepted_ids.contains(&id) {
                    reworked_ids.insert(id);
                }
            }
        }
        match &rec.action {
            TraceAction::CreateEvent { .. } => m.events += 1,
            TraceAction::Intervention {
                id,
                intervention,
                response,
            } => match response {
                None => {
                    if !rec.rollback {
                        m.operations.bump(intervention.authority);
                    }
                }
                Some(r) => {
                    m.total_latency_s += r.latency;
                    if r.kind != ResponseKind::Timeout {
                        m.operations.bump(intervention.authority);
                    }
                    if intervention.authority == Authority::HumanConfirm {
                        m.suggestions += 1;
                        match r.kind {
                            ResponseKind::Accept => {
                                m.accepted += 1;
                                accepted_ids.insert(*id);
                            }
                            ResponseKind::Edit | ResponseKind::ManualEntry => m.edited += 1,
                            ResponseKind::Reject => m.rejected += 1,
                            ResponseKind::Timeout => m.timeouts += 1,
                        }
                    }
                }
            },
            TraceAction::Confirm { .. } | TraceAction::Edit { .. } => {}
        }
    }
    m.accepted_then_edited = reworked_ids.len();
    m.accept_rate = ratio(m.accepted, m.suggestions);
    m.rework_rate_all = ratio(m.edited, m.suggestions);
    m.correction_rate_accepted = ratio(m.accepted_then_edited, m.accepted);
    m.human_only_share = m.operations.share(Authority::HumanOnly);
    m.human_confirm_share = m.operations.share(Authority::HumanConfirm);
    m.safe_local_share = m.operations.share(Authority::SafeLocal);
    m.actions_per_event = ratio(m.operations.total(), m.events);
    let start = log.iter().map(|r| r.started_ms).min();
    let end = log.iter().map(|r| r.finished_ms).max();
    if let (Some(s), Some(e)) = (start, end) {
        m.total_time_s = Some(e.saturating_sub(s) as f64 / 1000.0);
    }
    m
}

/// Manual-annotation baseline: actions needed to resolve each field by hand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManualActionModel {
    pub start: u32,
    pub onset: u32,
    pub end: u32,
    pub verb: u32,
    pub noun: u32,
}

impl Default for ManualActionModel {
    fn default() -> Self {
        ManualActionModel {
            start: 1,
            onset: 1,
            end: 1,
            verb: 1,
            noun: 1,
        }
    }
}

impl ManualActionModel {
    pub fn per_event(&self) -> u32 {
        self.start + self.onset + self.end + self.verb + self.noun
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalMetrics {
    pub events: usize,
    pub zero_edit_events: usize,
    pub zero_edit_rate: Option<f64>,
    /// Accepts, edits and manual entries.
    pub assisted_actions: usize,
    pub baseline_actions: usize,
    pub action_reduction: Option<f64>,
}

pub fn operational_metrics(log: &[TraceRecord], model: &ManualActionModel) -> OperationalMetrics {
    let mut events = BTreeSet::new();
    let mut edited = BTreeSet::new();
    let mut assisted = 0usize;
    for rec in log {
        match &rec.action {
            TraceAction::CreateEvent { .. } => {
                events.insert(rec.event);
            }
            TraceAction::Intervention { response: Some(r), .. } => match r.kind {
                ResponseKind::Accept => assisted += 1,
                ResponseKind::Edit | ResponseKind::ManualEntry => {
                    assisted += 1;
                    edited.insert(rec.event);
                }
                ResponseKind::Reject | ResponseKind::Timeout => {}
            },
            TraceAction::Edit { .. } => {
                edited.insert(rec.event);
            }
            _ => {}
        }
    }
    let n = events.len();
    let zero = events.iter().filter(|e| !edited.contains(e)).count();
    let baseline = n * model.per_event() as usize;
    OperationalMetrics {
        events: n,
        zero_edit_events: zero,
        zero_edit_rate: ratio(zero, n),
        assisted_actions: assisted,
        baseline_actions: baseline,
        action_reduction: (baseline > 0).then(|| 1.0 - assisted as f64 / baseline as f64),
    }
}

/// Everything reported for one session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub behavior: BehavioralMetrics,
    pub operational: OperationalMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracyMetrics>,
}

impl SessionMetrics {
    pub fn from_log(log: &[TraceRecord], model: &ManualActionModel) -> Self {
        SessionMetrics {
            behavior: behavioral_metrics(log),
            operational: operational_metrics(log, model),
            accuracy: None,
        }
    }

    pub fn with_accuracy(mut self, annotations: &[Event], references: &[Event], cfg: &MatchConfig) -> Self {
        self.accuracy = Some(accuracy(annotations, references, cfg));
        self
    }

    /// Flat `metric,value` rows; absent rates print as empty values.
    pub fn to_csv(&self) -> String {
        let value = serde_json::to_value(self).expect("metrics serialize");
        let mut rows = BTreeMap::new();
        flatten("", &value, &mut rows);
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        serde_json::Value::Array(_) => {}
        serde_json::Value::Null => {
            out.insert(prefix.to_string(), String::new());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

fn within_tolerance(field: Field, proposed: FieldValue, truth: &Event, cfg: &MatchConfig) -> bool {
    match (field, proposed) {
        (Field::Onset, FieldValue::Frame(t)) => onset_error(t, truth.t_o) <= cfg.onset_tolerance,
        (Field::Start, FieldValue::Frame(t)) => t == truth.t_s,
        (Field::End, FieldValue::Frame(t)) => t == truth.t_e,
        (Field::Verb, FieldValue::Verb(v)) => v == truth.verb,
        (Field::Noun, FieldValue::Noun(n)) => n == truth.noun,
        _ => false,
    }
}

fn truth_value(field: Field, truth: &Event) -> FieldValue {
    match field {
        Field::Start => FieldValue::Frame(truth.t_s),
        Field::Onset => FieldValue::Frame(truth.t_o),
        Field::End => FieldValue::Frame(truth.t_e),
        Field::Verb => FieldValue::Verb(truth.verb),
        Field::Noun => FieldValue::Noun(truth.noun),
    }
}

/// Responder backed by reference events, one per event index. Suggestions
/// within tolerance are accepted, others edited to the truth; direct
/// queries get the truth.
pub struct OracleResponder {
    pub references: Vec<Event>,
    pub cfg: MatchConfig,
}

impl Responder for OracleResponder {
    fn respond(&mut self, ctx: &ResponseContext<'_>) -> Reply {
        let Some(truth) = self.references.get(ctx.event) else {
            return Reply::Save;
        };
        let xi = ctx.intervention;
        if xi.authority == Authority::HumanOnly {
            let values = xi
                .targets
                .iter()
                .map(|&field| Assignment {
                    field,
                    value: truth_value(field, truth),
                })
                .collect();
            return Reply::Respond(AnnotatorResponse::manual(values, 0.0).by(Origin::Oracle));
        }
        let wrong: Vec<Assignment> = xi
            .payload
            .iter()
            .filter(|a| !within_tolerance(a.field, a.value, truth, &self.cfg))
            .map(|a| Assignment {
                field: a.field,
                value: truth_value(a.field, truth),
            })
            .collect();
        Reply::Respond(if wrong.is_empty() {
            AnnotatorResponse::accept(0.0).by(Origin::Oracle)
        } else {
            AnnotatorResponse::edit(wrong, 0.0).by(Origin::Oracle)
        })
    }
}

/// Result of checking one field under the oracle protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCheck {
    pub field: Field,
    pub proposed: Option<FieldValue>,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleEvent {
    pub checks: Vec<FieldCheck>,
    pub edits: usize,
}

#[derive(Clone, Debug)]
pub struct OracleRun {
    pub states: Vec<EventState>,
    pub events: Vec<OracleEvent>,
    pub log: Vec<TraceRecord>,
}

impl OracleRun {
    pub fn edits(&self) -> usize {
        self.events.iter().map(|e| e.edits).sum()
    }

    pub fn zero_edit_rate(&self) -> Option<f64> {
        ratio(self.events.iter().filter(|e| e.edits == 0).count(), self.events.len())
    }

    pub fn annotations(&self) -> Vec<Event> {
        self.states.iter().filter_map(|s| s.partial().complete()).collect()
    }
}

pub const ORACLE_FIELDS: [Field; 3] = [Field::Onset, Field::Verb, Field::Noun];

/// Sequential oracle correction. The span comes from the reference. Onset,
/// verb and noun are then checked in order: the engine decodes under the
/// current locks and proposes its value for the field; the oracle accepts
/// it when within tolerance (onset) or exact (verb, noun) and otherwise
/// edits it to the truth. Either way the field is locked before the
/// engine re-decodes the rest.
pub fn run_oracle_protocol(
    engine: &Engine,
    clip: &Clip,
    references: &[Event],
    cfg: &MatchConfig,
    executor: &mut Executor,
    store: &mut CalibrationStore,
) -> Result<OracleRun, SessionError> {
    let mut run = OracleRun {
        states: Vec::new(),
        events: Vec::new(),
        log: Vec::new(),
    };
    for (idx, truth) in references.iter().enumerate() {
        let (state, rec) = executor.create_event(idx, truth.hand, truth.t_s, truth.t_e)?;
        run.log.push(rec);
        let (mut state, rec) = executor.confirm(idx, &state, &[Field::Start, Field::End], Origin::Oracle)?;
        run.log.push(rec);
        let mut event = OracleEvent {
            checks: Vec::new(),
            edits: 0,
        };
        for field in ORACLE_FIELDS {
            let inference = engine.infer(&state, clip)?;
            let proposed = inference.hypothesis.as_ref().map(|h| match field {
                Field::Onset => FieldValue::Frame(h.t_o),
                Field::Verb => FieldValue::Verb(h.verb),
                _ => FieldValue::Noun(h.noun),
            });
            let accepted = proposed.is_some_and(|v| within_tolerance(field, v, truth, cfg));
            let id = executor.step();
            let (xi, response) = match proposed {
                Some(value) => (
                    Intervention {
                        targets: vec![field],
                        surface: Surface::SuggestionCard,
                        authority: Authority::HumanConfirm,
                        payload: vec![Assignment { field, value }],
                    },
                    if accepted {
                        AnnotatorResponse::accept(0.0)
                    } else {
                        AnnotatorResponse::edit(
                            vec![Assignment {
                                field,
                                value: truth_value(field, truth),
                            }],
                            0.0,
                        )
                    },
                ),
                None => (
                    Intervention {
                        targets: vec![field],
                        surface: if field.is_temporal() {
                            Surface::TimelineQuery
                        } else {
                            Surface::ChoicePrompt
                        },
                        authority: Authority::HumanOnly,
                        payload: Vec::new(),
                    },
                    AnnotatorResponse::manual(
                        vec![Assignment {
                            field,
                            value: truth_value(field, truth),
                        }],
                        0.0,
                    ),
                ),
            };
            let (next, rec) = executor.execute(idx, &state, id, &xi, Some(response.by(Origin::Oracle)), &engine.ontology)?;
            update_calibration(store, &rec);
            run.log.push(rec);
            state = next;
            event.edits += (!accepted) as usize;
            event.checks.push(FieldCheck {
                field,
                proposed,
                accepted,
            });
        }
        run.states.push(state);
        run.events.push(event);
    }
    Ok(run)
}

/// Closed-loop session driven by the oracle responder over reference spans.
pub fn run_oracle_session(
    engine: &Engine,
    clip: &Clip,
    references: &[Event],
    cfg: &MatchConfig,
    executor: &mut Executor,
    store: &mut CalibrationStore,
) -> Result<crate::exec::SessionRun, SessionError> {
    let spans: Vec<_> = references.iter().map(|e| (e.hand, e.t_s, e.t_e)).collect();
    let mut oracle = OracleResponder {
        references: references.to_vec(),
        cfg: *cfg,
    };
    run_session(engine, clip, &spans, store, &mut oracle, executor)
}
