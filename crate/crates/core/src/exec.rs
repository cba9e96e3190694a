//! Closed-loop execution: atomic transitions, the append-only trace, replay,
//! and calibration updates from traces.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::completion::DecodedHypothesis;
use crate::controller::{calibration_keys, Assignment, Authority, CalibrationKey, CalibrationStore, Intervention};
use crate::engine::{Clip, Engine};
use crate::event::{
    EventError, EventState, Field, FieldSlot, FieldValue, Frame, Hand, NounValue, Ontology, Origin,
    Provenance, VerbId,
};

pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    Accept,
    Reject,
    Edit,
    ManualEntry,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorResponse {
    pub kind: ResponseKind,
    /// Values for edit and manual entry; empty otherwise.
    #[serde(default)]
    pub values: Vec<Assignment>,
    /// Response latency in seconds.
    #[serde(default)]
    pub latency: f64,
    /// Who answered: a human or the evaluation oracle.
    #[serde(default = "default_origin")]
    pub origin: Origin,
}

fn default_origin() -> Origin {
    Origin::Human
}

impl AnnotatorResponse {
    fn bare(kind: ResponseKind, latency: f64) -> Self {
        AnnotatorResponse {
            kind,
            values: Vec::new(),
            latency,
            origin: Origin::Human,
        }
    }

    pub fn accept(latency: f64) -> Self {
        Self::bare(ResponseKind::Accept, latency)
    }

    pub fn reject(latency: f64) -> Self {
        Self::bare(ResponseKind::Reject, latency)
    }

    pub fn timeout(latency: f64) -> Self {
        Self::bare(ResponseKind::Timeout, latency)
    }

    pub fn edit(values: Vec<Assignment>, latency: f64) -> Self {
        AnnotatorResponse {
            values,
            ..Self::bare(ResponseKind::Edit, latency)
        }
    }

    pub fn manual(values: Vec<Assignment>, latency: f64) -> Self {
        AnnotatorResponse {
            values,
            ..Self::bare(ResponseKind::ManualEntry, latency)
        }
    }

    pub fn by(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    fn check(&self) -> Result<(), ExecError> {
        let carries = matches!(self.kind, ResponseKind::Edit | ResponseKind::ManualEntry);
        if carries == self.values.is_empty() {
            return Err(ExecError::MalformedResponse(self.kind));
        }
        if self.origin == Origin::Machine {
            return Err(ExecError::MalformedResponse(self.kind));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum TraceAction {
    CreateEvent {
        hand: Hand,
        t_s: Frame,
        t_e: Frame,
    },
    Intervention {
        id: u64,
        intervention: Intervention,
        response: Option<AnnotatorResponse>,
    },
    /// Human confirmation of fields outside any intervention.
    Confirm { fields: Vec<Field>, origin: Origin },
    /// Human edit outside any intervention.
    Edit { values: Vec<Assignment>, origin: Origin },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub field: Field,
    pub old: FieldSlot,
    pub new: FieldSlot,
}

/// One append-only log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub version: u32,
    pub step: u64,
    pub session: String,
    /// Index of the event within the session.
    pub event: usize,
    pub action: TraceAction,
    pub diff: Vec<FieldDiff>,
    pub config_hash: String,
    pub started_ms: u64,
    pub finished_ms: u64,
    pub rollback: bool,
    /// Why a silent application was rolled back.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback_reason: Option<String>,
    /// Hash of the event state after this step.
    pub state_hash: String,
}

impl TraceRecord {
    pub fn response(&self) -> Option<&AnnotatorResponse> {
        match &self.action {
            TraceAction::Intervention { response, .. } => response.as_ref(),
            _ => None,
        }
    }

    pub fn intervention(&self) -> Option<(u64, &Intervention)> {
        match &self.action {
            TraceAction::Intervention { id, intervention, .. } => Some((*id, intervention)),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("a response is required for {0:?} interventions")]
    ResponseMissing(Authority),
    #[error("malformed {0:?} response")]
    MalformedResponse(ResponseKind),
    #[error("response value for {0} is outside the intervention's targets")]
    OffTarget(Field),
    #[error("{0:?} does not apply to {1:?} interventions")]
    ResponseNotApplicable(ResponseKind, Authority),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("replay diverged at step {step}: {reason}")]
    ReplayDivergence { step: u64, reason: String },
    #[error("log was written under config {found}, expected {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("unknown event #{0}")]
    UnknownEvent(usize),
}

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Deterministic clock that advances one millisecond per reading.
#[derive(Default)]
pub struct LogicalClock(AtomicU64);

impl Clock for LogicalClock {
    fn now_ms(&self) -> u64 {
        self.0.fetch_add(1, Ordering::Relaxed)
    }
}

pub fn state_hash(state: &EventState) -> String {
    let text = serde_json::to_string(state).expect("state serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn diff(before: &EventState, after: &EventState) -> Vec<FieldDiff> {
    Field::ALL
        .iter()
        .filter(|&&f| before.slot(f) != after.slot(f))
        .map(|&f| FieldDiff {
            field: f,
            old: before.slot(f).clone(),
            new: after.slot(f).clone(),
        })
        .collect()
}

/// Human or oracle write: clear conflicting unlocked suggestions, then
/// write and lock.
fn human_write(state: &EventState, a: Assignment, prov: Provenance, ont: &Ontology) -> Result<EventState, EventError> {
    state.retract_conflicts(a.field, a.value, ont).set_field(a.field, a.value, prov, ont)
}

/// Promote a proposed value to confirmed without counting it as a human edit.
fn accept_value(state: &EventState, a: Assignment, prov: Provenance, ont: &Ontology) -> Result<EventState, EventError> {
    if state.value(a.field) == Some(a.value) {
        return state.confirm_field(a.field, prov);
    }
    let staged = state
        .retract_conflicts(a.field, a.value, ont)
        .set_field(a.field, a.value, Provenance { origin: Origin::Machine, ..prov }, ont)?;
    staged.confirm_field(a.field, prov)
}

/// Machine write for a silent application. Conflicting machine suggestions
/// are cleared; anything else is left for the caller to reject.
fn machine_write(state: &EventState, a: Assignment, prov: Provenance, ont: &Ontology) -> Result<EventState, EventError> {
    let mut staged = state.clone();
    let retracted = state.retract_conflicts(a.field, a.value, ont);
    for f in Field::ALL {
        if retracted.slot(f) != state.slot(f) {
            let machine_owned = state.slot(f).provenance.is_some_and(|p| p.origin == Origin::Machine);
            if machine_owned {
                staged = staged.clear_field(f)?;
            }
        }
    }
    staged.set_field(a.field, a.value, prov, ont)
}

/// Confirmed slots of `before` that differ in `after`.
fn confirmed_changes(before: &EventState, after: &EventState) -> Vec<Field> {
    Field::ALL
        .iter()
        .copied()
        .filter(|&f| before.is_locked(f) && (after.value(f) != before.value(f) || !after.is_locked(f)))
        .collect()
}

/// Serialized executor of one session's mutations.
pub struct Executor {
    session: String,
    config_hash: String,
    clock: Box<dyn Clock>,
    step: u64,
}

impl Executor {
    pub fn new(session: impl Into<String>, config_hash: impl Into<String>, clock: Box<dyn Clock>) -> Self {
        Executor {
            session: session.into(),
            config_hash: config_hash.into(),
            clock,
            step: 0,
        }
    }

    pub fn session(&self) -> &str {
        &self.session
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    /// Steps executed so far; also the next step index.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Continue numbering after a recovered log.
    pub fn resume_at(&mut self, step: u64) {
        self.step = step;
    }

    fn record(
        &mut self,
        event: usize,
        action: TraceAction,
        before: &EventState,
        after: &EventState,
        started_ms: u64,
        rollback: Option<String>,
    ) -> TraceRecord {
        let rec = TraceRecord {
            version: TRACE_VERSION,
            step: self.step,
            session: self.session.clone(),
            event,
            action,
            diff: diff(before, after),
            config_hash: self.config_hash.clone(),
            started_ms,
            finished_ms: self.clock.now_ms(),
            rollback: rollback.is_some(),
            rollback_reason: rollback,
            state_hash: state_hash(after),
        };
        self.step += 1;
        rec
    }

    pub fn create_event(&mut self, event: usize, hand: Hand, t_s: Frame, t_e: Frame) -> Result<(EventState, TraceRecord), ExecError> {
        let started = self.clock.now_ms();
        let state = EventState::new(hand, t_s, t_e)?;
        // diff against the empty slots so replay can rebuild from nothing
        let mut blank = state.clone();
        for f in Field::ALL {
            blank.restore_slot(f, FieldSlot::default());
        }
        let rec = self.record(event, TraceAction::CreateEvent { hand, t_s, t_e }, &blank, &state, started, None);
        Ok((state, rec))
    }

    /// Applies one intervention and its response as a single transition.
    ///
    /// Human errors (an invalid edit, say) return `Err` and leave no trace.
    /// A silent application that would disturb a confirmed field, or that
    /// fails validation, is rolled back and logged with the rollback flag.
    pub fn execute(
        &mut self,
        event: usize,
        state: &EventState,
        id: u64,
        xi: &Intervention,
        response: Option<AnnotatorResponse>,
        ontology: &Ontology,
    ) -> Result<(EventState, TraceRecord), ExecError> {
        let started = self.clock.now_ms();
        let step = self.step;
        let action = |response| TraceAction::Intervention {
            id,
            intervention: xi.clone(),
            response,
        };
        if xi.authority == Authority::SafeLocal {
            let prov = Provenance::machine(step).with_intervention(id, xi.authority, xi.surface);
            let staged = xi
                .payload
                .iter()
                .try_fold(state.clone(), |s, &a| machine_write(&s, a, prov, ontology));
            let failure = match &staged {
                Err(e) => Some(e.to_string()),
                Ok(next) => {
                    let touched = confirmed_changes(state, next);
                    (!touched.is_empty()).then(|| format!("confirmed fields changed: {touched:?}"))
                }
            };
            return Ok(match failure {
                Some(reason) => {
                    let rec = self.record(event, action(None), state, state, started, Some(reason));
                    (state.clone(), rec)
                }
                None => {
                    let next = staged.expect("checked");
                    let rec = self.record(event, action(None), state, &next, started, None);
                    (next, rec)
                }
            });
        }

        let response = response.ok_or(ExecError::ResponseMissing(xi.authority))?;
        response.check()?;
        for a in &response.values {
            if !xi.targets.contains(&a.field) {
                return Err(ExecError::OffTarget(a.field));
            }
        }
        let prov = Provenance::new(response.origin, step).with_intervention(id, xi.authority, xi.surface);
        let next = match (response.kind, xi.authority) {
            (ResponseKind::Timeout, _) => state.clone(),
            (ResponseKind::Reject, _) => xi
                .payload
                .iter()
                .fold(state.clone(), |s, a| s.note_rejection(a.field, a.value)),
            (ResponseKind::Accept, Authority::HumanConfirm) => xi
                .payload
                .iter()
                .try_fold(state.clone(), |s, &a| accept_value(&s, a, prov, ontology))?,
            (ResponseKind::Accept, a) => return Err(ExecError::ResponseNotApplicable(ResponseKind::Accept, a)),
            (ResponseKind::Edit | ResponseKind::ManualEntry, _) => {
                let mut s = state.clone();
                for &a in &response.values {
                    if let Some(proposed) = xi.proposed(a.field) {
                        if proposed != a.value {
                            s = s.note_rejection(a.field, proposed);
                        }
                    }
                    s = human_write(&s, a, prov, ontology)?;
                }
                // bundle fields the annotator left alone count as accepted
                for &a in &xi.payload {
                    if !response.values.iter().any(|v| v.field == a.field) && !s.is_locked(a.field) {
                        s = accept_value(&s, a, prov, ontology)?;
                    }
                }
                s
            }
        };
        let rec = self.record(event, action(Some(response)), state, &next, started, None);
        Ok((next, rec))
    }

    /// Direct human confirmation outside the controller loop.
    pub fn confirm(&mut self, event: usize, state: &EventState, fields: &[Field], origin: Origin) -> Result<(EventState, TraceRecord), ExecError> {
        let started = self.clock.now_ms();
        let prov = Provenance::new(origin, self.step);
        let next = fields
            .iter()
            .try_fold(state.clone(), |s, &f| s.confirm_field(f, prov))?;
        let rec = self.record(
            event,
            TraceAction::Confirm {
                fields: fields.to_vec(),
                origin,
            },
            state,
            &next,
            started,
            None,
        );
        Ok((next, rec))
    }

    /// Direct human edit outside the controller loop.
    pub fn edit(
        &mut self,
        event: usize,
        state: &EventState,
        values: &[Assignment],
        origin: Origin,
        ontology: &Ontology,
    ) -> Result<(EventState, TraceRecord), ExecError> {
        if !origin.confirms() {
            return Err(EventError::NotConfirmingOrigin(origin).into());
        }
        let started = self.clock.now_ms();
        let prov = Provenance::new(origin, self.step);
        let next = values
            .iter()
            .try_fold(state.clone(), |s, &a| human_write(&s, a, prov, ontology))?;
        let rec = self.record(
            event,
            TraceAction::Edit {
                values: values.to_vec(),
                origin,
            },
            state,
            &next,
            started,
            None,
        );
        Ok((next, rec))
    }
}

/// Folds one trace into the calibration store.
///
/// Accepts count for every targeted key. An edit counts as an accept plus
/// an override on each field it changed. Rejects count as rejects. A
/// committed silent application counts as an accept and a rollback as a
/// reject. Latency feeds the cost average of human-answered keys. Any later
/// human overwrite of a value that came through an intervention adds an
/// override to that intervention's key.
pub fn update_calibration(store: &mut CalibrationStore, trace: &TraceRecord) {
    if let TraceAction::Intervention {
        intervention, response, ..
    } = &trace.action
    {
        let keys: Vec<CalibrationKey> = calibration_keys(intervention).collect();
        match response {
            None => {
                for &k in &keys {
                    if trace.rollback {
                        store.record_reject(k);
                    } else {
                        store.record_accept(k);
                    }
                }
            }
            Some(r) => {
                for &k in &keys {
                    match r.kind {
                        ResponseKind::Accept => store.record_accept(k),
                        ResponseKind::Reject => store.record_reject(k),
                        ResponseKind::Edit | ResponseKind::ManualEntry => {
                            store.record_accept(k);
                            let changed = r
                                .values
                                .iter()
                                .any(|a| a.field == k.field && intervention.proposed(k.field) != Some(a.value));
                            if changed && intervention.authority != Authority::HumanOnly {
                                store.record_override(k);
                            }
                        }
                        ResponseKind::Timeout => {}
                    }
                    store.record_latency(k, r.latency);
                }
            }
        }
    }
    for d in &trace.diff {
        let human_now = d.new.provenance.is_some_and(|p| p.origin.confirms()) && d.new.human_edits > d.old.human_edits;
        if !human_now || d.old.value.is_none() || d.old.value == d.new.value {
            continue;
        }
        if let Some((authority, surface)) = d.old.provenance.and_then(|p| p.via) {
            store.record_override(CalibrationKey {
                field: d.field,
                authority,
                surface,
            });
        }
    }
}

/// Rebuilds event states from a log. Every diff's old slot must match the
/// current state and every step's post-state must hash to the recorded
/// value.
pub fn replay(log: &[TraceRecord], expected_config: Option<&str>) -> Result<Vec<EventState>, ExecError> {
    let mut events: Vec<EventState> = Vec::new();
    for rec in log {
        if let Some(expected) = expected_config {
            if rec.config_hash != expected {
                return Err(ExecError::ConfigMismatch {
                    expected: expected.to_string(),
                    found: rec.config_hash.clone(),
                });
            }
        }
        let diverged = |reason: String| ExecError::ReplayDivergence { step: rec.step, reason };
        if let TraceAction::CreateEvent { hand, t_s, t_e } = rec.action {
            if rec.event != events.len() {
                return Err(diverged(format!("event #{} created out of order", rec.event)));
            }
            let mut blank = EventState::new(hand, t_s, t_e).map_err(|e| diverged(e.to_string()))?;
            for f in Field::ALL {
                blank.restore_slot(f, FieldSlot::default());
            }
            events.push(blank);
        }
        let state = events
            .get_mut(rec.event)
            .ok_or_else(|| diverged(format!("unknown event #{}", rec.event)))?;
        for d in &rec.diff {
            if state.slot(d.field) != &d.old {
                return Err(diverged(format!("field {} does not match the recorded old slot", d.field)));
            }
            state.restore_slot(d.field, d.new.clone());
        }
        if state_hash(state) != rec.state_hash {
            return Err(diverged("state hash mismatch".into()));
        }
    }
    Ok(events)
}

/// What the responder sees when asked to answer an intervention.
pub struct ResponseContext<'a> {
    pub event: usize,
    pub state: &'a EventState,
    pub intervention: &'a Intervention,
    pub hypothesis: Option<&'a DecodedHypothesis>,
    pub ontology: &'a Ontology,
}

impl ResponseContext<'_> {
    /// The machine's best guess for a field, falling back to the current
    /// value and then to the first admissible option.
    pub fn best_guess(&self, field: Field) -> FieldValue {
        if let Some(v) = self.intervention.proposed(field) {
            return v;
        }
        let from_hyp = self.hypothesis.map(|h| match field {
            Field::Onset => FieldValue::Frame(h.t_o),
            Field::Verb => FieldValue::Verb(h.verb),
            Field::Noun => FieldValue::Noun(h.noun),
            Field::Start | Field::End => self.state.value(field).unwrap_or(FieldValue::Frame(0)),
        });
        if let Some(v) = from_hyp {
            if !(field == Field::Noun && !self.admissible_noun(v)) {
                return v;
            }
        }
        if let Some(v) = self.state.value(field) {
            return v;
        }
        match field {
            Field::Start | Field::End | Field::Onset => {
                FieldValue::Frame(self.state.t_s().or(self.state.t_e()).unwrap_or(0))
            }
            Field::Verb => FieldValue::Verb(VerbId(0)),
            Field::Noun => {
                let verb = self.state.verb().unwrap_or(VerbId(0));
                let noun = self
                    .ontology
                    .valid_nouns(verb)
                    .next()
                    .filter(|_| self.ontology.noun_required(verb))
                    .map_or(NounValue::NoNoun, NounValue::Noun);
                FieldValue::Noun(noun)
            }
        }
    }

    fn admissible_noun(&self, v: FieldValue) -> bool {
        match (self.state.verb(), v.noun()) {
            (Some(verb), Some(n)) => self.ontology.admits(verb, n),
            _ => true,
        }
    }
}

pub enum Reply {
    Respond(AnnotatorResponse),
    /// Stop the session and save.
    Save,
}

pub trait Responder {
    fn respond(&mut self, ctx: &ResponseContext<'_>) -> Reply;
}

/// Accepts every suggestion; answers direct queries with the machine's guess.
pub struct AcceptAll;

impl Responder for AcceptAll {
    fn respond(&mut self, ctx: &ResponseContext<'_>) -> Reply {
        Reply::Respond(match ctx.intervention.authority {
            Authority::HumanOnly => manual_guess(ctx),
            _ => AnnotatorResponse::accept(1.0),
        })
    }
}

/// Rejects every suggestion; answers direct queries with the machine's guess.
pub struct RejectAll;

impl Responder for RejectAll {
    fn respond(&mut self, ctx: &ResponseContext<'_>) -> Reply {
        Reply::Respond(match ctx.intervention.authority {
            Authority::HumanOnly => manual_guess(ctx),
            _ => AnnotatorResponse::reject(1.0),
        })
    }
}

fn manual_guess(ctx: &ResponseContext<'_>) -> AnnotatorResponse {
    let values = ctx
        .intervention
        .targets
        .iter()
        .map(|&field| Assignment {
            field,
            value: ctx.best_guess(field),
        })
        .collect();
    AnnotatorResponse::manual(values, 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventOutcome {
    Complete,
    NeedsManualCompletion,
    StepLimit,
    Saved,
}

#[derive(Clone, Debug)]
pub struct SessionRun {
    pub states: Vec<EventState>,
    pub outcomes: Vec<EventOutcome>,
    pub log: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Completion(#[from] crate::completion::CompletionError),
}

/// Runs the closed loop over a list of spans: create each event, then
/// decode, select, ask and execute until every field is confirmed, the
/// safe set empties, the step budget runs out or the responder saves.
pub fn run_session(
    engine: &Engine,
    clip: &Clip,
    spans: &[(Hand, Frame, Frame)],
    store: &mut CalibrationStore,
    responder: &mut dyn Responder,
    executor: &mut Executor,
) -> Result<SessionRun, SessionError> {
    let mut run = SessionRun {
        states: Vec::new(),
        outcomes: Vec::new(),
        log: Vec::new(),
    };
    let mut saved = false;
    for (idx, &(hand, t_s, t_e)) in spans.iter().enumerate() {
        let (mut state, rec) = executor.create_event(idx, hand, t_s, t_e)?;
        run.log.push(rec);
        let mut outcome = EventOutcome::StepLimit;
        for _ in 0..engine.config.max_steps_per_event {
            if saved {
                outcome = EventOutcome::Saved;
                break;
            }
            if state.is_fully_confirmed() {
                outcome = EventOutcome::Complete;
                break;
            }
            let proposal = engine.propose(&state, clip, store)?;
            let Some(selection) = proposal.selection else {
                outcome = EventOutcome::NeedsManualCompletion;
                break;
            };
            let xi = selection.chosen.intervention;
            let id = executor.step();
            let response = if xi.authority == Authority::SafeLocal {
                None
            } else {
                let ctx = ResponseContext {
                    event: idx,
                    state: &state,
                    intervention: &xi,
                    hypothesis: proposal.inference.hypothesis.as_ref(),
                    ontology: &engine.ontology,
                };
                match responder.respond(&ctx) {
                    Reply::Respond(r) => Some(r),
                    Reply::Save => {
                        saved = true;
                        continue;
                    }
                }
            };
            let (next, rec) = executor.execute(idx, &state, id, &xi, response, &engine.ontology)?;
            update_calibration(store, &rec);
            run.log.push(rec);
            state = next;
        }
        if outcome == EventOutcome::StepLimit && state.is_fully_confirmed() {
            outcome = EventOutcome::Complete;
        }
        run.states.push(state);
        run.outcomes.push(outcome);
    }
    Ok(run)
}
