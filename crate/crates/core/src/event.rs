//! Event, ontology and editable per-hand event state.
//!
//! An [`EventState`] is an immutable snapshot: every mutation returns a new
//! value. Field status and lock are a single source of truth: a field is
//! locked exactly when its status is [`FieldStatus::Confirmed`].

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Authority, Surface};

/// Frame index on the clip's single frame clock.
pub type Frame = u32;

/// Closed frame interval `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: Frame,
    pub end: Frame,
}

impl Window {
    pub fn new(start: Frame, end: Frame) -> Option<Self> {
        (start <= end).then_some(Window { start, end })
    }

    /// Number of frames in the window.
    pub fn len(&self) -> usize {
        (self.end - self.start) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span(&self) -> Frame {
        self.end - self.start
    }

    pub fn contains(&self, t: Frame) -> bool {
        (self.start..=self.end).contains(&t)
    }

    pub fn frames(&self) -> std::ops::RangeInclusive<Frame> {
        self.start..=self.end
    }

    /// Normalized position of `t` in `[0, 1]`; 0 for a single-frame window.
    pub fn position(&self, t: Frame) -> f64 {
        if self.end == self.start {
            0.0
        } else {
            (t.saturating_sub(self.start)) as f64 / self.span() as f64
        }
    }

    pub fn clamp(&self, t: Frame) -> Frame {
        t.clamp(self.start, self.end)
    }

    pub fn shifted(&self, delta: Frame) -> Window {
        Window {
            start: self.start + delta,
            end: self.end + delta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub const BOTH: [Hand; 2] = [Hand::Left, Hand::Right];

    pub fn other(self) -> Hand {
        match self {
            Hand::Left => Hand::Right,
            Hand::Right => Hand::Left,
        }
    }
}

impl fmt::Display for Hand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hand::Left => f.write_str("Left"),
            Hand::Right => f.write_str("Right"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VerbId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NounId(pub usize);

/// A resolved noun slot. `NoNoun` is the explicit "resolved as no object"
/// sentinel and is distinct from an empty (unresolved) field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NounValue {
    NoNoun,
    Noun(NounId),
}

impl NounValue {
    /// The noun-existence indicator `b`.
    pub fn has_noun(self) -> bool {
        matches!(self, NounValue::Noun(_))
    }

    pub fn noun(self) -> Option<NounId> {
        match self {
            NounValue::NoNoun => None,
            NounValue::Noun(n) => Some(n),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseFamily {
    #[serde(rename = "boundary")]
    Boundary,
    #[serde(rename = "early")]
    Early,
    #[serde(rename = "mid")]
    Mid,
    #[serde(rename = "late")]
    Late,
}

impl PhaseFamily {
    pub const ALL: [PhaseFamily; 4] = [
        PhaseFamily::Boundary,
        PhaseFamily::Early,
        PhaseFamily::Mid,
        PhaseFamily::Late,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerbDef {
    pub id: String,
    pub noun_required: bool,
    pub phase_family: PhaseFamily,
}

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("verb `{0}` requires a noun but has no valid nouns")]
    RequiredNounUnsatisfiable(String),
    #[error("template ratio {ratio} for family {family:?} outside [0,1]")]
    RatioOutOfRange { family: PhaseFamily, ratio: f64 },
    #[error("duplicate identifier `{0}`")]
    Duplicate(String),
    #[error("unknown verb `{0}`")]
    UnknownVerb(String),
    #[error("unknown noun `{0}`")]
    UnknownNoun(String),
}

/// Default template ratio per phase family, in `PhaseFamily::ALL` order.
pub const DEFAULT_TEMPLATE_RATIOS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

/// Verb and noun vocabulary with pair validity and phase families.
#[derive(Clone, Debug, PartialEq)]
pub struct Ontology {
    verbs: Vec<VerbDef>,
    nouns: Vec<String>,
    valid: BTreeSet<(VerbId, NounId)>,
    template_ratio: [f64; 4],
}

impl Ontology {
    pub fn new(
        verbs: Vec<VerbDef>,
        nouns: Vec<String>,
        valid_pairs: impl IntoIterator<Item = (VerbId, NounId)>,
        template_ratio: [f64; 4],
    ) -> Result<Self, OntologyError> {
        let mut seen = BTreeSet::new();
        for id in verbs.iter().map(|v| &v.id) {
            if !seen.insert(id.clone()) {
                return Err(OntologyError::Duplicate(id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for id in &nouns {
            if !seen.insert(id.clone()) {
                return Err(OntologyError::Duplicate(id.clone()));
            }
        }
        for (family, &ratio) in PhaseFamily::ALL.iter().zip(&template_ratio) {
            if !(0.0..=1.0).contains(&ratio) {
                return Err(OntologyError::RatioOutOfRange {
                    family: *family,
                    ratio,
                });
            }
        }
        let mut valid = BTreeSet::new();
        for (v, n) in valid_pairs {
            if v.0 >= verbs.len() {
                return Err(OntologyError::UnknownVerb(format!("#{}", v.0)));
            }
            if n.0 >= nouns.len() {
                return Err(OntologyError::UnknownNoun(format!("#{}", n.0)));
            }
            valid.insert((v, n));
        }
        let ontology = Ontology {
            verbs,
            nouns,
            valid,
            template_ratio,
        };
        for (i, verb) in ontology.verbs.iter().enumerate() {
            if verb.noun_required && ontology.valid_nouns(VerbId(i)).next().is_none() {
                return Err(OntologyError::RequiredNounUnsatisfiable(verb.id.clone()));
            }
        }
        Ok(ontology)
    }

    pub fn num_verbs(&self) -> usize {
        self.verbs.len()
    }

    pub fn num_nouns(&self) -> usize {
        self.nouns.len()
    }

    pub fn verbs(&self) -> &[VerbDef] {
        &self.verbs
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    pub fn verb(&self, v: VerbId) -> &VerbDef {
        &self.verbs[v.0]
    }

    pub fn verb_ids(&self) -> impl Iterator<Item = VerbId> {
        (0..self.verbs.len()).map(VerbId)
    }

    pub fn noun_ids(&self) -> impl Iterator<Item = NounId> {
        (0..self.nouns.len()).map(NounId)
    }

    pub fn verb_index(&self, id: &str) -> Option<VerbId> {
        self.verbs.iter().position(|v| v.id == id).map(VerbId)
    }

    pub fn noun_index(&self, id: &str) -> Option<NounId> {
        self.nouns.iter().position(|n| n == id).map(NounId)
    }

    pub fn verb_name(&self, v: VerbId) -> &str {
        &self.verbs[v.0].id
    }

    pub fn noun_name(&self, n: NounId) -> &str {
        &self.nouns[n.0]
    }

    pub fn is_valid_pair(&self, v: VerbId, n: NounId) -> bool {
        self.valid.contains(&(v, n))
    }

    pub fn valid_pairs(&self) -> impl Iterator<Item = (VerbId, NounId)> + '_ {
        self.valid.iter().copied()
    }

    pub fn valid_nouns(&self, v: VerbId) -> impl Iterator<Item = NounId> + '_ {
        self.valid
            .range((v, NounId(0))..=(v, NounId(usize::MAX)))
            .map(|&(_, n)| n)
    }

    pub fn noun_required(&self, v: VerbId) -> bool {
        self.verbs[v.0].noun_required
    }

    pub fn phase_family(&self, v: VerbId) -> PhaseFamily {
        self.verbs[v.0].phase_family
    }

    pub fn template_ratio(&self, family: PhaseFamily) -> f64 {
        self.template_ratio[family.index()]
    }

    pub fn template_ratios(&self) -> [f64; 4] {
        self.template_ratio
    }

    /// Whether `noun` is an admissible completion for `verb`.
    pub fn admits(&self, verb: VerbId, noun: NounValue) -> bool {
        match noun {
            NounValue::NoNoun => !self.noun_required(verb),
            NounValue::Noun(n) => self.is_valid_pair(verb, n),
        }
    }
}

/// A complete interaction event for one hand.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub hand: Hand,
    pub t_s: Frame,
    pub t_o: Frame,
    pub t_e: Frame,
    pub verb: VerbId,
    pub noun: NounValue,
}

impl Event {
    pub fn partial(&self) -> PartialEvent {
        PartialEvent {
            hand: self.hand,
            t_s: Some(self.t_s),
            t_o: Some(self.t_o),
            t_e: Some(self.t_e),
            verb: Some(self.verb),
            noun: Some(self.noun),
        }
    }
}

/// An event with per-field optional values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialEvent {
    pub hand: Hand,
    pub t_s: Option<Frame>,
    pub t_o: Option<Frame>,
    pub t_e: Option<Frame>,
    pub verb: Option<VerbId>,
    pub noun: Option<NounValue>,
}

impl PartialEvent {
    pub fn empty(hand: Hand) -> Self {
        PartialEvent {
            hand,
            t_s: None,
            t_o: None,
            t_e: None,
            verb: None,
            noun: None,
        }
    }

    pub fn get(&self, field: Field) -> Option<FieldValue> {
        match field {
            Field::Start => self.t_s.map(FieldValue::Frame),
            Field::Onset => self.t_o.map(FieldValue::Frame),
            Field::End => self.t_e.map(FieldValue::Frame),
            Field::Verb => self.verb.map(FieldValue::Verb),
            Field::Noun => self.noun.map(FieldValue::Noun),
        }
    }

    fn put(&mut self, field: Field, value: Option<FieldValue>) {
        match (field, value) {
            (Field::Start, v) => self.t_s = v.and_then(FieldValue::frame),
            (Field::Onset, v) => self.t_o = v.and_then(FieldValue::frame),
            (Field::End, v) => self.t_e = v.and_then(FieldValue::frame),
            (Field::Verb, v) => self.verb = v.and_then(FieldValue::verb),
            (Field::Noun, v) => self.noun = v.and_then(FieldValue::noun),
        }
    }

    /// Returns the complete event when every field is set.
    pub fn complete(&self) -> Option<Event> {
        Some(Event {
            hand: self.hand,
            t_s: self.t_s?,
            t_o: self.t_o?,
            t_e: self.t_e?,
            verb: self.verb?,
            noun: self.noun?,
        })
    }
}

/// The five editable fields. `b` is derived from the noun slot and never
/// stored on its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "t_s")]
    Start,
    #[serde(rename = "t_o")]
    Onset,
    #[serde(rename = "t_e")]
    End,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "n")]
    Noun,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::Start, Field::Onset, Field::End, Field::Verb, Field::Noun];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, Field::Start | Field::Onset | Field::End)
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::Start => "t_s",
            Field::Onset => "t_o",
            Field::End => "t_e",
            Field::Verb => "v",
            Field::Noun => "n",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldValue {
    Frame(Frame),
    Verb(VerbId),
    Noun(NounValue),
}

impl FieldValue {
    pub fn frame(self) -> Option<Frame> {
        match self {
            FieldValue::Frame(f) => Some(f),
            _ => None,
        }
    }

    pub fn verb(self) -> Option<VerbId> {
        match self {
            FieldValue::Verb(v) => Some(v),
            _ => None,
        }
    }

    pub fn noun(self) -> Option<NounValue> {
        match self {
            FieldValue::Noun(n) => Some(n),
            _ => None,
        }
    }

    fn fits(self, field: Field) -> bool {
        match self {
            FieldValue::Frame(_) => field.is_temporal(),
            FieldValue::Verb(_) => field == Field::Verb,
            FieldValue::Noun(_) => field == Field::Noun,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatus {
    #[default]
    Empty,
    Suggested,
    Confirmed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Human,
    Machine,
    Oracle,
}

impl Origin {
    /// Human and oracle writes carry confirming authority; machine writes never do.
    pub fn confirms(self) -> bool {
        !matches!(self, Origin::Machine)
    }
}

/// Where a field value came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub origin: Origin,
    pub step: u64,
    pub intervention: Option<u64>,
    /// Authority and surface of the intervention that produced the value.
    pub via: Option<(Authority, Surface)>,
}

impl Provenance {
    pub fn new(origin: Origin, step: u64) -> Self {
        Provenance {
            origin,
            step,
            intervention: None,
            via: None,
        }
    }

    pub fn human(step: u64) -> Self {
        Self::new(Origin::Human, step)
    }

    pub fn machine(step: u64) -> Self {
        Self::new(Origin::Machine, step)
    }

    pub fn oracle(step: u64) -> Self {
        Self::new(Origin::Oracle, step)
    }

    pub fn with_intervention(mut self, id: u64, authority: Authority, surface: Surface) -> Self {
        self.intervention = Some(id);
        self.via = Some((authority, surface));
        self
    }
}

/// Value, status and provenance of one field.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSlot {
    pub value: Option<FieldValue>,
    pub status: FieldStatus,
    pub provenance: Option<Provenance>,
    /// Machine proposals the annotator turned down for this field.
    #[serde(default)]
    pub rejected: Vec<FieldValue>,
    /// Number of human-origin writes so far.
    #[serde(default)]
    pub human_edits: u32,
}

impl FieldSlot {
    pub fn is_locked(&self) -> bool {
        self.status == FieldStatus::Confirmed
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("invalid span: start {t_s} after end {t_e}")]
    InvalidSpan { t_s: Frame, t_e: Frame },
    #[error("machine write to locked field {0}")]
    LockViolation(Field),
    #[error("ontology violation: {0}")]
    OntologyViolation(Violation),
    #[error("temporal violation: {0}")]
    TemporalViolation(Violation),
    #[error("field {0} has no value")]
    MissingValue(Field),
    #[error("value {value:?} does not fit field {field}")]
    TypeMismatch { field: Field, value: FieldValue },
    #[error("{0:?} origin cannot confirm a field")]
    NotConfirmingOrigin(Origin),
}

/// One violated constraint of a (partial) event.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    Ordering { earlier: Field, later: Field },
    InvalidPair { verb: VerbId, noun: NounId },
    NounRequired { verb: VerbId },
    UnknownVerb { verb: VerbId },
    UnknownNoun { noun: NounId },
}

impl Violation {
    pub fn is_temporal(&self) -> bool {
        matches!(self, Violation::Ordering { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Ordering { earlier, later } => write!(f, "{earlier} must not exceed {later}"),
            Violation::InvalidPair { verb, noun } => {
                write!(f, "pair (verb #{}, noun #{}) is not valid", verb.0, noun.0)
            }
            Violation::NounRequired { verb } => write!(f, "verb #{} requires a noun", verb.0),
            Violation::UnknownVerb { verb } => write!(f, "unknown verb #{}", verb.0),
            Violation::UnknownNoun { noun } => write!(f, "unknown noun #{}", noun.0),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks ordering, pair validity and the noun requirement over whichever
/// fields are set. Unset fields never violate anything.
pub fn check_validity(event: &PartialEvent, ontology: &Ontology) -> ValidityReport {
    let mut violations = Vec::new();
    let temporal = [
        (Field::Start, event.t_s),
        (Field::Onset, event.t_o),
        (Field::End, event.t_e),
    ];
    for i in 0..temporal.len() {
        for j in i + 1..temporal.len() {
            if let (Some(a), Some(b)) = (temporal[i].1, temporal[j].1) {
                if a > b {
                    violations.push(Violation::Ordering {
                        earlier: temporal[i].0,
                        later: temporal[j].0,
                    });
                }
            }
        }
    }
    let verb = match event.verb {
        Some(v) if v.0 >= ontology.num_verbs() => {
            violations.push(Violation::UnknownVerb { verb: v });
            None
        }
        other => other,
    };
    if let Some(NounValue::Noun(n)) = event.noun {
        if n.0 >= ontology.num_nouns() {
            violations.push(Violation::UnknownNoun { noun: n });
            return ValidityReport { violations };
        }
    }
    if let (Some(v), Some(noun)) = (verb, event.noun) {
        match noun {
            NounValue::Noun(n) if !ontology.is_valid_pair(v, n) => {
                violations.push(Violation::InvalidPair { verb: v, noun: n });
            }
            NounValue::NoNoun if ontology.noun_required(v) => {
                violations.push(Violation::NounRequired { verb: v });
            }
            _ => {}
        }
    }
    ValidityReport { violations }
}

/// Locked variables of the completion target with their confirmed values.
///
/// `has_noun` is the indicator `b`; it is locked whenever the noun slot is
/// locked, and may also be locked on its own.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockSet {
    pub t_s: Option<Frame>,
    pub t_o: Option<Frame>,
    pub t_e: Option<Frame>,
    pub verb: Option<VerbId>,
    pub has_noun: Option<bool>,
    pub noun: Option<NounId>,
}

impl LockSet {
    pub fn is_empty(&self) -> bool {
        *self == LockSet::default()
    }

    pub fn lock_noun(&mut self, noun: NounValue) {
        self.has_noun = Some(noun.has_noun());
        self.noun = noun.noun();
    }

    /// Whether every lock in `self` is also present, with the same value, in `other`.
    pub fn is_subset_of(&self, other: &LockSet) -> bool {
        fn sub<T: PartialEq>(a: &Option<T>, b: &Option<T>) -> bool {
            a.is_none() || a == b
        }
        sub(&self.t_s, &other.t_s)
            && sub(&self.t_o, &other.t_o)
            && sub(&self.t_e, &other.t_e)
            && sub(&self.verb, &other.verb)
            && sub(&self.has_noun, &other.has_noun)
            && sub(&self.noun, &other.noun)
    }

    pub fn len(&self) -> usize {
        [
            self.t_s.is_some(),
            self.t_o.is_some(),
            self.t_e.is_some(),
            self.verb.is_some(),
            self.has_noun.is_some(),
            self.noun.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }
}

/// Editable per-hand event: values, statuses and provenance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventState {
    hand: Hand,
    slots: [FieldSlot; 5],
}

impl EventState {
    /// A timeline-created span. Start and end carry human provenance at
    /// Suggested status until someone confirms them.
    pub fn new(hand: Hand, t_s: Frame, t_e: Frame) -> Result<Self, EventError> {
        if t_s > t_e {
            return Err(EventError::InvalidSpan { t_s, t_e });
        }
        let mut slots: [FieldSlot; 5] = Default::default();
        for (field, value) in [(Field::Start, t_s), (Field::End, t_e)] {
            slots[field.index()] = FieldSlot {
                value: Some(FieldValue::Frame(value)),
                status: FieldStatus::Suggested,
                provenance: Some(Provenance::human(0)),
                rejected: Vec::new(),
                human_edits: 0,
            };
        }
        Ok(EventState { hand, slots })
    }

    pub fn hand(&self) -> Hand {
        self.hand
    }

    pub fn slot(&self, field: Field) -> &FieldSlot {
        &self.slots[field.index()]
    }

    pub fn slots(&self) -> &[FieldSlot; 5] {
        &self.slots
    }

    pub fn value(&self, field: Field) -> Option<FieldValue> {
        self.slot(field).value
    }

    pub fn status(&self, field: Field) -> FieldStatus {
        self.slot(field).status
    }

    pub fn is_locked(&self, field: Field) -> bool {
        self.slot(field).is_locked()
    }

    pub fn t_s(&self) -> Option<Frame> {
        self.value(Field::Start).and_then(FieldValue::frame)
    }

    pub fn t_o(&self) -> Option<Frame> {
        self.value(Field::Onset).and_then(FieldValue::frame)
    }

    pub fn t_e(&self) -> Option<Frame> {
        self.value(Field::End).and_then(FieldValue::frame)
    }

    pub fn verb(&self) -> Option<VerbId> {
        self.value(Field::Verb).and_then(FieldValue::verb)
    }

    pub fn noun(&self) -> Option<NounValue> {
        self.value(Field::Noun).and_then(FieldValue::noun)
    }

    /// The event window `[t_s, t_e]`, when both ends are set.
    pub fn window(&self) -> Option<Window> {
        Window::new(self.t_s()?, self.t_e()?)
    }

    pub fn partial(&self) -> PartialEvent {
        let mut event = PartialEvent::empty(self.hand);
        for field in Field::ALL {
            event.put(field, self.value(field));
        }
        event
    }

    pub fn open_fields(&self) -> impl Iterator<Item = Field> + '_ {
        Field::ALL.into_iter().filter(|&f| !self.is_locked(f))
    }

    pub fn is_fully_confirmed(&self) -> bool {
        Field::ALL.iter().all(|&f| self.is_locked(f))
    }

    pub fn lock_set(&self) -> LockSet {
        let mut locks = LockSet::default();
        for field in Field::ALL {
            if !self.is_locked(field) {
                continue;
            }
            match self.value(field) {
                Some(FieldValue::Frame(t)) => match field {
                    Field::Start => locks.t_s = Some(t),
                    Field::Onset => locks.t_o = Some(t),
                    _ => locks.t_e = Some(t),
                },
                Some(FieldValue::Verb(v)) => locks.verb = Some(v),
                Some(FieldValue::Noun(n)) => locks.lock_noun(n),
                None => {}
            }
        }
        locks
    }

    /// Writes a value. Human and oracle writes confirm and lock; machine
    /// writes land as Suggested and may never touch a locked field.
    pub fn set_field(
        &self,
        field: Field,
        value: FieldValue,
        provenance: Provenance,
        ontology: &Ontology,
    ) -> Result<EventState, EventError> {
        if !value.fits(field) {
            return Err(EventError::TypeMismatch { field, value });
        }
        if self.is_locked(field) && !provenance.origin.confirms() {
            return Err(EventError::LockViolation(field));
        }
        let mut candidate = self.partial();
        candidate.put(field, Some(value));
        if let Some(first) = check_validity(&candidate, ontology).violations.into_iter().next() {
            return Err(if first.is_temporal() {
                EventError::TemporalViolation(first)
            } else {
                EventError::OntologyViolation(first)
            });
        }
        let mut next = self.clone();
        let slot = &mut next.slots[field.index()];
        slot.value = Some(value);
        slot.provenance = Some(provenance);
        if provenance.origin.confirms() {
            slot.status = FieldStatus::Confirmed;
            slot.human_edits += 1;
        } else {
            slot.status = FieldStatus::Suggested;
        }
        Ok(next)
    }

    /// Promotes a field to Confirmed. Confirming a Confirmed field is a no-op.
    pub fn confirm_field(&self, field: Field, provenance: Provenance) -> Result<EventState, EventError> {
        if !provenance.origin.confirms() {
            return Err(EventError::NotConfirmingOrigin(provenance.origin));
        }
        let slot = self.slot(field);
        if slot.value.is_none() {
            return Err(EventError::MissingValue(field));
        }
        if slot.is_locked() {
            return Ok(self.clone());
        }
        let mut next = self.clone();
        let slot = &mut next.slots[field.index()];
        slot.status = FieldStatus::Confirmed;
        slot.provenance = Some(provenance);
        Ok(next)
    }

    /// Empties an unlocked field.
    pub fn clear_field(&self, field: Field) -> Result<EventState, EventError> {
        if self.is_locked(field) {
            return Err(EventError::LockViolation(field));
        }
        let mut next = self.clone();
        let slot = &mut next.slots[field.index()];
        slot.value = None;
        slot.status = FieldStatus::Empty;
        slot.provenance = None;
        Ok(next)
    }

    /// Records that `value` was proposed for `field` and turned down.
    pub fn note_rejection(&self, field: Field, value: FieldValue) -> EventState {
        let mut next = self.clone();
        let rejected = &mut next.slots[field.index()].rejected;
        if !rejected.contains(&value) {
            rejected.push(value);
        }
        next
    }

    /// Clears unlocked fields that would conflict with writing `value` into
    /// `field`, so a human write is never blocked by a stale suggestion.
    pub fn retract_conflicts(&self, field: Field, value: FieldValue, ontology: &Ontology) -> EventState {
        let mut state = self.clone();
        for other in Field::ALL {
            if other == field || state.is_locked(other) || state.value(other).is_none() {
                continue;
            }
            let mut probe = state.partial();
            probe.put(field, Some(value));
            let with = check_validity(&probe, ontology).violations.len();
            probe.put(other, None);
            let without = check_validity(&probe, ontology).violations.len();
            if without < with {
                state = state.clear_field(other).expect("unlocked field");
            }
        }
        state
    }

    /// Overwrites a slot verbatim. Used by log replay only.
    pub(crate) fn restore_slot(&mut self, field: Field, slot: FieldSlot) {
        self.slots[field.index()] = slot;
    }
}
