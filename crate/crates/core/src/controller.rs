//! Trust-calibrated supervisory controller.
//!
//! Each step builds a control state from the event, the decoded hypothesis
//! and the onset prior, enumerates candidate interventions, estimates their
//! utility, propagation gain, cost and risk, calibrates those against the
//! interaction history, drops anything unsafe, and picks the best.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::completion::DecodedHypothesis;
use crate::event::{EventState, Field, FieldStatus, FieldValue, NounValue, Origin, VerbId};
use crate::hop::OnsetPrior;
use crate::ingest::{onset_bin, StatisticsBundle};

/// Machine permission tier, lowest first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Authority {
    HumanOnly,
    HumanConfirm,
    SafeLocal,
}

impl Authority {
    pub const ALL: [Authority; 3] = [Authority::HumanOnly, Authority::HumanConfirm, Authority::SafeLocal];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    TimelineQuery,
    ChoicePrompt,
    SuggestionCard,
    SilentApply,
}

/// One value per surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTable {
    pub timeline_query: f64,
    pub choice_prompt: f64,
    pub suggestion_card: f64,
    pub silent_apply: f64,
}

impl SurfaceTable {
    pub fn get(&self, s: Surface) -> f64 {
        match s {
            Surface::TimelineQuery => self.timeline_query,
            Surface::ChoicePrompt => self.choice_prompt,
            Surface::SuggestionCard => self.suggestion_card,
            Surface::SilentApply => self.silent_apply,
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.timeline_query, self.choice_prompt, self.suggestion_card, self.silent_apply]
    }
}

/// One value per authority level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuthorityTable {
    pub human_only: f64,
    pub human_confirm: f64,
    pub safe_local: f64,
}

impl AuthorityTable {
    pub fn get(&self, a: Authority) -> f64 {
        match a {
            Authority::HumanOnly => self.human_only,
            Authority::HumanConfirm => self.human_confirm,
            Authority::SafeLocal => self.safe_local,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    /// Highest authority the controller may use.
    pub max_authority: Authority,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            max_authority: Authority::SafeLocal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Weights on utility, calibrated gain, calibrated cost and calibrated risk.
    pub lambda: [f64; 4],
    pub base_cost: SurfaceTable,
    /// Expected response latency per surface, in seconds.
    pub base_latency: SurfaceTable,
    pub risk_multiplier: AuthorityTable,
    /// Extra cost per additional field in a bundle, as a fraction of base.
    pub bundle_cost_step: f64,
    /// Silent application needs at least this top confidence on every target.
    pub safe_local_min_confidence: f64,
    /// A statistics link counts toward propagation gain when the induced
    /// distribution's normalized entropy is below this.
    pub link_entropy_threshold: f64,
    /// Bins used to summarize onset confidence.
    pub onset_bins: usize,
    pub policy: Policy,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            lambda: [1.0; 4],
            base_cost: SurfaceTable {
                timeline_query: 0.6,
                choice_prompt: 0.4,
                suggestion_card: 0.2,
                silent_apply: 0.05,
            },
            base_latency: SurfaceTable {
                timeline_query: 6.0,
                choice_prompt: 4.0,
                suggestion_card: 2.0,
                silent_apply: 0.5,
            },
            risk_multiplier: AuthorityTable {
                human_only: 0.0,
                human_confirm: 0.5,
                safe_local: 1.5,
            },
            bundle_cost_step: 0.5,
            safe_local_min_confidence: 0.9,
            link_entropy_threshold: 0.9,
            onset_bins: 10,
            policy: Policy::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("no executable candidate")]
    NoExecutableCandidate,
    #[error("invalid controller config: {0}")]
    Config(String),
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let bad = |what: &str| Err(ControllerError::Config(what.into()));
        if self.lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return bad("lambda weights must be finite and non-negative");
        }
        if self.base_cost.values().iter().any(|c| !c.is_finite() || *c < 0.0) {
            return bad("base costs must be finite and non-negative");
        }
        if self.base_latency.values().iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return bad("base latencies must be positive");
        }
        let r = self.risk_multiplier;
        if [r.human_only, r.human_confirm, r.safe_local].iter().any(|m| !m.is_finite() || *m < 0.0) {
            return bad("risk multipliers must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.safe_local_min_confidence) || !(0.0..=1.0).contains(&self.link_entropy_threshold) {
            return bad("confidence and entropy thresholds must lie in [0, 1]");
        }
        if self.onset_bins == 0 {
            return bad("onset_bins must be at least 1");
        }
        Ok(())
    }
}

/// Top probability and its margin over the runner-up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub top: f64,
    pub margin: f64,
}

impl Confidence {
    pub const CERTAIN: Confidence = Confidence { top: 1.0, margin: 1.0 };

    pub fn of(dist: &[f64]) -> Self {
        let mut top = 0.0f64;
        let mut second = 0.0f64;
        for &p in dist {
            if p > top {
                second = top;
                top = p;
            } else if p > second {
                second = p;
            }
        }
        Confidence {
            top,
            margin: top - second,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldControl {
    pub field: Field,
    pub status: FieldStatus,
    pub locked: bool,
    pub value: Option<FieldValue>,
    pub origin: Option<Origin>,
    /// What the machine would propose for this field.
    pub proposal: Option<FieldValue>,
    pub confidence: Confidence,
    pub human_edits: u32,
    pub rejected: Vec<FieldValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub fields: Vec<FieldControl>,
    pub has_track: bool,
    pub hop_emitted: bool,
    pub kappa: f64,
}

impl ControlState {
    pub fn field(&self, f: Field) -> &FieldControl {
        &self.fields[f.index()]
    }

    pub fn open_fields(&self) -> impl Iterator<Item = &FieldControl> {
        self.fields.iter().filter(|f| !f.locked)
    }
}

fn pooled_onset(onset: &[f64], window: crate::event::Window, bins: usize) -> Vec<f64> {
    let mut pooled = vec![0.0; bins];
    for (t, p) in window.frames().zip(onset) {
        pooled[onset_bin(window.start, t, window.end, bins)] += p;
    }
    pooled
}

pub fn build_control_state(
    state: &EventState,
    hypothesis: Option<&DecodedHypothesis>,
    prior: Option<&OnsetPrior>,
    has_track: bool,
    config: &ControllerConfig,
) -> ControlState {
    let fields = Field::ALL
        .iter()
        .map(|&field| {
            let slot = state.slot(field);
            let (proposal, confidence) = match (field, hypothesis) {
                (Field::Start | Field::End, _) => (slot.value, Confidence::CERTAIN),
                (_, None) => (None, Confidence { top: 0.0, margin: 0.0 }),
                (Field::Onset, Some(h)) => (
                    Some(FieldValue::Frame(h.t_o)),
                    Confidence::of(&pooled_onset(&h.posterior.onset, h.posterior.window, config.onset_bins)),
                ),
                (Field::Verb, Some(h)) => (Some(FieldValue::Verb(h.verb)), Confidence::of(&h.posterior.verb)),
                (Field::Noun, Some(h)) => {
                    let p = &h.posterior;
                    let dist: Vec<f64> = std::iter::once(p.has_noun[0])
                        .chain(p.noun.iter().map(|x| x * p.has_noun[1]))
                        .collect();
                    (Some(FieldValue::Noun(h.noun)), Confidence::of(&dist))
                }
            };
            FieldControl {
                field,
                status: slot.status,
                locked: slot.is_locked(),
                value: slot.value,
                origin: slot.provenance.map(|p| p.origin),
                proposal,
                confidence,
                human_edits: slot.human_edits,
                rejected: slot.rejected.clone(),
            }
        })
        .collect();
    ControlState {
        fields,
        has_track,
        hop_emitted: prior.is_some(),
        kappa: prior.map_or(0.0, |p| p.reliability),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub field: Field,
    pub value: FieldValue,
}

/// A candidate supervisory action.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Intervention {
    pub targets: Vec<Field>,
    pub surface: Surface,
    pub authority: Authority,
    /// Proposed values, aligned with `targets`; empty for human-only queries.
    pub payload: Vec<Assignment>,
}

impl Intervention {
    pub fn is_bundle(&self) -> bool {
        self.targets.len() > 1
    }

    pub fn proposed(&self, field: Field) -> Option<FieldValue> {
        self.payload.iter().find(|a| a.field == field).map(|a| a.value)
    }

    fn sort_key(&self) -> (Authority, usize, Surface, usize) {
        (
            self.authority,
            self.targets.first().map_or(usize::MAX, |f| f.index()),
            self.surface,
            self.targets.len(),
        )
    }
}

const BUNDLE_FIELDS: [Field; 3] = [Field::Onset, Field::Verb, Field::Noun];

/// Per open field a human-only query, a suggestion and a silent
/// application, plus one suggestion bundle when two or more of onset, verb
/// and noun are open.
pub fn enumerate_candidates(c: &ControlState) -> Vec<Intervention> {
    let mut out = Vec::new();
    for f in c.open_fields() {
        let query = if f.field.is_temporal() {
            Surface::TimelineQuery
        } else {
            Surface::ChoicePrompt
        };
        out.push(Intervention {
            targets: vec![f.field],
            surface: query,
            authority: Authority::HumanOnly,
            payload: Vec::new(),
        });
        if let Some(value) = f.proposal {
            let payload = vec![Assignment { field: f.field, value }];
            out.push(Intervention {
                targets: vec![f.field],
                surface: Surface::SuggestionCard,
                authority: Authority::HumanConfirm,
                payload: payload.clone(),
            });
            out.push(Intervention {
                targets: vec![f.field],
                surface: Surface::SilentApply,
                authority: Authority::SafeLocal,
                payload,
            });
        }
    }
    let bundle: Vec<&FieldControl> = BUNDLE_FIELDS
        .iter()
        .map(|&f| c.field(f))
        .filter(|f| !f.locked && f.proposal.is_some())
        .collect();
    if bundle.len() >= 2 {
        out.push(Intervention {
            targets: bundle.iter().map(|f| f.field).collect(),
            surface: Surface::SuggestionCard,
            authority: Authority::HumanConfirm,
            payload: bundle
                .iter()
                .map(|f| Assignment {
                    field: f.field,
                    value: f.proposal.expect("filtered"),
                })
                .collect(),
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub utility: f64,
    pub gain: f64,
    pub cost: f64,
    pub risk: f64,
}

fn status_weight(s: FieldStatus) -> f64 {
    match s {
        FieldStatus::Empty => 0.0,
        FieldStatus::Suggested => 0.5,
        FieldStatus::Confirmed => 1.0,
    }
}

/// Shannon entropy divided by `ln(len)`; 0 for a single outcome.
pub fn normalized_entropy(dist: &[f64]) -> f64 {
    let total: f64 = dist.iter().sum();
    if dist.len() < 2 || total <= 0.0 {
        return 0.0;
    }
    let h: f64 = dist
        .iter()
        .map(|p| p / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    h / (dist.len() as f64).ln()
}

/// Distribution over `to` induced by fixing `from` to `value` through the
/// statistics bundle, when such a link exists.
fn linked_distribution(
    from: Field,
    value: FieldValue,
    to: Field,
    state: &ControlState,
    stats: &StatisticsBundle,
) -> Option<Vec<f64>> {
    match (from, value, to) {
        (Field::Verb, FieldValue::Verb(v), Field::Noun) => Some(
            std::iter::once(stats.no_noun_rate(v))
                .chain(stats.cooccurrence_row(v).iter().copied())
                .collect(),
        ),
        (Field::Verb, FieldValue::Verb(v), Field::Onset) => Some(stats.verb_onset_prior(v).to_vec()),
        (Field::Noun, FieldValue::Noun(NounValue::Noun(n)), Field::Verb) => {
            Some((0..stats.num_verbs()).map(|v| stats.cooccurrence(VerbId(v), n)).collect())
        }
        (Field::Noun, FieldValue::Noun(NounValue::Noun(n)), Field::Onset) => Some(stats.noun_onset_prior(n).to_vec()),
        (Field::Onset, FieldValue::Frame(t), Field::Verb | Field::Noun) => {
            let (s, e) = match (state.field(Field::Start).value, state.field(Field::End).value) {
                (Some(FieldValue::Frame(s)), Some(FieldValue::Frame(e))) => (s, e),
                _ => return None,
            };
            let bin = onset_bin(s, t, e, stats.bins());
            if to == Field::Verb {
                Some((0..stats.num_verbs()).map(|v| stats.verb_onset_prior(VerbId(v))[bin]).collect())
            } else {
                Some(
                    (0..stats.num_nouns())
                        .map(|n| stats.noun_onset_prior(crate::event::NounId(n))[bin])
                        .collect(),
                )
            }
        }
        _ => None,
    }
}

/// Raw utility, propagation gain, cost and risk of one candidate.
///
/// Utility sums, over targets, the top confidence weighted by how far the
/// field is from confirmed. Gain is the fraction of the two possible
/// statistics links per target into still-open, untargeted fields whose
/// induced distribution is sharp. Cost is the surface's base cost, grown
/// per extra bundled field. Risk is `(1 − confidence)` times the
/// authority's multiplier, worst target first.
pub fn estimate(xi: &Intervention, c: &ControlState, stats: &StatisticsBundle, config: &ControllerConfig) -> Estimate {
    let utility = xi
        .targets
        .iter()
        .map(|&f| {
            let fc = c.field(f);
            (1.0 - status_weight(fc.status)) * fc.confidence.top
        })
        .sum();
    let mut links = 0usize;
    let mut slots = 0usize;
    for &f in &xi.targets {
        if !BUNDLE_FIELDS.contains(&f) {
            continue;
        }
        slots += 2;
        let Some(value) = c.field(f).proposal else { continue };
        for to in BUNDLE_FIELDS {
            if to == f || xi.targets.contains(&to) || c.field(to).locked {
                continue;
            }
            if let Some(dist) = linked_distribution(f, value, to, c, stats) {
                if normalized_entropy(&dist) < config.link_entropy_threshold {
                    links += 1;
                }
            }
        }
    }
    let gain = if slots == 0 { 0.0 } else { links as f64 / slots as f64 };
    let extra = xi.targets.len().saturating_sub(1) as f64;
    let cost = config.base_cost.get(xi.surface) * (1.0 + config.bundle_cost_step * extra);
    let risk = xi
        .targets
        .iter()
        .map(|&f| (1.0 - c.field(f).confidence.top).max(0.0))
        .fold(0.0, f64::max)
        * config.risk_multiplier.get(xi.authority);
    Estimate {
        utility,
        gain,
        cost,
        risk,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CalibrationKey {
    pub field: Field,
    pub authority: Authority,
    pub surface: Surface,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub accepts: u64,
    pub rejects: u64,
    pub overrides: u64,
    /// Exponential moving average of response latency in seconds.
    pub cost_ema: Option<f64>,
}

impl CalibrationEntry {
    /// `(accepts + 1) / (accepts + rejects + 2)`.
    pub fn accept_rate(&self) -> f64 {
        (self.accepts as f64 + 1.0) / ((self.accepts + self.rejects) as f64 + 2.0)
    }

    /// `(overrides + 1) / (accepts + 2)`.
    pub fn override_rate(&self) -> f64 {
        (self.overrides as f64 + 1.0) / (self.accepts as f64 + 2.0)
    }
}

pub const COST_EMA_DECAY: f64 = 0.9;

/// Interaction statistics per (field, authority, surface).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "CalibrationDocument", into = "CalibrationDocument")]
pub struct CalibrationStore {
    entries: BTreeMap<CalibrationKey, CalibrationEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CalibrationDocument {
    entries: Vec<(CalibrationKey, CalibrationEntry)>,
}

impl From<CalibrationDocument> for CalibrationStore {
    fn from(doc: CalibrationDocument) -> Self {
        CalibrationStore {
            entries: doc.entries.into_iter().collect(),
        }
    }
}

impl From<CalibrationStore> for CalibrationDocument {
    fn from(store: CalibrationStore) -> Self {
        CalibrationDocument {
            entries: store.entries.into_iter().collect(),
        }
    }
}

impl CalibrationStore {
    pub fn entry(&self, key: CalibrationKey) -> CalibrationEntry {
        self.entries.get(&key).copied().unwrap_or_default()
    }

    fn entry_mut(&mut self, key: CalibrationKey) -> &mut CalibrationEntry {
        self.entries.entry(key).or_default()
    }

    pub fn record_accept(&mut self, key: CalibrationKey) {
        self.entry_mut(key).accepts += 1;
    }

    pub fn record_reject(&mut self, key: CalibrationKey) {
        self.entry_mut(key).rejects += 1;
    }

    pub fn record_override(&mut self, key: CalibrationKey) {
        self.entry_mut(key).overrides += 1;
    }

    pub fn record_latency(&mut self, key: CalibrationKey, seconds: f64) {
        let e = self.entry_mut(key);
        e.cost_ema = Some(match e.cost_ema {
            None => seconds,
            Some(prev) => COST_EMA_DECAY * prev + (1.0 - COST_EMA_DECAY) * seconds,
        });
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CalibrationKey, &CalibrationEntry)> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn calibration_keys(xi: &Intervention) -> impl Iterator<Item = CalibrationKey> + '_ {
    xi.targets.iter().map(|&field| CalibrationKey {
        field,
        authority: xi.authority,
        surface: xi.surface,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibrated {
    pub gain: f64,
    pub cost: f64,
    pub risk: f64,
}

/// Scales gain by the smoothed acceptance rate, blends cost half and half
/// with the latency average relative to the surface's expected latency, and
/// inflates risk by the smoothed override rate. Bundles average the rates
/// of their targets' keys.
pub fn calibrate(xi: &Intervention, raw: &Estimate, store: &CalibrationStore, config: &ControllerConfig) -> Calibrated {
    let entries: Vec<CalibrationEntry> = calibration_keys(xi).map(|k| store.entry(k)).collect();
    let n = entries.len().max(1) as f64;
    let accept = entries.iter().map(CalibrationEntry::accept_rate).sum::<f64>() / n;
    let overrides = entries.iter().map(CalibrationEntry::override_rate).sum::<f64>() / n;
    let latencies: Vec<f64> = entries.iter().filter_map(|e| e.cost_ema).collect();
    let cost = if latencies.is_empty() {
        raw.cost
    } else {
        let ema = latencies.iter().sum::<f64>() / latencies.len() as f64;
        raw.cost * (0.5 + 0.5 * ema / config.base_latency.get(xi.surface))
    };
    Calibrated {
        gain: raw.gain * accept,
        cost,
        risk: raw.risk * (1.0 + overrides),
    }
}

pub fn supervisory_score(utility: f64, cal: &Calibrated, lambda: &[f64; 4]) -> f64 {
    lambda[0] * utility + lambda[1] * cal.gain - lambda[2] * cal.cost - lambda[3] * cal.risk
}

/// Why a candidate left the safe set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    Locked,
    Policy,
    LowConfidence,
    NoOp,
    Rejected,
}

pub fn exclusion(xi: &Intervention, c: &ControlState, config: &ControllerConfig) -> Option<Exclusion> {
    if xi.targets.iter().any(|&f| c.field(f).locked) {
        return Some(Exclusion::Locked);
    }
    if xi.authority > config.policy.max_authority {
        return Some(Exclusion::Policy);
    }
    if xi.authority == Authority::SafeLocal {
        if xi
            .targets
            .iter()
            .any(|&f| c.field(f).confidence.top < config.safe_local_min_confidence)
        {
            return Some(Exclusion::LowConfidence);
        }
        if xi.payload.iter().all(|a| c.field(a.field).value == Some(a.value)) {
            return Some(Exclusion::NoOp);
        }
    }
    if xi.payload.iter().any(|a| c.field(a.field).rejected.contains(&a.value)) {
        return Some(Exclusion::Rejected);
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub intervention: Intervention,
    pub estimate: Estimate,
    pub calibrated: Calibrated,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: ScoredCandidate,
    pub safe_set: Vec<ScoredCandidate>,
}

/// Argmax of the supervisory score over the safe set. Ties go to lower
/// authority, then earlier field, then surface order, then fewer targets.
pub fn select_intervention(
    candidates: &[Intervention],
    c: &ControlState,
    stats: &StatisticsBundle,
    store: &CalibrationStore,
    config: &ControllerConfig,
) -> Result<Selection, ControllerError> {
    let safe_set: Vec<ScoredCandidate> = candidates
        .iter()
        .filter(|xi| exclusion(xi, c, config).is_none())
        .map(|xi| {
            let estimate = estimate(xi, c, stats, config);
            let calibrated = calibrate(xi, &estimate, store, config);
            ScoredCandidate {
                intervention: xi.clone(),
                estimate,
                score: supervisory_score(estimate.utility, &calibrated, &config.lambda),
                calibrated,
            }
        })
        .collect();
    let chosen = safe_set
        .iter()
        .reduce(|best, cand| {
            let better = cand.score > best.score
                || (cand.score == best.score && cand.intervention.sort_key() < best.intervention.sort_key());
            if better {
                cand
            } else {
                best
            }
        })
        .cloned()
        .ok_or(ControllerError::NoExecutableCandidate)?;
    Ok(Selection { chosen, safe_set })
}
