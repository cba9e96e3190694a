//! Ties the onset prior, completion and controller together for one event.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::completion::{
    assemble_representation, complete, softmax, CompletionError, Cues, DecodedHypothesis, Dims, Example,
    ReferenceAdapter, ScoreAdapter, Target,
};
use crate::config::EngineConfig;
use crate::controller::{
    build_control_state, enumerate_candidates, select_intervention, CalibrationStore, ControlState, ControllerError,
    Selection,
};
use crate::event::{Event, EventState, Hand, Ontology};
use crate::hop::{hand_onset_prior, HopReport, OnsetPrior, SemanticPrior};
use crate::ingest::{FeatureTable, HandTrack, StatisticsBundle};

/// Per-clip inputs: hand tracks and backbone features.
#[derive(Clone, Debug)]
pub struct Clip {
    pub id: String,
    pub tracks: Vec<HandTrack>,
    pub features: FeatureTable,
}

impl Clip {
    pub fn track(&self, hand: Hand) -> Option<&HandTrack> {
        self.tracks.iter().find(|t| t.hand == hand)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub semantic: Option<SemanticPrior>,
    pub hop: Option<HopReport>,
    pub prior: Option<OnsetPrior>,
    /// `None` when the locks admit no valid completion.
    pub hypothesis: Option<DecodedHypothesis>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub inference: Inference,
    pub control: ControlState,
    /// `None` when the safe set is empty and the event needs manual completion.
    pub selection: Option<Selection>,
}

#[derive(Clone)]
pub struct Engine {
    pub ontology: Ontology,
    pub stats: StatisticsBundle,
    pub adapter: Arc<dyn ScoreAdapter>,
    pub config: EngineConfig,
}

impl Engine {
    pub fn new(ontology: Ontology, stats: StatisticsBundle, adapter: Arc<dyn ScoreAdapter>, config: EngineConfig) -> Self {
        Engine {
            ontology,
            stats,
            adapter,
            config,
        }
    }

    /// Verb hypothesis from the adapter run without an onset band.
    pub fn semantic_prior(&self, state: &EventState, clip: &Clip) -> Result<SemanticPrior, CompletionError> {
        let repr = assemble_representation(state, None, &clip.features, &self.ontology, &Cues::default())?;
        let bundle = self.adapter.forward(&repr)?;
        Ok(SemanticPrior::from_verb_probs(&softmax(&bundle.verb), &self.ontology))
    }

    /// Runs the onset prior for `state` given a semantic prior. `None` when
    /// the clip has no track for the event's hand.
    pub fn hop(&self, state: &EventState, clip: &Clip, semantic: &SemanticPrior) -> Option<HopReport> {
        let window = state.window()?;
        let track = clip.track(state.hand())?;
        let other = clip.track(state.hand().other());
        Some(hand_onset_prior(track, other, window, semantic, &self.config.hop))
    }

    pub fn infer(&self, state: &EventState, clip: &Clip) -> Result<Inference, CompletionError> {
        let (semantic, hop) = if clip.track(state.hand()).is_some() {
            let semantic = self.semantic_prior(state, clip)?;
            let hop = self.hop(state, clip, &semantic);
            (Some(semantic), hop)
        } else {
            (None, None)
        };
        let prior = hop.as_ref().and_then(|h| h.outcome.prior());
        let repr = assemble_representation(state, prior.as_ref(), &clip.features, &self.ontology, &Cues::default())?;
        let hypothesis = match complete(
            &repr,
            self.adapter.as_ref(),
            &state.lock_set(),
            &self.ontology,
            &self.stats,
            &self.config.completion,
        ) {
            Ok(h) => Some(h),
            Err(CompletionError::InfeasibleLocks) => None,
            Err(e) => return Err(e),
        };
        Ok(Inference {
            semantic,
            hop,
            prior,
            hypothesis,
        })
    }

    /// Inference followed by candidate enumeration and selection.
    pub fn propose(&self, state: &EventState, clip: &Clip, store: &CalibrationStore) -> Result<Proposal, CompletionError> {
        let inference = self.infer(state, clip)?;
        let control = build_control_state(
            state,
            inference.hypothesis.as_ref(),
            inference.prior.as_ref(),
            clip.track(state.hand()).is_some(),
            &self.config.controller,
        );
        let candidates = enumerate_candidates(&control);
        let selection = match select_intervention(&candidates, &control, &self.stats, store, &self.config.controller) {
            Ok(s) => Some(s),
            Err(ControllerError::NoExecutableCandidate) => None,
            Err(ControllerError::Config(_)) => unreachable!("selection never reports config errors"),
        };
        Ok(Proposal {
            inference,
            control,
            selection,
        })
    }

    /// Training example for a reference event. The onset prior is computed
    /// from the gold verb so examples do not depend on the adapter being
    /// trained.
    pub fn training_example(&self, event: &Event, clip: &Clip) -> Result<Example, CompletionError> {
        let state = EventState::new(event.hand, event.t_s, event.t_e).map_err(|_| CompletionError::MissingWindow)?;
        let family = self.ontology.phase_family(event.verb);
        let semantic = SemanticPrior {
            verb: event.verb,
            family,
            template_ratio: self.ontology.template_ratio(family),
            confidence: 1.0,
        };
        let prior = self.hop(&state, clip, &semantic).and_then(|h| h.outcome.prior());
        let repr = assemble_representation(&state, prior.as_ref(), &clip.features, &self.ontology, &Cues::default())?;
        Ok(Example {
            repr,
            target: Target {
                t_o: event.t_o,
                verb: event.verb,
                noun: event.noun,
            },
        })
    }
}

/// Full-batch gradient descent on the reference adapter. Returns the trained
/// adapter and the loss before each epoch.
pub fn train_adapter(
    initial: ReferenceAdapter,
    examples: &[Example],
    epochs: usize,
    learning_rate: f64,
) -> Result<(ReferenceAdapter, Vec<f64>), CompletionError> {
    let mut adapter = initial;
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (next, loss) = adapter.train_step(examples, learning_rate)?;
        losses.push(loss);
        adapter = next;
    }
    Ok((adapter, losses))
}

pub fn dims_for(ontology: &Ontology, features: &FeatureTable) -> Dims {
    Dims::new(ontology, features.dim())
}
