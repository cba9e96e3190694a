//! Scoring adapters: the swappable interface, the affine reference
//! implementation with analytic gradients, and score-file substitution.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::representation::{Dims, EventRepresentation};
use super::{sigmoid, softmax, softplus, CompletionError, ScoreBundle};
use crate::event::{Frame, Hand, NounValue, VerbId, Window};

pub const ADAPTER_MAGIC: &[u8; 4] = b"LFAD";
pub const ADAPTER_VERSION: u16 = 1;
pub const SIGMA_MIN: f64 = 1e-3;

/// Anything that maps a representation to raw scores.
pub trait ScoreAdapter: Send + Sync {
    fn forward(&self, r: &EventRepresentation) -> Result<ScoreBundle, CompletionError>;
}

/// Where each head lives inside the flat parameter vector.
///
/// Event-level heads form a row-major matrix over the input vector, rows
/// ordered mean, variance, verbs, noun-existence (no, yes), nouns. The
/// per-frame onset head follows as one weight vector plus a bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub dims: Dims,
}

impl Layout {
    pub fn rows(&self) -> usize {
        2 + self.dims.verbs + 2 + self.dims.nouns
    }

    pub fn cols(&self) -> usize {
        self.dims.input_len()
    }

    pub fn onset_offset(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn len(&self) -> usize {
        self.onset_offset() + self.dims.frame_len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn verb_row(&self) -> usize {
        2
    }

    fn has_noun_row(&self) -> usize {
        2 + self.dims.verbs
    }

    fn noun_row(&self) -> usize {
        4 + self.dims.verbs
    }
}

/// Gold completion target for one training example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub t_o: Frame,
    pub verb: VerbId,
    pub noun: NounValue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub repr: EventRepresentation,
    pub target: Target,
}

/// Affine-per-head reference adapter.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceAdapter {
    layout: Layout,
    params: Vec<f64>,
}

struct Activations {
    pre: Vec<f64>,
    onset: Vec<f64>,
}

impl ReferenceAdapter {
    pub fn zeros(dims: Dims) -> Self {
        let layout = Layout { dims };
        ReferenceAdapter {
            layout,
            params: vec![0.0; layout.len()],
        }
    }

    pub fn random(dims: Dims, scale: f64, rng: &mut impl Rng) -> Self {
        let mut a = Self::zeros(dims);
        a.params.iter_mut().for_each(|p| *p = rng.gen_range(-scale..=scale));
        a
    }

    pub fn from_params(dims: Dims, params: Vec<f64>) -> Result<Self, CompletionError> {
        let layout = Layout { dims };
        if params.len() != layout.len() {
            return Err(CompletionError::DimensionMismatch {
                expected: layout.len(),
                found: params.len(),
            });
        }
        Ok(ReferenceAdapter { layout, params })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dims(&self) -> Dims {
        self.layout.dims
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check(&self, r: &EventRepresentation) -> Result<(), CompletionError> {
        if r.dims != self.layout.dims {
            return Err(CompletionError::DimensionMismatch {
                expected: self.layout.cols(),
                found: r.dims.input_len(),
            });
        }
        Ok(())
    }

    fn activations(&self, r: &EventRepresentation) -> Activations {
        let x = r.input();
        let cols = self.layout.cols();
        let pre = (0..self.layout.rows())
            .map(|k| dot(&self.params[k * cols..(k + 1) * cols], &x))
            .collect();
        let off = self.layout.onset_offset();
        let flen = self.layout.dims.frame_len();
        let w = &self.params[off..off + flen];
        let bias = self.params[off + flen];
        let onset = r.frames.iter().map(|f| dot(w, f) + bias).collect();
        Activations { pre, onset }
    }

    fn bundle(&self, r: &EventRepresentation, act: Activations) -> ScoreBundle {
        let l = self.layout;
        let (v, n) = (l.dims.verbs, l.dims.nouns);
        ScoreBundle {
            window: r.window,
            mu: sigmoid(act.pre[0]),
            var: softplus(act.pre[1]) + SIGMA_MIN,
            onset: act.onset,
            verb: act.pre[l.verb_row()..l.verb_row() + v].to_vec(),
            has_noun: [act.pre[l.has_noun_row()], act.pre[l.has_noun_row() + 1]],
            noun: act.pre[l.noun_row()..l.noun_row() + n].to_vec(),
        }
    }

    /// Mean loss over the batch and its gradient with respect to every
    /// parameter.
    ///
    /// Per example: Gaussian negative log-likelihood of the gold onset
    /// position under `(mu, var)`, plus cross-entropies on the onset
    /// frame, verb, noun existence and, when the gold event has a noun,
    /// the noun.
    pub fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, Vec<f64>), CompletionError> {
        if batch.is_empty() {
            return Err(CompletionError::EmptyBatch);
        }
        let l = self.layout;
        let cols = l.cols();
        let mut grad = vec![0.0; l.len()];
        let mut total = 0.0;
        for ex in batch {
            self.check(&ex.repr)?;
            let x = ex.repr.input();
            let act = self.activations(&ex.repr);
            let mut dpre = vec![0.0; l.rows()];

            let window = ex.repr.window;
            let gold_t = window.clamp(ex.target.t_o);
            let pos = window.position(gold_t);
            let mu = sigmoid(act.pre[0]);
            let var = softplus(act.pre[1]) + SIGMA_MIN;
            let diff = pos - mu;
            total += 0.5 * (2.0 * std::f64::consts::PI * var).ln() + diff * diff / (2.0 * var);
            dpre[0] = -diff / var * mu * (1.0 - mu);
            dpre[1] = (0.5 / var - diff * diff / (2.0 * var * var)) * sigmoid(act.pre[1]);

            let mut ce = |start: usize, len: usize, gold: usize, dpre: &mut [f64]| {
                let p = softmax(&act.pre[start..start + len]);
                total -= p[gold].ln();
                for (i, pi) in p.iter().enumerate() {
                    dpre[start + i] += pi - if i == gold { 1.0 } else { 0.0 };
                }
            };
            ce(l.verb_row(), l.dims.verbs, ex.target.verb.0, &mut dpre);
            ce(l.has_noun_row(), 2, ex.target.noun.has_noun() as usize, &mut dpre);
            if let NounValue::Noun(n) = ex.target.noun {
                ce(l.noun_row(), l.dims.nouns, n.0, &mut dpre);
            }

            for (k, d) in dpre.iter().enumerate() {
                if *d != 0.0 {
                    axpy(&mut grad[k * cols..(k + 1) * cols], *d, &x);
                }
            }

            let gold_i = (gold_t - window.start) as usize;
            let p = softmax(&act.onset);
            total -= p[gold_i].ln();
            let off = l.onset_offset();
            let flen = l.dims.frame_len();
            for (i, (pi, f)) in p.iter().zip(&ex.repr.frames).enumerate() {
                let d = pi - if i == gold_i { 1.0 } else { 0.0 };
                axpy(&mut grad[off..off + flen], d, f);
                grad[off + flen] += d;
            }
        }
        let n = batch.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((total / n, grad))
    }

    pub fn loss(&self, batch: &[Example]) -> Result<f64, CompletionError> {
        self.loss_and_grad(batch).map(|(l, _)| l)
    }

    /// One gradient-descent step. Returns the updated adapter and the loss
    /// before the step.
    pub fn train_step(&self, batch: &[Example], learning_rate: f64) -> Result<(ReferenceAdapter, f64), CompletionError> {
        let (loss, grad) = self.loss_and_grad(batch)?;
        let mut next = self.clone();
        for (p, g) in next.params.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
        Ok((next, loss))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let d = self.layout.dims;
        w.write_all(ADAPTER_MAGIC)?;
        w.write_all(&ADAPTER_VERSION.to_le_bytes())?;
        for x in [d.verbs, d.nouns, d.features] {
            w.write_all(&(x as u16).to_le_bytes())?;
        }
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&(*p as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CompletionError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|e| CompletionError::Format(format!("adapter header: {e}")))?;
        if &header[0..4] != ADAPTER_MAGIC {
            return Err(CompletionError::Format("bad adapter magic".into()));
        }
        let u16_at = |i: usize| u16::from_le_bytes([header[i], header[i + 1]]) as usize;
        if u16_at(4) != ADAPTER_VERSION as usize {
            return Err(CompletionError::Format(format!("unsupported adapter version {}", u16_at(4))));
        }
        let dims = Dims {
            verbs: u16_at(6),
            nouns: u16_at(8),
            features: u16_at(10),
        };
        let count = u32::from_le_bytes([header[12], header[13], header[14], header[15]]) as usize;
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| CompletionError::Format(format!("adapter body: {e}")))?;
        let params = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Self::from_params(dims, params)
    }
}

impl ScoreAdapter for ReferenceAdapter {
    fn forward(&self, r: &EventRepresentation) -> Result<ScoreBundle, CompletionError> {
        self.check(r)?;
        let act = self.activations(r);
        Ok(self.bundle(r, act))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// One line of a score file: precomputed scores for one event window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub hand: Hand,
    #[serde(flatten)]
    pub bundle: ScoreBundle,
}

/// Adapter that replays precomputed scores keyed by hand and window.
#[derive(Clone, Debug, Default)]
pub struct ScoreFileAdapter {
    scores: HashMap<(Hand, Window), ScoreBundle>,
}

impl ScoreFileAdapter {
    pub fn new(records: impl IntoIterator<Item = ScoreRecord>) -> Self {
        ScoreFileAdapter {
            scores: records
                .into_iter()
                .map(|r| ((r.hand, r.bundle.window), r.bundle))
                .collect(),
        }
    }

    pub fn insert(&mut self, hand: Hand, bundle: ScoreBundle) {
        self.scores.insert((hand, bundle.window), bundle);
    }

    pub fn parse(text: &str) -> Result<Self, CompletionError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ScoreRecord = serde_json::from_str(line)
                .map_err(|e| CompletionError::Format(format!("score line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Ok(Self::new(records))
    }

    pub fn render(&self) -> String {
        let mut keys: Vec<_> = self.scores.keys().copied().collect();
        keys.sort_by_key(|(h, w)| (*h, w.start, w.end));
        let mut out = String::new();
        for k in keys {
            let rec = ScoreRecord {
                hand: k.0,
                bundle: self.scores[&k].clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("score record serializes"));
            out.push('\n');
        }
        out
    }
}

impl ScoreAdapter for ScoreFileAdapter {
    fn forward(&self, r: &EventRepresentation) -> Result<ScoreBundle, CompletionError> {
        self.scores
            .get(&(r.hand, r.window))
            .cloned()
            .ok_or(CompletionError::MissingScores {
                hand: r.hand,
                window: r.window,
            })
    }
}
