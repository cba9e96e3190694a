//! Generators and brute-force oracles shared by the property and
//! acceptance suites. Nothing here calls the routine it checks.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hoi_core::completion::{Posterior, ScoreBundle};
use hoi_core::controller::{Assignment, Authority, Intervention, Surface};
use hoi_core::event::{
    EventState, Field, FieldValue, Frame, Hand, LockSet, NounId, NounValue, Ontology, Origin, PhaseFamily, VerbDef,
    VerbId, Window, DEFAULT_TEMPLATE_RATIOS,
};
use hoi_core::exec::{replay, AnnotatorResponse, Executor, LogicalClock, TraceRecord};
use hoi_core::hop::{CandidateFamily, HopConfig, OnsetCandidate, SemanticPrior};
use hoi_core::ingest::{HandFrameState, HandTrack, StatisticsBundle};
use hoi_core::metrics::violations_in;
use hoi_core::session::{layout, DataRoot, NextIntervention, Session};
use hoi_core::synth::{demo_ontology, generate, perfect_scores, Corpus, SynthConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn family(rng: &mut impl Rng) -> PhaseFamily {
    PhaseFamily::ALL[rng.gen_range(0..4)]
}

/// Up to five verbs and five nouns with random pairs. Every verb that
/// requires a noun gets at least one valid partner.
pub fn random_ontology(rng: &mut impl Rng) -> Ontology {
    let nv = rng.gen_range(1..=5);
    let nn = rng.gen_range(1..=5);
    let verbs: Vec<VerbDef> = (0..nv)
        .map(|i| VerbDef {
            id: format!("v{i}"),
            noun_required: rng.gen_bool(0.5),
            phase_family: family(rng),
        })
        .collect();
    let nouns = (0..nn).map(|i| format!("n{i}")).collect();
    let mut pairs = Vec::new();
    for v in 0..nv {
        for n in 0..nn {
            if rng.gen_bool(0.4) {
                pairs.push((VerbId(v), NounId(n)));
            }
        }
        if verbs[v].noun_required && !pairs.iter().any(|p| p.0 == VerbId(v)) {
            pairs.push((VerbId(v), NounId(rng.gen_range(0..nn))));
        }
    }
    Ontology::new(verbs, nouns, pairs, DEFAULT_TEMPLATE_RATIOS).unwrap()
}

/// Strictly positive weights normalized to one.
pub fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

pub fn random_stats(rng: &mut impl Rng, nv: usize, nn: usize, bins: usize) -> StatisticsBundle {
    let verb_hist = (0..nv).map(|_| simplex(rng, bins)).collect();
    let noun_hist = (0..nn).map(|_| simplex(rng, bins)).collect();
    let mut cooc = Vec::new();
    let mut no_noun = Vec::new();
    for _ in 0..nv {
        let row = simplex(rng, nn + 1);
        no_noun.push(row[0]);
        cooc.push(row[1..].to_vec());
    }
    StatisticsBundle::from_parts(bins, verb_hist, noun_hist, cooc, no_noun).unwrap()
}

pub fn random_window(rng: &mut impl Rng, max_len: u32) -> Window {
    let start = rng.gen_range(0..500);
    let len = rng.gen_range(1..=max_len);
    Window::new(start, start + len - 1).unwrap()
}

pub fn random_posterior(rng: &mut impl Rng, window: Window, nv: usize, nn: usize) -> Posterior {
    let hn = simplex(rng, 2);
    Posterior {
        window,
        onset: simplex(rng, window.len()),
        verb: simplex(rng, nv),
        has_noun: [hn[0], hn[1]],
        noun: simplex(rng, nn),
    }
}

/// Random lock subset. Locks are drawn independently, so some sets admit
/// no completion; a small share of onset locks fall outside the window.
pub fn random_locks(rng: &mut impl Rng, window: Window, ont: &Ontology) -> LockSet {
    let mut locks = LockSet::default();
    if rng.gen_bool(0.3) {
        locks.t_o = Some(if rng.gen_bool(0.05) {
            window.end + 1
        } else {
            rng.gen_range(window.start..=window.end)
        });
    }
    if rng.gen_bool(0.3) {
        locks.verb = Some(VerbId(rng.gen_range(0..ont.num_verbs())));
    }
    if rng.gen_bool(0.3) {
        locks.lock_noun(NounValue::Noun(NounId(rng.gen_range(0..ont.num_nouns()))));
    } else if rng.gen_bool(0.2) {
        locks.has_noun = Some(rng.gen_bool(0.5));
    }
    locks
}

pub fn bin_of(window: Window, t: Frame, bins: usize) -> usize {
    if window.end == window.start {
        return 0;
    }
    let p = (t - window.start) as f64 / (window.end - window.start) as f64;
    ((p * bins as f64).floor() as usize).min(bins - 1)
}

fn admissible(ont: &Ontology, v: VerbId, noun: NounValue) -> bool {
    match noun {
        NounValue::NoNoun => !ont.noun_required(v),
        NounValue::Noun(n) => ont.is_valid_pair(v, n),
    }
}

/// Exhaustive argmax over every `(v, t_o, b, n)`, visited in lexicographic
/// order so the first strict maximum is the documented tie-break.
pub fn brute_force_decode(
    post: &Posterior,
    locks: &LockSet,
    ont: &Ontology,
    stats: &StatisticsBundle,
) -> Option<(Frame, VerbId, NounValue, f64)> {
    let w = post.window;
    let mut best: Option<(Frame, VerbId, NounValue, f64)> = None;
    for v in 0..ont.num_verbs() {
        let v = VerbId(v);
        for t in w.start..=w.end {
            let mut options = vec![NounValue::NoNoun];
            options.extend((0..ont.num_nouns()).map(|n| NounValue::Noun(NounId(n))));
            for noun in options {
                let ok = locks.verb.is_none_or(|x| x == v)
                    && locks.t_o.is_none_or(|x| x == t)
                    && locks.has_noun.is_none_or(|b| b == matches!(noun, NounValue::Noun(_)))
                    && locks.noun.is_none_or(|n| noun == NounValue::Noun(n))
                    && admissible(ont, v, noun);
                if !ok {
                    continue;
                }
                let hist = stats.verb_onset_prior(v)[bin_of(w, t, stats.bins())];
                let temporal = post.onset[(t - w.start) as usize].ln() + hist.ln();
                let (sem, rate) = match noun {
                    NounValue::NoNoun => (post.has_noun[0].ln(), stats.no_noun_rate(v)),
                    NounValue::Noun(n) => (post.has_noun[1].ln() + post.noun[n.0].ln(), stats.cooccurrence(v, n)),
                };
                let score = post.verb[v.0].ln() + temporal + (sem + rate.ln());
                if best.is_none_or(|b| score > b.3) {
                    best = Some((t, v, noun, score));
                }
            }
        }
    }
    best
}

/// Random motion trace over a window: a smooth random walk with optional
/// plateaus, quantization (to force ties) and dropped frames.
pub struct MotionCase {
    pub hand: Hand,
    pub window: Window,
    pub track: HandTrack,
    pub prior: SemanticPrior,
    pub quantized: bool,
}

pub fn random_motion_case(rng: &mut impl Rng) -> MotionCase {
    let hand = if rng.gen_bool(0.5) { Hand::Left } else { Hand::Right };
    let window = random_window(rng, 60);
    let quantized = rng.gen_bool(0.3);
    let pad = rng.gen_range(0..5);
    let start = window.start.saturating_sub(pad);
    let end = window.end + rng.gen_range(0..5);
    let mut m: f64 = rng.gen_range(0.0..2.0);
    let mut frames = Vec::new();
    let drop_rate = if rng.gen_bool(0.3) { rng.gen_range(0.0..0.4) } else { 0.0 };
    let handedness = rng.gen_range(0.5..1.0);
    let mut t = start;
    while t <= end {
        if rng.gen_bool(0.1) {
            // plateau
            for _ in 0..rng.gen_range(2..8) {
                if t > end {
                    break;
                }
                let jitter = if quantized { 0.0 } else { rng.gen_range(-0.001..0.001) };
                frames.push((t, (m + jitter).max(0.0)));
                t += 1;
            }
            continue;
        }
        m = (m + rng.gen_range(-0.5..0.5)).max(0.0);
        let value = if quantized { (m * 2.0).round() / 2.0 } else { m };
        frames.push((t, value));
        t += 1;
    }
    let frames = frames
        .into_iter()
        .filter(|_| !rng.gen_bool(drop_rate))
        .map(|(t, m)| HandFrameState::synthetic(t, m, handedness))
        .collect();
    let family = family(rng);
    let prior = SemanticPrior {
        verb: VerbId(0),
        family,
        template_ratio: DEFAULT_TEMPLATE_RATIOS[family.index()],
        confidence: rng.gen_range(0.0..1.0),
    };
    MotionCase {
        hand,
        window,
        track: HandTrack::new(hand, frames).unwrap(),
        prior,
        quantized,
    }
}

fn compat_index(f: CandidateFamily) -> usize {
    match f {
        CandidateFamily::Boundary => 0,
        CandidateFamily::Peak => 1,
        CandidateFamily::Valley => 2,
        CandidateFamily::Stab => 3,
    }
}

/// Candidate score recomputed from the track directly.
pub fn reference_score(
    c: &OnsetCandidate,
    prior: &SemanticPrior,
    target: Frame,
    track: &HandTrack,
    window: Window,
    cfg: &HopConfig,
) -> f64 {
    let inside: Vec<(Frame, f64)> = track
        .frames()
        .iter()
        .filter(|f| window.contains(f.t))
        .map(|f| (f.t, f.motion))
        .collect();
    let motion = if inside.is_empty() {
        0.5
    } else {
        let lo = inside.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let hi = inside.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let norm = inside
            .iter()
            .find(|x| x.0 == c.t)
            .map(|x| if hi > lo { (x.1 - lo) / (hi - lo) } else { 0.0 });
        match c.family {
            CandidateFamily::Boundary => 0.5,
            CandidateFamily::Peak => norm.unwrap_or(0.5),
            _ => 1.0 - norm.unwrap_or(0.5),
        }
    };
    let compat = cfg.compat[prior.family.index()][compat_index(c.family)];
    let sigma = cfg.beta * (window.end - window.start + 1) as f64;
    let d = c.t as f64 - target as f64;
    let proximity = (-(d * d) / (2.0 * sigma * sigma)).exp();
    let support = c.support.min(cfg.support_cap) as f64 / cfg.support_cap as f64;
    cfg.w_phase * compat + cfg.w_prox * proximity + cfg.w_motion * motion + cfg.w_support * support
}

/// Index of the best candidate: highest score, then earliest frame, then
/// family order.
pub fn reference_argmax(cands: &[OnsetCandidate], scores: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(cands[a].t.cmp(&cands[b].t))
            .then(compat_index(cands[a].family).cmp(&compat_index(cands[b].family)))
    });
    order[0]
}

/// Random bundle of raw scores over a random window.
pub fn random_bundle(rng: &mut impl Rng, nv: usize, nn: usize) -> ScoreBundle {
    let window = random_window(rng, 40);
    let mut logits = |n: usize| (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect::<Vec<f64>>();
    let onset = logits(window.len());
    let verb = logits(nv);
    let noun = logits(nn);
    let hn = logits(2);
    ScoreBundle {
        window,
        mu: rng.gen_range(0.0..1.0),
        var: rng.gen_range(0.01..2.0),
        onset,
        verb,
        has_noun: [hn[0], hn[1]],
        noun,
    }
}

/// Plain softmax.
pub fn softmax_ref(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Adapter probabilities recomputed from the raw bundle.
pub fn reference_probabilities(b: &ScoreBundle) -> Posterior {
    let w = b.window;
    let frame = softmax_ref(&b.onset);
    let shaped: Vec<f64> = frame
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let pos = if w.end == w.start {
                0.0
            } else {
                i as f64 / (w.end - w.start) as f64
            };
            p * (-(pos - b.mu).powi(2) / (2.0 * b.var)).exp()
        })
        .collect();
    let z: f64 = shaped.iter().sum();
    let hn = softmax_ref(&b.has_noun);
    Posterior {
        window: w,
        onset: shaped.into_iter().map(|x| x / z).collect(),
        verb: softmax_ref(&b.verb),
        has_noun: [hn[0], hn[1]],
        noun: softmax_ref(&b.noun),
    }
}

/// Central-difference gradient of `f` along each listed coordinate.
pub fn finite_difference(params: &[f64], coords: &[usize], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    coords
        .iter()
        .map(|&i| {
            let x = p[i];
            p[i] = x + h;
            let up = f(&p);
            p[i] = x - h;
            let down = f(&p);
            p[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()) + norm(&mut b.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn random_frame(rng: &mut impl Rng, state: &EventState) -> Frame {
    let lo = state.t_s().unwrap_or(0);
    let hi = state.t_e().unwrap_or(lo + 30).max(lo);
    rng.gen_range(lo.saturating_sub(3)..=hi + 3)
}

/// Random value for `field`, including out-of-vocabulary and out-of-window
/// values.
pub fn random_value(rng: &mut impl Rng, field: Field, state: &EventState, ont: &Ontology) -> FieldValue {
    match field {
        Field::Start | Field::Onset | Field::End => FieldValue::Frame(random_frame(rng, state)),
        Field::Verb => FieldValue::Verb(VerbId(rng.gen_range(0..=ont.num_verbs()))),
        Field::Noun => FieldValue::Noun(if rng.gen_bool(0.2) {
            NounValue::NoNoun
        } else {
            NounValue::Noun(NounId(rng.gen_range(0..=ont.num_nouns())))
        }),
    }
}

/// Adversarial silent payload: one to three fields, preferring confirmed
/// ones.
pub fn adversarial_payload(rng: &mut impl Rng, state: &EventState, ont: &Ontology) -> Vec<Assignment> {
    let locked: Vec<Field> = Field::ALL.into_iter().filter(|&f| state.is_locked(f)).collect();
    let mut fields: Vec<Field> = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let f = if !locked.is_empty() && rng.gen_bool(0.5) {
            *locked.choose(rng).unwrap()
        } else {
            Field::ALL[rng.gen_range(0..5)]
        };
        if !fields.contains(&f) {
            fields.push(f);
        }
    }
    fields
        .into_iter()
        .map(|field| Assignment {
            field,
            value: random_value(rng, field, state, ont),
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub steps: usize,
    pub violations: usize,
    pub staged: usize,
    pub staged_rolled_back: usize,
    pub replay_ok: bool,
}

/// Locked slots of `before` that `after` changed or unlocked.
pub fn lost_locks(before: &EventState, after: &EventState) -> usize {
    Field::ALL
        .iter()
        .filter(|&&f| before.is_locked(f) && (!after.is_locked(f) || after.value(f) != before.value(f)))
        .count()
}

/// Drives the executor with random human edits and confirmations (building
/// random lock sets), human-confirm suggestions with random answers, and
/// adversarial silent applications. Counts confirmed-field violations and
/// checks that every silent write aimed at a confirmed field was rolled back.
pub fn lock_safety_fuzz(seed: u64, steps: usize) -> FuzzReport {
    let mut rng = rng(seed);
    let ont = if rng.gen_bool(0.5) { demo_ontology() } else { random_ontology(&mut rng) };
    let mut exec = Executor::new("fuzz", "fuzz", Box::new(LogicalClock::default()));
    let mut states: Vec<EventState> = Vec::new();
    let mut log: Vec<TraceRecord> = Vec::new();
    let mut report = FuzzReport::default();
    while report.steps < steps {
        if states.is_empty() || (states.len() < 6 && rng.gen_bool(0.02)) {
            let t_s = rng.gen_range(0..200);
            let t_e = t_s + rng.gen_range(0..30);
            let hand = if rng.gen_bool(0.5) { Hand::Left } else { Hand::Right };
            let (s, rec) = exec.create_event(states.len(), hand, t_s, t_e).unwrap();
            states.push(s);
            log.push(rec);
            report.steps += 1;
            continue;
        }
        let idx = rng.gen_range(0..states.len());
        let before = states[idx].clone();
        let roll: f64 = rng.gen();
        let result = if roll < 0.2 {
            let field = Field::ALL[rng.gen_range(0..5)];
            let value = random_value(&mut rng, field, &before, &ont);
            let origin = if rng.gen_bool(0.8) { Origin::Human } else { Origin::Oracle };
            exec.edit(idx, &before, &[Assignment { field, value }], origin, &ont)
        } else if roll < 0.3 {
            let fields: Vec<Field> = Field::ALL.into_iter().filter(|_| rng.gen_bool(0.4)).collect();
            exec.confirm(idx, &before, &fields, Origin::Human)
        } else if roll < 0.45 {
            let payload = adversarial_payload(&mut rng, &before, &ont);
            let xi = Intervention {
                targets: payload.iter().map(|a| a.field).collect(),
                surface: if payload.len() > 1 { Surface::ChoicePrompt } else { Surface::SuggestionCard },
                authority: Authority::HumanConfirm,
                payload,
            };
            let response = match rng.gen_range(0..4) {
                0 => AnnotatorResponse::accept(1.0),
                1 => AnnotatorResponse::reject(1.0),
                2 => AnnotatorResponse::timeout(1.0),
                _ => {
                    let field = xi.targets[0];
                    AnnotatorResponse::edit(
                        vec![Assignment {
                            field,
                            value: random_value(&mut rng, field, &before, &ont),
                        }],
                        1.0,
                    )
                }
            };
            exec.execute(idx, &before, exec.step(), &xi, Some(response), &ont)
        } else {
            let payload = adversarial_payload(&mut rng, &before, &ont);
            let staged = payload.iter().any(|a| before.is_locked(a.field));
            let xi = Intervention {
                targets: payload.iter().map(|a| a.field).collect(),
                surface: Surface::SilentApply,
                authority: Authority::SafeLocal,
                payload,
            };
            let out = exec.execute(idx, &before, exec.step(), &xi, None, &ont);
            if staged {
                report.staged += 1;
                if let Ok((_, rec)) = &out {
                    if rec.rollback && rec.diff.is_empty() {
                        report.staged_rolled_back += 1;
                    }
                }
            }
            out
        };
        if let Ok((after, rec)) = result {
            let silent = rec.intervention().is_some_and(|(_, xi)| xi.authority == Authority::SafeLocal);
            if silent {
                report.violations += lost_locks(&before, &after);
            }
            report.violations += violations_in(&rec);
            states[idx] = after;
            log.push(rec);
            report.steps += 1;
        }
    }
    report.replay_ok = replay(&log, None).is_ok_and(|s| s == states);
    report
}

/// Synthetic clip written under a fresh data root, with perfect scores.
pub fn session_fixture(dir: &Path, seed: u64, events_per_hand: usize) -> (DataRoot, Corpus) {
    let root = DataRoot::new(dir);
    let ont = demo_ontology();
    let corpus = generate(
        &SynthConfig {
            seed,
            events_per_hand,
            ..SynthConfig::default()
        },
        &ont,
    );
    let clip = root.clip_dir("demo");
    corpus.write_to(&clip).unwrap();
    fs::write(clip.join(layout::SCORES), perfect_scores(&corpus.events, &ont).render()).unwrap();
    (root, corpus)
}

/// Random annotator behaviour against a live session: random answers to
/// every intervention, stray edits and confirmations, occasional stale
/// responses. Errors are expected and must leave the session unchanged.
pub fn fuzz_session(session: &mut Session, corpus: &Corpus, rng: &mut impl Rng, actions: usize) {
    let ont = session.engine().ontology.clone();
    let mut created = 0;
    for _ in 0..actions {
        let before = session.view();
        let roll: f64 = rng.gen();
        let result = if created < corpus.events.len() && (created == 0 || roll < 0.1) {
            let e = &corpus.events[created];
            created += 1;
            session.create_event(e.hand, e.t_s, e.t_e).map(|_| ())
        } else if roll < 0.2 && !session.events().is_empty() {
            let idx = rng.gen_range(0..session.events().len());
            let field = Field::ALL[rng.gen_range(0..5)];
            let value = random_value(rng, field, &session.events()[idx], &ont);
            session.edit(idx, &[Assignment { field, value }], Origin::Human).map(|_| ())
        } else if roll < 0.23 && !session.events().is_empty() {
            let idx = rng.gen_range(0..session.events().len());
            session.activate(idx)
        } else if roll < 0.28 && !session.events().is_empty() {
            let idx = rng.gen_range(0..session.events().len());
            let fields: Vec<Field> = Field::ALL.into_iter().filter(|_| rng.gen_bool(0.3)).collect();
            session.confirm(idx, &fields, Origin::Human).map(|_| ())
        } else {
            let hand = if rng.gen_bool(0.5) { Hand::Left } else { Hand::Right };
            match session.next_intervention(hand) {
                Ok(NextIntervention::Ask(issued)) => {
                    let state = &session.events()[issued.event];
                    let values: Vec<Assignment> = issued
                        .intervention
                        .targets
                        .iter()
                        .map(|&field| Assignment {
                            field,
                            value: random_value(rng, field, state, &ont),
                        })
                        .collect();
                    let response = match (issued.intervention.authority, rng.gen_range(0..5)) {
                        (Authority::HumanOnly, _) => AnnotatorResponse::manual(values, 2.0),
                        (_, 0 | 1) => AnnotatorResponse::accept(1.0),
                        (_, 2) => AnnotatorResponse::reject(1.0),
                        (_, 3) => AnnotatorResponse::timeout(5.0),
                        _ => AnnotatorResponse::edit(values[..1].to_vec(), 2.0),
                    };
                    let id = if rng.gen_bool(0.05) { issued.id + 1 } else { issued.id };
                    session.respond(hand, id, response).map(|_| ())
                }
                Ok(_) => Ok(()),
                Err(e) => Err(e),
            }
        };
        if result.is_err() {
            let mut after = session.view();
            // a failed `next` may still have issued nothing; outstanding is untouched
            after.outstanding = before.outstanding.clone();
            assert_eq!(after, before, "a failed action changed the session");
        }
    }
}

/// Valid complete events over `ont`.
pub fn random_events(rng: &mut impl Rng, ont: &Ontology, n: usize) -> Vec<hoi_core::event::Event> {
    (0..n)
        .map(|_| {
            let v = VerbId(rng.gen_range(0..ont.num_verbs()));
            let mut options: Vec<NounValue> = ont.valid_nouns(v).map(NounValue::Noun).collect();
            if !ont.noun_required(v) {
                options.push(NounValue::NoNoun);
            }
            let t_s = rng.gen_range(0..1000);
            let t_e = t_s + rng.gen_range(0..60);
            hoi_core::event::Event {
                hand: if rng.gen_bool(0.5) { Hand::Left } else { Hand::Right },
                t_s,
                t_o: rng.gen_range(t_s..=t_e),
                t_e,
                verb: v,
                noun: *options.choose(rng).unwrap(),
            }
        })
        .collect()
}
