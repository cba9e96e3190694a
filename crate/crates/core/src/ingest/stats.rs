use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::event::{check_validity, Event, Frame, NounId, NounValue, Ontology, VerbId};

pub const DEFAULT_BINS: usize = 10;

/// Tolerance used when validating loaded distributions.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Onset-position bin of `t_o` inside `[t_s, t_e]`. A degenerate span maps to bin 0.
pub fn onset_bin(t_s: Frame, t_o: Frame, t_e: Frame, bins: usize) -> usize {
    if t_e <= t_s || bins == 0 {
        return 0;
    }
    let p = (t_o.saturating_sub(t_s)) as f64 / (t_e - t_s) as f64;
    ((p * bins as f64).floor() as usize).min(bins - 1)
}

/// Empirical priors used by refinement and decoding, aligned to an ontology.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticsBundle {
    bins: usize,
    /// `[verb][bin]`
    verb_onset_prior: Vec<Vec<f64>>,
    /// `[noun][bin]`
    noun_onset_prior: Vec<Vec<f64>>,
    /// `[verb][noun]`
    cooccurrence: Vec<Vec<f64>>,
    no_noun_rate: Vec<f64>,
}

impl StatisticsBundle {
    pub fn from_parts(
        bins: usize,
        verb_onset_prior: Vec<Vec<f64>>,
        noun_onset_prior: Vec<Vec<f64>>,
        cooccurrence: Vec<Vec<f64>>,
        no_noun_rate: Vec<f64>,
    ) -> Result<Self, IngestError> {
        let bundle = StatisticsBundle {
            bins,
            verb_onset_prior,
            noun_onset_prior,
            cooccurrence,
            no_noun_rate,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    /// Uniform priors: flat histograms and a flat split of each verb's mass
    /// over "no noun" and every noun.
    pub fn uniform(num_verbs: usize, num_nouns: usize, bins: usize) -> Self {
        let hist = vec![1.0 / bins as f64; bins];
        let share = 1.0 / (num_nouns + 1) as f64;
        StatisticsBundle {
            bins,
            verb_onset_prior: vec![hist.clone(); num_verbs],
            noun_onset_prior: vec![hist; num_nouns],
            cooccurrence: vec![vec![share; num_nouns]; num_verbs],
            no_noun_rate: vec![share; num_verbs],
        }
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.bins == 0 {
            return Err(IngestError::Schema("bins must be at least 1".into()));
        }
        let check_hist = |label: &str, i: usize, h: &[f64]| -> Result<(), IngestError> {
            if h.len() != self.bins {
                return Err(IngestError::Schema(format!(
                    "{label} #{i}: {} bins, expected {}",
                    h.len(),
                    self.bins
                )));
            }
            if h.iter().any(|&p| !(p >= 0.0)) {
                return Err(IngestError::Normalization(format!("{label} #{i} has a negative bin")));
            }
            let sum: f64 = h.iter().sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(IngestError::Normalization(format!("{label} #{i} sums to {sum}")));
            }
            Ok(())
        };
        for (i, h) in self.verb_onset_prior.iter().enumerate() {
            check_hist("verb onset prior", i, h)?;
        }
        for (i, h) in self.noun_onset_prior.iter().enumerate() {
            check_hist("noun onset prior", i, h)?;
        }
        if self.cooccurrence.len() != self.verb_onset_prior.len()
            || self.no_noun_rate.len() != self.verb_onset_prior.len()
        {
            return Err(IngestError::Schema("per-verb tables disagree in length".into()));
        }
        for (v, row) in self.cooccurrence.iter().enumerate() {
            if row.len() != self.noun_onset_prior.len() {
                return Err(IngestError::Schema(format!("co-occurrence row #{v} has wrong length")));
            }
            let nn = self.no_noun_rate[v];
            if !(0.0..=1.0).contains(&nn) || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(IngestError::Normalization(format!("verb #{v} has a rate outside [0,1]")));
            }
            let sum = nn + row.iter().sum::<f64>();
            if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                return Err(IngestError::Normalization(format!(
                    "verb #{v}: no-noun rate plus co-occurrence sums to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_verbs(&self) -> usize {
        self.verb_onset_prior.len()
    }

    pub fn num_nouns(&self) -> usize {
        self.noun_onset_prior.len()
    }

    pub fn verb_onset_prior(&self, v: VerbId) -> &[f64] {
        &self.verb_onset_prior[v.0]
    }

    pub fn noun_onset_prior(&self, n: NounId) -> &[f64] {
        &self.noun_onset_prior[n.0]
    }

    pub fn cooccurrence(&self, v: VerbId, n: NounId) -> f64 {
        self.cooccurrence[v.0][n.0]
    }

    pub fn cooccurrence_row(&self, v: VerbId) -> &[f64] {
        &self.cooccurrence[v.0]
    }

    pub fn no_noun_rate(&self, v: VerbId) -> f64 {
        self.no_noun_rate[v.0]
    }

    /// Joint rate of `(verb, noun slot)`.
    pub fn slot_rate(&self, v: VerbId, noun: NounValue) -> f64 {
        match noun {
            NounValue::NoNoun => self.no_noun_rate(v),
            NounValue::Noun(n) => self.cooccurrence(v, n),
        }
    }

    /// Add-one smoothed statistics from a corpus of complete events.
    pub fn build(events: &[Event], ontology: &Ontology, bins: usize) -> Result<Self, IngestError> {
        if events.is_empty() {
            return Err(IngestError::EmptyCorpus);
        }
        if bins == 0 {
            return Err(IngestError::Schema("bins must be at least 1".into()));
        }
        let (nv, nn) = (ontology.num_verbs(), ontology.num_nouns());
        let mut verb_hist = vec![vec![0usize; bins]; nv];
        let mut noun_hist = vec![vec![0usize; bins]; nn];
        let mut pair_counts = vec![vec![0usize; nn]; nv];
        let mut none_counts = vec![0usize; nv];
        let mut verb_counts = vec![0usize; nv];
        for (i, e) in events.iter().enumerate() {
            let report = check_validity(&e.partial(), ontology);
            if !report.is_valid() {
                return Err(IngestError::Invariant(format!(
                    "event #{i}: {}",
                    report.violations[0]
                )));
            }
            let bin = onset_bin(e.t_s, e.t_o, e.t_e, bins);
            verb_hist[e.verb.0][bin] += 1;
            verb_counts[e.verb.0] += 1;
            match e.noun {
                NounValue::NoNoun => none_counts[e.verb.0] += 1,
                NounValue::Noun(n) => {
                    noun_hist[n.0][bin] += 1;
                    pair_counts[e.verb.0][n.0] += 1;
                }
            }
        }
        let smooth_hist = |counts: &[usize]| -> Vec<f64> {
            let total = counts.iter().sum::<usize>() + bins;
            counts.iter().map(|&c| (c + 1) as f64 / total as f64).collect()
        };
        let outcomes = nn + 1;
        let mut cooccurrence = Vec::with_capacity(nv);
        let mut no_noun_rate = Vec::with_capacity(nv);
        for v in 0..nv {
            let denom = (verb_counts[v] + outcomes) as f64;
            cooccurrence.push(pair_counts[v].iter().map(|&c| (c + 1) as f64 / denom).collect());
            no_noun_rate.push((none_counts[v] + 1) as f64 / denom);
        }
        Ok(StatisticsBundle {
            bins,
            verb_onset_prior: verb_hist.iter().map(|h| smooth_hist(h)).collect(),
            noun_onset_prior: noun_hist.iter().map(|h| smooth_hist(h)).collect(),
            cooccurrence,
            no_noun_rate,
        })
    }

    pub fn to_document(&self, ontology: &Ontology) -> StatisticsDocument {
        let verb = |v: usize| ontology.verb_name(VerbId(v)).to_string();
        let noun = |n: usize| ontology.noun_name(NounId(n)).to_string();
        StatisticsDocument {
            version: 1,
            bins: self.bins,
            verb_onset_prior: (0..self.num_verbs())
                .map(|v| (verb(v), self.verb_onset_prior[v].clone()))
                .collect(),
            noun_onset_prior: (0..self.num_nouns())
                .map(|n| (noun(n), self.noun_onset_prior[n].clone()))
                .collect(),
            cooccurrence: (0..self.num_verbs())
                .map(|v| {
                    let row = (0..self.num_nouns())
                        .map(|n| (noun(n), self.cooccurrence[v][n]))
                        .collect();
                    (verb(v), row)
                })
                .collect(),
            no_noun_rate: (0..self.num_verbs())
                .map(|v| (verb(v), self.no_noun_rate[v]))
                .collect(),
        }
    }

    pub fn from_document(doc: &StatisticsDocument, ontology: &Ontology) -> Result<Self, IngestError> {
        let missing = |what: &str, id: &str| IngestError::Schema(format!("{what}: missing entry for `{id}`"));
        for id in doc
            .verb_onset_prior
            .keys()
            .chain(doc.cooccurrence.keys())
            .chain(doc.no_noun_rate.keys())
        {
            if ontology.verb_index(id).is_none() {
                return Err(IngestError::Schema(format!("unknown verb `{id}`")));
            }
        }
        for id in doc.noun_onset_prior.keys().chain(doc.cooccurrence.values().flat_map(|r| r.keys())) {
            if ontology.noun_index(id).is_none() {
                return Err(IngestError::Schema(format!("unknown noun `{id}`")));
            }
        }
        let mut verb_onset_prior = Vec::new();
        let mut cooccurrence = Vec::new();
        let mut no_noun_rate = Vec::new();
        for v in ontology.verbs() {
            verb_onset_prior.push(
                doc.verb_onset_prior
                    .get(&v.id)
                    .cloned()
                    .ok_or_else(|| missing("verb_onset_prior", &v.id))?,
            );
            let row = doc.cooccurrence.get(&v.id);
            cooccurrence.push(
                ontology
                    .nouns()
                    .iter()
                    .map(|n| row.and_then(|r| r.get(n)).copied().unwrap_or(0.0))
                    .collect(),
            );
            no_noun_rate.push(
                *doc.no_noun_rate
                    .get(&v.id)
                    .ok_or_else(|| missing("no_noun_rate", &v.id))?,
            );
        }
        let noun_onset_prior = ontology
            .nouns()
            .iter()
            .map(|n| {
                doc.noun_onset_prior
                    .get(n)
                    .cloned()
                    .ok_or_else(|| missing("noun_onset_prior", n))
            })
            .collect::<Result<Vec<_>, _>>()?;
        StatisticsBundle::from_parts(
            doc.bins,
            verb_onset_prior,
            noun_onset_prior,
            cooccurrence,
            no_noun_rate,
        )
    }
}

/// On-disk statistics document, keyed by ontology identifiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticsDocument {
    pub version: u32,
    pub bins: usize,
    pub verb_onset_prior: BTreeMap<String, Vec<f64>>,
    pub noun_onset_prior: BTreeMap<String, Vec<f64>>,
    pub cooccurrence: BTreeMap<String, BTreeMap<String, f64>>,
    pub no_noun_rate: BTreeMap<String, f64>,
}
