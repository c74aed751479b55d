//! Statistical NLU stack: maxent domain and intent classifiers, a CRF slot tagger,
//! and the one-vs-rest functionality filter.

pub mod crf;
pub mod maxent;
pub mod optim;

pub use crf::{train_crf, CrfConfig, CrfFeatureConfig, CrfModel, Lattice};
pub use maxent::{train_filter, train_maxent, BinaryFilterModel, MaxentModel, Target};
pub use optim::TrainConfig;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Dataset, FunctionalitySpec, Slot, Utterance};
use crate::error::{Error, Result};
use crate::features::{NGramSpace, Weighting};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NluConfig {
    /// N-gram range for the domain and intent classifiers.
    pub classifier_ngrams: (usize, usize),
    pub weighting: Weighting,
    pub maxent: TrainConfig,
    pub crf: CrfConfig,
}

impl Default for NluConfig {
    fn default() -> Self {
        NluConfig {
            classifier_ngrams: (1, 3),
            weighting: Weighting::Binary,
            maxent: TrainConfig::default(),
            crf: CrfConfig::default(),
        }
    }
}

impl NluConfig {
    /// Same hyper-parameters with every trainer reseeded from `seed`.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.maxent.seed = seed;
        c.crf.train.seed = seed.wrapping_add(1);
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NluPrediction {
    pub domain: String,
    pub domain_confidence: f64,
    pub intent: String,
    pub intent_confidence: f64,
    pub tags: Vec<String>,
    pub tag_confidence: f64,
    pub slots: Vec<Slot>,
}

impl NluPrediction {
    pub fn to_annotation(&self) -> Annotation {
        Annotation {
            domain: self.domain.clone(),
            intent: self.intent.clone(),
            slots: self.slots.clone(),
        }
    }
}

/// Trained domain classifier (absent when the data has a single domain), intent classifier,
/// and slot tagger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NluModels {
    pub domain: Option<MaxentModel>,
    /// The only domain label, used when `domain` is absent.
    pub sole_domain: Option<String>,
    pub intent: MaxentModel,
    pub crf: CrfModel,
}

impl NluModels {
    pub fn predict(&self, u: &Utterance) -> NluPrediction {
        let (domain, domain_confidence) = match (&self.domain, &self.sole_domain) {
            (Some(m), _) => {
                let (l, c, _) = m.predict(u);
                (l, c)
            }
            (None, Some(d)) => (d.clone(), 1.0),
            (None, None) => (String::new(), 1.0),
        };
        let (intent, intent_confidence, _) = self.intent.predict(u);
        let (tags, tag_confidence, slots) = self.crf.decode(&u.tokens);
        NluPrediction {
            domain,
            domain_confidence,
            intent,
            intent_confidence,
            tags,
            tag_confidence,
            slots,
        }
    }
}

/// Trains the full NLU stack on annotated `data`.
pub fn train_nlu(data: &Dataset, config: &NluConfig) -> Result<NluModels> {
    if data.is_empty() {
        return Err(Error::data("NLU training data is empty"));
    }
    if !data.is_fully_annotated() {
        return Err(Error::data("NLU training data must be fully annotated"));
    }
    let docs: Vec<&[String]> = data.utterances().map(|u| u.tokens.as_slice()).collect();
    let (lo, hi) = config.classifier_ngrams;
    let space = NGramSpace::fit(&docs, lo, hi)?;
    let domains: BTreeSet<&str> = data
        .iter()
        .filter_map(|e| e.annotation.as_ref().map(|a| a.domain.as_str()))
        .collect();
    let (domain, sole_domain) = if domains.len() >= 2 {
        (
            Some(train_maxent(data, Target::Domain, &space, config.weighting, &config.maxent)?),
            None,
        )
    } else {
        (None, domains.iter().next().map(|d| d.to_string()))
    };
    let intent = train_maxent(data, Target::Intent, &space, config.weighting, &config.maxent)?;
    let crf = train_crf(data, &config.crf)?;
    Ok(NluModels {
        domain,
        sole_domain,
        intent,
        crf,
    })
}

/// Trains the one-vs-rest filter: utterances of `spec` versus everything else in `data`.
pub fn train_functionality_filter(
    data: &Dataset,
    spec: &FunctionalitySpec,
    ngrams: (usize, usize),
    config: &TrainConfig,
) -> Result<BinaryFilterModel> {
    let in_class = data.filter(|e| e.annotation.as_ref().is_some_and(|a| spec.matches(a)));
    let out_class = data.filter(|e| e.annotation.as_ref().is_some_and(|a| !spec.matches(a)));
    let docs: Vec<&[String]> = data.utterances().map(|u| u.tokens.as_slice()).collect();
    let space = NGramSpace::fit(&docs, ngrams.0, ngrams.1)?;
    train_filter(&in_class, &out_class, &space, Weighting::Binary, config)
}
