//! One pass of functionality-specific self-training: filter the unlabeled pool, pseudo-label
//! the survivors with the current NLU stack, fuse component confidences, and aggregate
//! the confident utterances across a sweep of thresholds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Entry, FunctionalitySpec, Origin, Utterance};
use crate::error::{Error, Result};
use crate::nlu::{self, BinaryFilterModel, NluConfig, NluModels, NluPrediction, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionComponent {
    Domain,
    Intent,
    Ner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// One copy per threshold exceeded.
    Multiset,
    /// One copy per utterance exceeding the lowest threshold.
    Deduplicated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    pub filter_threshold: f64,
    pub fusion_components: BTreeSet<FusionComponent>,
    pub threshold_sweep: Vec<f64>,
    pub aggregate_weight: f64,
    pub aggregation_mode: AggregationMode,
    /// Weight each copy by the threshold it passed instead of `aggregate_weight`.
    pub per_threshold_weighting: bool,
    /// Drop pseudo-labels whose predicted intent is outside the functionality.
    pub require_target_intent: bool,
    pub filter_ngrams: (usize, usize),
    pub filter_train: TrainConfig,
    pub nlu: NluConfig,
    pub seed: u64,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            filter_threshold: 0.5,
            fusion_components: [FusionComponent::Intent, FusionComponent::Ner].into_iter().collect(),
            threshold_sweep: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            aggregate_weight: 1.0,
            aggregation_mode: AggregationMode::Multiset,
            per_threshold_weighting: false,
            require_target_intent: true,
            filter_ngrams: (1, 3),
            filter_train: TrainConfig::default(),
            nlu: NluConfig::default(),
            seed: 0,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fusion_components.is_empty() {
            return Err(Error::config("fusion needs at least one component"));
        }
        for (i, &t) in self.threshold_sweep.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config(format!("sweep threshold {} outside (0, 1)", t)));
            }
            if i > 0 && t <= self.threshold_sweep[i - 1] {
                return Err(Error::config("sweep thresholds must be strictly ascending"));
            }
        }
        if !(self.aggregate_weight >= 0.0 && self.aggregate_weight.is_finite()) {
            return Err(Error::config("aggregate weight must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabeledUtterance {
    pub utterance: Utterance,
    pub prediction: NluPrediction,
    pub fused_score: f64,
}

/// Product of the selected component confidences.
pub fn fuse(prediction: &NluPrediction, components: &BTreeSet<FusionComponent>) -> f64 {
    components
        .iter()
        .map(|c| match c {
            FusionComponent::Domain => prediction.domain_confidence,
            FusionComponent::Intent => prediction.intent_confidence,
            FusionComponent::Ner => prediction.tag_confidence,
        })
        .product()
}

/// Utterances whose filter score is strictly above `threshold`, in pool order.
pub fn filter_pool(filter: &BinaryFilterModel, pool: &Dataset, threshold: f64) -> Dataset {
    pool.filter(|e| filter.score(&e.utterance.tokens) > threshold)
}

pub fn pseudo_label(
    models: &NluModels,
    candidates: &Dataset,
    components: &BTreeSet<FusionComponent>,
) -> Vec<PseudoLabeledUtterance> {
    candidates
        .utterances()
        .map(|u| {
            let prediction = models.predict(u);
            let fused_score = fuse(&prediction, components);
            PseudoLabeledUtterance {
                utterance: u.clone(),
                prediction,
                fused_score,
            }
        })
        .collect()
}

fn augmented_entry(p: &PseudoLabeledUtterance, id: String, weight: f64) -> Entry {
    Entry {
        utterance: Utterance {
            id,
            tokens: p.utterance.tokens.clone(),
            origin: Origin::Augmented,
            weight,
        },
        annotation: Some(p.prediction.to_annotation()),
    }
}

/// Builds the augmentation set from pseudo-labeled utterances. In multiset mode an utterance
/// passing `k` sweep thresholds contributes `k` copies, grouped by threshold.
pub fn aggregate(pseudo: &[PseudoLabeledUtterance], config: &SslConfig) -> Result<Dataset> {
    config.validate()?;
    let mut entries = Vec::new();
    match config.aggregation_mode {
        AggregationMode::Multiset => {
            for &t in &config.threshold_sweep {
                let weight = if config.per_threshold_weighting { t } else { config.aggregate_weight };
                for p in pseudo.iter().filter(|p| p.fused_score > t) {
                    entries.push(augmented_entry(p, format!("{}@{}", p.utterance.id, t), weight));
                }
            }
        }
        AggregationMode::Deduplicated => {
            if let Some(&lowest) = config.threshold_sweep.first() {
                let weight = if config.per_threshold_weighting { lowest } else { config.aggregate_weight };
                for p in pseudo.iter().filter(|p| p.fused_score > lowest) {
                    entries.push(augmented_entry(p, format!("{}@aug", p.utterance.id), weight));
                }
            }
        }
    }
    Dataset::new(entries, Default::default())
}

/// Per-run counts written next to the augmentation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SslManifest {
    pub seed: u64,
    pub pool_size: usize,
    pub filtered: usize,
    pub pseudo_labeled: usize,
    /// Utterances with fused score above each sweep threshold.
    pub above_threshold: BTreeMap<String, usize>,
    pub augmentation_size: usize,
    pub config: SslConfig,
}

#[derive(Clone, Debug)]
pub struct SslModels {
    pub filter: BinaryFilterModel,
    pub nlu: NluModels,
}

#[derive(Clone, Debug)]
pub struct SslOutput {
    pub augmentation: Dataset,
    pub models: SslModels,
    pub pseudo_labeled: Vec<PseudoLabeledUtterance>,
    pub manifest: SslManifest,
}

/// Trains the filter on `training` (the functionality versus everything else).
pub fn train_ssl_filter(training: &Dataset, spec: &FunctionalitySpec, config: &SslConfig) -> Result<BinaryFilterModel> {
    let mut filter = nlu::train_functionality_filter(
        training,
        spec,
        config.filter_ngrams,
        &config.filter_train.with_seed(config.seed),
    )?;
    filter.threshold = config.filter_threshold;
    Ok(filter)
}

/// Runs filtering, pseudo-labeling, and aggregation with already-trained models.
pub fn run_ssl_with_models(
    models: SslModels,
    pool: &Dataset,
    spec: &FunctionalitySpec,
    config: &SslConfig,
) -> Result<SslOutput> {
    config.validate()?;
    let candidates = filter_pool(&models.filter, pool, config.filter_threshold);
    let mut pseudo = pseudo_label(&models.nlu, &candidates, &config.fusion_components);
    if config.require_target_intent {
        pseudo.retain(|p| p.prediction.domain == spec.domain && spec.intents.contains(&p.prediction.intent));
    }
    let augmentation = aggregate(&pseudo, config)?;
    let above_threshold = config
        .threshold_sweep
        .iter()
        .map(|&t| (format!("{}", t), pseudo.iter().filter(|p| p.fused_score > t).count()))
        .collect();
    let manifest = SslManifest {
        seed: config.seed,
        pool_size: pool.len(),
        filtered: candidates.len(),
        pseudo_labeled: pseudo.len(),
        above_threshold,
        augmentation_size: augmentation.len(),
        config: config.clone(),
    };
    Ok(SslOutput {
        augmentation,
        models,
        pseudo_labeled: pseudo,
        manifest,
    })
}

/// The end-to-end pass: train filter and NLU on `synthetic` plus `annotated`, then filter,
/// pseudo-label, and aggregate `pool`.
pub fn run_ssl(
    annotated: &Dataset,
    synthetic: &Dataset,
    pool: &Dataset,
    spec: &FunctionalitySpec,
    config: &SslConfig,
) -> Result<SslOutput> {
    config.validate()?;
    spec.validate()?;
    let training = Dataset::concat([synthetic, annotated])?;
    let filter = train_ssl_filter(&training, spec, config)?;
    let nlu = nlu::train_nlu(&training, &config.nlu.reseeded(config.seed))?;
    run_ssl_with_models(SslModels { filter, nlu }, pool, spec, config)
}
