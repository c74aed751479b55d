//! Benchmark plans and the cell runner.
//!
//! A plan names one or more functionalities, each with a hand-written grammar (the
//! synthetic training data) and a live grammar standing in for user traffic. Live data is
//! split into an annotated set, a held-out test set, and part of the unlabeled pool; the
//! background grammar supplies the other functionalities' training data and pool traffic.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::report::{BenchmarkReport, CellRecord};
use super::ser::evaluate_model;
use crate::corpus::{
    generate_corpus_with, split_increments, Dataset, FunctionalitySpec, GenerateOptions, GrammarSpec, Origin,
};
use crate::error::{Error, Result};
use crate::nlu::{train_nlu, NluConfig, NluModels};
use crate::paraphrase::{
    mine_pairs, train_detector, train_embedding, DetectorConfig, EmbeddingKind, MarginConfig, MiningConfig,
    ParaphraseDetector,
};
use crate::selection::{
    select_paraphrase_greedy, select_random, select_submodular, select_unique, GreedyObjective, SelectionBudget,
    SelectionMethod, SubmodularConfig,
};
use crate::ssl::{run_ssl_with_models, train_ssl_filter, SslConfig, SslModels};

/// A compared training-data recipe. Every system includes the synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum System {
    /// Synthetic data only; evaluated at increment 0.
    Baseline,
    /// Synthetic plus the annotated increment.
    Annotation,
    /// Plus the whole self-training augmentation set.
    AnnotationSsl,
    /// Plus a selected subset of the augmentation set.
    Selected(SelectionMethod),
}

impl System {
    pub fn defaults() -> Vec<System> {
        vec![
            System::Baseline,
            System::Annotation,
            System::AnnotationSsl,
            System::Selected(SelectionMethod::Para),
            System::Selected(SelectionMethod::Random),
            System::Selected(SelectionMethod::Submodular),
            System::Selected(SelectionMethod::Unique),
        ]
    }

    fn uses_ssl(self) -> bool {
        matches!(self, System::AnnotationSsl | System::Selected(_))
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            System::Baseline => f.write_str("baseline"),
            System::Annotation => f.write_str("annotation"),
            System::AnnotationSsl => f.write_str("annotation+ssl"),
            System::Selected(m) => write!(f, "annotation+ssl+{}", m),
        }
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(System::Baseline),
            "annotation" => Ok(System::Annotation),
            "annotation+ssl" => Ok(System::AnnotationSsl),
            _ => match s.strip_prefix("annotation+ssl+").map(str::parse::<SelectionMethod>) {
                Some(Ok(SelectionMethod::All)) | Some(Err(_)) | None => {
                    Err(Error::config(format!("unknown system {:?}", s)))
                }
                Some(Ok(m)) => Ok(System::Selected(m)),
            },
        }
    }
}

impl TryFrom<String> for System {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<System> for String {
    fn from(s: System) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalityPlan {
    pub spec: FunctionalitySpec,
    pub synthetic_grammar: PathBuf,
    pub live_grammar: PathBuf,
    pub synthetic_size: usize,
    pub annotated_size: usize,
    pub test_size: usize,
    /// Live utterances of this functionality placed in the unlabeled pool.
    pub pool_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundPlan {
    pub grammar: PathBuf,
    pub train_size: usize,
    pub pool_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionPlan {
    pub budget: SelectionBudget,
    pub objective: GreedyObjective,
    pub submodular: SubmodularConfig,
    pub mining: MiningConfig,
    pub margin: MarginConfig,
    pub embedding_kind: EmbeddingKind,
    pub detector: DetectorConfig,
}

impl Default for SelectionPlan {
    fn default() -> Self {
        SelectionPlan {
            budget: SelectionBudget::new(0.5),
            objective: GreedyObjective::Argmin,
            submodular: SubmodularConfig::default(),
            mining: MiningConfig::default(),
            margin: MarginConfig::default(),
            embedding_kind: EmbeddingKind::WordAvg,
            detector: DetectorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkPlan {
    pub seed: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_increments")]
    pub increments: Vec<f64>,
    #[serde(default = "System::defaults")]
    pub systems: Vec<System>,
    pub functionalities: Vec<FunctionalityPlan>,
    pub background: BackgroundPlan,
    #[serde(default)]
    pub nlu: NluConfig,
    #[serde(default)]
    pub ssl: SslConfig,
    #[serde(default)]
    pub selection: SelectionPlan,
}

fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}

fn default_increments() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.5, 0.8, 1.0]
}

impl BenchmarkPlan {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let plan: BenchmarkPlan = toml::from_str(s).map_err(|e| Error::config(format!("plan: {}", e)))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Reads a plan file; grammar paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut plan = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        plan.resolve_paths(base);
        Ok(plan)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for f in &mut self.functionalities {
            join(&mut f.synthetic_grammar);
            join(&mut f.live_grammar);
        }
        join(&mut self.background.grammar);
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("plan needs at least one seed"));
        }
        if self.increments.is_empty() || self.increments.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("increments must be non-empty and strictly ascending"));
        }
        if self.increments.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::config("increments must lie in [0, 1]"));
        }
        if self.systems.is_empty() {
            return Err(Error::config("plan needs at least one system"));
        }
        if self.functionalities.is_empty() {
            return Err(Error::config("plan needs at least one functionality"));
        }
        for f in &self.functionalities {
            f.spec.validate()?;
            if f.annotated_size == 0 || f.test_size == 0 || f.synthetic_size == 0 {
                return Err(Error::config(format!(
                    "functionality {}: synthetic, annotated, and test sizes must be positive",
                    f.spec.name
                )));
            }
        }
        self.ssl.validate()?;
        self.selection.budget.validate()?;
        self.selection.margin.validate()?;
        Ok(())
    }
}

/// Seed of one cell: the first eight bytes (little-endian) of
/// `SHA-256("{plan_seed}|{functionality}|{increment}|{system}|{run_seed}")`.
pub fn cell_seed(plan_seed: u64, functionality: &str, increment: f64, system: &str, run_seed: u64) -> u64 {
    let digest = Sha256::digest(format!("{}|{}|{}|{}|{}", plan_seed, functionality, increment, system, run_seed));
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Fixed data of one functionality, shared by every cell.
#[derive(Clone, Debug)]
pub struct FunctionalityData {
    pub spec: FunctionalitySpec,
    pub synthetic: Dataset,
    pub background: Dataset,
    pub annotated: Dataset,
    pub test: Dataset,
    pub pool: Dataset,
    pub catalogs: BTreeMap<String, Vec<String>>,
}

fn generate(grammar: &GrammarSpec, count: usize, seed: u64, prefix: &str, origin: Origin) -> Result<Dataset> {
    if count == 0 {
        return Ok(Dataset::empty());
    }
    let opts = GenerateOptions {
        id_prefix: prefix.to_string(),
        origin,
    };
    generate_corpus_with(grammar, count, seed, &opts)
}

/// Generates the corpora for one functionality of `plan`.
pub fn build_functionality_data(plan: &BenchmarkPlan, f: &FunctionalityPlan) -> Result<FunctionalityData> {
    let synthetic_grammar = GrammarSpec::load(&f.synthetic_grammar)?;
    let live_grammar = GrammarSpec::load(&f.live_grammar)?;
    let background_grammar = GrammarSpec::load(&plan.background.grammar)?;
    let name = &f.spec.name;
    let seed = |what: &str| cell_seed(plan.seed, name, 0.0, what, 0);
    let synthetic = generate(&synthetic_grammar, f.synthetic_size, seed("synthetic"), "syn/", Origin::Synthetic)?;
    let background = generate(
        &background_grammar,
        plan.background.train_size,
        seed("background"),
        "bg/",
        Origin::Synthetic,
    )?;
    let live_total = f.annotated_size + f.test_size + f.pool_size;
    let live = generate(&live_grammar, live_total, seed("live"), "live/", Origin::Annotated)?;
    let idx: Vec<usize> = (0..live_total).collect();
    let annotated = live.select(&idx[..f.annotated_size]);
    let test = live.select(&idx[f.annotated_size..f.annotated_size + f.test_size]);
    let live_pool = live.select(&idx[f.annotated_size + f.test_size..]).strip_annotations();
    let background_pool = generate(
        &background_grammar,
        plan.background.pool_size,
        seed("background-pool"),
        "bgpool/",
        Origin::Unlabeled,
    )?
    .strip_annotations();
    let pool = Dataset::concat([&live_pool, &background_pool])?;
    let mut catalogs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for g in [&synthetic_grammar, &live_grammar, &background_grammar] {
        for (k, v) in &g.catalogs {
            let entry = catalogs.entry(k.clone()).or_default();
            for value in v {
                if !entry.contains(value) {
                    entry.push(value.clone());
                }
            }
        }
    }
    Ok(FunctionalityData {
        spec: f.spec.clone(),
        synthetic,
        background,
        annotated,
        test,
        pool,
        catalogs,
    })
}

struct Unit<'a> {
    data: &'a FunctionalityData,
    increment: f64,
    increment_index: usize,
    run_seed: u64,
}

/// Trains the paraphrase scorer on pairs mined from `training`.
pub fn train_paraphrase_scorer(
    training: &Dataset,
    catalogs: &BTreeMap<String, Vec<String>>,
    extra_vocabulary: &[String],
    plan: &SelectionPlan,
    seed: u64,
) -> Result<ParaphraseDetector> {
    let mining = MiningConfig { seed, ..plan.mining.clone() };
    let pairs = mine_pairs(training, catalogs, &mining)?;
    let positives: Vec<_> = pairs.iter().filter(|p| p.label).cloned().collect();
    let margin = MarginConfig { seed, ..plan.margin.clone() };
    let embedding = train_embedding(&positives, &margin, plan.embedding_kind, extra_vocabulary)?;
    let detector = DetectorConfig { seed, ..plan.detector.clone() };
    train_detector(&pairs, &embedding, &detector)
}

fn run_unit(plan: &BenchmarkPlan, unit: &Unit) -> Result<Vec<CellRecord>> {
    let data = unit.data;
    let name = data.spec.name.as_str();
    let seed_for = |what: &str| cell_seed(plan.seed, name, unit.increment, what, unit.run_seed);
    let split_seed = cell_seed(plan.seed, name, 0.0, "split", unit.run_seed);
    // the 0% increment is the synthetic-only setting
    let positive: Vec<f64> = plan.increments.iter().copied().filter(|&f| f > 0.0).collect();
    let skipped = plan.increments.len() - positive.len();
    let slice = if unit.increment == 0.0 {
        Dataset::empty()
    } else {
        split_increments(&data.annotated, &positive, split_seed)?.swap_remove(unit.increment_index - skipped)
    };
    let slice = &slice;
    let synthetic_all = Dataset::concat([&data.synthetic, &data.background])?;
    let training = Dataset::concat([&synthetic_all, slice])?;

    let evaluate = |system: System, train: &Dataset, models: Option<NluModels>, aug_size: usize| -> Result<(CellRecord, NluModels)> {
        let models = match models {
            Some(m) => m,
            None => train_nlu(train, &plan.nlu.reseeded(seed_for(&system.to_string())))?,
        };
        let eval = evaluate_model(&models, &data.test)?;
        let t = eval.total;
        Ok((
            CellRecord {
                functionality: name.to_string(),
                increment: unit.increment,
                system: system.to_string(),
                seed: unit.run_seed,
                ser: t.ser(),
                substitutions: t.substitutions,
                insertions: t.insertions,
                deletions: t.deletions,
                correct: t.correct,
                aug_size,
            },
            models,
        ))
    };

    let mut records = Vec::new();
    let needs_ssl = plan.systems.iter().any(|s| s.uses_ssl());
    let mut annotation_model = None;
    for &system in &plan.systems {
        match system {
            System::Baseline if unit.increment == 0.0 => {
                records.push(evaluate(system, &synthetic_all, None, 0)?.0);
            }
            System::Annotation => {
                let (rec, models) = evaluate(system, &training, None, 0)?;
                records.push(rec);
                annotation_model = Some(models);
            }
            _ => {}
        }
    }
    if !needs_ssl {
        return Ok(records);
    }

    // the SSL labeler is the annotation-only model
    let nlu = match annotation_model {
        Some(m) => m,
        None => train_nlu(&training, &plan.nlu.reseeded(seed_for(&System::Annotation.to_string())))?,
    };
    let ssl_config = SslConfig {
        seed: seed_for("ssl"),
        ..plan.ssl.clone()
    };
    let filter = train_ssl_filter(&training, &data.spec, &ssl_config)?;
    let ssl = run_ssl_with_models(SslModels { filter, nlu }, &data.pool, &data.spec, &ssl_config)?;
    let augmentation = ssl.augmentation;

    let anchors = training.filter(|e| e.annotation.as_ref().is_some_and(|a| data.spec.matches(a)));
    let mut detector = None;
    for &system in &plan.systems {
        let subset = match system {
            System::AnnotationSsl => augmentation.clone(),
            System::Selected(method) => {
                let budget = plan.selection.budget;
                let seed = seed_for(&system.to_string());
                let result = match method {
                    SelectionMethod::Para => {
                        if detector.is_none() {
                            let vocab: Vec<String> = augmentation.utterances().flat_map(|u| u.tokens.clone()).collect();
                            detector = Some(train_paraphrase_scorer(
                                &training,
                                &data.catalogs,
                                &vocab,
                                &plan.selection,
                                seed_for("paraphrase"),
                            )?);
                        }
                        let det = detector.as_ref().expect("trained above");
                        select_paraphrase_greedy(&anchors, &augmentation, det, budget, plan.selection.objective)?
                    }
                    SelectionMethod::Submodular => select_submodular(&augmentation, budget, &plan.selection.submodular)?,
                    SelectionMethod::Random => select_random(&augmentation, budget, seed)?,
                    SelectionMethod::Unique => select_unique(&augmentation, budget, seed)?,
                    SelectionMethod::All => crate::selection::select_all(&augmentation),
                };
                result.apply(&augmentation)?
            }
            _ => continue,
        };
        let train = Dataset::concat([&training, &subset])?;
        records.push(evaluate(system, &train, None, subset.len())?.0);
    }
    Ok(records)
}

/// Runs every cell of `plan`. Cells are independent; the report order is fixed by the plan
/// (functionality, increment, run seed, system).
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    plan.validate()?;
    let data = plan
        .functionalities
        .iter()
        .map(|f| build_functionality_data(plan, f))
        .collect::<Result<Vec<_>>>()?;
    run_benchmark_on(plan, &data)
}

/// As [`run_benchmark`], with the corpora already built.
pub fn run_benchmark_on(plan: &BenchmarkPlan, data: &[FunctionalityData]) -> Result<BenchmarkReport> {
    let mut units = Vec::new();
    for d in data {
        for (increment_index, &increment) in plan.increments.iter().enumerate() {
            for &run_seed in &plan.seeds {
                units.push(Unit {
                    data: d,
                    increment,
                    increment_index,
                    run_seed,
                });
            }
        }
    }
    let results: Vec<Vec<CellRecord>> = units.par_iter().map(|u| run_unit(plan, u)).collect::<Result<_>>()?;
    Ok(BenchmarkReport {
        records: results.into_iter().flatten().collect(),
    })
}
