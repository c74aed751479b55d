//! Subset selection over the augmentation set: paraphrase-greedy diversity, feature-based
//! submodular maximization, and the random and unique baselines.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::features::{check_n_range, NGramSpace, SparseVector, Weighting};
use crate::paraphrase::{ParaphraseDetector, PreparedUtterance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Para,
    Submodular,
    Random,
    Unique,
    All,
}

impl SelectionMethod {
    pub const ALL_METHODS: [SelectionMethod; 5] = [
        SelectionMethod::Para,
        SelectionMethod::Submodular,
        SelectionMethod::Random,
        SelectionMethod::Unique,
        SelectionMethod::All,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Para => "para",
            SelectionMethod::Submodular => "submodular",
            SelectionMethod::Random => "random",
            SelectionMethod::Unique => "unique",
            SelectionMethod::All => "all",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL_METHODS
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown selection method {:?}", s)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionBudget {
    pub fraction: f64,
    pub batch_fraction: f64,
}

impl Default for SelectionBudget {
    fn default() -> Self {
        SelectionBudget {
            fraction: 0.5,
            batch_fraction: 0.05,
        }
    }
}

fn ceil_fraction(fraction: f64, n: usize) -> usize {
    // guard against 0.1 * 30 = 3.0000000000000004
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

impl SelectionBudget {
    pub fn new(fraction: f64) -> Self {
        SelectionBudget {
            fraction,
            ..SelectionBudget::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config(format!("budget fraction {} must be in (0, 1]", self.fraction)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= self.fraction) {
            return Err(Error::config(format!(
                "batch fraction {} must be in (0, {}]",
                self.batch_fraction, self.fraction
            )));
        }
        Ok(())
    }

    /// Number of items to select from a pool of `n`: `ceil(p * n)`.
    pub fn size(&self, n: usize) -> usize {
        ceil_fraction(self.fraction, n).min(n)
    }

    /// Greedy batch size for a pool of `n`: `ceil(batch_fraction * n)`, at least 1.
    pub fn batch_size(&self, n: usize) -> usize {
        ceil_fraction(self.batch_fraction, n).max(1)
    }
}

/// Summary of one selection batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub batch: usize,
    pub size: usize,
    pub min_score: f64,
    pub median_score: f64,
}

/// Selected ids in selection order, each with its batch index and the score it was chosen on
/// (the paraphrase score `pr` or the marginal gain; 0 for the random baselines).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: SelectionMethod,
    pub budget: SelectionBudget,
    pub seed: Option<u64>,
    pub pool_size: usize,
    pub selected: Vec<String>,
    pub batches: Vec<usize>,
    pub scores: Vec<f64>,
    pub diagnostics: Vec<BatchDiagnostics>,
}

impl SelectionResult {
    fn build(
        method: SelectionMethod,
        budget: SelectionBudget,
        seed: Option<u64>,
        pool: &Dataset,
        picks: &[(usize, usize, f64)],
    ) -> Self {
        let mut diagnostics = Vec::new();
        let mut start = 0;
        while start < picks.len() {
            let b = picks[start].1;
            let end = start + picks[start..].iter().take_while(|p| p.1 == b).count();
            let mut s: Vec<f64> = picks[start..end].iter().map(|p| p.2).collect();
            s.sort_by(f64::total_cmp);
            let n = s.len();
            let median = if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) };
            diagnostics.push(BatchDiagnostics {
                batch: b,
                size: n,
                min_score: s[0],
                median_score: median,
            });
            start = end;
        }
        SelectionResult {
            method,
            budget,
            seed,
            pool_size: pool.len(),
            selected: picks.iter().map(|p| pool.entries()[p.0].utterance.id.clone()).collect(),
            batches: picks.iter().map(|p| p.1).collect(),
            scores: picks.iter().map(|p| p.2).collect(),
            diagnostics,
        }
    }

    /// The selected entries of `pool`, in selection order.
    pub fn apply(&self, pool: &Dataset) -> Result<Dataset> {
        let index: HashMap<&str, usize> = pool
            .iter()
            .enumerate()
            .map(|(i, e)| (e.utterance.id.as_str(), i))
            .collect();
        let idx = self
            .selected
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::data(format!("selected id {} not in pool", id)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(pool.select(&idx))
    }
}

/// Scores a candidate utterance against an anchor. `prepare` runs once per distinct text.
pub trait PairScorer: Sync {
    type Prepared: Send + Sync;

    fn prepare(&self, tokens: &[String]) -> Result<Self::Prepared>;

    fn score(&self, candidate: &Self::Prepared, anchor: &Self::Prepared) -> f64;
}

impl PairScorer for ParaphraseDetector {
    type Prepared = PreparedUtterance;

    fn prepare(&self, tokens: &[String]) -> Result<PreparedUtterance> {
        ParaphraseDetector::prepare(self, tokens)
    }

    fn score(&self, candidate: &PreparedUtterance, anchor: &PreparedUtterance) -> f64 {
        self.score_prepared(candidate, anchor)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyObjective {
    /// Take the candidates least similar to the anchors.
    #[default]
    Argmin,
    /// Take the most similar candidates instead (ablation).
    Argmax,
}

/// Diversity-driven greedy selection.
///
/// Every round scores each remaining candidate by `pr(u) = max_a score(u, a)` over the
/// current anchors, takes a batch of the lowest (or highest) `pr`, and adds the batch to the
/// anchors. Within a batch, candidates whose text already occurs in the selection are taken
/// only once no fresh text is left. Ties go to the smaller id.
pub fn select_paraphrase_greedy<P: PairScorer>(
    anchors: &Dataset,
    pool: &Dataset,
    scorer: &P,
    budget: SelectionBudget,
    objective: GreedyObjective,
) -> Result<SelectionResult> {
    budget.validate()?;
    if anchors.is_empty() {
        return Err(Error::data("paraphrase-greedy selection needs a non-empty anchor set"));
    }
    let n = pool.len();
    let k = budget.size(n);
    let s = budget.batch_size(n);

    // distinct texts over anchors and pool
    let mut text_ids: HashMap<&[String], usize> = HashMap::new();
    let mut texts: Vec<&[String]> = Vec::new();
    let mut anchor_texts = Vec::with_capacity(anchors.len());
    let mut pool_texts = Vec::with_capacity(n);
    for (u, is_pool) in anchors.utterances().map(|u| (u, false)).chain(pool.utterances().map(|u| (u, true))) {
        let t = *text_ids.entry(u.tokens.as_slice()).or_insert_with(|| {
            texts.push(u.tokens.as_slice());
            texts.len() - 1
        });
        if is_pool { pool_texts.push(t) } else { anchor_texts.push(t) }
    }
    let prepared: Vec<P::Prepared> = texts
        .par_iter()
        .map(|t| scorer.prepare(t))
        .collect::<Result<_>>()?;

    let mut is_anchor = vec![false; texts.len()];
    let mut candidate_text = vec![false; texts.len()];
    for &t in &pool_texts {
        candidate_text[t] = true;
    }
    let cand_list: Vec<usize> = (0..texts.len()).filter(|&t| candidate_text[t]).collect();
    let mut pr = vec![f64::NEG_INFINITY; texts.len()];
    let absorb = |new_anchors: &[usize], pr: &mut [f64], is_anchor: &mut [bool]| {
        let mut fresh: Vec<usize> = new_anchors.iter().copied().filter(|&a| !is_anchor[a]).collect();
        fresh.sort_unstable();
        fresh.dedup();
        if fresh.is_empty() {
            return;
        }
        let updates: Vec<f64> = cand_list
            .par_iter()
            .map(|&t| {
                fresh
                    .iter()
                    .map(|&a| scorer.score(&prepared[t], &prepared[a]))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        for (&t, v) in cand_list.iter().zip(updates) {
            pr[t] = pr[t].max(v);
        }
        for a in fresh {
            is_anchor[a] = true;
        }
    };
    absorb(&anchor_texts, &mut pr, &mut is_anchor);

    let ids: Vec<&str> = pool.utterances().map(|u| u.id.as_str()).collect();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut in_selection = vec![false; texts.len()];
    let mut picks: Vec<(usize, usize, f64)> = Vec::with_capacity(k);
    let mut batch = 0;
    while picks.len() < k {
        let want = s.min(k - picks.len());
        let key = |i: usize| match objective {
            GreedyObjective::Argmin => pr[pool_texts[i]],
            GreedyObjective::Argmax => -pr[pool_texts[i]],
        };
        remaining.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then_with(|| ids[a].cmp(ids[b])));
        let mut taken = Vec::with_capacity(want);
        let mut duplicates = Vec::new();
        for (pos, &i) in remaining.iter().enumerate() {
            if taken.len() == want {
                break;
            }
            let t = pool_texts[i];
            if in_selection[t] {
                duplicates.push(pos);
            } else {
                in_selection[t] = true;
                taken.push(pos);
            }
        }
        for &pos in &duplicates {
            if taken.len() == want {
                break;
            }
            taken.push(pos);
        }
        // fresh picks come first in sorted order; duplicates fill the tail
        let batch_items: Vec<usize> = taken.iter().map(|&pos| remaining[pos]).collect();
        for &i in &batch_items {
            picks.push((i, batch, pr[pool_texts[i]]));
        }
        let chosen: HashSet<usize> = taken.into_iter().collect();
        remaining = remaining
            .into_iter()
            .enumerate()
            .filter(|(pos, _)| !chosen.contains(pos))
            .map(|(_, i)| i)
            .collect();
        if picks.len() < k {
            let new_anchor_texts: Vec<usize> = batch_items.iter().map(|&i| pool_texts[i]).collect();
            absorb(&new_anchor_texts, &mut pr, &mut is_anchor);
        }
        batch += 1;
    }
    Ok(SelectionResult::build(SelectionMethod::Para, budget, None, pool, &picks))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubmodularConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub feature_weight: f64,
    pub weighting: Weighting,
}

impl Default for SubmodularConfig {
    fn default() -> Self {
        SubmodularConfig {
            n_min: 2,
            n_max: 4,
            feature_weight: 1.0,
            weighting: Weighting::Tfidf,
        }
    }
}

/// `F(S) = sum_f w * sqrt(sum_{u in S} x_u(f))` over non-negative feature vectors.
#[derive(Clone, Debug)]
pub struct FeatureObjective {
    pub vectors: Vec<SparseVector>,
    pub feature_weight: f64,
    pub dim: usize,
}

impl FeatureObjective {
    pub fn fit(pool: &Dataset, config: &SubmodularConfig) -> Result<Self> {
        check_n_range(config.n_min, config.n_max)?;
        if !(config.feature_weight > 0.0) {
            return Err(Error::config("submodular feature weight must be positive"));
        }
        let docs: Vec<&[String]> = pool.utterances().map(|u| u.tokens.as_slice()).collect();
        if docs.is_empty() {
            return Ok(FeatureObjective { vectors: Vec::new(), feature_weight: config.feature_weight, dim: 0 });
        }
        let space = NGramSpace::fit(&docs, config.n_min, config.n_max)?;
        let vectors = docs.iter().map(|d| space.extract(d, config.weighting)).collect();
        Ok(FeatureObjective {
            vectors,
            feature_weight: config.feature_weight,
            dim: space.dim(),
        })
    }

    /// Feature masses of a set.
    pub fn masses(&self, set: &[usize]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for &i in set {
            for (f, v) in self.vectors[i].iter() {
                m[f] += v;
            }
        }
        m
    }

    pub fn value(&self, set: &[usize]) -> f64 {
        self.feature_weight * self.masses(set).iter().map(|m| m.sqrt()).sum::<f64>()
    }

    /// `F(S + u) - F(S)` given the masses of `S`.
    ///
    /// Terms are summed in sorted order so that candidates with equal term multisets get
    /// bit-identical gains and fall through to the id tie-break.
    pub fn gain(&self, masses: &[f64], u: usize) -> f64 {
        let mut terms: Vec<f64> = self.vectors[u]
            .iter()
            .map(|(f, v)| {
                let m = masses[f];
                // sqrt(m + v) - sqrt(m), without cancellation
                let denom = (m + v).sqrt() + m.sqrt();
                if denom > 0.0 {
                    v / denom
                } else {
                    0.0
                }
            })
            .collect();
        terms.sort_by(f64::total_cmp);
        self.feature_weight * terms.iter().sum::<f64>()
    }
}

#[derive(PartialEq)]
struct HeapItem<'a> {
    gain: f64,
    id: &'a str,
    index: usize,
    stamp: usize,
}

impl Eq for HeapItem<'_> {}

impl Ord for HeapItem<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on gain; smaller id wins ties
        self.gain.total_cmp(&other.gain).then_with(|| other.id.cmp(self.id))
    }
}

impl PartialOrd for HeapItem<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy maximization of the feature objective under `|S| <= k`.
pub fn select_submodular(pool: &Dataset, budget: SelectionBudget, config: &SubmodularConfig) -> Result<SelectionResult> {
    budget.validate()?;
    let objective = FeatureObjective::fit(pool, config)?;
    let k = budget.size(pool.len());
    let ids: Vec<&str> = pool.utterances().map(|u| u.id.as_str()).collect();
    let mut masses = vec![0.0; objective.dim];
    let mut heap: BinaryHeap<HeapItem> = (0..pool.len())
        .map(|i| HeapItem {
            gain: objective.gain(&masses, i),
            id: ids[i],
            index: i,
            stamp: 0,
        })
        .collect();
    let mut picks = Vec::with_capacity(k);
    while picks.len() < k {
        let Some(mut top) = heap.pop() else { break };
        if top.stamp == picks.len() {
            for (f, v) in objective.vectors[top.index].iter() {
                masses[f] += v;
            }
            picks.push((top.index, 0, top.gain));
        } else {
            top.gain = objective.gain(&masses, top.index);
            top.stamp = picks.len();
            heap.push(top);
        }
    }
    Ok(SelectionResult::build(SelectionMethod::Submodular, budget, None, pool, &picks))
}

/// Uniform sample of `k` items without replacement.
pub fn select_random(pool: &Dataset, budget: SelectionBudget, seed: u64) -> Result<SelectionResult> {
    budget.validate()?;
    let k = budget.size(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<(usize, usize, f64)> = sample(&mut rng, pool.len(), k).into_iter().map(|i| (i, 0, 0.0)).collect();
    Ok(SelectionResult::build(SelectionMethod::Random, budget, Some(seed), pool, &picks))
}

/// Random subset of the distinct texts; when there are fewer than `k`, all of them plus a
/// random fill from the remaining duplicates, without replacement.
pub fn select_unique(pool: &Dataset, budget: SelectionBudget, seed: u64) -> Result<SelectionResult> {
    budget.validate()?;
    let k = budget.size(pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<&[String]> = HashSet::new();
    let (mut firsts, mut rest) = (Vec::new(), Vec::new());
    for (i, u) in pool.utterances().enumerate() {
        if seen.insert(u.tokens.as_slice()) {
            firsts.push(i);
        } else {
            rest.push(i);
        }
    }
    let chosen: Vec<usize> = if firsts.len() >= k {
        sample(&mut rng, firsts.len(), k).into_iter().map(|j| firsts[j]).collect()
    } else {
        let fill = sample(&mut rng, rest.len(), k - firsts.len()).into_iter().map(|j| rest[j]);
        firsts.iter().copied().chain(fill).collect()
    };
    let picks: Vec<(usize, usize, f64)> = chosen.into_iter().map(|i| (i, 0, 0.0)).collect();
    Ok(SelectionResult::build(SelectionMethod::Unique, budget, Some(seed), pool, &picks))
}

/// Identity selection: every item, in pool order.
pub fn select_all(pool: &Dataset) -> SelectionResult {
    let picks: Vec<(usize, usize, f64)> = (0..pool.len()).map(|i| (i, 0, 0.0)).collect();
    SelectionResult::build(SelectionMethod::All, SelectionBudget::new(1.0), None, pool, &picks)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{Entry, Origin, Provenance, Utterance};
    use proptest::prelude::*;

    pub(crate) fn pool(texts: &[&str]) -> Dataset {
        let entries = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Entry {
                utterance: Utterance::from_text(format!("u{:02}", i), t, Origin::Augmented),
                annotation: None,
            })
            .collect();
        Dataset::new(entries, Provenance::default()).unwrap()
    }

    /// Scores by a fixed table keyed on the candidate text, shifted by the anchor's table entry.
    struct TableScorer(HashMap<String, f64>);

    impl PairScorer for TableScorer {
        type Prepared = String;

        fn prepare(&self, tokens: &[String]) -> Result<String> {
            Ok(tokens.join(" "))
        }

        fn score(&self, c: &String, a: &String) -> f64 {
            let base = self.0.get(c).copied().unwrap_or(0.0);
            // anchors with a table entry pull candidates of equal first letter upward
            if a.chars().next() == c.chars().next() && self.0.contains_key(a) {
                base + 0.5
            } else {
                base
            }
        }
    }

    #[test]
    fn budget_formulas() {
        let b = SelectionBudget::new(0.5);
        assert_eq!(b.batch_size(200), 10);
        assert_eq!(b.batch_size(201), 11);
        assert_eq!(b.size(7), 4);
        assert_eq!(SelectionBudget::new(0.1).size(30), 3);
        assert!(SelectionBudget { fraction: 0.01, batch_fraction: 0.05 }.validate().is_err());
        assert!(SelectionBudget::new(0.0).validate().is_err());
    }

    #[test]
    fn stub_trace_recomputes_against_grown_anchors() {
        let u = pool(&["a one", "b two", "b three"]);
        let anchors = pool(&["x anchor"]);
        let table: HashMap<String, f64> = [("a one", 0.9), ("b two", 0.1), ("b three", 0.5)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let budget = SelectionBudget { fraction: 0.6, batch_fraction: 0.3 };
        let r = select_paraphrase_greedy(&anchors, &u, &TableScorer(table), budget, GreedyObjective::Argmin).unwrap();
        // "b three" rises to 1.0 once "b two" joins the anchors, so "a one" is next
        assert_eq!(r.selected, vec!["u01", "u00"]);
        assert_eq!(r.batches, vec![0, 1]);
        assert_eq!(r.scores, vec![0.1, 0.9]);
    }

    #[test]
    fn full_budget_is_a_permutation() {
        let u = pool(&["a", "b", "c", "d", "a"]);
        let r = select_paraphrase_greedy(&pool(&["z"]), &u, &TableScorer(HashMap::new()), SelectionBudget::new(1.0), GreedyObjective::Argmin)
            .unwrap();
        let mut ids = r.selected.clone();
        ids.sort();
        assert_eq!(ids, vec!["u00", "u01", "u02", "u03", "u04"]);
        // the duplicate "a" comes after every fresh text of its batch
        assert_eq!(r.selected.last().unwrap(), "u04");
    }

    #[test]
    fn empty_anchor_set_is_an_error() {
        let u = pool(&["a"]);
        assert!(select_paraphrase_greedy(&Dataset::empty(), &u, &TableScorer(HashMap::new()), SelectionBudget::new(1.0), GreedyObjective::Argmin).is_err());
    }

    #[test]
    fn single_feature_value() {
        let obj = FeatureObjective {
            vectors: vec![SparseVector::from_pairs([(0, 4.0)])],
            feature_weight: 1.0,
            dim: 1,
        };
        assert_eq!(obj.value(&[0]), 2.0);
    }

    #[test]
    fn repeated_utterance_loses_to_distinct_one() {
        let u = pool(&["set an alarm for seven", "set an alarm for seven", "wake me up at noon please"]);
        let r = select_submodular(&u, SelectionBudget::new(0.66), &SubmodularConfig::default()).unwrap();
        assert_eq!(r.selected.len(), 2);
        assert!(r.selected.contains(&"u02".to_string()));
    }

    #[test]
    fn unique_fill_composition() {
        let u = pool(&["same"; 10]);
        let r = select_unique(&u, SelectionBudget::new(0.5), 3).unwrap();
        assert_eq!(r.selected.len(), 5);
        assert_eq!(r.selected[0], "u00");
        let distinct: HashSet<_> = r.selected.iter().collect();
        assert_eq!(distinct.len(), 5);

        let u = pool(&["a", "b", "c", "d", "e", "f", "g", "h", "a", "b"]);
        let r = select_unique(&u, SelectionBudget::new(0.4), 3).unwrap();
        let texts: HashSet<String> = r.apply(&u).unwrap().utterances().map(|u| u.text()).collect();
        assert_eq!(texts.len(), 4);
    }

    #[test]
    fn unique_on_distinct_texts_matches_random() {
        let u = pool(&["a", "b", "c", "d", "e", "f"]);
        let b = SelectionBudget::new(0.5);
        assert_eq!(select_unique(&u, b, 9).unwrap().selected, select_random(&u, b, 9).unwrap().selected);
    }

    #[test]
    fn random_is_seeded_and_uniform() {
        let u = pool(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let b = SelectionBudget::new(0.5);
        assert_eq!(select_random(&u, b, 4).unwrap(), select_random(&u, b, 4).unwrap());
        assert_eq!(select_random(&u, SelectionBudget::new(1.0), 4).unwrap().selected.len(), 10);
        let mut counts: HashMap<String, usize> = HashMap::new();
        for seed in 0..1000 {
            for id in select_random(&u, b, seed).unwrap().selected {
                *counts.entry(id).or_default() += 1;
            }
        }
        for c in counts.values() {
            assert!((*c as f64 / 1000.0 - 0.5).abs() <= 0.05, "{}", c);
        }
    }

    #[test]
    fn method_names_parse() {
        for m in SelectionMethod::ALL_METHODS {
            assert_eq!(m.as_str().parse::<SelectionMethod>().unwrap(), m);
        }
        assert!("best".parse::<SelectionMethod>().is_err());
    }

    /// Re-evaluates every candidate's gain as `F(S + u) - F(S)` at each step.
    pub(crate) fn naive_greedy(u: &Dataset, obj: &FeatureObjective, k: usize) -> Vec<String> {
        let mut chosen: Vec<usize> = Vec::new();
        let ids: Vec<&str> = u.utterances().map(|x| x.id.as_str()).collect();
        while chosen.len() < k {
            let base = obj.masses(&chosen);
            let best = (0..ids.len())
                .filter(|i| !chosen.contains(i))
                .max_by(|&a, &b| obj.gain(&base, a).total_cmp(&obj.gain(&base, b)).then_with(|| ids[b].cmp(ids[a])))
                .unwrap();
            chosen.push(best);
        }
        chosen.into_iter().map(|i| ids[i].to_string()).collect()
    }

    fn objective_strategy() -> impl Strategy<Value = FeatureObjective> {
        (1usize..6, 2usize..9).prop_flat_map(|(dim, n)| {
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, dim), n).prop_map(move |rows| FeatureObjective {
                vectors: rows
                    .into_iter()
                    .map(|r| SparseVector::from_pairs(r.into_iter().enumerate().filter(|(_, v)| *v > 0.5)))
                    .collect(),
                feature_weight: 1.0,
                dim,
            })
        })
    }

    proptest! {
        #[test]
        fn objective_is_monotone_with_diminishing_returns(obj in objective_strategy(), mask in any::<u16>(), extra in any::<u16>()) {
            let n = obj.vectors.len();
            let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let sup: Vec<usize> = (0..n).filter(|i| (mask | extra) >> i & 1 == 1).collect();
            for u in 0..n {
                let gain_s = obj.gain(&obj.masses(&s), u);
                let gain_sup = obj.gain(&obj.masses(&sup), u);
                prop_assert!(gain_s >= -1e-12);
                prop_assert!(gain_s + 1e-12 >= gain_sup);
            }
        }

        #[test]
        fn lazy_greedy_matches_naive_greedy(words in prop::collection::vec(prop::collection::vec(0usize..5, 1..7), 1..30), p in 0.05f64..1.0) {
            let vocab = ["play", "the", "song", "by", "now"];
            let texts: Vec<String> = words.iter().map(|w| w.iter().map(|&i| vocab[i]).collect::<Vec<_>>().join(" ")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let u = pool(&refs);
            let b = SelectionBudget { fraction: p, batch_fraction: p.min(0.05) };
            let cfg = SubmodularConfig::default();
            let lazy = select_submodular(&u, b, &cfg).unwrap();
            let obj = FeatureObjective::fit(&u, &cfg).unwrap();
            prop_assert_eq!(lazy.selected, naive_greedy(&u, &obj, b.size(u.len())));
        }

        #[test]
        fn budget_is_exact(n in 1usize..40, p in 0.01f64..1.0, seed in any::<u64>()) {
            let texts: Vec<String> = (0..n).map(|i| format!("t{} x", i % 7)).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let u = pool(&refs);
            let b = SelectionBudget { fraction: p, batch_fraction: p.min(0.05) };
            let k = b.size(n);
            prop_assert_eq!(select_random(&u, b, seed).unwrap().selected.len(), k);
            prop_assert_eq!(select_unique(&u, b, seed).unwrap().selected.len(), k);
            prop_assert_eq!(select_submodular(&u, b, &SubmodularConfig::default()).unwrap().selected.len(), k);
            let r = select_paraphrase_greedy(&pool(&["z"]), &u, &TableScorer(HashMap::new()), b, GreedyObjective::Argmin).unwrap();
            prop_assert_eq!(r.selected.len(), k);
        }
    }
}
