//! Maximum-entropy (multinomial logistic) classifiers and the binary functionality filter.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{epoch_batches, ScaledWeights, TrainConfig};
use crate::corpus::{Dataset, Utterance};
use crate::error::{Error, Result};
use crate::features::{NGramSpace, SparseVector, Weighting};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Domain,
    Intent,
}

/// One training example after duplicate merging. `weight` already includes the
/// `merged / total` rescaling so that minibatch gradients stay unbiased.
#[derive(Clone, Debug)]
struct Example {
    features: SparseVector,
    label: usize,
    weight: f64,
}

/// Merges examples with identical tokens and label by summing their weights.
fn merge_examples(
    items: impl Iterator<Item = (Vec<String>, usize, f64)>,
    space: &NGramSpace,
    weighting: Weighting,
) -> (Vec<Example>, usize) {
    let mut index: HashMap<(Vec<String>, usize), usize> = HashMap::new();
    let mut merged: Vec<(Vec<String>, usize, f64)> = Vec::new();
    let mut total = 0usize;
    for (tokens, label, w) in items {
        total += 1;
        let key = (tokens, label);
        match index.get(&key) {
            Some(&i) => merged[i].2 += w,
            None => {
                index.insert(key.clone(), merged.len());
                merged.push((key.0, key.1, w));
            }
        }
    }
    let examples = merged
        .into_iter()
        .map(|(tokens, label, weight)| Example {
            features: space.extract(&tokens, weighting),
            label,
            weight,
        })
        .collect();
    (examples, total)
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Index of the largest value; the first index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxentModel {
    /// Sorted lexicographically; ties in prediction resolve to the earliest label.
    pub labels: Vec<String>,
    pub space: NGramSpace,
    pub weighting: Weighting,
    /// Row-major `labels x space.dim()`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
}

impl MaxentModel {
    pub fn zeros(labels: Vec<String>, space: NGramSpace, weighting: Weighting) -> Self {
        let dim = space.dim();
        MaxentModel {
            weights: vec![0.0; labels.len() * dim],
            bias: vec![0.0; labels.len()],
            labels,
            space,
            weighting,
            l2: 0.0,
        }
    }

    fn scores(&self, x: &SparseVector) -> Vec<f64> {
        let dim = self.space.dim();
        (0..self.labels.len())
            .map(|k| self.bias[k] + x.iter().map(|(f, v)| v * self.weights[k * dim + f]).sum::<f64>())
            .collect()
    }

    /// Softmax distribution over `labels` for the given tokens.
    pub fn distribution<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut s = self.scores(&self.space.extract(tokens, self.weighting));
        softmax_in_place(&mut s);
        s
    }

    /// Most probable label and the full distribution.
    pub fn predict(&self, u: &Utterance) -> (String, f64, Vec<f64>) {
        let dist = self.distribution(&u.tokens);
        let best = argmax(&dist);
        (self.labels[best].clone(), dist[best], dist)
    }
}

fn label_of(entry: &crate::corpus::Entry, target: Target) -> Result<&str> {
    let a = entry.annotation.as_ref().ok_or_else(|| {
        Error::data(format!("utterance {} is not annotated", entry.utterance.id))
    })?;
    Ok(match target {
        Target::Domain => &a.domain,
        Target::Intent => &a.intent,
    })
}

/// The full-batch maxent objective over a dataset, exposed for gradient checking.
///
/// Parameters are laid out as `[weights (K x D, row-major), bias (K)]` and the objective is
/// `(1/N) * sum_i w_i * -log p(y_i | x_i) + (l2 / 2) * ||weights||^2`.
pub struct MaxentProblem {
    labels: Vec<String>,
    dim: usize,
    examples: Vec<Example>,
    total: usize,
    l2: f64,
}

impl MaxentProblem {
    pub fn new(data: &Dataset, target: Target, space: &NGramSpace, weighting: Weighting, l2: f64) -> Result<Self> {
        let mut labels = BTreeSet::new();
        for e in data.iter() {
            labels.insert(label_of(e, target)?.to_string());
        }
        if labels.len() < 2 {
            return Err(Error::data(format!(
                "maxent training needs at least 2 labels, found {}",
                labels.len()
            )));
        }
        let labels: Vec<String> = labels.into_iter().collect();
        let lookup: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut items = Vec::with_capacity(data.len());
        for e in data.iter() {
            let y = lookup[label_of(e, target)?];
            items.push((e.utterance.tokens.clone(), y, e.utterance.weight));
        }
        let (examples, total) = merge_examples(items.into_iter(), space, weighting);
        Ok(MaxentProblem {
            labels,
            dim: space.dim(),
            examples,
            total,
            l2,
        })
    }

    pub fn num_params(&self) -> usize {
        self.labels.len() * (self.dim + 1)
    }

    pub fn objective(&self, params: &[f64]) -> f64 {
        self.objective_and_gradient(params).0
    }

    pub fn objective_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let k = self.labels.len();
        let d = self.dim;
        let (w, b) = params.split_at(k * d);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let n = self.total as f64;
        for ex in &self.examples {
            let mut p: Vec<f64> = (0..k)
                .map(|c| b[c] + ex.features.iter().map(|(f, v)| v * w[c * d + f]).sum::<f64>())
                .collect();
            let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + p.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            loss += ex.weight * (lse - p[ex.label]) / n;
            softmax_in_place(&mut p);
            for c in 0..k {
                let g = ex.weight * (p[c] - if c == ex.label { 1.0 } else { 0.0 }) / n;
                for (f, v) in ex.features.iter() {
                    grad[c * d + f] += g * v;
                }
                grad[k * d + c] += g;
            }
        }
        for i in 0..k * d {
            loss += 0.5 * self.l2 * w[i] * w[i];
            grad[i] += self.l2 * w[i];
        }
        (loss, grad)
    }
}

/// Trains a maxent classifier for `target` labels by mini-batch gradient descent.
pub fn train_maxent(
    data: &Dataset,
    target: Target,
    space: &NGramSpace,
    weighting: Weighting,
    config: &TrainConfig,
) -> Result<MaxentModel> {
    config.validate()?;
    let problem = MaxentProblem::new(data, target, space, weighting, config.l2)?;
    let k = problem.labels.len();
    let d = problem.dim;
    let m = problem.examples.len();
    let rescale = m as f64 / problem.total as f64;
    let mut w = ScaledWeights::new(vec![0.0; k * d]);
    let mut b = vec![0.0; k];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scores = vec![0.0; k];
    for epoch in 0..config.epochs {
        let eta = config.step_size(epoch);
        for batch in epoch_batches(m, config.batch_size, &mut rng) {
            let scale = eta * rescale / batch.len() as f64;
            let mut updates: Vec<(usize, Vec<f64>)> = Vec::with_capacity(batch.len());
            for &i in &batch {
                let ex = &problem.examples[i];
                for (c, s) in scores.iter_mut().enumerate() {
                    *s = b[c] + ex.features.iter().map(|(f, v)| v * w.get(c * d + f)).sum::<f64>();
                }
                softmax_in_place(&mut scores);
                let g: Vec<f64> = (0..k)
                    .map(|c| ex.weight * (scores[c] - if c == ex.label { 1.0 } else { 0.0 }))
                    .collect();
                updates.push((i, g));
            }
            w.shrink(eta * config.l2);
            for (i, g) in updates {
                let ex = &problem.examples[i];
                for c in 0..k {
                    for (f, v) in ex.features.iter() {
                        w.add(c * d + f, -scale * g[c] * v);
                    }
                    b[c] -= scale * g[c];
                }
            }
        }
    }
    Ok(MaxentModel {
        labels: problem.labels,
        space: space.clone(),
        weighting,
        weights: w.into_vec(),
        bias: b,
        l2: config.l2,
    })
}

/// One-vs-rest logistic regression scoring membership in a functionality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryFilterModel {
    pub space: NGramSpace,
    pub weighting: Weighting,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl BinaryFilterModel {
    /// P(in-class) for the given tokens.
    pub fn score<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        let x = self.space.extract(tokens, self.weighting);
        sigmoid(self.bias + x.dot(&self.weights))
    }

    pub fn accepts<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        self.score(tokens) > self.threshold
    }
}

/// Full-batch logistic objective `(1/N) sum_i w_i * -log p(y_i | x_i) + (l2/2) ||w||^2`
/// with parameters `[weights (D), bias]`.
pub struct FilterProblem {
    dim: usize,
    examples: Vec<Example>,
    total: usize,
    l2: f64,
}

impl FilterProblem {
    pub fn new(in_class: &Dataset, out_class: &Dataset, space: &NGramSpace, weighting: Weighting, l2: f64) -> Result<Self> {
        if in_class.is_empty() || out_class.is_empty() {
            return Err(Error::data("filter training needs both in-class and out-of-class examples"));
        }
        let items = in_class
            .utterances()
            .map(|u| (u.tokens.clone(), 1usize, u.weight))
            .chain(out_class.utterances().map(|u| (u.tokens.clone(), 0usize, u.weight)));
        let (examples, total) = merge_examples(items, space, weighting);
        Ok(FilterProblem {
            dim: space.dim(),
            examples,
            total,
            l2,
        })
    }

    pub fn num_params(&self) -> usize {
        self.dim + 1
    }

    pub fn objective_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        let n = self.total as f64;
        for ex in &self.examples {
            let z = params[d] + ex.features.dot(&params[..d]);
            let y = ex.label as f64;
            // -log p = softplus(z) - y z
            loss += ex.weight * (softplus(z) - y * z) / n;
            let g = ex.weight * (sigmoid(z) - y) / n;
            for (f, v) in ex.features.iter() {
                grad[f] += g * v;
            }
            grad[d] += g;
        }
        for i in 0..d {
            loss += 0.5 * self.l2 * params[i] * params[i];
            grad[i] += self.l2 * params[i];
        }
        (loss, grad)
    }
}

pub fn train_filter(
    in_class: &Dataset,
    out_class: &Dataset,
    space: &NGramSpace,
    weighting: Weighting,
    config: &TrainConfig,
) -> Result<BinaryFilterModel> {
    config.validate()?;
    let problem = FilterProblem::new(in_class, out_class, space, weighting, config.l2)?;
    let d = problem.dim;
    let m = problem.examples.len();
    let rescale = m as f64 / problem.total as f64;
    let mut w = ScaledWeights::new(vec![0.0; d]);
    let mut b = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for epoch in 0..config.epochs {
        let eta = config.step_size(epoch);
        for batch in epoch_batches(m, config.batch_size, &mut rng) {
            let scale = eta * rescale / batch.len() as f64;
            let grads: Vec<f64> = batch
                .iter()
                .map(|&i| {
                    let ex = &problem.examples[i];
                    let z = b + ex.features.iter().map(|(f, v)| v * w.get(f)).sum::<f64>();
                    ex.weight * (sigmoid(z) - ex.label as f64)
                })
                .collect();
            w.shrink(eta * config.l2);
            for (&i, g) in batch.iter().zip(grads) {
                for (f, v) in problem.examples[i].features.iter() {
                    w.add(f, -scale * g * v);
                }
                b -= scale * g;
            }
        }
    }
    Ok(BinaryFilterModel {
        space: space.clone(),
        weighting,
        weights: w.into_vec(),
        bias: b,
        threshold: 0.5,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Annotation, Entry, Origin, Provenance};
    use crate::testutil::max_gradient_error;
    use rand::Rng;

    fn labeled(rows: &[(&str, &str)]) -> Dataset {
        let entries = rows
            .iter()
            .enumerate()
            .map(|(i, (text, intent))| Entry {
                utterance: Utterance::from_text(format!("u{}", i), text, Origin::Annotated),
                annotation: Some(Annotation {
                    domain: "d".into(),
                    intent: intent.to_string(),
                    slots: vec![],
                }),
            })
            .collect();
        Dataset::new(entries, Provenance::default()).unwrap()
    }

    fn fit(d: &Dataset) -> NGramSpace {
        let docs: Vec<Vec<String>> = d.utterances().map(|u| u.tokens.clone()).collect();
        NGramSpace::fit(&docs, 1, 2).unwrap()
    }

    #[test]
    fn separable_set_is_learned() {
        let d = labeled(&[
            ("play some music", "Play"),
            ("play a song", "Play"),
            ("wake me up at seven", "Alarm"),
            ("set an alarm", "Alarm"),
        ]);
        let m = train_maxent(&d, Target::Intent, &fit(&d), Weighting::Binary, &TrainConfig::default()).unwrap();
        for e in d.iter() {
            assert_eq!(m.predict(&e.utterance).0, e.annotation.as_ref().unwrap().intent);
        }
    }

    #[test]
    fn single_label_is_rejected() {
        let d = labeled(&[("a b", "X"), ("c d", "X")]);
        assert!(train_maxent(&d, Target::Intent, &fit(&d), Weighting::Binary, &TrainConfig::default()).is_err());
    }

    #[test]
    fn zero_model_is_uniform_with_lexicographic_tie() {
        let d = labeled(&[("a", "d"), ("b", "c"), ("c", "b"), ("e", "a")]);
        let labels = vec!["a".to_string(), "b".into(), "c".into(), "d".into()];
        let m = MaxentModel::zeros(labels, fit(&d), Weighting::Binary);
        let (label, conf, dist) = m.predict(&Utterance::from_text("q", "a b", Origin::Unlabeled));
        assert_eq!(label, "a");
        assert!((conf - 0.25).abs() < 1e-15);
        assert!(dist.iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn oov_input_falls_back_to_bias() {
        let d = labeled(&[("a", "x"), ("b", "y"), ("c", "z")]);
        let mut m = MaxentModel::zeros(vec!["x".into(), "y".into(), "z".into()], fit(&d), Weighting::Binary);
        m.bias = vec![0.3, -1.0, 2.0];
        for w in &mut m.weights {
            *w = 5.0;
        }
        let dist = m.distribution(&["unseen", "words"]);
        let z: f64 = m.bias.iter().map(|b| b.exp()).sum();
        for (p, b) in dist.iter().zip(&m.bias) {
            assert!((p - b.exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn maxent_gradient_matches_finite_differences() {
        let d = labeled(&[("a b", "x"), ("b c", "y"), ("c a", "z"), ("a a", "x")]);
        let space = fit(&d);
        let p = MaxentProblem::new(&d, Target::Intent, &space, Weighting::Count, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..p.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, g) = p.objective_and_gradient(&x);
        assert!(max_gradient_error(|v| p.objective(v), &x, &g) < 1e-6);
    }

    #[test]
    fn doubling_weights_doubles_data_term() {
        let d = labeled(&[("a b", "x"), ("b c", "y")]);
        let doubled = Dataset::new(
            d.iter()
                .map(|e| Entry {
                    utterance: e.utterance.clone().with_weight(2.0),
                    annotation: e.annotation.clone(),
                })
                .collect(),
            Provenance::default(),
        )
        .unwrap();
        let space = fit(&d);
        let p1 = MaxentProblem::new(&d, Target::Intent, &space, Weighting::Binary, 0.0).unwrap();
        let p2 = MaxentProblem::new(&doubled, Target::Intent, &space, Weighting::Binary, 0.0).unwrap();
        let x = vec![0.1; p1.num_params()];
        assert!((2.0 * p1.objective(&x) - p2.objective(&x)).abs() < 1e-12);
    }

    #[test]
    fn filter_separates_disjoint_vocabularies() {
        let inc = labeled(&[("play music", "p"), ("play a song", "p")]);
        let out = labeled(&[("weather today", "w"), ("is it raining", "w")]);
        let all = Dataset::concat([&inc, &out.with_id_prefix("o")]).unwrap();
        let f = train_filter(&inc, &out, &fit(&all), Weighting::Binary, &TrainConfig::default()).unwrap();
        for u in inc.utterances() {
            assert!(f.score(&u.tokens) > 0.5);
        }
        for u in out.utterances() {
            assert!(f.score(&u.tokens) < 0.5);
        }
    }

    #[test]
    fn filter_without_evidence_stays_at_half() {
        let inc = labeled(&[("same words", "p")]);
        let out = labeled(&[("same words", "q")]);
        let f = train_filter(&inc, &out, &fit(&inc), Weighting::Binary, &TrainConfig::default()).unwrap();
        // one in and one out example with identical features: the optimum is p = 1/2
        assert!((f.score(&["same", "words"]) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn filter_gradient_matches_finite_differences() {
        let inc = labeled(&[("a b", "p"), ("a c", "p")]);
        let out = labeled(&[("c d", "q"), ("d", "q")]);
        let all = Dataset::concat([&inc, &out.with_id_prefix("o")]).unwrap();
        let p = FilterProblem::new(&inc, &out, &fit(&all), Weighting::Count, 0.3).unwrap();
        let x: Vec<f64> = (0..p.num_params()).map(|i| (i as f64 * 0.37).sin()).collect();
        let (_, g) = p.objective_and_gradient(&x);
        assert!(max_gradient_error(|v| p.objective_and_gradient(v).0, &x, &g) < 1e-6);
    }
}
