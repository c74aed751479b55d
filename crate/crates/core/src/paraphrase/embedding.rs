//! Word-averaging utterance embeddings trained with a cosine margin objective and
//! in-minibatch hard negatives.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ParaphrasePair;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Mean of word rows.
    WordAvg,
    /// Affine projection of the mean: `W_c * mean + b`.
    Projection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    /// Row-major `dim x dim`.
    pub matrix: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRepr {
    dim: usize,
    vocabulary: Vec<String>,
    words: Vec<f64>,
    initial: Vec<f64>,
    projection: Option<Projection>,
}

/// Word matrix with one extra trailing row for unknown tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "EmbeddingRepr", into = "EmbeddingRepr")]
pub struct EmbeddingModel {
    dim: usize,
    vocabulary: Vec<String>,
    index: HashMap<String, usize>,
    /// Row-major `(vocabulary + 1) x dim`.
    pub words: Vec<f64>,
    /// Frozen copy of the initial word matrix, the anchor of the `lambda_w` regularizer.
    pub initial: Vec<f64>,
    pub projection: Option<Projection>,
}

impl From<EmbeddingRepr> for EmbeddingModel {
    fn from(r: EmbeddingRepr) -> Self {
        EmbeddingModel {
            index: r.vocabulary.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect(),
            dim: r.dim,
            vocabulary: r.vocabulary,
            words: r.words,
            initial: r.initial,
            projection: r.projection,
        }
    }
}

impl From<EmbeddingModel> for EmbeddingRepr {
    fn from(m: EmbeddingModel) -> Self {
        EmbeddingRepr {
            dim: m.dim,
            vocabulary: m.vocabulary,
            words: m.words,
            initial: m.initial,
            projection: m.projection,
        }
    }
}

impl EmbeddingModel {
    /// Seeded uniform initialization in `[-0.1, 0.1]`; the projection starts at identity.
    pub fn init<I, S>(vocabulary: I, dim: usize, kind: EmbeddingKind, seed: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: BTreeSet<String> = vocabulary.into_iter().map(Into::into).collect();
        let vocabulary: Vec<String> = vocab.into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<f64> = (0..(vocabulary.len() + 1) * dim)
            .map(|_| rng.gen_range(-0.1..=0.1))
            .collect();
        let projection = match kind {
            EmbeddingKind::WordAvg => None,
            EmbeddingKind::Projection => Some(Projection {
                matrix: (0..dim * dim).map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.0 }).collect(),
                bias: vec![0.0; dim],
            }),
        };
        EmbeddingModel {
            dim,
            index: vocabulary.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect(),
            vocabulary,
            initial: words.clone(),
            words,
            projection,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> EmbeddingKind {
        if self.projection.is_some() {
            EmbeddingKind::Projection
        } else {
            EmbeddingKind::WordAvg
        }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn unknown_row(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn row_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unknown_row())
    }

    pub fn rows<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.row_of(t.as_ref())).collect()
    }

    fn mean_of_rows(&self, rows: &[usize]) -> Vec<f64> {
        let d = self.dim;
        let mut v = vec![0.0; d];
        for &r in rows {
            for (k, x) in v.iter_mut().enumerate() {
                *x += self.words[r * d + k];
            }
        }
        let n = rows.len() as f64;
        v.iter_mut().for_each(|x| *x /= n);
        v
    }

    /// Embedding of a non-empty row sequence.
    pub fn embed_rows(&self, rows: &[usize]) -> Vec<f64> {
        let mean = self.mean_of_rows(rows);
        match &self.projection {
            None => mean,
            Some(p) => {
                let d = self.dim;
                (0..d)
                    .map(|i| p.bias[i] + (0..d).map(|j| p.matrix[i * d + j] * mean[j]).sum::<f64>())
                    .collect()
            }
        }
    }

    /// Mean of the token rows (unknown tokens share one row), projected when configured.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::data("cannot embed an empty utterance"));
        }
        Ok(self.embed_rows(&self.rows(tokens)))
    }

    /// Flattened trainable parameters: `[words, projection matrix, projection bias]`.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.words.clone();
        if let Some(proj) = &self.projection {
            p.extend_from_slice(&proj.matrix);
            p.extend_from_slice(&proj.bias);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let n = self.words.len();
        self.words.copy_from_slice(&params[..n]);
        if let Some(proj) = &mut self.projection {
            let m = proj.matrix.len();
            proj.matrix.copy_from_slice(&params[n..n + m]);
            proj.bias.copy_from_slice(&params[n + m..]);
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Adds `scale * d cos(a, b) / d a` into `out`.
fn cosine_grad_into(a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return;
    }
    let c = cosine(a, b);
    for k in 0..a.len() {
        out[k] += scale * (b[k] / (na * nb) - c * a[k] / (na * na));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarginConfig {
    pub margin: f64,
    pub lambda_c: f64,
    pub lambda_w: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            margin: 0.4,
            lambda_c: 1e-3,
            lambda_w: 1e-4,
            batch_size: 25,
            epochs: 5,
            learning_rate: 0.05,
            dim: 25,
            seed: 0,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::config("margin must be positive"));
        }
        if self.lambda_c < 0.0 || self.lambda_w < 0.0 {
            return Err(Error::config("regularization strengths must be non-negative"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("minibatch size must be at least 2 for negative mining"));
        }
        if self.dim == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::config("dimension and learning rate must be positive"));
        }
        Ok(())
    }
}

/// A minibatch of positive pairs as embedding-row sequences.
#[derive(Clone, Debug)]
pub struct MarginBatch {
    pub pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

/// Hard negatives chosen for each pair: `(t1, t2)` as `(pair index, side)` references.
pub type Negatives = Vec<(Option<(usize, usize)>, Option<(usize, usize)>)>;

impl MarginBatch {
    pub fn from_pairs(model: &EmbeddingModel, pairs: &[&ParaphrasePair]) -> Self {
        MarginBatch {
            pairs: pairs
                .iter()
                .map(|p| (model.rows(&p.utterance_a), model.rows(&p.utterance_b)))
                .collect(),
        }
    }

    fn side(&self, r: (usize, usize)) -> &[usize] {
        if r.1 == 0 {
            &self.pairs[r.0].0
        } else {
            &self.pairs[r.0].1
        }
    }

    /// For each pair, the most cosine-similar utterance in the batch to `x1` (and to `x2`)
    /// among the other pairs, skipping any utterance identical to `x1` or `x2`.
    /// Ties go to the earliest candidate.
    pub fn mine_negatives(&self, model: &EmbeddingModel) -> Negatives {
        let emb: Vec<[Vec<f64>; 2]> = self
            .pairs
            .iter()
            .map(|(a, b)| [model.embed_rows(a), model.embed_rows(b)])
            .collect();
        (0..self.pairs.len())
            .map(|j| {
                let (x1, x2) = &self.pairs[j];
                let pick = |anchor: &[f64]| {
                    let mut best: Option<((usize, usize), f64)> = None;
                    for k in 0..self.pairs.len() {
                        if k == j {
                            continue;
                        }
                        for side in 0..2 {
                            let cand = self.side((k, side));
                            if cand == x1.as_slice() || cand == x2.as_slice() {
                                continue;
                            }
                            let c = cosine(anchor, &emb[k][side]);
                            if best.map_or(true, |(_, b)| c > b) {
                                best = Some(((k, side), c));
                            }
                        }
                    }
                    best.map(|(r, _)| r)
                };
                (pick(&emb[j][0]), pick(&emb[j][1]))
            })
            .collect()
    }

    /// Sum of both hinge terms over the batch, with the given negatives held fixed.
    pub fn hinge_loss(&self, model: &EmbeddingModel, margin: f64, negatives: &Negatives) -> f64 {
        self.hinge_loss_and_grad(model, margin, negatives, None)
    }

    /// Hinge sum and, when `grad` is given, its gradient with respect to `model.params()`.
    pub fn hinge_loss_and_grad(
        &self,
        model: &EmbeddingModel,
        margin: f64,
        negatives: &Negatives,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let d = model.dim();
        let mut loss = 0.0;
        // gradient with respect to each embedded utterance, keyed by (pair, side)
        let mut emb_grads: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        let embed = |r: (usize, usize)| model.embed_rows(self.side(r));
        for (j, negs) in negatives.iter().enumerate() {
            let g1 = embed((j, 0));
            let g2 = embed((j, 1));
            let pos = cosine(&g1, &g2);
            for (which, neg) in [negs.0, negs.1].into_iter().enumerate() {
                let Some(t) = neg else { continue };
                let gt = embed(t);
                let anchor = if which == 0 { &g1 } else { &g2 };
                let term = margin - pos + cosine(anchor, &gt);
                if term <= 0.0 {
                    continue;
                }
                loss += term;
                if grad.is_some() {
                    let mut add = |key: (usize, usize), f: &dyn Fn(&mut Vec<f64>)| {
                        f(emb_grads.entry(key).or_insert_with(|| vec![0.0; d]));
                    };
                    add((j, 0), &|g| cosine_grad_into(&g1, &g2, -1.0, g));
                    add((j, 1), &|g| cosine_grad_into(&g2, &g1, -1.0, g));
                    let anchor_key = (j, which);
                    add(anchor_key, &|g| cosine_grad_into(anchor, &gt, 1.0, g));
                    add(t, &|g| cosine_grad_into(&gt, anchor, 1.0, g));
                }
            }
        }
        if let Some(grad) = grad.as_deref_mut() {
            let mut keys: Vec<_> = emb_grads.keys().copied().collect();
            keys.sort_unstable();
            for key in keys {
                backprop_embedding(model, self.side(key), &emb_grads[&key], grad);
            }
        }
        loss
    }
}

/// Adds the gradient of `dot(upstream, embed(rows))` with respect to the parameters into `grad`.
fn backprop_embedding(model: &EmbeddingModel, rows: &[usize], upstream: &[f64], grad: &mut [f64]) {
    let d = model.dim();
    let n = rows.len() as f64;
    let nw = model.words.len();
    let to_mean: Vec<f64> = match &model.projection {
        None => upstream.to_vec(),
        Some(p) => {
            let mean = model.mean_of_rows(rows);
            for i in 0..d {
                for j in 0..d {
                    grad[nw + i * d + j] += upstream[i] * mean[j];
                }
                grad[nw + d * d + i] += upstream[i];
            }
            (0..d).map(|j| (0..d).map(|i| p.matrix[i * d + j] * upstream[i]).sum()).collect()
        }
    };
    for &r in rows {
        for k in 0..d {
            grad[r * d + k] += to_mean[k] / n;
        }
    }
}

/// Full minibatch objective `(1/|B|) * (hinges + lambda_c ||W_c||^2 + lambda_w ||W_w0 - W_w||^2)`.
pub fn margin_objective(
    model: &EmbeddingModel,
    batch: &MarginBatch,
    negatives: &Negatives,
    config: &MarginConfig,
    grad: Option<&mut [f64]>,
) -> f64 {
    let b = batch.pairs.len() as f64;
    let mut grad = grad;
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    let mut total = batch.hinge_loss_and_grad(model, config.margin, negatives, grad.as_deref_mut());
    let nw = model.words.len();
    for i in 0..nw {
        let diff = model.words[i] - model.initial[i];
        total += config.lambda_w * diff * diff;
        if let Some(g) = grad.as_deref_mut() {
            g[i] += 2.0 * config.lambda_w * diff;
        }
    }
    if let Some(p) = &model.projection {
        for (i, &w) in p.matrix.iter().enumerate() {
            total += config.lambda_c * w * w;
            if let Some(g) = grad.as_deref_mut() {
                g[nw + i] += 2.0 * config.lambda_c * w;
            }
        }
    }
    if let Some(g) = grad {
        g.iter_mut().for_each(|x| *x /= b);
    }
    total / b
}

/// Trains the embedding of `model` in place on positive pairs.
///
/// Each step takes a gradient step on the hinge terms of a minibatch and then applies the
/// exact proximal map of the two quadratic regularizers, which keeps the update stable for
/// arbitrarily large `lambda_w`.
pub fn train_embedding_from(mut model: EmbeddingModel, pairs: &[ParaphrasePair], config: &MarginConfig) -> Result<EmbeddingModel> {
    config.validate()?;
    let positives: Vec<&ParaphrasePair> = pairs.iter().filter(|p| p.label).collect();
    if positives.len() < 2 {
        return Err(Error::data("margin training needs at least two positive pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..positives.len()).collect();
    let nparams = model.params().len();
    let nw = model.words.len();
    let mut grad = vec![0.0; nparams];
    for epoch in 0..config.epochs {
        let eta = config.learning_rate / (1.0 + 0.1 * epoch as f64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch_pairs: Vec<&ParaphrasePair> = chunk.iter().map(|&i| positives[i]).collect();
            let batch = MarginBatch::from_pairs(&model, &batch_pairs);
            let negatives = batch.mine_negatives(&model);
            let b = batch.pairs.len() as f64;
            grad.iter_mut().for_each(|x| *x = 0.0);
            batch.hinge_loss_and_grad(&model, config.margin, &negatives, Some(&mut grad));
            let mut params = model.params();
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= eta * g / b;
            }
            let shrink_w = 1.0 + 2.0 * eta * config.lambda_w / b;
            for i in 0..nw {
                params[i] = model.initial[i] + (params[i] - model.initial[i]) / shrink_w;
            }
            if let Some(p) = &model.projection {
                let shrink_c = 1.0 + 2.0 * eta * config.lambda_c / b;
                for x in &mut params[nw..nw + p.matrix.len()] {
                    *x /= shrink_c;
                }
            }
            model.set_params(&params);
        }
    }
    Ok(model)
}

/// Builds the vocabulary from the pairs (plus `extra_vocabulary`) and trains a fresh model.
pub fn train_embedding(
    pairs: &[ParaphrasePair],
    config: &MarginConfig,
    kind: EmbeddingKind,
    extra_vocabulary: &[String],
) -> Result<EmbeddingModel> {
    config.validate()?;
    let vocab = pairs
        .iter()
        .flat_map(|p| p.utterance_a.iter().chain(&p.utterance_b))
        .chain(extra_vocabulary)
        .cloned();
    let model = EmbeddingModel::init(vocab, config.dim, kind, config.seed);
    train_embedding_from(model, pairs, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paraphrase::PairProvenance;

    fn pair(a: &str, b: &str) -> ParaphrasePair {
        ParaphrasePair::new(a, b, true, PairProvenance::MinedPositive)
    }

    #[test]
    fn single_token_embeds_to_its_row() {
        let m = EmbeddingModel::init(["a", "b"], 4, EmbeddingKind::WordAvg, 1);
        let r = m.row_of("b");
        assert_eq!(m.embed(&["b"]).unwrap(), m.words[r * 4..r * 4 + 4].to_vec());
        assert_eq!(m.embed(&["b", "b"]).unwrap(), m.embed(&["b"]).unwrap());
        assert!(m.embed::<&str>(&[]).is_err());
    }

    #[test]
    fn unknown_tokens_share_a_row() {
        let m = EmbeddingModel::init(["a"], 3, EmbeddingKind::WordAvg, 1);
        assert_eq!(m.embed(&["zz"]).unwrap(), m.embed(&["qq"]).unwrap());
    }

    #[test]
    fn perfect_embeddings_have_zero_hinge() {
        // cos(x1, x2) = 1, cos(x1, t1) = cos(x2, t2) = -1
        let delta: f64 = 1.5;
        let term = (0.0f64).max(delta - 1.0 + -1.0);
        assert_eq!(term, 0.0);
    }

    #[test]
    fn negatives_never_pick_the_partner() {
        let pairs = vec![pair("a b", "c d"), pair("e f", "g h"), pair("a b", "i j"), pair("k", "c d")];
        let m = EmbeddingModel::init(["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k"], 5, EmbeddingKind::WordAvg, 3);
        let refs: Vec<&ParaphrasePair> = pairs.iter().collect();
        let batch = MarginBatch::from_pairs(&m, &refs);
        for (j, (t1, t2)) in batch.mine_negatives(&m).into_iter().enumerate() {
            let (x1, x2) = &batch.pairs[j];
            for t in [t1, t2].into_iter().flatten() {
                assert_ne!(t.0, j);
                let cand = batch.side(t);
                assert!(cand != x1.as_slice() && cand != x2.as_slice());
            }
        }
    }

    #[test]
    fn rejects_tiny_minibatch() {
        let cfg = MarginConfig { batch_size: 1, ..MarginConfig::default() };
        assert!(train_embedding(&[pair("a", "b"), pair("c", "d")], &cfg, EmbeddingKind::WordAvg, &[]).is_err());
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        use crate::testutil::max_gradient_error;
        let pairs = vec![pair("a b", "c"), pair("d e", "f a"), pair("g", "h b c")];
        for kind in [EmbeddingKind::WordAvg, EmbeddingKind::Projection] {
            let mut m = EmbeddingModel::init(["a", "b", "c", "d", "e", "f", "g", "h"], 4, kind, 5);
            // move away from the initial point so the drift term has a gradient
            let shifted: Vec<f64> = m.params().iter().enumerate().map(|(i, x)| x + 0.01 * ((i % 7) as f64 - 3.0)).collect();
            m.set_params(&shifted);
            let cfg = MarginConfig { lambda_c: 0.3, lambda_w: 0.2, ..MarginConfig::default() };
            let refs: Vec<&ParaphrasePair> = pairs.iter().collect();
            let batch = MarginBatch::from_pairs(&m, &refs);
            let negs = batch.mine_negatives(&m);
            let x = m.params();
            let mut g = vec![0.0; x.len()];
            margin_objective(&m, &batch, &negs, &cfg, Some(&mut g));
            let mut probe = m.clone();
            let err = max_gradient_error(
                |p| {
                    probe.set_params(p);
                    margin_objective(&probe, &batch, &negs, &cfg, None)
                },
                &x,
                &g,
            );
            assert!(err < 1e-4, "{:?}: {}", kind, err);
        }
    }

    #[test]
    fn huge_lambda_w_pins_the_words() {
        let pairs = vec![pair("a b", "c"), pair("d e", "f a"), pair("g", "h b c"), pair("a", "h")];
        let cfg = MarginConfig { lambda_w: 1e6, batch_size: 2, epochs: 5, learning_rate: 0.5, dim: 6, ..MarginConfig::default() };
        let m = train_embedding(&pairs, &cfg, EmbeddingKind::WordAvg, &[]).unwrap();
        let drift = m.words.iter().zip(&m.initial).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-3, "{}", drift);
    }

    #[test]
    fn embedding_is_order_free() {
        let m = EmbeddingModel::init(["a", "b", "c"], 4, EmbeddingKind::Projection, 2);
        let x = m.embed(&["a", "b", "c"]).unwrap();
        let y = m.embed(&["c", "a", "b"]).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-15);
        }
    }
}
