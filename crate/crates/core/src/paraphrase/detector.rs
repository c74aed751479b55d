//! Feed-forward paraphrase scorer over a frozen sentence embedding.
//!
//! Input is `[e1, e2, |e1 - e2|, e1 * e2]` (element-wise), followed by two ReLU hidden
//! layers and a single logistic output unit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingModel;
use super::ParaphrasePair;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Score pairs as the mean of both orders.
    pub symmetric: bool,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            hidden: 100,
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            symmetric: false,
            seed: 0,
        }
    }
}

/// Weights of the scorer network. `w1` is `hidden x 4d`, `w2` is `hidden x hidden`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub input: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The concatenated pair representation.
pub fn pair_features(e1: &[f64], e2: &[f64]) -> Vec<f64> {
    let mut h = Vec::with_capacity(4 * e1.len());
    h.extend_from_slice(e1);
    h.extend_from_slice(e2);
    h.extend(e1.iter().zip(e2).map(|(a, b)| (a - b).abs()));
    h.extend(e1.iter().zip(e2).map(|(a, b)| a * b));
    h
}

struct Activations {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    out: f64,
}

impl MlpWeights {
    /// He-uniform initialization.
    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, n: usize| -> Vec<f64> {
            let bound = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let w1 = layer(input, hidden * input);
        let w2 = layer(hidden, hidden * hidden);
        let w3 = layer(hidden, hidden);
        MlpWeights {
            input,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; hidden],
            w3,
            b3: 0.0,
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.extend_from_slice(&self.b2);
        p.extend_from_slice(&self.w3);
        p.push(self.b3);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let mut off = 0;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2, &mut self.w3] {
            let n = part.len();
            part.copy_from_slice(&p[off..off + n]);
            off += n;
        }
        self.b3 = p[off];
    }

    fn forward_from_z1(&self, z1: Vec<f64>) -> Activations {
        let h = self.hidden;
        let a1: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
        let z2: Vec<f64> = (0..h)
            .map(|i| self.b2[i] + (0..h).map(|j| self.w2[i * h + j] * a1[j]).sum::<f64>())
            .collect();
        let a2: Vec<f64> = z2.iter().map(|&z| z.max(0.0)).collect();
        let out = self.b3 + self.w3.iter().zip(&a2).map(|(w, a)| w * a).sum::<f64>();
        Activations { z1, a1, z2, a2, out }
    }

    fn forward(&self, x: &[f64]) -> Activations {
        let (h, n) = (self.hidden, self.input);
        let z1 = (0..h)
            .map(|i| self.b1[i] + self.w1[i * n..(i + 1) * n].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        self.forward_from_z1(z1)
    }

    /// Probability output for one input vector.
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.forward(x).out)
    }

    /// Adds `scale * d BCE / d params` into `grad` (laid out as [`MlpWeights::params`]); returns the BCE.
    fn backward(&self, x: &[f64], label: bool, scale: f64, grad: &mut [f64]) -> f64 {
        let (h, n) = (self.hidden, self.input);
        let act = self.forward(x);
        let y = if label { 1.0 } else { 0.0 };
        // BCE with logits: softplus(z) - y z
        let z = act.out;
        let loss = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() } - y * z;
        let d_out = scale * (sigmoid(z) - y);
        let o_w1 = 0;
        let o_b1 = o_w1 + h * n;
        let o_w2 = o_b1 + h;
        let o_b2 = o_w2 + h * h;
        let o_w3 = o_b2 + h;
        let o_b3 = o_w3 + h;
        grad[o_b3] += d_out;
        let mut d_z2 = vec![0.0; h];
        for i in 0..h {
            grad[o_w3 + i] += d_out * act.a2[i];
            if act.z2[i] > 0.0 {
                d_z2[i] = d_out * self.w3[i];
            }
        }
        let mut d_a1 = vec![0.0; h];
        for i in 0..h {
            if d_z2[i] == 0.0 {
                continue;
            }
            grad[o_b2 + i] += d_z2[i];
            for j in 0..h {
                grad[o_w2 + i * h + j] += d_z2[i] * act.a1[j];
                d_a1[j] += d_z2[i] * self.w2[i * h + j];
            }
        }
        for i in 0..h {
            if act.z1[i] <= 0.0 || d_a1[i] == 0.0 {
                continue;
            }
            grad[o_b1 + i] += d_a1[i];
            for k in 0..n {
                grad[o_w1 + i * n + k] += d_a1[i] * x[k];
            }
        }
        loss
    }

    /// Mean BCE over `(input, label)` examples and its gradient.
    pub fn objective_and_gradient(&self, examples: &[(Vec<f64>, bool)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.num_params()];
        let scale = 1.0 / examples.len() as f64;
        let loss = examples
            .iter()
            .map(|(x, y)| self.backward(x, *y, scale, &mut grad))
            .sum::<f64>()
            * scale;
        (loss, grad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseDetector {
    pub embedding: EmbeddingModel,
    pub mlp: MlpWeights,
    pub symmetric: bool,
}

/// An utterance embedded once, with the first-layer contributions of its `e1` and `e2`
/// blocks cached so that scoring many pairs costs one partial layer per pair.
#[derive(Clone, Debug)]
pub struct PreparedUtterance {
    pub embedding: Vec<f64>,
    as_first: Vec<f64>,
    as_second: Vec<f64>,
}

impl ParaphraseDetector {
    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    pub fn prepare<S: AsRef<str>>(&self, tokens: &[S]) -> Result<PreparedUtterance> {
        let e = self.embedding.embed(tokens)?;
        Ok(self.prepare_embedding(e))
    }

    pub fn prepare_embedding(&self, e: Vec<f64>) -> PreparedUtterance {
        let d = self.dim();
        let n = self.mlp.input;
        let block = |offset: usize| -> Vec<f64> {
            (0..self.mlp.hidden)
                .map(|i| (0..d).map(|k| self.mlp.w1[i * n + offset + k] * e[k]).sum())
                .collect()
        };
        PreparedUtterance {
            as_first: block(0),
            as_second: block(d),
            embedding: e,
        }
    }

    fn ordered_score(&self, a: &PreparedUtterance, b: &PreparedUtterance) -> f64 {
        let d = self.dim();
        let n = self.mlp.input;
        let z1 = (0..self.mlp.hidden)
            .map(|i| {
                let row = &self.mlp.w1[i * n..(i + 1) * n];
                let mut z = self.mlp.b1[i] + a.as_first[i] + b.as_second[i];
                for k in 0..d {
                    let (x, y) = (a.embedding[k], b.embedding[k]);
                    z += row[2 * d + k] * (x - y).abs() + row[3 * d + k] * x * y;
                }
                z
            })
            .collect();
        sigmoid(self.mlp.forward_from_z1(z1).out)
    }

    /// Paraphrase probability for prepared utterances in the order `(a, b)`.
    pub fn score_prepared(&self, a: &PreparedUtterance, b: &PreparedUtterance) -> f64 {
        if self.symmetric {
            0.5 * (self.ordered_score(a, b) + self.ordered_score(b, a))
        } else {
            self.ordered_score(a, b)
        }
    }

    /// `p(para(a, b))`, strictly inside (0, 1) for finite weights.
    pub fn detect<S: AsRef<str>>(&self, a: &[S], b: &[S]) -> Result<f64> {
        let pa = self.prepare(a)?;
        let pb = self.prepare(b)?;
        Ok(self.score_prepared(&pa, &pb))
    }
}

/// Trains the scorer with BCE on labeled pairs; the embedding stays frozen.
pub fn train_detector(
    pairs: &[ParaphrasePair],
    embedding: &EmbeddingModel,
    config: &DetectorConfig,
) -> Result<ParaphraseDetector> {
    if !pairs.iter().any(|p| p.label) || !pairs.iter().any(|p| !p.label) {
        return Err(Error::data("detector training needs both paraphrase and non-paraphrase pairs"));
    }
    if config.hidden == 0 || config.batch_size == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::config("detector hidden size, batch size, and learning rate must be positive"));
    }
    let examples: Vec<(Vec<f64>, bool)> = pairs
        .iter()
        .map(|p| {
            Ok((
                pair_features(&embedding.embed(&p.utterance_a)?, &embedding.embed(&p.utterance_b)?),
                p.label,
            ))
        })
        .collect::<Result<_>>()?;
    let mut mlp = MlpWeights::init(4 * embedding.dim(), config.hidden, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
    let mut params = mlp.params();
    let np = params.len();
    // Adam moments
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; np];
    let mut v = vec![0.0; np];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = vec![0.0; np];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                mlp.backward(&examples[i].0, examples[i].1, scale, &mut grad);
            }
            step += 1;
            let c1 = 1.0 - beta1.powi(step);
            let c2 = 1.0 - beta2.powi(step);
            for k in 0..np {
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                params[k] -= config.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
            mlp.set_params(&params);
        }
    }
    Ok(ParaphraseDetector {
        embedding: embedding.clone(),
        mlp,
        symmetric: config.symmetric,
    })
}
