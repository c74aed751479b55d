use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mini-batch gradient descent settings shared by the maxent, filter, and CRF trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Step size at epoch `e` is `learning_rate / (1 + decay * e)`.
    pub decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 1e-4,
            epochs: 15,
            learning_rate: 0.5,
            decay: 0.2,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::config("l2 must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.decay < 0.0 {
            return Err(Error::config("learning rate must be positive and decay non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        Ok(())
    }

    pub fn step_size(&self, epoch: usize) -> f64 {
        self.learning_rate / (1.0 + self.decay * epoch as f64)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Shuffled mini-batches of example indices for one epoch.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Weight vector stored as `scale * raw` so that L2 shrinkage is O(1) per step.
#[derive(Clone, Debug)]
pub(crate) struct ScaledWeights {
    raw: Vec<f64>,
    scale: f64,
}

impl ScaledWeights {
    pub fn new(values: Vec<f64>) -> Self {
        ScaledWeights { raw: values, scale: 1.0 }
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.raw[i] * self.scale
    }

    /// `w <- (1 - factor) * w`.
    pub fn shrink(&mut self, factor: f64) {
        if factor <= 0.0 {
            return;
        }
        self.scale *= 1.0 - factor.min(0.999_999);
        if self.scale < 1e-9 {
            self.materialize();
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, delta: f64) {
        self.raw[i] += delta / self.scale;
    }

    fn materialize(&mut self) {
        for v in &mut self.raw {
            *v *= self.scale;
        }
        self.scale = 1.0;
    }

    pub fn into_vec(mut self) -> Vec<f64> {
        self.materialize();
        self.raw
    }
}
