//! Linear-chain CRF slot tagger over BIO tags.
//!
//! Emission features are token-window n-grams around each position crossed with the tag;
//! tag-to-tag transitions and a start-tag score complete the path score. Training minimizes
//! the weighted negative log-likelihood plus L2 with forward-backward gradients.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{epoch_batches, ScaledWeights, TrainConfig};
use crate::corpus::{Annotation, Dataset, Slot};
use crate::error::{Error, Result};

pub const OUTSIDE: &str = "O";

/// Score table of one sentence: `emissions[i][y]`, `transition[a * T + b]`, `start[y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub emissions: Vec<Vec<f64>>,
    pub transition: Vec<f64>,
    pub start: Vec<f64>,
}

/// Posterior marginals of a lattice.
#[derive(Clone, Debug)]
pub struct Marginals {
    pub log_z: f64,
    /// `unary[i][y] = P(y_i = y)`.
    pub unary: Vec<Vec<f64>>,
    /// `pairwise[i - 1][a * T + b] = P(y_{i-1} = a, y_i = b)` for `i >= 1`.
    pub pairwise: Vec<Vec<f64>>,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

impl Lattice {
    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    pub fn len(&self) -> usize {
        self.emissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emissions.is_empty()
    }

    pub fn path_score(&self, path: &[usize]) -> f64 {
        let t = self.num_tags();
        let mut s = self.start[path[0]] + self.emissions[0][path[0]];
        for i in 1..path.len() {
            s += self.transition[path[i - 1] * t + path[i]] + self.emissions[i][path[i]];
        }
        s
    }

    /// Scaled forward-backward. Potentials are shifted by their maxima before
    /// exponentiation and the shifts are added back into `log_z`.
    pub fn marginals(&self) -> Marginals {
        let t = self.num_tags();
        let l = self.len();
        let mt = max_of(&self.transition);
        let ms = max_of(&self.start);
        let trans: Vec<f64> = self.transition.iter().map(|&x| (x - mt).exp()).collect();
        let mut log_z = ms + mt * (l as f64 - 1.0);
        let psi: Vec<Vec<f64>> = self
            .emissions
            .iter()
            .map(|row| {
                let m = max_of(row);
                log_z += m;
                row.iter().map(|&x| (x - m).exp()).collect()
            })
            .collect();

        let mut alpha = vec![vec![0.0; t]; l];
        let mut norm = vec![0.0; l];
        for y in 0..t {
            alpha[0][y] = (self.start[y] - ms).exp() * psi[0][y];
        }
        norm[0] = alpha[0].iter().sum();
        alpha[0].iter_mut().for_each(|a| *a /= norm[0]);
        for i in 1..l {
            for b in 0..t {
                let mut acc = 0.0;
                for a in 0..t {
                    acc += alpha[i - 1][a] * trans[a * t + b];
                }
                alpha[i][b] = acc * psi[i][b];
            }
            norm[i] = alpha[i].iter().sum();
            let c = norm[i];
            alpha[i].iter_mut().for_each(|a| *a /= c);
        }
        log_z += norm.iter().map(|c| c.ln()).sum::<f64>();

        let mut beta = vec![vec![1.0; t]; l];
        for i in (0..l.saturating_sub(1)).rev() {
            for a in 0..t {
                let mut acc = 0.0;
                for b in 0..t {
                    acc += trans[a * t + b] * psi[i + 1][b] * beta[i + 1][b];
                }
                beta[i][a] = acc / norm[i + 1];
            }
        }

        let unary = (0..l)
            .map(|i| (0..t).map(|y| alpha[i][y] * beta[i][y]).collect())
            .collect();
        let pairwise = (1..l)
            .map(|i| {
                let mut p = vec![0.0; t * t];
                for a in 0..t {
                    for b in 0..t {
                        p[a * t + b] = alpha[i - 1][a] * trans[a * t + b] * psi[i][b] * beta[i][b] / norm[i];
                    }
                }
                p
            })
            .collect();
        Marginals { log_z, unary, pairwise }
    }

    pub fn log_partition(&self) -> f64 {
        self.marginals().log_z
    }

    /// Highest-scoring tag path; ties resolve to the lowest tag index.
    pub fn viterbi(&self) -> (Vec<usize>, f64) {
        let t = self.num_tags();
        let l = self.len();
        let mut delta: Vec<f64> = (0..t).map(|y| self.start[y] + self.emissions[0][y]).collect();
        let mut back = vec![vec![0usize; t]; l];
        for i in 1..l {
            let mut next = vec![0.0; t];
            for b in 0..t {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (a, &d) in delta.iter().enumerate() {
                    let s = d + self.transition[a * t + b];
                    if s > best_score {
                        best_score = s;
                        best = a;
                    }
                }
                next[b] = best_score + self.emissions[i][b];
                back[i][b] = best;
            }
            delta = next;
        }
        let mut last = 0;
        for y in 1..t {
            if delta[y] > delta[last] {
                last = y;
            }
        }
        let score = delta[last];
        let mut path = vec![last; l];
        for i in (1..l).rev() {
            path[i - 1] = back[i][path[i]];
        }
        (path, score)
    }
}

/// Which token-window n-grams become emission features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrfFeatureConfig {
    /// Positions `i - window ..= i + window` contribute features at position `i`.
    pub window: usize,
    pub n_max: usize,
}

impl Default for CrfFeatureConfig {
    fn default() -> Self {
        CrfFeatureConfig { window: 2, n_max: 2 }
    }
}

impl CrfFeatureConfig {
    /// Feature strings at position `i`: a bias plus every n-gram (n <= n_max) lying inside the window.
    pub fn position_features<S: AsRef<str>>(&self, tokens: &[S], i: usize) -> Vec<String> {
        let w = self.window as isize;
        let l = tokens.len() as isize;
        let i = i as isize;
        let mut out = vec!["bias".to_string()];
        for n in 1..=self.n_max as isize {
            for o in -w..=(w - n + 1) {
                let s = i + o;
                if s < 0 || s + n > l {
                    continue;
                }
                let gram: Vec<&str> = (s..s + n).map(|p| tokens[p as usize].as_ref()).collect();
                out.push(format!("{}[{}]={}", n, o, gram.join("|")));
            }
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct CrfRepr {
    tags: Vec<String>,
    feature_config: CrfFeatureConfig,
    features: Vec<String>,
    emission: Vec<f64>,
    transition: Vec<f64>,
    start: Vec<f64>,
    l2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "CrfRepr", into = "CrfRepr")]
pub struct CrfModel {
    /// `O` first, then `B-x`, `I-x` for each slot type in sorted order.
    pub tags: Vec<String>,
    pub feature_config: CrfFeatureConfig,
    features: Vec<String>,
    feature_index: HashMap<String, usize>,
    /// Row-major `features x tags`.
    pub emission: Vec<f64>,
    pub transition: Vec<f64>,
    pub start: Vec<f64>,
    pub l2: f64,
}

impl From<CrfRepr> for CrfModel {
    fn from(r: CrfRepr) -> Self {
        CrfModel {
            feature_index: r.features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect(),
            tags: r.tags,
            feature_config: r.feature_config,
            features: r.features,
            emission: r.emission,
            transition: r.transition,
            start: r.start,
            l2: r.l2,
        }
    }
}

impl From<CrfModel> for CrfRepr {
    fn from(m: CrfModel) -> Self {
        CrfRepr {
            tags: m.tags,
            feature_config: m.feature_config,
            features: m.features,
            emission: m.emission,
            transition: m.transition,
            start: m.start,
            l2: m.l2,
        }
    }
}

/// BIO tag inventory for a set of slot types.
pub fn bio_tags<'a>(slot_types: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    let sorted: BTreeSet<&String> = slot_types.into_iter().collect();
    let mut tags = vec![OUTSIDE.to_string()];
    for s in sorted {
        tags.push(format!("B-{}", s));
        tags.push(format!("I-{}", s));
    }
    tags
}

/// Converts slots to a BIO tag string sequence.
pub fn slots_to_tags(len: usize, slots: &[Slot]) -> Vec<String> {
    let mut tags = vec![OUTSIDE.to_string(); len];
    for s in slots {
        tags[s.start] = format!("B-{}", s.slot_type);
        for t in &mut tags[s.start + 1..s.end] {
            *t = format!("I-{}", s.slot_type);
        }
    }
    tags
}

/// BIO segmentation. An `I-x` that does not continue an `x` span opens a new one.
pub fn tags_to_slots<S: AsRef<str>>(tokens: &[S], tags: &[String]) -> Vec<Slot> {
    let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    let mut slots = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let (kind, ty) = match tag.split_once('-') {
            Some((k, t)) if k == "B" || k == "I" => (k, t),
            _ => ("O", ""),
        };
        let continues = kind == "I" && matches!(&open, Some((t, _)) if t == ty);
        if continues {
            continue;
        }
        if let Some((t, s)) = open.take() {
            slots.push(Slot::from_span(t, &tokens, s, i));
        }
        if kind != "O" {
            open = Some((ty.to_string(), i));
        }
    }
    if let Some((t, s)) = open {
        slots.push(Slot::from_span(t, &tokens, s, tokens.len()));
    }
    slots
}

impl CrfModel {
    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    /// A model with all weights zero over the given tags and feature strings.
    pub fn zeros(tags: Vec<String>, feature_config: CrfFeatureConfig, features: Vec<String>) -> Self {
        let t = tags.len();
        let f = features.len();
        CrfModel::from(CrfRepr {
            tags,
            feature_config,
            features,
            emission: vec![0.0; f * t],
            transition: vec![0.0; t * t],
            start: vec![0.0; t],
            l2: 0.0,
        })
    }

    fn feature_ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Vec<usize>> {
        (0..tokens.len())
            .map(|i| {
                self.feature_config
                    .position_features(tokens, i)
                    .iter()
                    .filter_map(|f| self.feature_index.get(f).copied())
                    .collect()
            })
            .collect()
    }

    pub fn lattice<S: AsRef<str>>(&self, tokens: &[S]) -> Lattice {
        let t = self.num_tags();
        let emissions = self
            .feature_ids(tokens)
            .iter()
            .map(|fs| {
                let mut row = vec![0.0; t];
                for &f in fs {
                    for (y, r) in row.iter_mut().enumerate() {
                        *r += self.emission[f * t + y];
                    }
                }
                row
            })
            .collect();
        Lattice {
            emissions,
            transition: self.transition.clone(),
            start: self.start.clone(),
        }
    }

    /// Viterbi tags, the path probability `exp(score - log Z)`, and the derived slots.
    pub fn decode<S: AsRef<str>>(&self, tokens: &[S]) -> (Vec<String>, f64, Vec<Slot>) {
        if tokens.is_empty() {
            return (Vec::new(), 1.0, Vec::new());
        }
        let lattice = self.lattice(tokens);
        let (path, score) = lattice.viterbi();
        let confidence = (score - lattice.log_partition()).exp().clamp(0.0, 1.0);
        let tags: Vec<String> = path.iter().map(|&y| self.tags[y].clone()).collect();
        let slots = tags_to_slots(tokens, &tags);
        (tags, confidence, slots)
    }
}

/// One merged training sequence.
#[derive(Clone, Debug)]
pub struct CrfSequence {
    /// Feature ids active at each position.
    pub features: Vec<Vec<usize>>,
    pub tags: Vec<usize>,
    pub weight: f64,
}

/// The full-batch CRF objective with parameters `[emission (F x T), transition (T x T), start (T)]`:
/// `(1/N) sum_i w_i * (log Z_i - score_i(y_i)) + (l2/2) ||params||^2`.
pub struct CrfProblem {
    pub num_features: usize,
    pub num_tags: usize,
    pub sequences: Vec<CrfSequence>,
    /// Number of examples before duplicate merging.
    pub total: usize,
    pub l2: f64,
}

impl CrfProblem {
    pub fn num_params(&self) -> usize {
        let t = self.num_tags;
        self.num_features * t + t * t + t
    }

    fn lattice_from(&self, params: &dyn Fn(usize) -> f64, seq: &CrfSequence) -> Lattice {
        let t = self.num_tags;
        let f = self.num_features;
        let emissions = seq
            .features
            .iter()
            .map(|fs| {
                let mut row = vec![0.0; t];
                for &fi in fs {
                    for (y, r) in row.iter_mut().enumerate() {
                        *r += params(fi * t + y);
                    }
                }
                row
            })
            .collect();
        Lattice {
            emissions,
            transition: (0..t * t).map(|i| params(f * t + i)).collect(),
            start: (0..t).map(|i| params(f * t + t * t + i)).collect(),
        }
    }

    /// Adds `scale * grad NLL(seq)` into `sink` and returns the sequence NLL.
    fn accumulate(
        &self,
        params: &dyn Fn(usize) -> f64,
        seq: &CrfSequence,
        scale: f64,
        sink: &mut dyn FnMut(usize, f64),
    ) -> f64 {
        let t = self.num_tags;
        let f = self.num_features;
        let lattice = self.lattice_from(params, seq);
        let m = lattice.marginals();
        let nll = m.log_z - lattice.path_score(&seq.tags);
        for (i, fs) in seq.features.iter().enumerate() {
            for &fi in fs {
                for y in 0..t {
                    let obs = if seq.tags[i] == y { 1.0 } else { 0.0 };
                    let g = m.unary[i][y] - obs;
                    if g != 0.0 {
                        sink(fi * t + y, scale * g);
                    }
                }
            }
        }
        for i in 1..seq.tags.len() {
            let observed = seq.tags[i - 1] * t + seq.tags[i];
            for (ab, &p) in m.pairwise[i - 1].iter().enumerate() {
                let g = p - if ab == observed { 1.0 } else { 0.0 };
                if g != 0.0 {
                    sink(f * t + ab, scale * g);
                }
            }
        }
        for y in 0..t {
            let g = m.unary[0][y] - if seq.tags[0] == y { 1.0 } else { 0.0 };
            sink(f * t + t * t + y, scale * g);
        }
        nll
    }

    pub fn objective_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let n = self.total as f64;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let get = |i: usize| params[i];
        for seq in &self.sequences {
            let scale = seq.weight / n;
            loss += scale * self.accumulate(&get, seq, scale, &mut |i, g| grad[i] += g);
        }
        for (g, &p) in grad.iter_mut().zip(params) {
            loss += 0.5 * self.l2 * p * p;
            *g += self.l2 * p;
        }
        (loss, grad)
    }

    pub fn objective(&self, params: &[f64]) -> f64 {
        self.objective_and_gradient(params).0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrfConfig {
    pub features: CrfFeatureConfig,
    pub train: TrainConfig,
    /// Closed slot inventory. When set, data using other slot types is rejected.
    pub slot_types: Option<BTreeSet<String>>,
}

impl Default for CrfConfig {
    fn default() -> Self {
        CrfConfig {
            features: CrfFeatureConfig::default(),
            train: TrainConfig {
                l2: 1e-4,
                epochs: 12,
                learning_rate: 0.3,
                decay: 0.2,
                batch_size: 8,
                seed: 0,
            },
            slot_types: None,
        }
    }
}

/// Builds the tag set, feature vocabulary, and merged sequences for `data`.
pub fn build_problem(data: &Dataset, config: &CrfConfig) -> Result<(CrfModel, CrfProblem)> {
    let mut slot_types = BTreeSet::new();
    for e in data.iter() {
        let a = e.annotation.as_ref().ok_or_else(|| {
            Error::data(format!("utterance {} is not annotated", e.utterance.id))
        })?;
        for s in &a.slots {
            slot_types.insert(s.slot_type.clone());
        }
    }
    if let Some(allowed) = &config.slot_types {
        if let Some(extra) = slot_types.difference(allowed).next() {
            return Err(Error::data(format!("slot type {} is outside the tag set", extra)));
        }
        slot_types = allowed.clone();
    }
    let tags = bio_tags(&slot_types);
    let tag_index: HashMap<&str, usize> = tags.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();

    let mut features: Vec<String> = Vec::new();
    let mut feature_index: HashMap<String, usize> = HashMap::new();
    let mut merged: HashMap<(Vec<String>, Vec<usize>), usize> = HashMap::new();
    let mut sequences: Vec<CrfSequence> = Vec::new();
    for e in data.iter() {
        let tokens = &e.utterance.tokens;
        let a = e.annotation.as_ref().expect("checked above");
        let tags_here: Vec<usize> = slots_to_tags(tokens.len(), &a.slots)
            .iter()
            .map(|t| tag_index[t.as_str()])
            .collect();
        let key = (tokens.clone(), tags_here.clone());
        if let Some(&i) = merged.get(&key) {
            sequences[i].weight += e.utterance.weight;
            continue;
        }
        let feats = (0..tokens.len())
            .map(|i| {
                config
                    .features
                    .position_features(tokens, i)
                    .into_iter()
                    .map(|f| match feature_index.get(&f) {
                        Some(&id) => id,
                        None => {
                            let id = features.len();
                            feature_index.insert(f.clone(), id);
                            features.push(f);
                            id
                        }
                    })
                    .collect()
            })
            .collect();
        merged.insert(key, sequences.len());
        sequences.push(CrfSequence {
            features: feats,
            tags: tags_here,
            weight: e.utterance.weight,
        });
    }
    if sequences.is_empty() {
        return Err(Error::data("CRF training needs at least one sequence"));
    }
    let model = CrfModel::zeros(tags.clone(), config.features.clone(), features);
    let problem = CrfProblem {
        num_features: model.num_features(),
        num_tags: tags.len(),
        sequences,
        total: data.len(),
        l2: config.train.l2,
    };
    Ok((model, problem))
}

pub fn train_crf(data: &Dataset, config: &CrfConfig) -> Result<CrfModel> {
    config.train.validate()?;
    let (mut model, problem) = build_problem(data, config)?;
    let t = problem.num_tags;
    let f = problem.num_features;
    let m = problem.sequences.len();
    let rescale = m as f64 / problem.total as f64;
    let mut w = ScaledWeights::new(vec![0.0; problem.num_params()]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let mut pending: Vec<(usize, f64)> = Vec::new();
    for epoch in 0..config.train.epochs {
        let eta = config.train.step_size(epoch);
        for batch in epoch_batches(m, config.train.batch_size, &mut rng) {
            let scale = eta * rescale / batch.len() as f64;
            pending.clear();
            for &i in &batch {
                let seq = &problem.sequences[i];
                let get = |k: usize| w.get(k);
                problem.accumulate(&get, seq, seq.weight, &mut |k, g| pending.push((k, g)));
            }
            w.shrink(eta * config.train.l2);
            for &(k, g) in &pending {
                w.add(k, -scale * g);
            }
        }
    }
    let params = w.into_vec();
    model.emission = params[..f * t].to_vec();
    model.transition = params[f * t..f * t + t * t].to_vec();
    model.start = params[f * t + t * t..].to_vec();
    model.l2 = config.train.l2;
    Ok(model)
}

/// Annotation-compatible slots for a token sequence and predicted tags.
pub fn annotation_from_tags(domain: &str, intent: &str, tokens: &[String], tags: &[String]) -> Annotation {
    Annotation {
        domain: domain.to_string(),
        intent: intent.to_string(),
        slots: tags_to_slots(tokens, tags),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Entry, Origin, Provenance, Utterance};
    use crate::testutil::max_gradient_error;
    use rand::Rng;

    fn random_lattice(rng: &mut ChaCha8Rng, l: usize, t: usize) -> Lattice {
        Lattice {
            emissions: (0..l).map(|_| (0..t).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
            transition: (0..t * t).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            start: (0..t).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        }
    }

    fn all_paths(l: usize, t: usize) -> Vec<Vec<usize>> {
        let mut paths = vec![vec![]];
        for _ in 0..l {
            paths = paths
                .into_iter()
                .flat_map(|p| (0..t).map(move |y| [p.clone(), vec![y]].concat()))
                .collect();
        }
        paths
    }

    #[test]
    fn partition_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lat = random_lattice(&mut rng, 4, 3);
        let paths = all_paths(4, 3);
        assert_eq!(paths.len(), 81);
        let brute = paths.iter().map(|p| lat.path_score(p).exp()).sum::<f64>().ln();
        assert!((lat.log_partition() - brute).abs() < 1e-9);
        let m = lat.marginals();
        for i in 0..4 {
            assert!((m.unary[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_model_confidence() {
        let feats = vec!["bias".to_string()];
        let m = CrfModel::zeros(bio_tags(&["A".to_string()]), CrfFeatureConfig::default(), feats);
        let (_, conf, _) = m.decode(&["a", "b", "c", "d"]);
        assert!((conf - 3f64.powi(-4)).abs() < 1e-15);
    }

    #[test]
    fn bio_round_trip_and_repair() {
        let tokens: Vec<String> = "play ed sheeran in kitchen".split(' ').map(String::from).collect();
        let slots = vec![Slot::from_span("Artist", &tokens, 1, 3), Slot::from_span("Room", &tokens, 4, 5)];
        let tags = slots_to_tags(5, &slots);
        assert_eq!(tags_to_slots(&tokens, &tags), slots);
        let stray = vec!["I-Room".to_string(), "I-Artist".into(), "I-Artist".into(), "O".into(), "B-Room".into()];
        let derived = tags_to_slots(&tokens, &stray);
        assert_eq!(derived.len(), 3);
        Annotation { domain: "d".into(), intent: "i".into(), slots: derived }
            .validate(&tokens)
            .unwrap();
    }

    fn one_sentence() -> Dataset {
        let u = Utterance::from_text("x", "play ed sheeran in the kitchen", Origin::Annotated);
        let slots = vec![Slot::from_span("Artist", &u.tokens, 1, 3), Slot::from_span("Room", &u.tokens, 5, 6)];
        Dataset::new(
            vec![Entry {
                annotation: Some(Annotation { domain: "m".into(), intent: "p".into(), slots }),
                utterance: u,
            }],
            Provenance::default(),
        )
        .unwrap()
    }

    #[test]
    fn memorizes_single_sequence() {
        let d = one_sentence();
        let mut cfg = CrfConfig::default();
        cfg.train.l2 = 0.0;
        cfg.train.epochs = 50;
        let m = train_crf(&d, &cfg).unwrap();
        let e = &d.entries()[0];
        let (_, conf, slots) = m.decode(&e.utterance.tokens);
        assert_eq!(slots, e.annotation.as_ref().unwrap().slots);
        assert!(conf > 0.5);
    }

    #[test]
    fn closed_inventory_rejects_unknown_types() {
        let mut cfg = CrfConfig::default();
        cfg.slot_types = Some(["Artist".to_string()].into_iter().collect());
        assert!(train_crf(&one_sentence(), &cfg).is_err());
    }

    #[test]
    fn crf_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sequences = (0..3)
            .map(|_| CrfSequence {
                features: (0..3).map(|_| vec![0, rng.gen_range(1..4)]).collect(),
                tags: (0..3).map(|_| rng.gen_range(0..3)).collect(),
                weight: rng.gen_range(0.5..2.0),
            })
            .collect();
        let p = CrfProblem { num_features: 4, num_tags: 3, sequences, total: 3, l2: 0.05 };
        let x: Vec<f64> = (0..p.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, g) = p.objective_and_gradient(&x);
        assert!(max_gradient_error(|v| p.objective(v), &x, &g) < 1e-6);
    }

    #[test]
    fn viterbi_beats_random_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lat = random_lattice(&mut rng, 6, 5);
        let (best, score) = lat.viterbi();
        assert!((lat.path_score(&best) - score).abs() < 1e-12);
        for _ in 0..100 {
            let p: Vec<usize> = (0..6).map(|_| rng.gen_range(0..5)).collect();
            assert!(score >= lat.path_score(&p));
        }
    }
}
