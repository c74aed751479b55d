//! Utterance and annotation data model, grammar-driven corpus generation,
//! persistence, and annotation-increment splitting.

mod grammar;
mod io;

pub use grammar::{generate_corpus, generate_corpus_with, GenerateOptions, GrammarSpec, Template};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separator used to join tokens into n-gram keys. Tokens may not contain it.
pub const NGRAM_SEPARATOR: char = '\u{2581}';

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Synthetic,
    Annotated,
    Unlabeled,
    Augmented,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Synthetic => "synthetic",
            Origin::Annotated => "annotated",
            Origin::Unlabeled => "unlabeled",
            Origin::Augmented => "augmented",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub tokens: Vec<String>,
    pub origin: Origin,
    /// Training weight. Enters every trainer objective as a per-example multiplier.
    pub weight: f64,
}

impl Utterance {
    /// Builds an utterance with weight 1.0, lowercasing every token.
    pub fn new<S: AsRef<str>>(id: impl Into<String>, tokens: &[S], origin: Origin) -> Self {
        Utterance {
            id: id.into(),
            tokens: tokens.iter().map(|t| t.as_ref().to_lowercase()).collect(),
            origin,
            weight: 1.0,
        }
    }

    /// Splits `text` on whitespace.
    pub fn from_text(id: impl Into<String>, text: &str, origin: Origin) -> Self {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        Utterance::new(id, &tokens, origin)
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::data(format!("utterance {} has no tokens", self.id)));
        }
        for t in &self.tokens {
            if t.is_empty() || t.chars().any(|c| c.is_whitespace() || c == NGRAM_SEPARATOR) {
                return Err(Error::data(format!("utterance {} has an invalid token {:?}", self.id, t)));
            }
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::data(format!("utterance {} has invalid weight {}", self.id, self.weight)));
        }
        Ok(())
    }
}

/// A typed slot over the half-open token span `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot {
    #[serde(rename = "type")]
    pub slot_type: String,
    pub start: usize,
    pub end: usize,
    pub value: String,
}

impl Slot {
    pub fn from_span(slot_type: impl Into<String>, tokens: &[String], start: usize, end: usize) -> Self {
        Slot {
            slot_type: slot_type.into(),
            start,
            end,
            value: tokens[start..end].join(" "),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub domain: String,
    pub intent: String,
    pub slots: Vec<Slot>,
}

impl Annotation {
    /// Checks span bounds, non-overlap, and that each value equals its span's tokens.
    pub fn validate(&self, tokens: &[String]) -> Result<()> {
        let mut spans: Vec<(usize, usize)> = Vec::with_capacity(self.slots.len());
        for s in &self.slots {
            if s.start >= s.end || s.end > tokens.len() {
                return Err(Error::data(format!(
                    "slot {} span [{}, {}) is outside the {} tokens",
                    s.slot_type,
                    s.start,
                    s.end,
                    tokens.len()
                )));
            }
            if s.value != tokens[s.start..s.end].join(" ") {
                return Err(Error::data(format!(
                    "slot {} value {:?} does not match its span tokens",
                    s.slot_type, s.value
                )));
            }
            spans.push((s.start, s.end));
        }
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::data(format!(
                    "overlapping slot spans [{}, {}) and [{}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }

    /// Slot types as a sorted multiset.
    pub fn slot_signature(&self) -> Vec<String> {
        let mut sig: Vec<String> = self.slots.iter().map(|s| s.slot_type.clone()).collect();
        sig.sort();
        sig
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub utterance: Utterance,
    pub annotation: Option<Annotation>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grammar_id: Option<String>,
}

/// An immutable, validated collection of utterances with optional annotations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    entries: Vec<Entry>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(entries: Vec<Entry>, provenance: Provenance) -> Result<Self> {
        let mut ids = HashSet::with_capacity(entries.len());
        for e in &entries {
            e.utterance.validate()?;
            if !ids.insert(e.utterance.id.as_str()) {
                return Err(Error::data(format!("duplicate utterance id {}", e.utterance.id)));
            }
            if let Some(a) = &e.annotation {
                a.validate(&e.utterance.tokens)
                    .map_err(|err| Error::data(format!("utterance {}: {}", e.utterance.id, err)))?;
            }
        }
        Ok(Dataset { entries, provenance })
    }

    pub fn empty() -> Self {
        Dataset::default()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Entry> {
        self.entries
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Entry> {
        self.entries.iter()
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.entries.iter().map(|e| &e.utterance)
    }

    pub fn is_fully_annotated(&self) -> bool {
        self.entries.iter().all(|e| e.annotation.is_some())
    }

    /// Concatenates datasets; ids must stay unique across the parts.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a Dataset>) -> Result<Dataset> {
        let mut entries = Vec::new();
        let mut provenance = None;
        for p in parts {
            if provenance.is_none() {
                provenance = Some(p.provenance.clone());
            }
            entries.extend(p.entries.iter().cloned());
        }
        Dataset::new(entries, provenance.unwrap_or_default())
    }

    /// Keeps the entries at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn filter(&self, mut keep: impl FnMut(&Entry) -> bool) -> Dataset {
        Dataset {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Drops annotations and marks every utterance as unlabeled.
    pub fn strip_annotations(&self) -> Dataset {
        Dataset {
            entries: self
                .entries
                .iter()
                .map(|e| Entry {
                    utterance: Utterance {
                        origin: Origin::Unlabeled,
                        ..e.utterance.clone()
                    },
                    annotation: None,
                })
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn with_origin(&self, origin: Origin) -> Dataset {
        let mut d = self.clone();
        for e in &mut d.entries {
            e.utterance.origin = origin;
        }
        d
    }

    /// Prefixes every id, used to keep ids unique when merging corpora.
    pub fn with_id_prefix(&self, prefix: &str) -> Dataset {
        let mut d = self.clone();
        for e in &mut d.entries {
            e.utterance.id = format!("{}{}", prefix, e.utterance.id);
        }
        d
    }

    pub fn intents(&self) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter_map(|e| e.annotation.as_ref().map(|a| a.intent.clone()))
            .collect()
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Entry;
    type IntoIter = std::slice::Iter<'a, Entry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}

/// A target capability: one or two intents of a domain and their slots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalitySpec {
    pub name: String,
    pub domain: String,
    pub intents: BTreeSet<String>,
    pub slot_types: BTreeSet<String>,
    #[serde(default)]
    pub new_slot_types: BTreeSet<String>,
}

impl FunctionalitySpec {
    pub fn validate(&self) -> Result<()> {
        if self.intents.is_empty() || self.intents.len() > 2 {
            return Err(Error::config(format!(
                "functionality {} must name one or two intents, got {}",
                self.name,
                self.intents.len()
            )));
        }
        if let Some(s) = self.new_slot_types.difference(&self.slot_types).next() {
            return Err(Error::config(format!(
                "functionality {}: new slot type {} is not among its slot types",
                self.name, s
            )));
        }
        Ok(())
    }

    pub fn matches(&self, annotation: &Annotation) -> bool {
        annotation.domain == self.domain && self.intents.contains(&annotation.intent)
    }
}

/// Rounds `fraction * n` half-up.
pub fn increment_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 0.5 + 1e-9).floor() as usize
}

/// Splits `d` into nested increments. Each increment keeps the original entry order.
pub fn split_increments(d: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if d.is_empty() {
        return Err(Error::data("cannot split an empty dataset"));
    }
    for (i, &f) in fractions.iter().enumerate() {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::config(format!("increment fraction {} outside (0, 1]", f)));
        }
        if i > 0 && f < fractions[i - 1] {
            return Err(Error::config("increment fractions must be sorted ascending"));
        }
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    Ok(fractions
        .iter()
        .map(|&f| {
            let mut idx = order[..increment_size(f, d.len()).min(d.len())].to_vec();
            idx.sort_unstable();
            d.select(&idx)
        })
        .collect())
}
