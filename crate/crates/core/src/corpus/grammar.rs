use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Annotation, Dataset, Entry, Origin, Provenance, Slot, Utterance};
use crate::error::{Error, Result};

/// A carrier template. Tokens of the form `{SlotType}` are placeholders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    #[serde(default)]
    pub name: Option<String>,
    pub domain: String,
    pub intent: String,
    pub text: String,
}

enum Piece<'a> {
    Word(&'a str),
    Placeholder(&'a str),
}

impl Template {
    fn pieces(&self) -> impl Iterator<Item = Piece<'_>> {
        self.text.split_whitespace().map(|w| {
            match w.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
                Some(slot) => Piece::Placeholder(slot),
                None => Piece::Word(w),
            }
        })
    }

    pub fn placeholders(&self) -> Vec<&str> {
        self.pieces()
            .filter_map(|p| match p {
                Piece::Placeholder(s) => Some(s),
                Piece::Word(_) => None,
            })
            .collect()
    }
}

/// Template grammar with entity catalogs and a sampling distribution over templates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarSpec {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub templates: Vec<Template>,
    #[serde(default)]
    pub catalogs: BTreeMap<String, Vec<String>>,
    /// Template name to relative weight; templates not listed get weight 1.0.
    #[serde(default)]
    pub distribution: BTreeMap<String, f64>,
}

impl GrammarSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let g: GrammarSpec = toml::from_str(s).map_err(|e| Error::config(format!("grammar: {}", e)))?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn template_name(&self, index: usize) -> String {
        let t = &self.templates[index];
        t.name
            .clone()
            .unwrap_or_else(|| format!("{}#{}", t.intent, index))
    }

    /// Normalized sampling probability of each template.
    pub fn template_weights(&self) -> Vec<f64> {
        (0..self.templates.len())
            .map(|i| *self.distribution.get(&self.template_name(i)).unwrap_or(&1.0))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::config(format!("grammar {:?} has no templates", self.id)));
        }
        let names: Vec<String> = (0..self.templates.len()).map(|i| self.template_name(i)).collect();
        for key in self.distribution.keys() {
            if !names.contains(key) {
                return Err(Error::config(format!("distribution names unknown template {}", key)));
            }
        }
        for (i, t) in self.templates.iter().enumerate() {
            if t.text.split_whitespace().next().is_none() {
                return Err(Error::config(format!("template {} is empty", names[i])));
            }
            for slot in t.placeholders() {
                match self.catalogs.get(slot) {
                    Some(values) if values.iter().any(|v| v.split_whitespace().next().is_some()) => {}
                    _ => {
                        return Err(Error::config(format!(
                            "missing or empty catalog for slot type {}",
                            slot
                        )))
                    }
                }
            }
        }
        let weights = self.template_weights();
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("template distribution must be non-negative with positive mass"));
        }
        Ok(())
    }

    /// Fills template `index` with catalog entities drawn from `rng`.
    pub fn realize<R: Rng>(&self, index: usize, rng: &mut R) -> (Vec<String>, Vec<Slot>) {
        let t = &self.templates[index];
        let mut tokens: Vec<String> = Vec::new();
        let mut slots = Vec::new();
        for piece in t.pieces() {
            match piece {
                Piece::Word(w) => tokens.push(w.to_lowercase()),
                Piece::Placeholder(slot) => {
                    let catalog: Vec<&String> = self.catalogs[slot]
                        .iter()
                        .filter(|v| v.split_whitespace().next().is_some())
                        .collect();
                    let value = catalog[rng.gen_range(0..catalog.len())];
                    let start = tokens.len();
                    tokens.extend(value.split_whitespace().map(str::to_lowercase));
                    slots.push(Slot::from_span(slot, &tokens, start, tokens.len()));
                }
            }
        }
        (tokens, slots)
    }
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub id_prefix: String,
    pub origin: Origin,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            id_prefix: String::new(),
            origin: Origin::Synthetic,
        }
    }
}

/// Samples `count` fully annotated utterances from `grammar`.
pub fn generate_corpus(grammar: &GrammarSpec, count: usize, seed: u64) -> Result<Dataset> {
    generate_corpus_with(grammar, count, seed, &GenerateOptions::default())
}

pub fn generate_corpus_with(
    grammar: &GrammarSpec,
    count: usize,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::config("corpus count must be at least 1"));
    }
    grammar.validate()?;
    let chooser = WeightedIndex::new(grammar.template_weights())
        .map_err(|e| Error::config(format!("template distribution: {}", e)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prefix = if opts.id_prefix.is_empty() {
        if grammar.id.is_empty() {
            format!("s{}-", seed)
        } else {
            format!("{}-s{}-", grammar.id, seed)
        }
    } else {
        opts.id_prefix.clone()
    };
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let ti = chooser.sample(&mut rng);
        let (tokens, slots) = grammar.realize(ti, &mut rng);
        let t = &grammar.templates[ti];
        entries.push(Entry {
            utterance: Utterance {
                id: format!("{}{:06}", prefix, i),
                tokens,
                origin: opts.origin,
                weight: 1.0,
            },
            annotation: Some(Annotation {
                domain: t.domain.clone(),
                intent: t.intent.clone(),
                slots,
            }),
        });
    }
    Dataset::new(
        entries,
        Provenance {
            seed: Some(seed),
            grammar_id: Some(grammar.id.clone()),
        },
    )
}
