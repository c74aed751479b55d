//! Paraphrase pair mining from NLU annotations.
//!
//! Utterances sharing domain, intent, and slot-type multiset form a group. Their slot
//! entities are masked to carrier templates; every pair of distinct templates in a group is
//! refilled with the same entities to give a positive pair. Negatives are random utterance
//! pairs from different groups and entity swaps over one carrier.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PairProvenance, ParaphrasePair};
use crate::corpus::{Annotation, Dataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    /// Negatives generated per positive, alternating random and entity-swap kinds.
    pub negatives_per_positive: usize,
    /// Entity refills per template pair.
    pub refills_per_pair: usize,
    /// Upper bound on template pairs drawn from one group; 0 means unlimited.
    pub max_pairs_per_group: usize,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            negatives_per_positive: 1,
            refills_per_pair: 1,
            max_pairs_per_group: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Piece {
    Word(String),
    Slot(String),
}

type Carrier = Vec<Piece>;

/// Replaces each slot span with its type.
fn mask(tokens: &[String], annotation: &Annotation) -> Carrier {
    let mut slots = annotation.slots.clone();
    slots.sort_by_key(|s| s.start);
    let mut out = Vec::new();
    let mut i = 0;
    for s in &slots {
        out.extend(tokens[i..s.start].iter().cloned().map(Piece::Word));
        out.push(Piece::Slot(s.slot_type.clone()));
        i = s.end;
    }
    out.extend(tokens[i..].iter().cloned().map(Piece::Word));
    out
}

/// Draws one entity per slot occurrence, keyed by `(type, occurrence index)`.
fn draw_entities<R: Rng>(
    carrier: &Carrier,
    catalogs: &BTreeMap<String, Vec<String>>,
    rng: &mut R,
) -> Result<BTreeMap<(String, usize), String>> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for p in carrier {
        if let Piece::Slot(t) = p {
            let values = catalogs
                .get(t)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::config(format!("missing or empty catalog for slot type {}", t)))?;
            let k = seen.entry(t.as_str()).or_insert(0);
            out.insert((t.clone(), *k), values[rng.gen_range(0..values.len())].to_lowercase());
            *k += 1;
        }
    }
    Ok(out)
}

fn fill(carrier: &Carrier, entities: &BTreeMap<(String, usize), String>) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for p in carrier {
        match p {
            Piece::Word(w) => out.push(w.clone()),
            Piece::Slot(t) => {
                let k = seen.entry(t.as_str()).or_insert(0);
                out.extend(entities[&(t.clone(), *k)].split_whitespace().map(str::to_string));
                *k += 1;
            }
        }
    }
    out
}

/// Mines labeled paraphrase pairs from the annotated entries of `data`.
pub fn mine_pairs(
    data: &Dataset,
    catalogs: &BTreeMap<String, Vec<String>>,
    config: &MiningConfig,
) -> Result<Vec<ParaphrasePair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // group key -> distinct carriers, in first-seen order
    let mut groups: BTreeMap<(String, String, Vec<String>), Vec<Carrier>> = BTreeMap::new();
    let mut members: Vec<((String, String, Vec<String>), &Vec<String>)> = Vec::new();
    for e in data.iter() {
        let Some(a) = &e.annotation else { continue };
        let key = (a.domain.clone(), a.intent.clone(), a.slot_signature());
        let carrier = mask(&e.utterance.tokens, a);
        let list = groups.entry(key.clone()).or_default();
        if !list.contains(&carrier) {
            list.push(carrier);
        }
        members.push((key, &e.utterance.tokens));
    }

    let mut pairs = Vec::new();
    let mut positives = 0usize;
    for carriers in groups.values() {
        let mut template_pairs: Vec<(usize, usize)> = (0..carriers.len())
            .flat_map(|i| (i + 1..carriers.len()).map(move |j| (i, j)))
            .collect();
        if config.max_pairs_per_group > 0 && template_pairs.len() > config.max_pairs_per_group {
            template_pairs.shuffle(&mut rng);
            template_pairs.truncate(config.max_pairs_per_group);
            template_pairs.sort_unstable();
        }
        for (i, j) in template_pairs {
            for _ in 0..config.refills_per_pair {
                let entities = draw_entities(&carriers[i], catalogs, &mut rng)?;
                let a = fill(&carriers[i], &entities);
                let b = fill(&carriers[j], &entities);
                pairs.push(ParaphrasePair {
                    utterance_a: a,
                    utterance_b: b,
                    label: true,
                    provenance: PairProvenance::MinedPositive,
                });
                positives += 1;
            }
        }
    }

    let slotted: Vec<&Carrier> = groups
        .values()
        .flatten()
        .filter(|c| c.iter().any(|p| matches!(p, Piece::Slot(_))))
        .collect();
    let distinct_groups: BTreeSet<_> = members.iter().map(|(k, _)| k).collect();
    let mut negatives_made = 0usize;
    let wanted = positives * config.negatives_per_positive;
    let mut attempts = 0usize;
    let can_random = distinct_groups.len() >= 2;
    let can_swap = !slotted.is_empty();
    while negatives_made < wanted && attempts < wanted * 20 {
        attempts += 1;
        let random_kind = match (negatives_made % 2 == 0, can_random, can_swap) {
            (_, false, false) => break,
            (true, true, _) | (false, true, false) => true,
            _ => false,
        };
        let pair = if random_kind {
            let (ka, a) = &members[rng.gen_range(0..members.len())];
            let (kb, b) = &members[rng.gen_range(0..members.len())];
            if ka == kb || a == b {
                continue;
            }
            ParaphrasePair {
                utterance_a: (*a).clone(),
                utterance_b: (*b).clone(),
                label: false,
                provenance: PairProvenance::RandomNegative,
            }
        } else {
            let c = slotted[rng.gen_range(0..slotted.len())];
            let a = fill(c, &draw_entities(c, catalogs, &mut rng)?);
            let b = fill(c, &draw_entities(c, catalogs, &mut rng)?);
            if a == b {
                continue;
            }
            ParaphrasePair {
                utterance_a: a,
                utterance_b: b,
                label: false,
                provenance: PairProvenance::EntitySwapNegative,
            }
        };
        pairs.push(pair);
        negatives_made += 1;
    }
    Ok(pairs)
}
