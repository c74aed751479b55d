//! Slot error rate with a fixed three-pass slot alignment.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::corpus::{Annotation, Dataset, Slot};
use crate::error::{Error, Result};
use crate::nlu::{NluModels, NluPrediction};

/// Substitution, insertion, deletion, and correct counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SerReport {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub correct: usize,
}

impl SerReport {
    /// `(S + I + D) / (S + D + C)`; 0 for an empty report.
    pub fn ser(&self) -> f64 {
        let denom = self.substitutions + self.deletions + self.correct;
        if denom == 0 {
            return 0.0;
        }
        (self.substitutions + self.insertions + self.deletions) as f64 / denom as f64
    }
}

impl Add for SerReport {
    type Output = SerReport;

    fn add(mut self, rhs: SerReport) -> SerReport {
        self += rhs;
        self
    }
}

impl AddAssign for SerReport {
    fn add_assign(&mut self, rhs: SerReport) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
        self.correct += rhs.correct;
    }
}

impl std::iter::Sum for SerReport {
    fn sum<I: Iterator<Item = SerReport>>(iter: I) -> SerReport {
        iter.fold(SerReport::default(), Add::add)
    }
}

/// Aligns hypothesis slots to reference slots.
///
/// Exact `(type, value)` matches count as correct; then equal types with different values
/// pair off as substitutions; then any remaining slots pair off as substitutions. Leftover
/// hypothesis slots are insertions and leftover reference slots deletions. The intent adds
/// one correct or one substitution.
pub fn compute_ser_annotations(hyp: &Annotation, reference: &Annotation) -> SerReport {
    let mut r = align_slots(&hyp.slots, &reference.slots);
    if hyp.intent == reference.intent {
        r.correct += 1;
    } else {
        r.substitutions += 1;
    }
    r
}

pub fn compute_ser(hyp: &NluPrediction, reference: &Annotation) -> SerReport {
    compute_ser_annotations(&hyp.to_annotation(), reference)
}

fn align_slots(hyp: &[Slot], reference: &[Slot]) -> SerReport {
    let mut hyp_left: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for s in hyp {
        *hyp_left.entry((s.slot_type.as_str(), s.value.as_str())).or_default() += 1;
    }
    let mut ref_left: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for s in reference {
        *ref_left.entry((s.slot_type.as_str(), s.value.as_str())).or_default() += 1;
    }
    let mut report = SerReport::default();
    for (key, r) in ref_left.iter_mut() {
        if let Some(h) = hyp_left.get_mut(key) {
            let m = (*h).min(*r);
            report.correct += m;
            *h -= m;
            *r -= m;
        }
    }
    let by_type = |m: &BTreeMap<(&str, &str), usize>| {
        let mut t: BTreeMap<String, usize> = BTreeMap::new();
        for ((ty, _), n) in m {
            *t.entry(ty.to_string()).or_default() += n;
        }
        t
    };
    let (mut hyp_types, ref_types) = (by_type(&hyp_left), by_type(&ref_left));
    let (mut hyp_rest, mut ref_rest) = (0, 0);
    for (ty, r) in ref_types {
        let h = hyp_types.get(&ty).copied().unwrap_or(0);
        let m = h.min(r);
        report.substitutions += m;
        ref_rest += r - m;
        hyp_types.insert(ty, h - m);
    }
    hyp_rest += hyp_types.values().sum::<usize>();
    let m = hyp_rest.min(ref_rest);
    report.substitutions += m;
    report.insertions += hyp_rest - m;
    report.deletions += ref_rest - m;
    report
}

/// Corpus-level counts plus the per-utterance reports they sum from.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub total: SerReport,
    pub per_utterance: Vec<(String, SerReport)>,
}

/// Micro-averaged SER of `models` on an annotated test set.
pub fn evaluate_model(models: &NluModels, test: &Dataset) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::data("test set is empty"));
    }
    let per_utterance = test
        .iter()
        .map(|e| {
            let reference = e
                .annotation
                .as_ref()
                .ok_or_else(|| Error::data(format!("test utterance {} has no annotation", e.utterance.id)))?;
            Ok((e.utterance.id.clone(), compute_ser(&models.predict(&e.utterance), reference)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        total: per_utterance.iter().map(|(_, r)| *r).sum(),
        per_utterance,
    })
}
