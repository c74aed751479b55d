//! Paraphrase pair mining, word-averaging embeddings, and the pair scorer used by
//! diversity selection.

pub mod detector;
pub mod embedding;
pub mod mining;

pub use detector::{train_detector, DetectorConfig, MlpWeights, ParaphraseDetector, PreparedUtterance};
pub use embedding::{
    cosine, margin_objective, train_embedding, train_embedding_from, EmbeddingKind, EmbeddingModel, MarginBatch,
    MarginConfig,
};
pub use mining::{mine_pairs, MiningConfig};

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairProvenance {
    MinedPositive,
    RandomNegative,
    EntitySwapNegative,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParaphrasePair {
    pub utterance_a: Vec<String>,
    pub utterance_b: Vec<String>,
    pub label: bool,
    pub provenance: PairProvenance,
}

impl ParaphrasePair {
    pub fn new(a: &str, b: &str, label: bool, provenance: PairProvenance) -> Self {
        let split = |s: &str| s.split_whitespace().map(str::to_lowercase).collect();
        ParaphrasePair {
            utterance_a: split(a),
            utterance_b: split(b),
            label,
            provenance,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    tokens_a: String,
    tokens_b: String,
    label: bool,
    provenance: PairProvenance,
}

/// Writes one JSON pair record per line.
pub fn write_pairs<W: Write>(pairs: &[ParaphrasePair], mut w: W) -> Result<()> {
    for p in pairs {
        let rec = PairRecord {
            tokens_a: p.utterance_a.join(" "),
            tokens_b: p.utterance_b.join(" "),
            label: p.label,
            provenance: p.provenance,
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs<R: Read>(r: R) -> Result<Vec<ParaphrasePair>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let p = ParaphrasePair::new(&rec.tokens_a, &rec.tokens_b, rec.label, rec.provenance);
        if p.utterance_a.is_empty() || p.utterance_b.is_empty() {
            return Err(Error::parse(i + 1, "pair with an empty utterance"));
        }
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_file_round_trip() {
        let pairs = vec![
            ParaphrasePair::new("play adele", "i want to listen to adele", true, PairProvenance::MinedPositive),
            ParaphrasePair::new("play adele", "play ed sheeran", false, PairProvenance::EntitySwapNegative),
        ];
        let mut buf = Vec::new();
        write_pairs(&pairs, &mut buf).unwrap();
        assert_eq!(read_pairs(&buf[..]).unwrap(), pairs);
    }
}
