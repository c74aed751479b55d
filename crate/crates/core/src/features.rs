//! Sparse n-gram featurization with binary, count, and tf-idf weighting.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::NGRAM_SEPARATOR;
use crate::error::{Error, Result};

/// Sorted `(feature index, value)` pairs with strictly increasing indices and non-zero values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Builds from unordered pairs, summing duplicates and dropping zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, v) in pairs {
            *acc.entry(i).or_insert(0.0) += v;
        }
        SparseVector {
            entries: acc.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|p| self.entries[p].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Binary,
    Count,
    /// `tf * ln(N / df)`.
    Tfidf,
    /// `tf * (ln((1 + N) / (1 + df)) + 1)`.
    SmoothTfidf,
}

/// All contiguous n-grams of `tokens` for `n` in `[n_min, n_max]`, in order of n then position.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], n_min: usize, n_max: usize) -> Vec<String> {
    let mut out = Vec::new();
    let sep = NGRAM_SEPARATOR.to_string();
    for n in n_min..=n_max {
        if n > tokens.len() {
            break;
        }
        for w in tokens.windows(n) {
            let parts: Vec<&str> = w.iter().map(|t| t.as_ref()).collect();
            out.push(parts.join(&sep));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct VocabEntry {
    ngram: String,
    df: usize,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    n_min: usize,
    n_max: usize,
    corpus_size: usize,
    vocabulary: Vec<VocabEntry>,
}

/// A fitted n-gram vocabulary with document frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "SpaceRepr", into = "SpaceRepr")]
pub struct NGramSpace {
    n_min: usize,
    n_max: usize,
    index: HashMap<String, usize>,
    ngrams: Vec<String>,
    df: Vec<usize>,
    corpus_size: usize,
}

impl From<SpaceRepr> for NGramSpace {
    fn from(r: SpaceRepr) -> Self {
        let ngrams: Vec<String> = r.vocabulary.iter().map(|v| v.ngram.clone()).collect();
        NGramSpace {
            n_min: r.n_min,
            n_max: r.n_max,
            index: ngrams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect(),
            df: r.vocabulary.iter().map(|v| v.df).collect(),
            ngrams,
            corpus_size: r.corpus_size,
        }
    }
}

impl From<NGramSpace> for SpaceRepr {
    fn from(s: NGramSpace) -> Self {
        SpaceRepr {
            n_min: s.n_min,
            n_max: s.n_max,
            corpus_size: s.corpus_size,
            vocabulary: s
                .ngrams
                .into_iter()
                .zip(s.df)
                .map(|(ngram, df)| VocabEntry { ngram, df })
                .collect(),
        }
    }
}

pub fn check_n_range(n_min: usize, n_max: usize) -> Result<()> {
    if n_min < 1 || n_min > n_max {
        return Err(Error::config(format!("invalid n-gram range [{}, {}]", n_min, n_max)));
    }
    Ok(())
}

impl NGramSpace {
    /// Fits the vocabulary of every n-gram in `docs`. Indices follow first occurrence.
    pub fn fit<D, S>(docs: &[D], n_min: usize, n_max: usize) -> Result<Self>
    where
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        check_n_range(n_min, n_max)?;
        if docs.is_empty() {
            return Err(Error::data("cannot fit an n-gram space on zero documents"));
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut ngrams = Vec::new();
        let mut df: Vec<usize> = Vec::new();
        let mut seen_in_doc: Vec<usize> = Vec::new();
        for (d, doc) in docs.iter().enumerate() {
            for g in self::ngrams(doc.as_ref(), n_min, n_max) {
                let id = match index.get(&g) {
                    Some(&id) => id,
                    None => {
                        let id = ngrams.len();
                        index.insert(g.clone(), id);
                        ngrams.push(g);
                        df.push(0);
                        seen_in_doc.push(usize::MAX);
                        id
                    }
                };
                if seen_in_doc[id] != d {
                    seen_in_doc[id] = d;
                    df[id] += 1;
                }
            }
        }
        Ok(NGramSpace {
            n_min,
            n_max,
            index,
            ngrams,
            df,
            corpus_size: docs.len(),
        })
    }

    pub fn n_range(&self) -> (usize, usize) {
        (self.n_min, self.n_max)
    }

    pub fn dim(&self) -> usize {
        self.ngrams.len()
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }

    pub fn index_of(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    /// Looks up an n-gram given as separate tokens.
    pub fn index_of_tokens(&self, tokens: &[&str]) -> Option<usize> {
        self.index_of(&tokens.join(&NGRAM_SEPARATOR.to_string()))
    }

    pub fn ngram(&self, index: usize) -> &str {
        &self.ngrams[index]
    }

    pub fn document_frequency(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn idf(&self, index: usize, weighting: Weighting) -> f64 {
        let n = self.corpus_size as f64;
        let df = self.df[index] as f64;
        match weighting {
            Weighting::Tfidf => (n / df).ln(),
            Weighting::SmoothTfidf => ((1.0 + n) / (1.0 + df)).ln() + 1.0,
            Weighting::Binary | Weighting::Count => 1.0,
        }
    }

    /// Featurizes `tokens`; out-of-vocabulary n-grams and zero values are dropped.
    pub fn extract<S: AsRef<str>>(&self, tokens: &[S], weighting: Weighting) -> SparseVector {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for g in ngrams(tokens, self.n_min, self.n_max) {
            if let Some(&i) = self.index.get(&g) {
                *counts.entry(i).or_insert(0) += 1;
            }
        }
        let entries = counts
            .into_iter()
            .map(|(i, tf)| {
                let v = match weighting {
                    Weighting::Binary => 1.0,
                    Weighting::Count => tf as f64,
                    Weighting::Tfidf | Weighting::SmoothTfidf => tf as f64 * self.idf(i, weighting),
                };
                (i, v)
            })
            .filter(|&(_, v)| v != 0.0)
            .collect();
        SparseVector { entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn fit_enumerates_all_ngrams() {
        let s = NGramSpace::fit(&[toks("play adele")], 1, 2).unwrap();
        assert_eq!(s.dim(), 3);
        for g in [vec!["play"], vec!["adele"], vec!["play", "adele"]] {
            let i = s.index_of_tokens(&g).unwrap();
            assert_eq!(s.document_frequency(i), 1);
        }
    }

    #[test]
    fn df_counts_documents() {
        let s = NGramSpace::fit(&[toks("a"), toks("a")], 1, 1).unwrap();
        assert_eq!(s.document_frequency(s.index_of("a").unwrap()), 2);
        assert_eq!(s.corpus_size(), 2);
    }

    #[test]
    fn short_doc_has_no_four_grams() {
        let s = NGramSpace::fit(&[toks("x y z")], 2, 4).unwrap();
        assert_eq!(s.dim(), 3);
        assert!(s.index_of_tokens(&["x", "y", "z"]).is_some());
    }

    #[test]
    fn bad_range_is_config_error() {
        assert!(matches!(NGramSpace::fit(&[toks("a")], 0, 2), Err(Error::Config(_))));
        assert!(matches!(NGramSpace::fit(&[toks("a")], 3, 2), Err(Error::Config(_))));
        assert!(NGramSpace::fit::<Vec<String>, String>(&[], 1, 1).is_err());
    }

    #[test]
    fn tfidf_drops_ubiquitous_features() {
        let s = NGramSpace::fit(&[toks("play a"), toks("play b")], 1, 1).unwrap();
        assert!(s.extract(&toks("play"), Weighting::Tfidf).is_empty());
    }

    #[test]
    fn binary_ignores_repetition() {
        let s = NGramSpace::fit(&[toks("play")], 1, 1).unwrap();
        let v = s.extract(&toks("play play"), Weighting::Binary);
        assert_eq!(v.entries(), &[(0, 1.0)]);
        assert_eq!(s.extract(&toks("play play"), Weighting::Count).entries(), &[(0, 2.0)]);
    }

    #[test]
    fn tfidf_value_matches_formula() {
        let s = NGramSpace::fit(&[toks("f"), toks("g"), toks("h"), toks("i")], 1, 1).unwrap();
        let v = s.extract(&toks("f f"), Weighting::Tfidf);
        assert!((v.get(s.index_of("f").unwrap()) - 2.0 * 4f64.ln()).abs() < 1e-12);
        assert!((2.0 * 4f64.ln() - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn oov_is_dropped() {
        let s = NGramSpace::fit(&[toks("a b")], 1, 2).unwrap();
        assert!(s.extract(&toks("c d"), Weighting::Count).is_empty());
    }

    #[test]
    fn space_serializes() {
        let s = NGramSpace::fit(&[toks("a b c"), toks("b c")], 1, 3).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: NGramSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn unigram_values_are_order_free(words in proptest::collection::vec(0usize..6, 1..8), seed in 0u64..1000) {
            let vocab = ["a", "b", "c", "d", "e", "f"];
            let doc: Vec<String> = words.iter().map(|&w| vocab[w].to_string()).collect();
            let mut shuffled = doc.clone();
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(&mut shuffled[..], &mut rng);
            let fit_docs = vec![doc.clone(), vocab.iter().map(|s| s.to_string()).collect()];
            let s = NGramSpace::fit(&fit_docs, 1, 1).unwrap();
            for w in [Weighting::Binary, Weighting::Count, Weighting::Tfidf] {
                prop_assert_eq!(s.extract(&doc, w), s.extract(&shuffled, w));
            }
            let v = s.extract(&doc, Weighting::Tfidf);
            prop_assert!(v.iter().all(|(i, x)| x > 0.0 && i < s.dim()));
            prop_assert!(v.entries().windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
