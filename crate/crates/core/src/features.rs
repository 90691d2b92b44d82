//! Unigram TF-IDF feature space.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_TOKENS: usize = 128;

/// Sparse feature vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a vector from arbitrary `(index, weight)` pairs. Duplicate
    /// indices are summed and zeros dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, f64)> = pairs.into_iter().collect();
        if let Some(&(i, _)) = entries.iter().find(|(i, _)| *i >= dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: i + 1,
            });
        }
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|&(_, w)| w != 0.0);
        Ok(SparseVector { dim, entries: merged })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &w)| w != 0.0)
                .map(|(i, &w)| (i, w))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Dot product with a dense vector of the same dimension.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }

    fn l2_normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for (_, w) in &mut self.entries {
                *w /= n;
            }
        }
    }
}

/// Term to column mapping with document frequencies.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    terms: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, index: usize) -> usize {
        self.df[index]
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }
}

/// Whitespace tokenizer over already-normalized text, keeping the first
/// `max_tokens` tokens.
pub fn tokenize(text: &str, max_tokens: usize) -> Vec<&str> {
    text.split_whitespace().take(max_tokens).collect()
}

fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Fitted TF-IDF vectorizer: raw term counts times smoothed idf, L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Vectorizer {
    vocab: Vocabulary,
    idf: Vec<f64>,
    max_tokens: usize,
}

#[derive(Serialize, Deserialize)]
struct VectorizerFile {
    terms: Vec<String>,
    idf: Vec<f64>,
    n_docs: usize,
    max_tokens: usize,
}

impl Vectorizer {
    /// Fits the vocabulary on the normalized text of `docs`. Term indices
    /// follow first appearance.
    pub fn fit<'a, I>(docs: I, max_tokens: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        let mut vocab = Vocabulary::default();
        let mut last_seen: Vec<usize> = Vec::new();
        for (d, doc) in docs.into_iter().enumerate() {
            for token in tokenize(&doc.text, max_tokens) {
                let idx = match vocab.index.get(token) {
                    Some(&i) => i,
                    None => {
                        let i = vocab.terms.len();
                        vocab.index.insert(token.to_string(), i);
                        vocab.terms.push(token.to_string());
                        vocab.df.push(0);
                        last_seen.push(usize::MAX);
                        i
                    }
                };
                if last_seen[idx] != d {
                    last_seen[idx] = d;
                    vocab.df[idx] += 1;
                }
            }
            vocab.n_docs = d + 1;
        }
        if vocab.n_docs == 0 {
            return Err(Error::EmptyCorpus);
        }
        if vocab.is_empty() {
            return Err(Error::NoTerms);
        }
        let idf = vocab.df.iter().map(|&df| smoothed_idf(vocab.n_docs, df)).collect();
        Ok(Vectorizer { vocab, idf, max_tokens })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn transform(&self, doc: &Document) -> SparseVector {
        self.transform_text(&doc.text)
    }

    /// Embeds already-normalized text. Out-of-vocabulary tokens are dropped.
    pub fn transform_text(&self, text: &str) -> SparseVector {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for token in tokenize(text, self.max_tokens) {
            if let Some(i) = self.vocab.index_of(token) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(i, tf)| (i, tf * self.idf[i])).collect();
        entries.sort_by_key(|&(i, _)| i);
        let mut v = SparseVector {
            dim: self.dim(),
            entries,
        };
        v.l2_normalize();
        v
    }

    pub fn transform_all<'a, I>(&self, docs: I) -> Vec<SparseVector>
    where
        I: IntoIterator<Item = &'a Document>,
    {
        docs.into_iter().map(|d| self.transform(d)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&VectorizerFile {
            terms: self.vocab.terms.clone(),
            idf: self.idf.clone(),
            n_docs: self.vocab.n_docs,
            max_tokens: self.max_tokens,
        })
        .expect("vectorizer serializes")
    }

    /// Restores a vectorizer; document frequencies are recovered by
    /// inverting the idf formula.
    pub fn from_json(json: &str) -> Result<Self> {
        let file: VectorizerFile = serde_json::from_str(json)?;
        if file.terms.len() != file.idf.len() {
            return Err(Error::LengthMismatch(file.terms.len(), file.idf.len()));
        }
        let mut index = HashMap::with_capacity(file.terms.len());
        let mut df = Vec::with_capacity(file.terms.len());
        for (i, (term, &idf)) in file.terms.iter().zip(&file.idf).enumerate() {
            if index.insert(term.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate term `{term}` in vectorizer")));
            }
            if !idf.is_finite() || idf <= 0.0 {
                return Err(Error::Config(format!("invalid idf {idf} for `{term}`")));
            }
            let recovered = ((1.0 + file.n_docs as f64) / (idf - 1.0).exp() - 1.0).round();
            df.push(recovered.clamp(1.0, file.n_docs.max(1) as f64) as usize);
        }
        Ok(Vectorizer {
            vocab: Vocabulary {
                index,
                terms: file.terms,
                df,
                n_docs: file.n_docs,
            },
            idf: file.idf,
            max_tokens: file.max_tokens,
        })
    }

    /// SHA-256 of the serialized form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
