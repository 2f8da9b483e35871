//! Lexical retrieval: tokenizer, inverted index and Okapi BM25 ranking.
//!
//! Scores use `idf(t) = ln(1 + (N - n_t + 0.5) / (n_t + 0.5))`, which is always
//! positive, so adding an occurrence of a query term never lowers a score.
//! Repeated query tokens contribute once per occurrence.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RetrievalError {
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("unknown document id `{0}`")]
    UnknownDocId(String),
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Anything that can rank a document collection against a text query.
///
/// Results are sorted by descending score, ties by ascending doc id, and
/// contain only positive scores.
pub trait Retriever: Send + Sync {
    fn top_k(&self, query: &str, k: usize) -> Vec<(String, f64)>;
}

#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    ids: Vec<String>,
    lengths: Vec<u32>,
    by_id: HashMap<String, usize>,
    /// token -> (doc index, term frequency), doc indices ascending.
    postings: HashMap<String, Vec<(u32, u32)>>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn build(
        docs: impl IntoIterator<Item = Document>,
        params: Bm25Params,
    ) -> Result<Self, RetrievalError> {
        let mut index = Bm25Index {
            params,
            ids: Vec::new(),
            lengths: Vec::new(),
            by_id: HashMap::new(),
            postings: HashMap::new(),
            avg_len: 0.0,
        };
        for doc in docs {
            if index.by_id.contains_key(&doc.id) {
                return Err(RetrievalError::DuplicateDocId(doc.id));
            }
            let idx = index.ids.len();
            let tokens = tokenize(&doc.text);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (t, n) in tf {
                index.postings.entry(t).or_default().push((idx as u32, n));
            }
            index.by_id.insert(doc.id.clone(), idx);
            index.ids.push(doc.id);
            index.lengths.push(tokens.len() as u32);
        }
        if !index.ids.is_empty() {
            index.avg_len =
                index.lengths.iter().map(|&l| l as f64).sum::<f64>() / index.ids.len() as f64;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_len(&self, id: &str) -> Option<u32> {
        self.by_id.get(id).map(|&i| self.lengths[i])
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.ids
    }

    /// Posting list for a token: (doc id, term frequency).
    pub fn postings(&self, token: &str) -> impl Iterator<Item = (&str, u32)> {
        self.postings
            .get(token)
            .into_iter()
            .flatten()
            .map(|&(d, tf)| (self.ids[d as usize].as_str(), tf))
    }

    fn idf(&self, doc_freq: usize) -> f64 {
        let n = self.ids.len() as f64;
        let df = doc_freq as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = 1.0 - b + b * doc_len as f64 / self.avg_len;
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    pub fn score(&self, query: &[String], doc_id: &str) -> Result<f64, RetrievalError> {
        let doc = *self
            .by_id
            .get(doc_id)
            .ok_or_else(|| RetrievalError::UnknownDocId(doc_id.to_string()))?;
        let mut total = 0.0;
        for token in query {
            let Some(list) = self.postings.get(token) else {
                continue;
            };
            if let Ok(pos) = list.binary_search_by_key(&(doc as u32), |&(d, _)| d) {
                total += self.term_weight(self.idf(list.len()), list[pos].1, self.lengths[doc]);
            }
        }
        Ok(total)
    }

    /// Scores every document sharing a token with the query (term-at-a-time,
    /// in query token order, so totals match [`Bm25Index::score`] exactly).
    pub fn score_all(&self, query: &[String]) -> Vec<(usize, f64)> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for token in query {
            let Some(list) = self.postings.get(token) else {
                continue;
            };
            let idf = self.idf(list.len());
            for &(d, tf) in list {
                *acc.entry(d).or_default() += self.term_weight(idf, tf, self.lengths[d as usize]);
            }
        }
        acc.into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(d, s)| (d as usize, s))
            .collect()
    }

    pub fn top_k_tokens(&self, query: &[String], k: usize) -> Vec<(String, f64)> {
        let mut scored = self.score_all(query);
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        });
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(d, s)| (self.ids[d].clone(), s))
            .collect()
    }
}

impl Retriever for Bm25Index {
    fn top_k(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.top_k_tokens(&tokenize(query), k)
    }
}
