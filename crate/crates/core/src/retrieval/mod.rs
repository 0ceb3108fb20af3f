//! Exact maximum-inner-product retrieval of whole reports or top-k sentence
//! composites against a query embedding.

mod store;

pub use store::{load_store, save_store, sidecar_path, EmbeddingStore, StoreError, NORM_TOLERANCE};

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("query has dim {query}, store has dim {store}")]
    DimMismatch { query: usize, store: usize },
    #[error("store is empty")]
    EmptyStore,
    #[error("k = {k} outside 1..={available}")]
    KOutOfRange { k: usize, available: usize },
    #[error("query contains a non-finite value")]
    NonFiniteQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RetrievalMode {
    Report,
    Sentences,
}

/// Order of sentences in a composite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositeOrder {
    /// Descending score.
    #[default]
    Score,
    /// Store row order.
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub row: usize,
    pub id: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub mode: RetrievalMode,
    pub k: usize,
    /// Descending score; equal scores by ascending row.
    pub items: Vec<RetrievedItem>,
    pub composite_text: String,
}

/// Dot product accumulated in f64, left to right.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// `(score, row)` with higher scores first and lower rows breaking ties.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored(f64, usize);

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(self.1.cmp(&other.1))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const SCAN_CHUNK: usize = 8192;

/// Best `k` of `rows` for `query`, best first.
fn top_k(query: &[f32], store: &EmbeddingStore, rows: &[usize], k: usize) -> Vec<Scored> {
    let scan = |chunk: &[usize]| -> Vec<Scored> {
        // max-heap on Scored ordering keeps the worst retained candidate on top
        let mut heap = std::collections::BinaryHeap::with_capacity(k + 1);
        for &r in chunk {
            let s = Scored(dot(query, store.row(r)), r);
            if heap.len() < k {
                heap.push(s);
            } else if s < *heap.peek().expect("heap holds k items") {
                heap.pop();
                heap.push(s);
            }
        }
        heap.into_sorted_vec()
    };
    if rows.len() <= SCAN_CHUNK {
        return scan(rows);
    }
    let mut merged: Vec<Scored> = rows.par_chunks(SCAN_CHUNK).flat_map_iter(scan).collect();
    merged.sort_unstable();
    merged.truncate(k);
    merged
}

fn check_query(query: &[f32], store: &EmbeddingStore) -> Result<(), RetrievalError> {
    if query.len() != store.dim() {
        return Err(RetrievalError::DimMismatch {
            query: query.len(),
            store: store.dim(),
        });
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(RetrievalError::NonFiniteQuery);
    }
    Ok(())
}

fn item(store: &EmbeddingStore, s: Scored) -> RetrievedItem {
    RetrievedItem {
        row: s.1,
        id: store.id(s.1).to_string(),
        text: store.text(s.1).to_string(),
        score: s.0,
    }
}

/// The single row maximizing the dot product.
pub fn retrieve_report(query: &[f32], store: &EmbeddingStore) -> Result<RetrievalResult, RetrievalError> {
    check_query(query, store)?;
    if store.is_empty() {
        return Err(RetrievalError::EmptyStore);
    }
    let rows: Vec<usize> = (0..store.count()).collect();
    let best = top_k(query, store, &rows, 1);
    let items: Vec<RetrievedItem> = best.into_iter().map(|s| item(store, s)).collect();
    Ok(RetrievalResult {
        mode: RetrievalMode::Report,
        k: 1,
        composite_text: items[0].text.clone(),
        items,
    })
}

/// Top-`k` distinct sentence texts (first occurrence kept), composite in score order.
pub fn retrieve_sentences(
    query: &[f32],
    store: &EmbeddingStore,
    k: usize,
) -> Result<RetrievalResult, RetrievalError> {
    retrieve_sentences_ordered(query, store, k, CompositeOrder::Score)
}

pub fn retrieve_sentences_ordered(
    query: &[f32],
    store: &EmbeddingStore,
    k: usize,
    order: CompositeOrder,
) -> Result<RetrievalResult, RetrievalError> {
    check_query(query, store)?;
    let rows = store.unique_rows();
    if k == 0 || k > rows.len() {
        return Err(RetrievalError::KOutOfRange {
            k,
            available: rows.len(),
        });
    }
    let best = top_k(query, store, rows, k);
    let items: Vec<RetrievedItem> = best.into_iter().map(|s| item(store, s)).collect();
    let mut parts: Vec<&RetrievedItem> = items.iter().collect();
    if order == CompositeOrder::Corpus {
        parts.sort_by_key(|i| i.row);
    }
    let composite_text = parts.iter().map(|i| i.text.as_str()).collect::<Vec<_>>().join(" ");
    Ok(RetrievalResult {
        mode: RetrievalMode::Sentences,
        k,
        items,
        composite_text,
    })
}

/// One result per query, in query order; each equals the single-query call.
pub fn batch_retrieve(
    queries: &[Vec<f32>],
    store: &EmbeddingStore,
    mode: RetrievalMode,
    k: usize,
) -> Vec<Result<RetrievalResult, RetrievalError>> {
    queries
        .par_iter()
        .map(|q| match mode {
            RetrievalMode::Report => retrieve_report(q, store),
            RetrievalMode::Sentences => retrieve_sentences(q, store, k),
        })
        .collect()
}
