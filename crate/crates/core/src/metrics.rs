//! Semantic evaluation over externally supplied embeddings and entity sets:
//! report-vector cosine, greedy token matching (unweighted, unrescaled), and
//! clinical-entity overlap F1.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_jsonl, CorpusError, ReportRecord};
use crate::retrieval::{load_store, EmbeddingStore, StoreError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("ids present on only one side: {0:?}")]
    IdMismatch(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn norm(u: &[f32]) -> f64 {
    u.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt()
}

pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, MetricError> {
    if u.len() != v.len() {
        return Err(MetricError::DimMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let d: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
    Ok((d / (nu * nv)).clamp(-1.0, 1.0))
}

/// Set of `(surface, label)` pairs; surfaces are lowercased on insert.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntitySet(BTreeSet<(String, String)>);

impl EntitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, label: &str) -> bool {
        self.0.insert((surface.trim().to_lowercase(), label.to_string()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'a> FromIterator<(&'a str, &'a str)> for EntitySet {
    fn from_iter<I: IntoIterator<Item = (&'a str, &'a str)>>(iter: I) -> Self {
        let mut s = EntitySet::new();
        for (surface, label) in iter {
            s.insert(surface, label);
        }
        s
    }
}

/// Exact-match overlap. Two empty sets agree perfectly.
pub fn entity_f1(pred: &EntitySet, truth: &EntitySet) -> Prf {
    if pred.is_empty() && truth.is_empty() {
        return Prf {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let overlap = pred.0.intersection(&truth.0).count() as f64;
    let precision = if pred.is_empty() { 0.0 } else { overlap / pred.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { overlap / truth.len() as f64 };
    Prf {
        precision,
        recall,
        f1: harmonic(precision, recall),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddings {
    pub tokens: Vec<String>,
    dim: usize,
    matrix: Vec<f32>,
}

impl TokenEmbeddings {
    pub fn new(tokens: Vec<String>, dim: usize, matrix: Vec<f32>) -> Result<Self, MetricError> {
        if dim == 0 {
            return Err(MetricError::EmptyInput);
        }
        if matrix.len() != tokens.len() * dim {
            return Err(MetricError::DimMismatch(matrix.len(), tokens.len() * dim));
        }
        Ok(TokenEmbeddings { tokens, dim, matrix })
    }

    pub fn from_store(store: &EmbeddingStore) -> Self {
        TokenEmbeddings {
            tokens: store.texts().to_vec(),
            dim: store.dim(),
            matrix: store.vectors().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }
}

/// Greedy token matching: recall averages, over reference tokens, the best
/// cosine to any candidate token; precision the reverse.
pub fn greedy_embed_score(
    candidate: &TokenEmbeddings,
    reference: &TokenEmbeddings,
) -> Result<Prf, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if candidate.dim != reference.dim {
        return Err(MetricError::DimMismatch(candidate.dim, reference.dim));
    }
    let (n, m) = (candidate.len(), reference.len());
    let mut sim = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            sim[i * m + j] = cosine(candidate.row(i), reference.row(j))?;
        }
    }
    let best = |xs: &mut dyn Iterator<Item = f64>| xs.fold(f64::NEG_INFINITY, f64::max);
    let precision = (0..n)
        .map(|i| best(&mut (0..m).map(|j| sim[i * m + j])))
        .sum::<f64>()
        / n as f64;
    let recall = (0..m)
        .map(|j| best(&mut (0..n).map(|i| sim[i * m + j])))
        .sum::<f64>()
        / m as f64;
    Ok(Prf {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

#[derive(Debug, Clone, Deserialize)]
struct EntityLine {
    id: String,
    entities: Vec<EntityEntry>,
}

#[derive(Debug, Clone, Deserialize)]
struct EntityEntry {
    surface: String,
    label: String,
}

/// Reads line-delimited `{"id", "entities":[{"surface","label"}]}`.
pub fn read_entities(path: &Path) -> Result<HashMap<String, EntitySet>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let lines: Vec<EntityLine> =
        parse_jsonl(std::io::BufReader::new(file), &path.display().to_string())?;
    Ok(lines
        .into_iter()
        .map(|l| {
            let set = l
                .entities
                .iter()
                .map(|e| (e.surface.as_str(), e.label.as_str()))
                .collect();
            (l.id, set)
        })
        .collect())
}

/// Per-report token embeddings stored as `<dir>/<id>.embs`; missing files are skipped.
pub fn read_token_dir(dir: &Path, ids: &[&str]) -> Result<HashMap<String, TokenEmbeddings>, StoreError> {
    let mut out = HashMap::new();
    for id in ids {
        let path = dir.join(format!("{id}.embs"));
        if path.exists() {
            out.insert(id.to_string(), TokenEmbeddings::from_store(&load_store(&path)?));
        }
    }
    Ok(out)
}

/// Optional per-id inputs for [`evaluate_run`]. Any id missing on either side
/// yields a null cell.
#[derive(Debug, Default)]
pub struct Sidecars {
    pub report_vectors: Option<(EmbeddingStore, EmbeddingStore)>,
    pub token_embeddings: Option<(HashMap<String, TokenEmbeddings>, HashMap<String, TokenEmbeddings>)>,
    pub entities: Option<(HashMap<String, EntitySet>, HashMap<String, EntitySet>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub bertscore: Option<f64>,
    pub s_emb: Option<f64>,
    pub entity_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<MetricRow>,
    /// Unweighted mean over the non-null cells of each column.
    pub mean: MetricMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub bertscore: Option<f64>,
    pub s_emb: Option<f64>,
    pub entity_f1: Option<f64>,
    pub pairs: usize,
}

fn mean(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn evaluate_run(
    predictions: &[ReportRecord],
    ground_truths: &[ReportRecord],
    sidecars: &Sidecars,
) -> Result<RunReport, MetricError> {
    let pred_ids: BTreeSet<&str> = predictions.iter().map(|r| r.id.as_str()).collect();
    let truth_ids: BTreeSet<&str> = ground_truths.iter().map(|r| r.id.as_str()).collect();
    let odd: Vec<String> = pred_ids
        .symmetric_difference(&truth_ids)
        .map(|s| s.to_string())
        .collect();
    if !odd.is_empty() {
        return Err(MetricError::IdMismatch(odd));
    }

    let vec_index = sidecars.report_vectors.as_ref().map(|(p, t)| {
        let index = |s: &EmbeddingStore| -> HashMap<String, usize> {
            s.ids().iter().enumerate().map(|(i, id)| (id.clone(), i)).collect()
        };
        (index(p), index(t))
    });

    let rows: Vec<MetricRow> = predictions
        .iter()
        .map(|p| {
            let id = p.id.as_str();
            let s_emb = sidecars.report_vectors.as_ref().and_then(|(ps, ts)| {
                let (pi, ti) = vec_index.as_ref().expect("built with report_vectors");
                let (a, b) = (ps.row(*pi.get(id)?), ts.row(*ti.get(id)?));
                cosine(a, b).ok()
            });
            let bertscore = sidecars.token_embeddings.as_ref().and_then(|(pm, tm)| {
                greedy_embed_score(pm.get(id)?, tm.get(id)?).ok().map(|s| s.f1)
            });
            let entity = sidecars
                .entities
                .as_ref()
                .and_then(|(pm, tm)| Some(entity_f1(pm.get(id)?, tm.get(id)?).f1));
            MetricRow {
                id: id.to_string(),
                bertscore,
                s_emb,
                entity_f1: entity,
            }
        })
        .collect();
    let mean = MetricMeans {
        bertscore: mean(rows.iter().map(|r| r.bertscore)),
        s_emb: mean(rows.iter().map(|r| r.s_emb)),
        entity_f1: mean(rows.iter().map(|r| r.entity_f1)),
        pairs: rows.len(),
    };
    Ok(RunReport { rows, mean })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn te(rows: &[[f32; 2]]) -> TokenEmbeddings {
        TokenEmbeddings::new(
            (0..rows.len()).map(|i| format!("t{i}")).collect(),
            2,
            rows.iter().flatten().copied().collect(),
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[2.0, 3.0], &[2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.7071).abs() < 1e-4);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(MetricError::ZeroVector));
        assert_eq!(cosine(&[1.0], &[1.0, 0.0]), Err(MetricError::DimMismatch(1, 2)));
    }

    #[test]
    fn entity_examples() {
        let a: EntitySet = [("Effusion", "OBS"), ("lung", "ANAT")].into_iter().collect();
        let b: EntitySet = [("effusion", "OBS"), ("heart", "ANAT")].into_iter().collect();
        let s = entity_f1(&a, &b);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(entity_f1(&a, &a).f1, 1.0);
        let c: EntitySet = [("x", "OBS")].into_iter().collect();
        assert_eq!(entity_f1(&a, &c).f1, 0.0);
        assert_eq!(entity_f1(&EntitySet::new(), &EntitySet::new()).f1, 1.0);
        assert_eq!(entity_f1(&EntitySet::new(), &c).f1, 0.0);
    }

    #[test]
    fn greedy_examples() {
        let a = te(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!((greedy_embed_score(&a, &a).unwrap().f1 - 1.0).abs() < 1e-12);
        let s = greedy_embed_score(&te(&[[1.0, 0.0]]), &te(&[[0.0, 1.0]])).unwrap();
        assert_eq!(s.f1, 0.0);
        // candidate {e1, (1,1)}, reference {e1, e2}:
        // sim = [[1, 0], [.7071, .7071]]; P = (1 + .7071)/2, R = (1 + .7071)/2
        let s = greedy_embed_score(&te(&[[1.0, 0.0], [1.0, 1.0]]), &a).unwrap();
        let h = (1.0 + 0.5f64.sqrt()) / 2.0;
        assert!((s.precision - h).abs() < 1e-6);
        assert!((s.recall - h).abs() < 1e-6);
        assert_eq!(
            greedy_embed_score(&te(&[]), &a),
            Err(MetricError::EmptyInput)
        );
    }

    #[test]
    fn run_means_and_nulls() {
        let recs = |ids: &[&str]| -> Vec<ReportRecord> {
            ids.iter().map(|i| ReportRecord::new(*i, "x")).collect()
        };
        let mut pe = HashMap::new();
        let mut tr = HashMap::new();
        pe.insert("a".to_string(), [("x", "L")].into_iter().collect::<EntitySet>());
        tr.insert("a".to_string(), [("x", "L")].into_iter().collect::<EntitySet>());
        pe.insert("b".to_string(), [("y", "L")].into_iter().collect::<EntitySet>());
        tr.insert("b".to_string(), [("z", "L")].into_iter().collect::<EntitySet>());
        let side = Sidecars {
            entities: Some((pe, tr)),
            ..Sidecars::default()
        };
        let r = evaluate_run(&recs(&["a", "b", "c"]), &recs(&["c", "b", "a"]), &side).unwrap();
        assert_eq!(r.rows[0].entity_f1, Some(1.0));
        assert_eq!(r.rows[2].entity_f1, None);
        assert_eq!(r.rows[0].s_emb, None);
        assert_eq!(r.mean.entity_f1, Some(0.5));
        assert_eq!(r.mean.s_emb, None);
        assert!(matches!(
            evaluate_run(&recs(&["a"]), &recs(&["b"]), &side),
            Err(MetricError::IdMismatch(_))
        ));
    }
}
