//! Binary embedding store: little-endian header (`EMBS`, version, dim, count,
//! flags) followed by row-major f32 data, with a `<path>.ids.jsonl` sidecar
//! carrying one `{"id","text"}` per row.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMBS";
pub const VERSION: u32 = 1;
pub const FLAG_NORMALIZED: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 4;
pub const NORM_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: format error: {message}")]
    Format { path: String, message: String },
    #[error("{path}: sidecar has {sidecar} rows, header says {header}")]
    LengthMismatch {
        path: String,
        header: u64,
        sidecar: u64,
    },
    #[error("row {row} has norm {norm}, expected 1 (store is flagged normalized)")]
    Norm { row: usize, norm: f32 },
    #[error("invalid store: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SidecarRow {
    id: String,
    text: String,
}

#[derive(Debug)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: Vec<f32>,
    ids: Vec<String>,
    texts: Vec<String>,
    normalized: bool,
    unique_rows: OnceLock<Vec<usize>>,
}

impl Clone for EmbeddingStore {
    fn clone(&self) -> Self {
        EmbeddingStore {
            dim: self.dim,
            vectors: self.vectors.clone(),
            ids: self.ids.clone(),
            texts: self.texts.clone(),
            normalized: self.normalized,
            unique_rows: OnceLock::new(),
        }
    }
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.normalized == other.normalized
            && self.ids == other.ids
            && self.texts == other.texts
            && self.vectors.len() == other.vectors.len()
            && self
                .vectors
                .iter()
                .zip(&other.vectors)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn l2(row: &[f32]) -> f32 {
    row.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt() as f32
}

impl EmbeddingStore {
    /// Builds a store from row-major `vectors`; `normalized` is checked.
    pub fn new(
        dim: usize,
        vectors: Vec<f32>,
        ids: Vec<String>,
        texts: Vec<String>,
        normalized: bool,
    ) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::Invalid("dim must be positive".into()));
        }
        if vectors.len() % dim != 0 {
            return Err(StoreError::Invalid(format!(
                "{} values is not a multiple of dim {dim}",
                vectors.len()
            )));
        }
        let count = vectors.len() / dim;
        if ids.len() != count || texts.len() != count {
            return Err(StoreError::Invalid(format!(
                "{count} rows but {} ids and {} texts",
                ids.len(),
                texts.len()
            )));
        }
        let store = EmbeddingStore {
            dim,
            vectors,
            ids,
            texts,
            normalized,
            unique_rows: OnceLock::new(),
        };
        store.check_norms()?;
        Ok(store)
    }

    /// Store with ids `0..count` and empty texts.
    pub fn from_rows(dim: usize, vectors: Vec<f32>) -> Result<Self, StoreError> {
        let count = if dim == 0 { 0 } else { vectors.len() / dim };
        let ids = (0..count).map(|i| i.to_string()).collect();
        Self::new(dim, vectors, ids, vec![String::new(); count], false)
    }

    fn check_norms(&self) -> Result<(), StoreError> {
        if !self.normalized {
            return Ok(());
        }
        for (row, v) in self.vectors.chunks_exact(self.dim).enumerate() {
            let norm = l2(v);
            if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
                return Err(StoreError::Norm { row, norm });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn text(&self, i: usize) -> &str {
        &self.texts[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    /// Row index of the first occurrence of each distinct text, ascending.
    pub fn unique_rows(&self) -> &[usize] {
        self.unique_rows.get_or_init(|| {
            let mut seen = std::collections::HashSet::new();
            (0..self.count())
                .filter(|&i| seen.insert(self.texts[i].as_str()))
                .collect()
        })
    }

    /// Row-normalized copy; zero rows are rejected.
    pub fn normalize(&self) -> Result<Self, StoreError> {
        let mut vectors = self.vectors.clone();
        for (row, v) in vectors.chunks_exact_mut(self.dim).enumerate() {
            let norm = l2(v);
            if norm == 0.0 {
                return Err(StoreError::Norm { row, norm });
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Self::new(self.dim, vectors, self.ids.clone(), self.texts.clone(), true)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".ids.jsonl");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<(), StoreError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + store.vectors.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(store.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(store.count() as u64).to_le_bytes());
    let flags = if store.normalized { FLAG_NORMALIZED } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    for x in &store.vectors {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, &buf).map_err(io_err(path))?;

    let side = sidecar_path(path);
    let file = fs::File::create(&side).map_err(io_err(&side))?;
    let mut w = BufWriter::new(file);
    for (id, text) in store.ids.iter().zip(&store.texts) {
        let row = SidecarRow {
            id: id.clone(),
            text: text.clone(),
        };
        serde_json::to_writer(&mut w, &row).map_err(|e| io_err(&side)(e.into()))?;
        w.write_all(b"\n").map_err(io_err(&side))?;
    }
    w.flush().map_err(io_err(&side))
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let format = |message: String| StoreError::Format {
        path: path.display().to_string(),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(format(format!("unsupported version {version}")));
    }
    let dim = u32_at(8) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let flags = u32_at(20);
    if dim == 0 {
        return Err(format("dim is zero".into()));
    }
    let expected = (count as u128) * (dim as u128) * 4 + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        return Err(format(format!(
            "expected {expected} bytes for {count}x{dim}, found {}",
            bytes.len()
        )));
    }
    let vectors: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let side = sidecar_path(path);
    let file = fs::File::open(&side).map_err(io_err(&side))?;
    let (mut ids, mut texts) = (Vec::new(), Vec::new());
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&side))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: SidecarRow = serde_json::from_str(&line).map_err(|e| StoreError::Format {
            path: side.display().to_string(),
            message: format!("line {}: {e}", n + 1),
        })?;
        ids.push(row.id);
        texts.push(row.text);
    }
    if ids.len() as u64 != count {
        return Err(StoreError::LengthMismatch {
            path: path.display().to_string(),
            header: count,
            sidecar: ids.len() as u64,
        });
    }
    EmbeddingStore::new(dim, vectors, ids, texts, flags & FLAG_NORMALIZED != 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> EmbeddingStore {
        EmbeddingStore::new(
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec!["a".into(), "b".into()],
            vec!["first".into(), "second".into()],
            true,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.embs");
        let s = EmbeddingStore::new(
            2,
            vec![0.1, -3.5e-8, f32::MAX, 7.25],
            vec!["x".into(), "y".into()],
            vec!["t1".into(), "t2".into()],
            false,
        )
        .unwrap();
        save_store(&s, &path).unwrap();
        assert_eq!(load_store(&path).unwrap(), s);
        save_store(&tiny(), &path).unwrap();
        assert_eq!(load_store(&path).unwrap(), tiny());
    }

    #[test]
    fn empty_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.embs");
        let s = EmbeddingStore::new(3, vec![], vec![], vec![], false).unwrap();
        save_store(&s, &path).unwrap();
        let back = load_store(&path).unwrap();
        assert_eq!(back.count(), 0);
        assert_eq!(back.dim(), 3);
    }

    #[test]
    fn corrupted_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.embs");
        save_store(&tiny(), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_store(&path), Err(StoreError::Format { .. })));
    }

    #[test]
    fn truncated_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.embs");
        save_store(&tiny(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_store(&path), Err(StoreError::Format { .. })));
    }

    #[test]
    fn sidecar_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.embs");
        save_store(&tiny(), &path).unwrap();
        fs::write(sidecar_path(&path), "{\"id\":\"a\",\"text\":\"t\"}\n").unwrap();
        assert!(matches!(
            load_store(&path),
            Err(StoreError::LengthMismatch { header: 2, sidecar: 1, .. })
        ));
    }

    #[test]
    fn norm_flag_checked() {
        let r = EmbeddingStore::new(2, vec![2.0, 0.0], vec!["a".into()], vec!["t".into()], true);
        assert!(matches!(r, Err(StoreError::Norm { row: 0, .. })));
    }

    #[test]
    fn unique_rows_keep_first() {
        let s = EmbeddingStore::new(
            1,
            vec![1.0, 2.0, 3.0],
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into(), "x".into()],
            false,
        )
        .unwrap();
        assert_eq!(s.unique_rows(), &[0, 1]);
    }
}
