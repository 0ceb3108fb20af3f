//! Line-delimited JSON report records.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::Report;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
}

impl ReportRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        ReportRecord {
            id: id.into(),
            text: text.into(),
            patient_id: None,
        }
    }

    pub fn to_report(&self) -> Report {
        Report::new(self.id.clone(), self.text.clone())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// Reads every non-blank line of a JSONL file; the first malformed line is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_jsonl(BufReader::new(file), &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned, R: BufRead>(
    reader: R,
    label: &str,
) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: label.to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: label.to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io_err(e.into()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_reports(path: &Path) -> Result<Vec<ReportRecord>, CorpusError> {
    read_jsonl(path)
}
