//! Line-delimited file formats: one JSON record per line, UTF-8.
//!
//! Lines starting with `#` are metadata/comments and are skipped on load,
//! so writers can stamp provenance headers without breaking readers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnnotatedDoc, DefGuidelines, ModelError, Prediction};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Malformed {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {source}")]
    Invalid {
        path: String,
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("{path}:{line}: duplicate tag {tag:?}")]
    DuplicateTag {
        path: String,
        line: usize,
        tag: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads JSONL records, skipping blank and `#`-prefixed lines.
/// Yields (1-based line number, record).
fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            source: e,
        })?;
        out.push((idx + 1, record));
    }
    Ok(out)
}

/// Writes records as JSONL, one per line, with optional `#` header lines.
fn write_records<T: Serialize>(
    path: &Path,
    header: &[String],
    records: &[T],
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for line in header {
        writeln!(w, "# {line}").map_err(|e| io_err(path, e))?;
    }
    for record in records {
        let json = serde_json::to_string(record).expect("serializable record");
        writeln!(w, "{json}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    text: String,
    gold: BTreeMap<String, Vec<String>>,
}

/// Loads an annotated corpus. Gold lists are re-sorted by first occurrence
/// and deduplicated; a span missing from the text is a hard error naming
/// the doc id and span.
pub fn load_corpus(path: &Path) -> Result<Vec<AnnotatedDoc>, CorpusError> {
    let mut docs = Vec::new();
    for (line, record) in read_records::<DocRecord>(path)? {
        let doc = AnnotatedDoc::new(record.id, record.text, record.gold).map_err(|e| {
            CorpusError::Invalid {
                path: path.display().to_string(),
                line,
                source: e,
            }
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn save_corpus(docs: &[AnnotatedDoc], path: &Path, header: &[String]) -> Result<(), CorpusError> {
    let records: Vec<DocRecord> = docs
        .iter()
        .map(|d| DocRecord {
            id: d.id.clone(),
            text: d.text.clone(),
            gold: d.gold.clone(),
        })
        .collect();
    write_records(path, header, &records)
}

/// Saves predictions including raw outputs and parse status; the round-trip
/// through `load_predictions` is the identity.
pub fn save_predictions(
    preds: &[Prediction],
    path: &Path,
    header: &[String],
) -> Result<(), CorpusError> {
    write_records(path, header, preds)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, CorpusError> {
    let mut preds = Vec::new();
    for (line, pred) in read_records::<Prediction>(path)? {
        let pred: Prediction = pred;
        pred.validate().map_err(|e| CorpusError::Invalid {
            path: path.display().to_string(),
            line,
            source: e,
        })?;
        preds.push(pred);
    }
    Ok(preds)
}

/// Loads a D&G file: one record per line with tag, definition, guidelines,
/// origin. Duplicate tags and empty fields are errors.
pub fn load_dg_file(path: &Path) -> Result<Vec<DefGuidelines>, CorpusError> {
    let mut seen = std::collections::BTreeSet::new();
    let mut entries = Vec::new();
    for (line, dg) in read_records::<DefGuidelines>(path)? {
        let dg: DefGuidelines = dg;
        dg.validate().map_err(|e| CorpusError::Invalid {
            path: path.display().to_string(),
            line,
            source: e,
        })?;
        if !seen.insert(dg.tag.clone()) {
            return Err(CorpusError::DuplicateTag {
                path: path.display().to_string(),
                line,
                tag: dg.tag,
            });
        }
        entries.push(dg);
    }
    Ok(entries)
}

pub fn save_dg_file(
    entries: &[DefGuidelines],
    path: &Path,
    header: &[String],
) -> Result<(), CorpusError> {
    write_records(path, header, entries)
}
