//! JSON-Lines readers for the input files.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};
use crate::model::{AnnotationSet, CorrectnessRecord, Corpus, SourceAnomaly};

/// Parses one record per non-blank line. Errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let raw = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let records = parse_jsonl(&raw, path)?;
    if records.is_empty() {
        log::warn!("{} contains no records", path.display());
    }
    Ok(records)
}

pub fn parse_jsonl<T: DeserializeOwned>(raw: &str, path: &Path) -> Result<Vec<T>> {
    raw.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::new(read_jsonl(path)?)
}

/// Reads annotation sets, rejecting empty texts and zero-length offsets.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationSet>> {
    let sets: Vec<AnnotationSet> = read_jsonl(path)?;
    for set in &sets {
        for span in &set.spans {
            span.check_shape().map_err(|m| {
                Error::validation(format!(
                    "{}: annotator {} segment {}: {m}",
                    path.display(),
                    set.annotator_id,
                    set.segment_id
                ))
            })?;
        }
    }
    Ok(sets)
}

pub fn load_anomalies(path: &Path) -> Result<Vec<SourceAnomaly>> {
    let anomalies: Vec<SourceAnomaly> = read_jsonl(path)?;
    for a in &anomalies {
        let spans = std::iter::once(&a.source_span).chain(a.target_anchor.as_ref());
        for span in spans {
            span.check_shape().map_err(|m| {
                Error::validation(format!("{}: segment {}: {m}", path.display(), a.segment_id))
            })?;
        }
    }
    Ok(anomalies)
}

pub fn load_correctness(path: &Path) -> Result<Vec<CorrectnessRecord>> {
    read_jsonl(path)
}

/// Grounds every annotation set against the corpus. Unknown segment ids are a
/// validation error.
pub fn ground_all(sets: &[AnnotationSet], corpus: &Corpus) -> Result<Vec<AnnotationSet>> {
    sets.iter().map(|s| s.ground(corpus)).collect()
}
