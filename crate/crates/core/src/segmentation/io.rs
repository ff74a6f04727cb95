//! Segments file (one segment per line) and its JSON sidecar index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_segments, SegmentedDocument, Tokenizer};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub doc_id: String,
    pub start_line: usize,
    pub n_segments: usize,
}

fn one_line(text: &str) -> String {
    text.replace(['\n', '\r'], " ")
}

pub fn write_index(entries: &[IndexEntry], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, entries)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_index(path: impl AsRef<Path>) -> Result<Vec<IndexEntry>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<IndexEntry> = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut expected = 0;
    for e in &entries {
        if e.start_line != expected {
            return Err(Error::Consistency(format!(
                "{}: document {} starts at line {} but {} was expected",
                path.display(),
                e.doc_id,
                e.start_line,
                expected
            )));
        }
        expected += e.n_segments;
    }
    Ok(entries)
}

/// Writes segments (one per line) and the sidecar index, in document order.
pub fn write_segments(
    docs: &[SegmentedDocument],
    segments_path: impl AsRef<Path>,
    index_path: impl AsRef<Path>,
) -> Result<Vec<IndexEntry>> {
    let segments_path = segments_path.as_ref();
    let file = File::create(segments_path).map_err(|e| Error::io(segments_path, e))?;
    let mut out = BufWriter::new(file);
    let mut entries = Vec::with_capacity(docs.len());
    let mut line = 0;
    for doc in docs {
        entries.push(IndexEntry {
            doc_id: doc.doc_id.clone(),
            start_line: line,
            n_segments: doc.len(),
        });
        for seg in &doc.segments {
            writeln!(out, "{}", one_line(&seg.text)).map_err(|e| Error::io(segments_path, e))?;
        }
        line += doc.len();
    }
    out.flush().map_err(|e| Error::io(segments_path, e))?;
    write_index(&entries, index_path)?;
    Ok(entries)
}

/// Reloads segmented documents; token lengths are recomputed with `tok`.
pub fn read_segments(
    segments_path: impl AsRef<Path>,
    index_path: impl AsRef<Path>,
    tok: &dyn Tokenizer,
) -> Result<Vec<SegmentedDocument>> {
    let segments_path = segments_path.as_ref();
    let entries = read_index(index_path)?;
    let file = File::open(segments_path).map_err(|e| Error::io(segments_path, e))?;
    let lines = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(segments_path, e))?;
    let total: usize = entries.iter().map(|e| e.n_segments).sum();
    if total != lines.len() {
        return Err(Error::Consistency(format!(
            "{}: index lists {total} segments but file has {} lines",
            segments_path.display(),
            lines.len()
        )));
    }
    let mut lines = lines.into_iter();
    Ok(entries
        .into_iter()
        .map(|e| {
            let segments = build_segments(lines.by_ref().take(e.n_segments).map(|text| {
                let n = tok.tokenize(&text).len();
                (text, n)
            }));
            SegmentedDocument {
                doc_id: e.doc_id,
                segments,
            }
        })
        .collect())
}
