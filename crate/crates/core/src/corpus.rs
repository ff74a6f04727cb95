//! Bilingual document collections: TSV/JSONL ingestion and within-domain
//! exact deduplication.
//!
//! The TSV layout is one record per line, four tab-separated fields:
//! `url \t hostname \t doc_id \t base64(content)` with standard padded base64.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Side};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub url: String,
    pub domain: String,
    pub lang: Side,
    pub text: String,
}

/// Counters reported by ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub lines: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub empty_text: usize,
    pub duplicate_id: usize,
}

impl IngestReport {
    pub fn skipped(&self) -> usize {
        self.malformed + self.empty_text + self.duplicate_id
    }
}

/// An immutable, ordered collection of documents for one side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentStore {
    side: Side,
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl DocumentStore {
    pub fn new(side: Side) -> Self {
        DocumentStore {
            side,
            docs: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    /// Builds a store, rejecting duplicate ids and empty texts.
    pub fn from_documents(side: Side, docs: Vec<Document>) -> Result<Self> {
        let mut store = DocumentStore::new(side);
        for doc in docs {
            if doc.text.trim().is_empty() {
                return Err(Error::Data(format!("document {} has empty text", doc.doc_id)));
            }
            if !store.push(doc) {
                return Err(Error::Data("duplicate doc_id in store".into()));
            }
        }
        Ok(store)
    }

    fn push(&mut self, mut doc: Document) -> bool {
        if self.by_id.contains_key(&doc.doc_id) {
            return false;
        }
        doc.lang = self.side;
        self.by_id.insert(doc.doc_id.clone(), self.docs.len());
        self.docs.push(doc);
        true
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.docs.iter()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    /// Distinct domains in first-seen order.
    pub fn domains(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.docs
            .iter()
            .filter(|d| seen.insert(d.domain.as_str()))
            .map(|d| d.domain.as_str())
            .collect()
    }
}

impl<'a> IntoIterator for &'a DocumentStore {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.docs.iter()
    }
}

fn parse_tsv_line(line: &str, side: Side) -> Option<Document> {
    let mut fields = line.splitn(4, '\t');
    let url = fields.next()?;
    let domain = fields.next()?;
    let doc_id = fields.next()?;
    let content = fields.next()?;
    let bytes = STANDARD.decode(content.as_bytes()).ok()?;
    let text = String::from_utf8(bytes).ok()?;
    Some(Document {
        doc_id: doc_id.to_string(),
        url: url.to_string(),
        domain: domain.to_string(),
        lang: side,
        text,
    })
}

fn finish(store: DocumentStore, report: IngestReport, path: &Path) -> Result<(DocumentStore, IngestReport)> {
    if report.skipped() > 0 {
        log::warn!(
            "{}: skipped {} of {} lines ({} malformed, {} empty, {} duplicate id)",
            path.display(),
            report.skipped(),
            report.lines,
            report.malformed,
            report.empty_text,
            report.duplicate_id
        );
    }
    if store.is_empty() {
        return Err(Error::EmptyCorpus(path.display().to_string()));
    }
    Ok((store, report))
}

fn admit(store: &mut DocumentStore, report: &mut IngestReport, doc: Option<Document>) {
    match doc {
        None => report.malformed += 1,
        Some(doc) if doc.text.trim().is_empty() => report.empty_text += 1,
        Some(doc) => {
            if store.push(doc) {
                report.accepted += 1;
            } else {
                report.duplicate_id += 1;
            }
        }
    }
}

/// Reads a four-field base64 TSV corpus. Malformed lines are counted and
/// skipped; a file with no usable line is an `EmptyCorpus` error.
pub fn ingest_tsv(path: impl AsRef<Path>, side: Side) -> Result<(DocumentStore, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut store = DocumentStore::new(side);
    let mut report = IngestReport::default();
    for line in BufReader::new(file).split(b'\n') {
        let line = line.map_err(|e| Error::io(path, e))?;
        report.lines += 1;
        let doc = std::str::from_utf8(&line)
            .ok()
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .and_then(|l| parse_tsv_line(l, side));
        admit(&mut store, &mut report, doc);
    }
    finish(store, report, path)
}

#[derive(Deserialize)]
struct JsonRecord {
    url: String,
    domain: String,
    doc_id: String,
    text: String,
}

/// Reads one JSON object per line with keys `url`, `domain`, `doc_id`, `text`.
pub fn ingest_jsonl(path: impl AsRef<Path>, side: Side) -> Result<(DocumentStore, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut store = DocumentStore::new(side);
    let mut report = IngestReport::default();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        let doc = serde_json::from_str::<JsonRecord>(&line).ok().map(|r| Document {
            doc_id: r.doc_id,
            url: r.url,
            domain: r.domain,
            lang: side,
            text: r.text,
        });
        admit(&mut store, &mut report, doc);
    }
    finish(store, report, path)
}

/// Serializes one record in the TSV corpus format, without the line terminator.
pub fn format_tsv_record(doc: &Document) -> String {
    format!(
        "{}\t{}\t{}\t{}",
        doc.url,
        doc.domain,
        doc.doc_id,
        STANDARD.encode(doc.text.as_bytes())
    )
}

pub fn write_tsv(store: &DocumentStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for doc in store {
        writeln!(out, "{}", format_tsv_record(doc)).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Drops later documents whose exact text already occurred in the same
/// domain. Returns the reduced store and the number of removed documents.
pub fn dedup_exact(store: &DocumentStore) -> (DocumentStore, usize) {
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut out = DocumentStore::new(store.side);
    let mut removed = 0;
    for doc in store {
        if seen.insert((doc.domain.as_str(), doc.text.as_str())) {
            out.push(doc.clone());
        } else {
            removed += 1;
        }
    }
    (out, removed)
}
