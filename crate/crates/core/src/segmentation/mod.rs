//! Document segmentation: sentence-based (SBS), sentence blobs with optional
//! boundary overlap, and overlapping fixed-length token windows (OFLS).

mod blob;
mod io;
mod tokenizer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::{Error, Result};

pub use blob::{apply_blob_overlap, segment_blob, Blob, BlobDocument};
pub use io::{read_index, read_segments, write_index, write_segments, IndexEntry};
pub use tokenizer::{read_token_sidecar, tokens_from_offsets, TokenSpans, Tokenizer, WhitespaceTokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub token_len: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedDocument {
    pub doc_id: String,
    pub segments: Vec<Segment>,
}

impl SegmentedDocument {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.segments.iter().map(|s| s.token_len).sum()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.text.as_str())
    }
}

pub(crate) fn build_segments(texts: impl IntoIterator<Item = (String, usize)>) -> Vec<Segment> {
    texts
        .into_iter()
        .enumerate()
        .map(|(position, (text, token_len))| Segment {
            text,
            token_len,
            position,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Sbs,
    Blob,
    Ofls,
}

/// Boundary overlap applied between adjacent blobs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BlobOverlap {
    #[default]
    None,
    /// Copy `floor(len * r)` raw tokens across each boundary.
    Tok(f64),
    /// Copy `n` whole sentences across each boundary.
    Sent(usize),
    /// Copy whole sentences while their token total stays within `floor(len * r)`.
    TokLim(f64),
}

impl fmt::Display for BlobOverlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlobOverlap::None => f.write_str("none"),
            BlobOverlap::Tok(r) => write!(f, "tok:{r}"),
            BlobOverlap::Sent(n) => write!(f, "sent:{n}"),
            BlobOverlap::TokLim(r) => write!(f, "tok_lim:{r}"),
        }
    }
}

impl FromStr for BlobOverlap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("unrecognized blob overlap {s:?}"));
        if s == "none" {
            return Ok(BlobOverlap::None);
        }
        let (mode, arg) = s.split_once(':').ok_or_else(bad)?;
        match mode {
            "tok" => Ok(BlobOverlap::Tok(arg.parse().map_err(|_| bad())?)),
            "sent" => Ok(BlobOverlap::Sent(arg.parse().map_err(|_| bad())?)),
            "tok_lim" => Ok(BlobOverlap::TokLim(arg.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for BlobOverlap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlobOverlap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationSpec {
    pub strategy: Strategy,
    /// OFLS window length in tokens.
    pub fl: usize,
    /// OFLS overlap fraction.
    pub or_rate: f64,
    /// Blob token limit.
    pub max_tokens: usize,
    pub blob_overlap: BlobOverlap,
}

impl Default for SegmentationSpec {
    fn default() -> Self {
        SegmentationSpec {
            strategy: Strategy::Ofls,
            fl: 30,
            or_rate: 0.5,
            max_tokens: 64,
            blob_overlap: BlobOverlap::None,
        }
    }
}

impl SegmentationSpec {
    pub fn sbs() -> Self {
        SegmentationSpec {
            strategy: Strategy::Sbs,
            ..Default::default()
        }
    }

    pub fn ofls(fl: usize, or_rate: f64) -> Self {
        SegmentationSpec {
            strategy: Strategy::Ofls,
            fl,
            or_rate,
            ..Default::default()
        }
    }

    pub fn blob(max_tokens: usize, blob_overlap: BlobOverlap) -> Self {
        SegmentationSpec {
            strategy: Strategy::Blob,
            max_tokens,
            blob_overlap,
            ..Default::default()
        }
    }

    /// Returns every violated constraint; empty when the spec is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.strategy {
            Strategy::Sbs => {}
            Strategy::Ofls => {
                if self.fl < 2 {
                    out.push(format!("OFLS fl must be >= 2, got {}", self.fl));
                }
                if !(0.0..1.0).contains(&self.or_rate) {
                    out.push(format!("OFLS or_rate must be in [0, 1), got {}", self.or_rate));
                }
            }
            Strategy::Blob => {
                if self.max_tokens < 1 {
                    out.push("Blob max_tokens must be >= 1".to_string());
                }
                if let Err(e) = validate_overlap(self.blob_overlap) {
                    out.push(e.to_string());
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Parameter(v.join("; ")))
        }
    }
}

pub(crate) fn validate_overlap(mode: BlobOverlap) -> Result<()> {
    match mode {
        BlobOverlap::Tok(r) | BlobOverlap::TokLim(r) if !(0.0..1.0).contains(&r) => Err(
            Error::Parameter(format!("overlap ratio must be in [0, 1), got {r}")),
        ),
        _ => Ok(()),
    }
}

/// Segments one document according to `spec`.
pub fn segment(doc: &Document, spec: &SegmentationSpec, tok: &dyn Tokenizer) -> Result<SegmentedDocument> {
    spec.validate()?;
    match spec.strategy {
        Strategy::Sbs => segment_sbs(doc, tok),
        Strategy::Ofls => segment_ofls(doc, tok, spec.fl, spec.or_rate),
        Strategy::Blob => {
            let blobs = segment_blob(doc, tok, spec.max_tokens)?;
            apply_blob_overlap(&blobs, spec.blob_overlap, tok)
        }
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '。' | '！' | '？')
}

fn is_fullwidth_terminator(c: char) -> bool {
    matches!(c, '。' | '！' | '？')
}

/// Splits text into sentences: line breaks first, then after sentence-final
/// punctuation followed by whitespace or end of line. Full-width terminators
/// also split when directly followed by text, since CJK prose has no spaces.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let mut chars = line.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if !is_terminator(c) {
                continue;
            }
            let cut = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace() || is_fullwidth_terminator(c),
            };
            if cut {
                let end = i + c.len_utf8();
                out.push(&line[start..end]);
                start = end;
            }
        }
        out.push(&line[start..]);
    }
    out.into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Sentence-based segmentation.
pub fn segment_sbs(doc: &Document, tok: &dyn Tokenizer) -> Result<SegmentedDocument> {
    let segments = build_segments(
        split_sentences(&doc.text)
            .into_iter()
            .map(|s| (s.to_string(), tok.tokenize(s).len()))
            .filter(|&(_, n)| n > 0),
    );
    if segments.is_empty() {
        return Err(Error::Unsegmentable(doc.doc_id.clone()));
    }
    Ok(SegmentedDocument {
        doc_id: doc.doc_id.clone(),
        segments,
    })
}

/// Token ranges `[start, end)` of the OFLS windows over `n_tokens` tokens.
pub fn ofls_windows(n_tokens: usize, fl: usize, or_rate: f64) -> Vec<(usize, usize)> {
    let stride = ((fl as f64 * (1.0 - or_rate)).floor() as usize).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + fl).min(n_tokens);
        out.push((start, end));
        if end >= n_tokens {
            break;
        }
        start += stride;
    }
    out
}

/// OFLS over an already tokenized stream, e.g. model tokens from a provider sidecar.
pub fn segment_ofls_tokens(
    doc_id: &str,
    tokens: &[&str],
    tok: &dyn Tokenizer,
    fl: usize,
    or_rate: f64,
) -> Result<SegmentedDocument> {
    if tokens.is_empty() {
        return Err(Error::Unsegmentable(doc_id.to_string()));
    }
    let segments = build_segments(
        ofls_windows(tokens.len(), fl, or_rate)
            .into_iter()
            .map(|(s, e)| (tok.join(&tokens[s..e]), e - s)),
    );
    Ok(SegmentedDocument {
        doc_id: doc_id.to_string(),
        segments,
    })
}

/// Overlapping fixed-length segmentation.
pub fn segment_ofls(doc: &Document, tok: &dyn Tokenizer, fl: usize, or_rate: f64) -> Result<SegmentedDocument> {
    let tokens = tok.tokenize(&doc.text);
    segment_ofls_tokens(&doc.doc_id, &tokens, tok, fl, or_rate)
}
