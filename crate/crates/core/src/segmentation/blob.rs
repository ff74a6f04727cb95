use super::{build_segments, segment_sbs, validate_overlap, BlobOverlap, Segment, SegmentedDocument, Tokenizer};
use crate::corpus::Document;
use crate::Result;

/// A run of consecutive sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blob {
    pub sentences: Vec<Segment>,
}

impl Blob {
    pub fn token_len(&self) -> usize {
        self.sentences.iter().map(|s| s.token_len).sum()
    }

    pub fn text(&self) -> String {
        join_sentences(&self.sentences)
    }
}

/// Blobs of one document, keeping their sentence boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlobDocument {
    pub doc_id: String,
    pub blobs: Vec<Blob>,
}

impl BlobDocument {
    pub fn to_segmented(&self) -> SegmentedDocument {
        SegmentedDocument {
            doc_id: self.doc_id.clone(),
            segments: build_segments(self.blobs.iter().map(|b| (b.text(), b.token_len()))),
        }
    }
}

fn join_sentences<'a>(sentences: impl IntoIterator<Item = &'a Segment>) -> String {
    sentences
        .into_iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Greedily packs consecutive SBS sentences into blobs of at most
/// `max_tokens` tokens. A sentence longer than the limit becomes its own blob.
pub fn segment_blob(doc: &Document, tok: &dyn Tokenizer, max_tokens: usize) -> Result<BlobDocument> {
    let sentences = segment_sbs(doc, tok)?.segments;
    let mut blobs = Vec::new();
    let mut current: Vec<Segment> = Vec::new();
    let mut current_len = 0;
    for s in sentences {
        if !current.is_empty() && current_len + s.token_len > max_tokens {
            blobs.push(Blob {
                sentences: std::mem::take(&mut current),
            });
            current_len = 0;
        }
        current_len += s.token_len;
        current.push(s);
    }
    if !current.is_empty() {
        blobs.push(Blob { sentences: current });
    }
    Ok(BlobDocument {
        doc_id: doc.doc_id.clone(),
        blobs,
    })
}

fn floor_ratio(len: usize, r: f64) -> usize {
    (len as f64 * r).floor() as usize
}

/// Longest prefix (from the front, or suffix when `from_end`) of sentences
/// whose token total stays within `limit`.
fn sentences_within(sentences: &[Segment], limit: usize, from_end: bool) -> usize {
    let mut total = 0;
    let mut count = 0;
    let ordered: Box<dyn Iterator<Item = &Segment>> = if from_end {
        Box::new(sentences.iter().rev())
    } else {
        Box::new(sentences.iter())
    };
    for s in ordered {
        if total + s.token_len > limit {
            break;
        }
        total += s.token_len;
        count += 1;
    }
    count
}

fn overlap_sentences(blobs: &[Blob], head: impl Fn(&Blob) -> usize, tail: impl Fn(&Blob) -> usize) -> Vec<(String, usize)> {
    (0..blobs.len())
        .map(|k| {
            let mut parts: Vec<&Segment> = Vec::new();
            if k > 0 {
                let prev = &blobs[k - 1].sentences;
                let n = tail(&blobs[k - 1]).min(prev.len());
                parts.extend(&prev[prev.len() - n..]);
            }
            parts.extend(&blobs[k].sentences);
            if let Some(next) = blobs.get(k + 1) {
                let n = head(next).min(next.sentences.len());
                parts.extend(&next.sentences[..n]);
            }
            let len = parts.iter().map(|s| s.token_len).sum();
            (join_sentences(parts), len)
        })
        .collect()
}

/// Adds boundary overlap between adjacent blobs. Every copy is taken from
/// the blobs as they were before any overlap was applied.
pub fn apply_blob_overlap(doc: &BlobDocument, mode: BlobOverlap, tok: &dyn Tokenizer) -> Result<SegmentedDocument> {
    validate_overlap(mode)?;
    let blobs = &doc.blobs;
    let texts = match mode {
        BlobOverlap::None | BlobOverlap::Sent(0) | BlobOverlap::Tok(0.0) => return Ok(doc.to_segmented()),
        BlobOverlap::Tok(r) => {
            let texts: Vec<String> = blobs.iter().map(Blob::text).collect();
            let tokens: Vec<Vec<&str>> = texts.iter().map(|t| tok.tokenize(t)).collect();
            (0..blobs.len())
                .map(|k| {
                    let mut out: Vec<&str> = Vec::new();
                    if k > 0 {
                        let prev = &tokens[k - 1];
                        let n = floor_ratio(prev.len(), r);
                        out.extend(&prev[prev.len() - n..]);
                    }
                    out.extend(&tokens[k]);
                    if let Some(next) = tokens.get(k + 1) {
                        out.extend(&next[..floor_ratio(next.len(), r)]);
                    }
                    (tok.join(&out), out.len())
                })
                .collect()
        }
        BlobOverlap::Sent(n) => overlap_sentences(blobs, |_| n, |_| n),
        BlobOverlap::TokLim(r) => overlap_sentences(
            blobs,
            |b| sentences_within(&b.sentences, floor_ratio(b.token_len(), r), false),
            |b| sentences_within(&b.sentences, floor_ratio(b.token_len(), r), true),
        ),
    };
    Ok(SegmentedDocument {
        doc_id: doc.doc_id.clone(),
        segments: build_segments(texts),
    })
}
