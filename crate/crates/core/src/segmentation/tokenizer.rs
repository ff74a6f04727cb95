use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::{Error, Result};

/// Splits text into tokens and joins them back.
///
/// `tokenize(join(tokenize(t)))` must equal `tokenize(t)`.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;
    fn join(&self, tokens: &[&str]) -> String;
}

/// Unicode whitespace splitting, joined with single spaces.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }

    fn join(&self, tokens: &[&str]) -> String {
        tokens.join(" ")
    }
}

/// One line of a provider token sidecar: token count and byte offsets.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct TokenSpans {
    pub count: usize,
    pub offsets: Vec<(usize, usize)>,
}

/// Reads the JSONL token sidecar written by an embedding provider's
/// tokenizer, one object `{"count": n, "offsets": [[start, end], ...]}` per
/// input line.
pub fn read_token_sidecar(path: impl AsRef<Path>) -> Result<Vec<TokenSpans>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let spans: TokenSpans = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if spans.count != spans.offsets.len() {
            return Err(Error::Consistency(format!(
                "{}:{}: count {} but {} offsets",
                path.display(),
                lineno + 1,
                spans.count,
                spans.offsets.len()
            )));
        }
        out.push(spans);
    }
    Ok(out)
}

/// Slices `text` at the given byte offsets.
pub fn tokens_from_offsets<'a>(text: &'a str, spans: &TokenSpans) -> Result<Vec<&'a str>> {
    spans
        .offsets
        .iter()
        .map(|&(s, e)| {
            text.get(s..e)
                .ok_or_else(|| Error::Consistency(format!("token offsets {s}..{e} invalid for text")))
        })
        .collect()
}
