//! One-to-one filtering of scored pairs by greedy competitive linking.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::scoring::ScoredPair;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub src_id: String,
    pub tgt_id: String,
    pub score: f64,
}

/// Pairs in which every source and every target id appears at most once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentSet {
    pub pairs: Vec<AlignedPair>,
}

impl AlignmentSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn id_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|p| (p.src_id.as_str(), p.tgt_id.as_str()))
    }
}

/// Accepts pairs in order of (score desc, src asc, tgt asc), skipping any
/// pair whose source or target was already taken.
pub fn one_to_one(scored: &[ScoredPair]) -> AlignmentSet {
    let mut order: Vec<&ScoredPair> = scored.iter().collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.src_id.cmp(&b.src_id))
            .then_with(|| a.tgt_id.cmp(&b.tgt_id))
    });
    let mut used_src = HashSet::new();
    let mut used_tgt = HashSet::new();
    let mut pairs = Vec::new();
    for p in order {
        if used_src.contains(p.src_id.as_str()) || used_tgt.contains(p.tgt_id.as_str()) {
            continue;
        }
        used_src.insert(p.src_id.as_str());
        used_tgt.insert(p.tgt_id.as_str());
        pairs.push(AlignedPair {
            src_id: p.src_id.clone(),
            tgt_id: p.tgt_id.clone(),
            score: p.score,
        });
    }
    AlignmentSet { pairs }
}

pub fn write_alignment(set: &AlignmentSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in &set.pairs {
        writeln!(out, "{}\t{}\t{}", p.src_id, p.tgt_id, p.score).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads an alignment TSV. A missing score column reads as 0.
pub fn read_alignment(path: impl AsRef<Path>) -> Result<AlignmentSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("{}:{}: expected src, tgt[, score]", path.display(), lineno + 1));
        let f: Vec<&str> = line.split('\t').collect();
        let score = match f.len() {
            2 => 0.0,
            3 => f[2].parse().map_err(|_| bad())?,
            _ => return Err(bad()),
        };
        pairs.push(AlignedPair {
            src_id: f[0].to_string(),
            tgt_id: f[1].to_string(),
            score,
        });
    }
    Ok(AlignmentSet { pairs })
}
