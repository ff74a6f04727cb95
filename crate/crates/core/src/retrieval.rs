//! Exact top-K inner-product search over document vectors.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::docvec::DocVector;
use crate::{Error, Result};

/// Sources scored per block of the similarity matrix.
pub const DEFAULT_BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tgt_id: String,
    pub score: f64,
}

/// Retrieved targets for one source, best first; ties by ascending target id.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub src_id: String,
    pub candidates: Vec<Candidate>,
}

/// Heap entry ordered so that the *worst* candidate is the maximum.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    // position of the target in ascending-id order
    id_rank: usize,
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then(self.id_rank.cmp(&other.id_rank))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

fn dot64(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = [0f64; 4];
    let uc = u.chunks_exact(4);
    let vc = v.chunks_exact(4);
    let tail: f64 = uc.remainder().iter().zip(vc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in uc.zip(vc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// The score every retrieval path uses for a (source, target) pair.
pub fn pair_score(src: &DocVector, tgt: &DocVector) -> f64 {
    dot64(&src.vec, &tgt.vec)
}

pub fn topk(src: &[DocVector], tgt: &[DocVector], k: usize) -> Result<Vec<CandidateList>> {
    topk_blocked(src, tgt, k, DEFAULT_BLOCK)
}

/// Top-`k` targets by inner product for every source. `k` larger than the
/// target set returns all targets.
pub fn topk_blocked(src: &[DocVector], tgt: &[DocVector], k: usize, block: usize) -> Result<Vec<CandidateList>> {
    if k == 0 {
        return Err(Error::Parameter("K must be >= 1".into()));
    }
    if tgt.is_empty() {
        return Err(Error::Empty("target set".into()));
    }
    let dim = tgt[0].vec.len();
    for v in src.iter().chain(tgt) {
        if v.vec.len() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: v.vec.len(),
            });
        }
    }
    let mut order: Vec<usize> = (0..tgt.len()).collect();
    order.sort_by(|&a, &b| tgt[a].doc_id.cmp(&tgt[b].doc_id));
    let mut id_rank = vec![0; tgt.len()];
    for (r, &i) in order.iter().enumerate() {
        id_rank[i] = r;
    }
    let k = k.min(tgt.len());
    let block = block.max(1);

    let out = src
        .par_chunks(block)
        .flat_map_iter(|chunk| {
            chunk.iter().map(|s| {
                let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
                for (j, t) in tgt.iter().enumerate() {
                    let entry = Ranked {
                        score: pair_score(s, t),
                        id_rank: id_rank[j],
                    };
                    if heap.len() < k {
                        heap.push(entry);
                    } else if entry < *heap.peek().expect("k >= 1") {
                        heap.pop();
                        heap.push(entry);
                    }
                }
                let candidates = heap
                    .into_sorted_vec()
                    .into_iter()
                    .map(|r| Candidate {
                        tgt_id: tgt[order[r.id_rank]].doc_id.clone(),
                        score: r.score,
                    })
                    .collect();
                CandidateList {
                    src_id: s.doc_id.clone(),
                    candidates,
                }
            })
        })
        .collect();
    Ok(out)
}

pub fn write_candidates(lists: &[CandidateList], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for list in lists {
        for (rank, c) in list.candidates.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}\t{:.6}", list.src_id, c.tgt_id, rank + 1, c.score)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a candidates TSV, grouping consecutive rows by source.
pub fn read_candidates(path: impl AsRef<Path>) -> Result<Vec<CandidateList>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<CandidateList> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = || Error::Format(format!("{}:{}: expected src, tgt, rank, score", path.display(), lineno + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let score: f64 = fields[3].parse().map_err(|_| bad())?;
        let cand = Candidate {
            tgt_id: fields[1].to_string(),
            score,
        };
        match out.last_mut() {
            Some(last) if last.src_id == fields[0] => last.candidates.push(cand),
            _ => out.push(CandidateList {
                src_id: fields[0].to_string(),
                candidates: vec![cand],
            }),
        }
    }
    Ok(out)
}
