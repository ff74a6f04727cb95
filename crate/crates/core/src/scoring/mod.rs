//! Stage-2 pair scoring: BiMax, entropic OT and greedy movers' distance.
//!
//! Every method reports a higher-is-better similarity; transport methods
//! report `1 - cost`.

mod bimax;
mod gmd;
mod kernel;
mod ot;
mod weights;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding_io::{EmbeddingStore, Rows};
use crate::retrieval::CandidateList;
use crate::segmentation::{Segment, SegmentedDocument};
use crate::{Error, Result};

pub use bimax::{bimax, maxsim};
pub use gmd::{gmd_score, greedy_transport_cost};
pub use kernel::{similarity_matrix, similarity_submatrix};
pub use ot::{ot_score, sinkhorn, sinkhorn_cost, OtScore, SinkhornOutcome, SinkhornParams, TransportPlan};
pub use weights::{seg_weights, Atom, WeightScheme};

/// A document as seen by the pair scorers: its segment rows and, for the
/// transport methods, the segments themselves.
#[derive(Debug, Clone, Copy)]
pub struct PairDoc<'a> {
    pub rows: Rows<'a>,
    pub segments: &'a [Segment],
}

impl<'a> PairDoc<'a> {
    pub fn new(rows: Rows<'a>, segments: &'a [Segment]) -> Self {
        PairDoc { rows, segments }
    }

    fn check(&self, other: &PairDoc<'_>) -> Result<()> {
        for d in [self, other] {
            if d.rows.is_empty() {
                return Err(Error::Empty("segment set".into()));
            }
            if d.segments.len() != d.rows.len() {
                return Err(Error::Consistency(format!(
                    "{} segments but {} embedding rows",
                    d.segments.len(),
                    d.rows.len()
                )));
            }
        }
        if self.rows.dim() != other.rows.dim() {
            return Err(Error::DimensionMismatch {
                left: self.rows.dim(),
                right: other.rows.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bimax,
    Ot,
    Gmd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bimax => "bimax",
            Method::Ot => "ot",
            Method::Gmd => "gmd",
        }
    }

    /// Segment-frequency for OT, segment-length for GMD.
    pub fn default_weighting(self) -> WeightScheme {
        match self {
            Method::Gmd => WeightScheme::SegmentLength,
            _ => WeightScheme::SegmentFrequency,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bimax" => Ok(Method::Bimax),
            "ot" => Ok(Method::Ot),
            "gmd" => Ok(Method::Gmd),
            other => Err(Error::Parameter(format!("unknown rerank method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankSpec {
    pub method: Method,
    /// Defaults to [`Method::default_weighting`].
    pub weighting: Option<WeightScheme>,
    pub sinkhorn: SinkhornParams,
}

impl Default for RerankSpec {
    fn default() -> Self {
        RerankSpec {
            method: Method::Bimax,
            weighting: None,
            sinkhorn: SinkhornParams::default(),
        }
    }
}

impl RerankSpec {
    pub fn new(method: Method) -> Self {
        RerankSpec {
            method,
            ..Default::default()
        }
    }

    pub fn weighting(&self) -> WeightScheme {
        self.weighting.unwrap_or(self.method.default_weighting())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub src_id: String,
    pub tgt_id: String,
    pub score: f64,
    pub method: Method,
}

/// Scores one pair with the configured method; the flag is false only for
/// OT runs that hit `max_iter`.
pub fn score_pair(src: &PairDoc<'_>, tgt: &PairDoc<'_>, spec: &RerankSpec) -> Result<(f64, bool)> {
    match spec.method {
        Method::Bimax => Ok((bimax(src.rows, tgt.rows)?, true)),
        Method::Ot => {
            let out = ot_score(src, tgt, spec.weighting(), &spec.sinkhorn)?;
            Ok((out.score, out.converged))
        }
        Method::Gmd => Ok((gmd_score(src, tgt, spec.weighting())?, true)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub method: Method,
    pub pairs: usize,
    pub wall_sec: f64,
    pub pairs_per_sec: f64,
    /// Sum of per-pair scoring time across workers.
    pub pair_sec_total: f64,
    pub non_converged: usize,
}

#[derive(Debug, Clone)]
pub struct RerankOutput {
    pub pairs: Vec<ScoredPair>,
    pub report: ThroughputReport,
}

/// One corpus side as needed by the re-ranker. `segments` may be empty for
/// BiMax, which does not use segment texts.
#[derive(Debug, Clone, Copy)]
pub struct SideData<'a> {
    pub embeddings: &'a EmbeddingStore,
    pub segments: &'a [SegmentedDocument],
}

struct Lookup<'a> {
    side: SideData<'a>,
    segs: HashMap<&'a str, &'a [Segment]>,
    need_segments: bool,
}

impl<'a> Lookup<'a> {
    fn new(side: SideData<'a>, need_segments: bool) -> Self {
        let segs = side
            .segments
            .iter()
            .map(|d| (d.doc_id.as_str(), d.segments.as_slice()))
            .collect();
        Lookup {
            side,
            segs,
            need_segments,
        }
    }

    fn doc(&self, id: &str) -> Result<PairDoc<'a>> {
        let rows = self
            .side
            .embeddings
            .doc_rows(id)
            .ok_or_else(|| Error::MissingDocument(format!("{id} (no embedding range on {} side)", self.side.embeddings.side())))?;
        let segments: &'a [Segment] = if self.need_segments {
            self.segs
                .get(id)
                .copied()
                .ok_or_else(|| Error::MissingDocument(format!("{id} (no segments on {} side)", self.side.embeddings.side())))?
        } else {
            &[]
        };
        Ok(PairDoc { rows, segments })
    }
}

/// Scores every (source, candidate) pair, in parallel across pairs.
pub fn rerank(candidates: &[CandidateList], spec: &RerankSpec, src: SideData<'_>, tgt: SideData<'_>) -> Result<RerankOutput> {
    if let Some(v) = spec.sinkhorn.violations().into_iter().next() {
        return Err(Error::Parameter(v));
    }
    let need_segments = spec.method != Method::Bimax;
    let src_lookup = Lookup::new(src, need_segments);
    let tgt_lookup = Lookup::new(tgt, need_segments);
    let jobs: Vec<(&str, &str)> = candidates
        .iter()
        .flat_map(|l| l.candidates.iter().map(move |c| (l.src_id.as_str(), c.tgt_id.as_str())))
        .collect();

    let start = Instant::now();
    let scored: Vec<Result<(ScoredPair, Duration, bool)>> = jobs
        .par_iter()
        .map(|&(s, t)| {
            let sd = src_lookup.doc(s)?;
            let td = tgt_lookup.doc(t)?;
            let t0 = Instant::now();
            let (score, converged) = score_pair(&sd, &td, spec)?;
            let elapsed = t0.elapsed();
            if !score.is_finite() {
                return Err(Error::NonFinite(format!("score for pair ({s}, {t})")));
            }
            Ok((
                ScoredPair {
                    src_id: s.to_string(),
                    tgt_id: t.to_string(),
                    score,
                    method: spec.method,
                },
                elapsed,
                converged,
            ))
        })
        .collect();
    let wall = start.elapsed().as_secs_f64();

    let mut pairs = Vec::with_capacity(scored.len());
    let mut pair_sec_total = 0.0;
    let mut non_converged = 0;
    for r in scored {
        let (p, d, ok) = r?;
        pair_sec_total += d.as_secs_f64();
        non_converged += usize::from(!ok);
        pairs.push(p);
    }
    let n = pairs.len();
    Ok(RerankOutput {
        pairs,
        report: ThroughputReport {
            method: spec.method,
            pairs: n,
            wall_sec: wall,
            pairs_per_sec: if wall > 0.0 { n as f64 / wall } else { 0.0 },
            pair_sec_total,
            non_converged,
        },
    })
}

pub fn write_scored(pairs: &[ScoredPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in pairs {
        writeln!(out, "{}\t{}\t{}\t{}", p.src_id, p.tgt_id, p.method, p.score).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scored(path: impl AsRef<Path>) -> Result<Vec<ScoredPair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = || Error::Format(format!("{}:{}: expected src, tgt, method, score", path.display(), lineno + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        out.push(ScoredPair {
            src_id: f[0].to_string(),
            tgt_id: f[1].to_string(),
            method: f[2].parse().map_err(|_| bad())?,
            score: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Candidate;
    use crate::segmentation::IndexEntry;
    use crate::Side;

    fn store(side: Side, ids: &[&str], rows_per_doc: usize, dim: usize) -> EmbeddingStore {
        let entries: Vec<IndexEntry> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| IndexEntry {
                doc_id: id.to_string(),
                start_line: i * rows_per_doc,
                n_segments: rows_per_doc,
            })
            .collect();
        let n = ids.len() * rows_per_doc;
        let data = (0..n * dim).map(|k| ((k * 7 + 3) % 11) as f32 + 0.5).collect();
        EmbeddingStore::from_parts(side, dim, data, &entries).unwrap()
    }

    fn cands(src: &str, tgts: &[&str]) -> CandidateList {
        CandidateList {
            src_id: src.into(),
            candidates: tgts
                .iter()
                .map(|t| Candidate {
                    tgt_id: t.to_string(),
                    score: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn empty_candidates() {
        let s = store(Side::Source, &["s"], 2, 3);
        let t = store(Side::Target, &["t"], 2, 3);
        let side = |e| SideData { embeddings: e, segments: &[] };
        let out = rerank(&[], &RerankSpec::default(), side(&s), side(&t)).unwrap();
        assert!(out.pairs.is_empty());
        assert_eq!(out.report.pairs, 0);
    }

    #[test]
    fn cardinality_and_throughput() {
        let s = store(Side::Source, &["s"], 2, 3);
        let t = store(Side::Target, &["a", "b", "c"], 2, 3);
        let side = |e| SideData { embeddings: e, segments: &[] };
        let out = rerank(&[cands("s", &["a", "b", "c"])], &RerankSpec::default(), side(&s), side(&t)).unwrap();
        assert_eq!(out.pairs.len(), 3);
        assert!(out.pairs.iter().all(|p| p.method == Method::Bimax && p.src_id == "s"));
        let r = &out.report;
        assert_eq!(r.pairs, 3);
        assert!((r.pairs_per_sec - r.pairs as f64 / r.wall_sec).abs() <= 1e-9 * r.pairs_per_sec);
    }

    #[test]
    fn missing_document_named() {
        let s = store(Side::Source, &["s"], 2, 3);
        let t = store(Side::Target, &["a"], 2, 3);
        let side = |e| SideData { embeddings: e, segments: &[] };
        let err = rerank(&[cands("s", &["zzz"])], &RerankSpec::default(), side(&s), side(&t)).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn transport_methods_need_segments() {
        let s = store(Side::Source, &["s"], 2, 3);
        let t = store(Side::Target, &["a"], 2, 3);
        let side = |e| SideData { embeddings: e, segments: &[] };
        let err = rerank(&[cands("s", &["a"])], &RerankSpec::new(Method::Gmd), side(&s), side(&t)).unwrap_err();
        assert!(matches!(err, Error::MissingDocument(_)));
    }

    #[test]
    fn scored_tsv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.tsv");
        let pairs = vec![ScoredPair {
            src_id: "s".into(),
            tgt_id: "t".into(),
            score: 0.123456789012,
            method: Method::Ot,
        }];
        write_scored(&pairs, &p).unwrap();
        assert_eq!(read_scored(&p).unwrap(), pairs);
    }

    #[test]
    fn default_weightings() {
        assert_eq!(RerankSpec::new(Method::Ot).weighting(), WeightScheme::SegmentFrequency);
        assert_eq!(RerankSpec::new(Method::Gmd).weighting(), WeightScheme::SegmentLength);
    }
}
