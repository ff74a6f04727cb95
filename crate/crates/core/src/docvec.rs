//! Single-vector document representations for candidate generation.
//!
//! * Mean-Pool: normalized mean of a document's segment embeddings.
//! * TK-PERT: `J` position-weighted windows. Window `j` weights segment `i`
//!   by a Beta-shaped density with mode `(j + 0.5) / J` and peakedness
//!   `gamma`, evaluated at the segment midpoint `(i + 0.5) / N`. Each segment
//!   is further down-weighted by its linear inverse document frequency (LIDF)
//!   so that boilerplate repeated across a site contributes little.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding_io::{dot, Emb1, EmbeddingStore, Rows};
use crate::segmentation::{IndexEntry, SegmentedDocument};
use crate::{Error, Result, Side};

const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub doc_id: String,
    pub vec: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PertSpec {
    /// Window count `J`.
    pub windows: usize,
    /// Peakedness `gamma`.
    pub gamma: f64,
}

impl PertSpec {
    pub fn new(windows: usize, gamma: f64) -> Result<Self> {
        let spec = PertSpec { windows, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.windows == 0 {
            return Err(Error::Parameter("PERT window count must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Parameter(format!("PERT gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

impl Default for PertSpec {
    fn default() -> Self {
        PertSpec {
            windows: 16,
            gamma: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum DocVecMethod {
    Mean,
    #[serde(rename = "tkpert")]
    TkPert(PertSpec),
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > ZERO_NORM) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Arithmetic mean of the rows, L2-normalized.
pub fn mean_pool(doc_id: &str, rows: Rows<'_>) -> Result<DocVector> {
    if rows.is_empty() {
        return Err(Error::Empty(format!("document {doc_id} has no segments")));
    }
    let mut acc = vec![0f64; rows.dim()];
    for row in rows.iter() {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x as f64;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    let vec = normalized(acc).ok_or_else(|| Error::DegenerateDocument(doc_id.to_string()))?;
    Ok(DocVector {
        doc_id: doc_id.to_string(),
        vec,
    })
}

/// `J x N` window weights; each row sums to one.
pub fn pert_weights(spec: &PertSpec, n: usize) -> Vec<Vec<f64>> {
    let j_total = spec.windows as f64;
    (0..spec.windows)
        .map(|j| {
            let mode = (j as f64 + 0.5) / j_total;
            let alpha = 1.0 + spec.gamma * mode;
            let beta = 1.0 + spec.gamma * (1.0 - mode);
            // log-density up to a constant; midpoints keep x strictly inside (0, 1)
            let log_f: Vec<f64> = (0..n)
                .map(|i| {
                    let x = (i as f64 + 0.5) / n as f64;
                    (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln()
                })
                .collect();
            let peak = log_f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut row: Vec<f64> = log_f.iter().map(|l| (l - peak).exp()).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|w| *w /= total);
            row
        })
        .collect()
}

/// Linear inverse document frequency over one corpus side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LidfTable {
    df: HashMap<String, usize>,
}

impl LidfTable {
    pub fn df(&self, text: &str) -> usize {
        self.df.get(text).copied().unwrap_or(0)
    }

    /// `1 / df`; unseen text counts as unique.
    pub fn weight(&self, text: &str) -> f64 {
        1.0 / self.df(text).max(1) as f64
    }

    pub fn weights_for(&self, doc: &SegmentedDocument) -> Vec<f64> {
        doc.texts().map(|t| self.weight(t)).collect()
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }
}

pub fn build_lidf(side_docs: &[SegmentedDocument]) -> LidfTable {
    let mut df: HashMap<String, usize> = HashMap::new();
    for doc in side_docs {
        let distinct: HashSet<&str> = doc.texts().collect();
        for t in distinct {
            *df.entry(t.to_string()).or_default() += 1;
        }
    }
    LidfTable { df }
}

/// TK-PERT document vector from segment rows, window weights and per-segment
/// LIDF weights.
pub fn tk_pert(doc_id: &str, rows: Rows<'_>, weights: &[Vec<f64>], lidf: &[f64]) -> Result<DocVector> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Empty(format!("document {doc_id} has no segments")));
    }
    if lidf.len() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: lidf.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| w.len() != n) {
        return Err(Error::DimensionMismatch {
            left: n,
            right: w.len(),
        });
    }
    let d = rows.dim();
    let mut out = Vec::with_capacity(weights.len() * d);
    for window in weights {
        let mut v = vec![0f64; d];
        for (i, row) in rows.iter().enumerate() {
            let c = window[i] * lidf[i];
            if c == 0.0 {
                continue;
            }
            for (a, &x) in v.iter_mut().zip(row) {
                *a += c * x as f64;
            }
        }
        match normalized(v) {
            Some(v) => out.extend(v),
            None => out.extend(std::iter::repeat_n(0.0, d)),
        }
    }
    let vec = normalized(out).ok_or_else(|| Error::DegenerateDocument(doc_id.to_string()))?;
    Ok(DocVector {
        doc_id: doc_id.to_string(),
        vec,
    })
}

/// Document vectors for a whole side, in embedding-store order. Degenerate
/// documents are returned separately, by id.
pub fn build_doc_vectors(
    store: &EmbeddingStore,
    segmented: &[SegmentedDocument],
    method: DocVecMethod,
) -> Result<(Vec<DocVector>, Vec<String>)> {
    let lidf = match method {
        DocVecMethod::TkPert(spec) => {
            spec.validate()?;
            Some(build_lidf(segmented))
        }
        DocVecMethod::Mean => None,
    };
    let by_id: HashMap<&str, &SegmentedDocument> = segmented.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let results: Vec<Result<DocVector>> = store
        .ranges()
        .par_iter()
        .map(|r| {
            let rows = store.doc_rows(&r.doc_id).expect("range of this store");
            match (&method, &lidf) {
                (DocVecMethod::TkPert(spec), Some(table)) => {
                    let doc = by_id
                        .get(r.doc_id.as_str())
                        .ok_or_else(|| Error::MissingDocument(r.doc_id.clone()))?;
                    if doc.len() != rows.len() {
                        return Err(Error::Consistency(format!(
                            "document {} has {} segments but {} embedding rows",
                            r.doc_id,
                            doc.len(),
                            rows.len()
                        )));
                    }
                    tk_pert(&r.doc_id, rows, &pert_weights(spec, rows.len()), &table.weights_for(doc))
                }
                _ => mean_pool(&r.doc_id, rows),
            }
        })
        .collect();
    let mut vecs = Vec::with_capacity(results.len());
    let mut degenerate = Vec::new();
    for r in results {
        match r {
            Ok(v) => vecs.push(v),
            Err(Error::DegenerateDocument(id)) => degenerate.push(id),
            Err(e) => return Err(e),
        }
    }
    if !degenerate.is_empty() {
        log::warn!("{} degenerate documents excluded from retrieval", degenerate.len());
    }
    Ok((vecs, degenerate))
}

/// Writes document vectors as EMB1 plus a one-row-per-document index.
pub fn write_doc_vectors(vecs: &[DocVector], emb_path: impl AsRef<Path>, index_path: impl AsRef<Path>) -> Result<()> {
    let dim = vecs.first().map_or(0, |v| v.vec.len());
    if let Some(v) = vecs.iter().find(|v| v.vec.len() != dim) {
        return Err(Error::DimensionMismatch {
            left: dim,
            right: v.vec.len(),
        });
    }
    let data = vecs.iter().flat_map(|v| v.vec.iter().map(|&x| x as f32)).collect();
    Emb1 { dim, data }.write(emb_path)?;
    let entries: Vec<IndexEntry> = vecs
        .iter()
        .enumerate()
        .map(|(i, v)| IndexEntry {
            doc_id: v.doc_id.clone(),
            start_line: i,
            n_segments: 1,
        })
        .collect();
    crate::segmentation::write_index(&entries, index_path)
}

pub fn read_doc_vectors(emb_path: impl AsRef<Path>, index_path: impl AsRef<Path>, side: Side) -> Result<Vec<DocVector>> {
    let store = crate::embedding_io::read_emb1(emb_path, index_path, side)?;
    Ok(store
        .ranges()
        .iter()
        .map(|r| {
            let rows = store.doc_rows(&r.doc_id).expect("range of this store");
            let v = rows.row(0);
            let norm = dot(v, v).sqrt();
            DocVector {
                doc_id: r.doc_id.clone(),
                vec: v.iter().map(|&x| x as f64 / norm).collect(),
            }
        })
        .collect())
}
