//! Alignment metrics: recall, soft recall, source-side F1, length-binned
//! recall, per-domain weighted recall and a paired randomization test.

mod edit_distance;
mod significance;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::AlignmentSet;
use crate::corpus::DocumentStore;
use crate::{Error, Result};

pub use edit_distance::{levenshtein, nld_below, normalized_edit_distance};
pub use significance::{randomization_test, Metric, SigTestOptions, SigTestResult, EXHAUSTIVE_LIMIT, SAMPLED_TRIALS};

/// Reference (source, target) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldPairs {
    pairs: Vec<(String, String)>,
    set: HashSet<(String, String)>,
    unique_sources: usize,
}

impl GoldPairs {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut set = HashSet::new();
        let mut ordered = Vec::new();
        for p in pairs {
            if set.insert(p.clone()) {
                ordered.push(p);
            }
        }
        let unique_sources = ordered.iter().map(|(s, _)| s.as_str()).collect::<HashSet<_>>().len();
        GoldPairs {
            pairs: ordered,
            set,
            unique_sources,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn unique_sources(&self) -> usize {
        self.unique_sources
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn contains(&self, src: &str, tgt: &str) -> bool {
        // HashSet<(String, String)> cannot be probed with borrowed tuples
        self.set.contains(&(src.to_string(), tgt.to_string()))
    }

    fn require_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::Empty("gold pairs".into()))
        } else {
            Ok(())
        }
    }
}

/// Two-column TSV: `src_id \t tgt_id`. Blank lines are ignored.
pub fn read_gold(path: impl AsRef<Path>) -> Result<GoldPairs> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 {
            return Err(Error::Format(format!("{}:{}: expected src, tgt", path.display(), lineno + 1)));
        }
        pairs.push((f[0].to_string(), f[1].to_string()));
    }
    Ok(GoldPairs::new(pairs))
}

fn distinct_pairs(pred: &AlignmentSet) -> HashSet<(&str, &str)> {
    pred.id_pairs().collect()
}

fn correct_count(pred: &AlignmentSet, gold: &GoldPairs) -> usize {
    distinct_pairs(pred)
        .into_iter()
        .filter(|(s, t)| gold.contains(s, t))
        .count()
}

/// `|pred ∩ gold| / |gold|`.
pub fn recall(pred: &AlignmentSet, gold: &GoldPairs) -> Result<f64> {
    gold.require_non_empty()?;
    Ok(correct_count(pred, gold) as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub(crate) fn f1_from_counts(correct: usize, predicted: usize, unique_sources: usize) -> F1Score {
    let recall = correct as f64 / unique_sources as f64;
    let precision = if predicted == 0 {
        0.0
    } else {
        correct as f64 / predicted as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Score { precision, recall, f1 }
}

/// Precision and recall counted over source-side instances: recall divides
/// by the number of distinct gold sources rather than gold pairs.
pub fn f1_source_side(pred: &AlignmentSet, gold: &GoldPairs) -> Result<F1Score> {
    gold.require_non_empty()?;
    let predicted = distinct_pairs(pred).len();
    Ok(f1_from_counts(correct_count(pred, gold), predicted, gold.unique_sources()))
}

fn text_of<'a>(store: &'a DocumentStore, id: &str) -> Result<&'a str> {
    store
        .get(id)
        .map(|d| d.text.as_str())
        .ok_or_else(|| Error::MissingDocument(format!("{id} ({} side)", store.side())))
}

pub const DEFAULT_SOFT_THRESHOLD: f64 = 0.05;

/// Recall that also credits a gold pair when a prediction matches one side
/// by id and the other side's text is within `threshold` normalized edit
/// distance of the gold document.
pub fn soft_recall(
    pred: &AlignmentSet,
    gold: &GoldPairs,
    src_store: &DocumentStore,
    tgt_store: &DocumentStore,
    threshold: f64,
) -> Result<f64> {
    gold.require_non_empty()?;
    for (s, t) in gold.pairs().iter().map(|(s, t)| (s.as_str(), t.as_str())).chain(pred.id_pairs()) {
        text_of(src_store, s)?;
        text_of(tgt_store, t)?;
    }
    let pred_set = distinct_pairs(pred);
    let mut by_src: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut by_tgt: HashMap<&str, Vec<&str>> = HashMap::new();
    for &(s, t) in &pred_set {
        by_src.entry(s).or_default().push(t);
        by_tgt.entry(t).or_default().push(s);
    }
    let credited = gold
        .pairs()
        .par_iter()
        .filter(|(gs, gt)| {
            if pred_set.contains(&(gs.as_str(), gt.as_str())) {
                return true;
            }
            let gt_text = text_of(tgt_store, gt).expect("checked above");
            let gs_text = text_of(src_store, gs).expect("checked above");
            let via_src = by_src.get(gs.as_str()).is_some_and(|tgts| {
                tgts.iter()
                    .any(|tp| nld_below(text_of(tgt_store, tp).expect("checked above"), gt_text, threshold))
            });
            via_src
                || by_tgt.get(gt.as_str()).is_some_and(|srcs| {
                    srcs.iter()
                        .any(|sp| nld_below(text_of(src_store, sp).expect("checked above"), gs_text, threshold))
                })
        })
        .count();
    Ok(credited as f64 / gold.len() as f64)
}

/// Default token-count bin edges: `[0,256) [256,1024) [1024,2048) [2048,inf)`.
pub const DEFAULT_BINS: [usize; 4] = [0, 256, 1024, 2048];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRecall {
    pub lo: usize,
    /// Exclusive upper edge; `None` for the open last bin.
    pub hi: Option<usize>,
    pub gold: usize,
    pub hits: usize,
    /// `None` when the bin holds no gold pair.
    pub recall: Option<f64>,
}

impl BinRecall {
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("[{}, {})", self.lo, hi),
            None => format!("[{}, inf)", self.lo),
        }
    }
}

/// Which document of a gold pair determines its length bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthSide {
    Source,
    Target,
}

/// Recall per document-length bin. Lengths are whitespace token counts of
/// the `side` document; `edges` are ascending lower bounds.
pub fn recall_by_length(
    pred: &AlignmentSet,
    gold: &GoldPairs,
    docs: &DocumentStore,
    side: LengthSide,
    edges: &[usize],
) -> Result<Vec<BinRecall>> {
    gold.require_non_empty()?;
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("bin edges must be non-empty and strictly ascending".into()));
    }
    let pred_set = distinct_pairs(pred);
    let mut bins: Vec<BinRecall> = edges
        .iter()
        .enumerate()
        .map(|(k, &lo)| BinRecall {
            lo,
            hi: edges.get(k + 1).copied(),
            gold: 0,
            hits: 0,
            recall: None,
        })
        .collect();
    for (s, t) in gold.pairs() {
        let id = match side {
            LengthSide::Source => s,
            LengthSide::Target => t,
        };
        let len = text_of(docs, id)?.split_whitespace().count();
        // lengths below the first edge fall in the first bin
        let k = edges.iter().rposition(|&lo| len >= lo).unwrap_or(0);
        bins[k].gold += 1;
        if pred_set.contains(&(s.as_str(), t.as_str())) {
            bins[k].hits += 1;
        }
    }
    for b in &mut bins {
        b.recall = (b.gold > 0).then(|| b.hits as f64 / b.gold as f64);
    }
    Ok(bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRecall {
    pub domain: String,
    pub gold: usize,
    pub recall: f64,
}

/// Recall per source-document domain.
pub fn recall_by_domain(pred: &AlignmentSet, gold: &GoldPairs, src_store: &DocumentStore) -> Result<Vec<DomainRecall>> {
    gold.require_non_empty()?;
    let pred_set = distinct_pairs(pred);
    let mut acc: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (s, t) in gold.pairs() {
        let domain = src_store
            .get(s)
            .map(|d| d.domain.as_str())
            .ok_or_else(|| Error::MissingDocument(format!("{s} (source side)")))?;
        let e = acc.entry(domain).or_default();
        e.0 += 1;
        e.1 += usize::from(pred_set.contains(&(s.as_str(), t.as_str())));
    }
    Ok(acc
        .into_iter()
        .map(|(domain, (n, hits))| DomainRecall {
            domain: domain.to_string(),
            gold: n,
            recall: hits as f64 / n as f64,
        })
        .collect())
}

/// Average of per-domain recalls weighted by their gold-pair counts.
pub fn weighted_recall(domains: &[DomainRecall]) -> Option<f64> {
    let total: usize = domains.iter().map(|d| d.gold).sum();
    (total > 0).then(|| domains.iter().map(|d| d.recall * d.gold as f64).sum::<f64>() / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gold_pairs: usize,
    pub unique_sources: usize,
    pub predicted: usize,
    pub recall: f64,
    pub soft_recall: Option<f64>,
    /// Source-side precision/recall/F1.
    pub source_side: F1Score,
    pub length_side: LengthSide,
    pub bins: Vec<BinRecall>,
    pub domains: Vec<DomainRecall>,
    pub weighted_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub soft_threshold: Option<f64>,
    pub bins: Vec<usize>,
    pub length_side: LengthSide,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            soft_threshold: Some(DEFAULT_SOFT_THRESHOLD),
            bins: DEFAULT_BINS.to_vec(),
            length_side: LengthSide::Source,
        }
    }
}

/// Computes every metric for one prediction set.
pub fn evaluate(
    pred: &AlignmentSet,
    gold: &GoldPairs,
    src_store: &DocumentStore,
    tgt_store: &DocumentStore,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let soft = opts
        .soft_threshold
        .map(|thr| soft_recall(pred, gold, src_store, tgt_store, thr))
        .transpose()?;
    let length_docs = match opts.length_side {
        LengthSide::Source => src_store,
        LengthSide::Target => tgt_store,
    };
    let domains = recall_by_domain(pred, gold, src_store)?;
    Ok(EvalReport {
        gold_pairs: gold.len(),
        unique_sources: gold.unique_sources(),
        predicted: distinct_pairs(pred).len(),
        recall: recall(pred, gold)?,
        soft_recall: soft,
        source_side: f1_source_side(pred, gold)?,
        length_side: opts.length_side,
        bins: recall_by_length(pred, gold, length_docs, opts.length_side, &opts.bins)?,
        weighted_recall: weighted_recall(&domains),
        domains,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

impl EvalReport {
    /// Aligned-column text rendering.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("gold pairs".into(), self.gold_pairs.to_string()),
            ("unique sources".into(), self.unique_sources.to_string()),
            ("predicted pairs".into(), self.predicted.to_string()),
            ("recall".into(), pct(self.recall)),
        ];
        if let Some(s) = self.soft_recall {
            rows.push(("soft recall".into(), pct(s)));
        }
        rows.push(("precision (src)".into(), format!("{:.4}", self.source_side.precision)));
        rows.push(("recall (src)".into(), format!("{:.4}", self.source_side.recall)));
        rows.push(("f1 (src)".into(), format!("{:.4}", self.source_side.f1)));
        if let Some(w) = self.weighted_recall {
            rows.push(("weighted recall".into(), pct(w)));
        }
        for d in &self.domains {
            rows.push((format!("domain {}", d.domain), format!("{} ({} gold)", pct(d.recall), d.gold)));
        }
        for b in &self.bins {
            let r = b.recall.map_or_else(|| "n/a".to_string(), pct);
            rows.push((format!("{} tokens {}", self.length_side_name(), b.label()), format!("{r} ({}/{})", b.hits, b.gold)));
        }
        let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }

    fn length_side_name(&self) -> &'static str {
        match self.length_side {
            LengthSide::Source => "src",
            LengthSide::Target => "tgt",
        }
    }
}
