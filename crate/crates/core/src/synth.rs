//! Synthetic corpora with planted alignments.
//!
//! Target documents get random unit segment embeddings; each source document
//! is a copy of a distinct target whose rows are perturbed with isotropic
//! Gaussian noise and renormalized.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::embedding_io::{normalize_row, EmbeddingStore};
use crate::evaluation::GoldPairs;
use crate::segmentation::{build_segments, IndexEntry, SegmentedDocument};
use crate::{Error, Result, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub n_targets: usize,
    pub n_sources: usize,
    pub min_segments: usize,
    pub max_segments: usize,
    pub dim: usize,
    /// Per-coordinate noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n_targets: 800,
            n_sources: 200,
            min_segments: 10,
            max_segments: 40,
            dim: 128,
            sigma: 0.1,
            seed: 42,
        }
    }
}

pub struct PlantedCorpus {
    pub source: EmbeddingStore,
    pub target: EmbeddingStore,
    pub source_segments: Vec<SegmentedDocument>,
    pub target_segments: Vec<SegmentedDocument>,
    pub gold: GoldPairs,
}

fn unit_row(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let mut row: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if normalize_row(&mut row).is_ok() {
            return row;
        }
    }
}

fn entries(prefix: &str, lens: &[usize]) -> Vec<IndexEntry> {
    let mut start = 0;
    lens.iter()
        .enumerate()
        .map(|(i, &n)| {
            let e = IndexEntry {
                doc_id: format!("{prefix}{i:04}"),
                start_line: start,
                n_segments: n,
            };
            start += n;
            e
        })
        .collect()
}

fn segmented(entries: &[IndexEntry], token_lens: &[Vec<usize>]) -> Vec<SegmentedDocument> {
    entries
        .iter()
        .zip(token_lens)
        .map(|(e, lens)| SegmentedDocument {
            doc_id: e.doc_id.clone(),
            segments: build_segments(lens.iter().enumerate().map(|(i, &n)| (format!("{} segment {i}", e.doc_id), n))),
        })
        .collect()
}

/// Builds the corpus. The source/target seed streams are fixed by `seed`,
/// so corpora that differ only in `sigma` share their targets and pairing.
pub fn planted_corpus(cfg: &PlantedConfig) -> Result<PlantedCorpus> {
    if cfg.n_sources > cfg.n_targets || cfg.min_segments == 0 || cfg.min_segments > cfg.max_segments || cfg.dim == 0 {
        return Err(Error::Parameter(format!("invalid planted corpus config {cfg:?}")));
    }
    let noise = Normal::new(0.0, cfg.sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut tgt_lens = Vec::with_capacity(cfg.n_targets);
    let mut tgt_tokens = Vec::with_capacity(cfg.n_targets);
    let mut tgt_data = Vec::new();
    for _ in 0..cfg.n_targets {
        let n = rng.random_range(cfg.min_segments..=cfg.max_segments);
        tgt_lens.push(n);
        tgt_tokens.push((0..n).map(|_| rng.random_range(5..=40)).collect::<Vec<usize>>());
        for _ in 0..n {
            tgt_data.extend(unit_row(&mut rng, cfg.dim));
        }
    }
    let mut picks: Vec<usize> = (0..cfg.n_targets).collect();
    picks.shuffle(&mut rng);
    picks.truncate(cfg.n_sources);

    let tgt_entries = entries("t", &tgt_lens);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);
    let mut src_lens = Vec::with_capacity(cfg.n_sources);
    let mut src_tokens = Vec::with_capacity(cfg.n_sources);
    let mut src_data = Vec::new();
    for &t in &picks {
        let e = &tgt_entries[t];
        src_lens.push(e.n_segments);
        src_tokens.push(tgt_tokens[t].clone());
        for r in e.start_line..e.start_line + e.n_segments {
            let mut row: Vec<f32> = tgt_data[r * cfg.dim..(r + 1) * cfg.dim]
                .iter()
                .map(|&x| (x as f64 + noise.sample(&mut noise_rng)) as f32)
                .collect();
            normalize_row(&mut row).map_err(|why| Error::Data(why.into()))?;
            src_data.extend(row);
        }
    }
    let src_entries = entries("s", &src_lens);
    let gold = GoldPairs::new(
        src_entries
            .iter()
            .zip(&picks)
            .map(|(s, &t)| (s.doc_id.clone(), tgt_entries[t].doc_id.clone())),
    );
    Ok(PlantedCorpus {
        source_segments: segmented(&src_entries, &src_tokens),
        target_segments: segmented(&tgt_entries, &tgt_tokens),
        source: EmbeddingStore::from_parts(Side::Source, cfg.dim, src_data, &src_entries)?,
        target: EmbeddingStore::from_parts(Side::Target, cfg.dim, tgt_data, &tgt_entries)?,
        gold,
    })
}
