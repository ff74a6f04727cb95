//! Paired approximate randomization test over the symmetric difference of two
//! alignment sets.

use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{f1_from_counts, GoldPairs};
use crate::assignment::AlignmentSet;
use crate::Result;

/// Symmetric differences up to this size are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 20;
/// Shuffles drawn when the symmetric difference is larger.
pub const SAMPLED_TRIALS: u64 = 1 << 20;

const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    F1SourceSide,
    Recall,
}

impl Metric {
    /// Every supported metric depends only on how many predictions are
    /// correct and how many there are.
    fn eval(self, correct: u64, size: u64, gold: &GoldPairs) -> f64 {
        match self {
            Metric::F1SourceSide => f1_from_counts(correct as usize, size as usize, gold.unique_sources()).f1,
            Metric::Recall => correct as f64 / gold.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigTestOptions {
    pub metric: Metric,
    pub seed: u64,
}

impl Default for SigTestOptions {
    fn default() -> Self {
        SigTestOptions {
            metric: Metric::F1SourceSide,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigTestResult {
    pub metric: Metric,
    pub metric_a: f64,
    pub metric_b: f64,
    /// True when the inputs were swapped so that `metric_a >= metric_b`.
    pub swapped: bool,
    pub sym_diff: usize,
    pub exhaustive: bool,
    pub trials: u64,
    pub exceed: u64,
    pub p_value: f64,
}

/// Bit-packed membership of the differing pairs.
struct Split {
    words: usize,
    correct: Vec<u64>,
    last_mask: u64,
}

impl Split {
    fn new(correct_flags: &[bool]) -> Self {
        let words = correct_flags.len().div_ceil(64).max(1);
        let mut correct = vec![0u64; words];
        for (k, &c) in correct_flags.iter().enumerate() {
            if c {
                correct[k / 64] |= 1 << (k % 64);
            }
        }
        let rem = correct_flags.len() % 64;
        let last_mask = if rem == 0 && !correct_flags.is_empty() { u64::MAX } else { (1u64 << rem) - 1 };
        Split {
            words,
            correct,
            last_mask,
        }
    }

    /// (correct, size) of the elements whose bit is set.
    fn counts(&self, bits: &[u64]) -> (u64, u64) {
        let mut c = 0;
        let mut n = 0;
        for (w, (&b, &cw)) in bits.iter().zip(&self.correct).enumerate() {
            let b = if w + 1 == self.words { b & self.last_mask } else { b };
            n += b.count_ones() as u64;
            c += (b & cw).count_ones() as u64;
        }
        (c, n)
    }
}

/// Tests whether `a` beats `b` on `opts.metric` beyond chance.
///
/// Pairs in both sets are kept on both sides; each pair in exactly one set
/// is assigned at random to one of the two pseudo-systems. The p-value is
/// `(n + 1) / (trials + 1)` where `n` counts trials whose metric gap exceeds
/// the observed gap.
pub fn randomization_test(a: &AlignmentSet, b: &AlignmentSet, gold: &GoldPairs, opts: &SigTestOptions) -> Result<SigTestResult> {
    gold.require_non_empty()?;
    let set_a: HashSet<(&str, &str)> = a.id_pairs().collect();
    let set_b: HashSet<(&str, &str)> = b.id_pairs().collect();
    let is_correct = |p: &(&str, &str)| gold.contains(p.0, p.1);

    let common = set_a.intersection(&set_b).count() as u64;
    let common_correct = set_a.intersection(&set_b).filter(|p| is_correct(p)).count() as u64;
    let mut only_a: Vec<(&str, &str)> = set_a.difference(&set_b).copied().collect();
    let mut only_b: Vec<(&str, &str)> = set_b.difference(&set_a).copied().collect();
    only_a.sort_unstable();
    only_b.sort_unstable();

    let metric = opts.metric;
    let score = |correct: u64, size: u64| metric.eval(correct, size, gold);
    let a_correct = common_correct + only_a.iter().filter(|p| is_correct(p)).count() as u64;
    let b_correct = common_correct + only_b.iter().filter(|p| is_correct(p)).count() as u64;
    let mut ma = score(a_correct, common + only_a.len() as u64);
    let mut mb = score(b_correct, common + only_b.len() as u64);

    // diff elements: A's exclusive pairs first, so "all bits set" reproduces A
    let swapped = ma < mb;
    if swapped {
        std::mem::swap(&mut only_a, &mut only_b);
        std::mem::swap(&mut ma, &mut mb);
    }
    let flags: Vec<bool> = only_a.iter().chain(&only_b).map(is_correct).collect();
    let d = flags.len();
    let split = Split::new(&flags);
    let total_correct = flags.iter().filter(|&&c| c).count() as u64;
    let observed = ma - mb;

    let trial_exceeds = |bits: &[u64]| {
        let (c1, n1) = split.counts(bits);
        let gap = score(common_correct + c1, common + n1) - score(common_correct + total_correct - c1, common + d as u64 - n1);
        gap > observed
    };

    let exhaustive = d <= EXHAUSTIVE_LIMIT;
    let trials: u64 = if exhaustive { 1 << d } else { SAMPLED_TRIALS };
    let chunks = trials.div_ceil(CHUNK);
    let exceed: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(trials);
            if exhaustive {
                (lo..hi).filter(|&mask| trial_exceeds(&[mask])).count() as u64
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(chunk);
                let mut bits = vec![0u64; split.words];
                (lo..hi)
                    .filter(|_| {
                        bits.iter_mut().for_each(|w| *w = rng.next_u64());
                        trial_exceeds(&bits)
                    })
                    .count() as u64
            }
        })
        .sum();

    Ok(SigTestResult {
        metric,
        metric_a: ma,
        metric_b: mb,
        swapped,
        sym_diff: d,
        exhaustive,
        trials,
        exceed,
        p_value: (exceed + 1) as f64 / (trials + 1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::tests::{gold, set};

    #[test]
    fn identical_sets_give_half() {
        let g = gold(&[("a", "1"), ("b", "2")]);
        let a = set(&[("a", "1"), ("b", "3")]);
        let r = randomization_test(&a, &a, &g, &SigTestOptions::default()).unwrap();
        assert_eq!(r.sym_diff, 0);
        assert_eq!(r.trials, 1);
        assert_eq!(r.exceed, 0);
        assert_eq!(r.p_value, 0.5);
    }

    #[test]
    fn single_difference_enumerates_two_trials() {
        let g = gold(&[("a", "1"), ("b", "2")]);
        let a = set(&[("a", "1"), ("b", "2")]);
        let b = set(&[("a", "1")]);
        let r = randomization_test(&a, &b, &g, &SigTestOptions::default()).unwrap();
        assert_eq!((r.sym_diff, r.trials), (1, 2));
        // the unchanged split ties the observed gap, the swapped one reverses it
        assert_eq!(r.exceed, 0);
        assert_eq!(r.p_value, 1.0 / 3.0);
        // argument order does not matter
        let r2 = randomization_test(&b, &a, &g, &SigTestOptions::default()).unwrap();
        assert!(r2.swapped);
        assert_eq!(r2.p_value, r.p_value);
    }

    /// Brute-force enumeration over explicit pair sets, recomputing F1 from scratch.
    fn brute_force_p(a: &AlignmentSet, b: &AlignmentSet, g: &GoldPairs) -> f64 {
        use crate::evaluation::f1_source_side;
        use crate::assignment::{AlignedPair, AlignmentSet as S};
        let sa: HashSet<(&str, &str)> = a.id_pairs().collect();
        let sb: HashSet<(&str, &str)> = b.id_pairs().collect();
        let mut diff: Vec<(&str, &str)> = sa.symmetric_difference(&sb).copied().collect();
        diff.sort();
        let common: Vec<(&str, &str)> = sa.intersection(&sb).copied().collect();
        let mk = |v: &[(&str, &str)]| S {
            pairs: v
                .iter()
                .map(|(s, t)| AlignedPair { src_id: s.to_string(), tgt_id: t.to_string(), score: 0.0 })
                .collect(),
        };
        let (fa, fb) = (f1_source_side(a, g).unwrap().f1, f1_source_side(b, g).unwrap().f1);
        let observed = (fa - fb).abs();
        let trials = 1u64 << diff.len();
        let mut n = 0;
        for mask in 0..trials {
            let mut p1 = common.clone();
            let mut p2 = common.clone();
            for (k, p) in diff.iter().enumerate() {
                if mask >> k & 1 == 1 { p1.push(*p) } else { p2.push(*p) }
            }
            let gap = f1_source_side(&mk(&p1), g).unwrap().f1 - f1_source_side(&mk(&p2), g).unwrap().f1;
            if gap > observed {
                n += 1;
            }
        }
        (n + 1) as f64 / (trials + 1) as f64
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let g = gold(&[("a", "1"), ("b", "2"), ("c", "3"), ("d", "4"), ("e", "5"), ("e", "6")]);
        let a = set(&[("a", "1"), ("b", "2"), ("c", "3"), ("d", "9"), ("e", "5")]);
        let b = set(&[("a", "1"), ("b", "7"), ("c", "8"), ("d", "4"), ("x", "6")]);
        let r = randomization_test(&a, &b, &g, &SigTestOptions::default()).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.sym_diff, 8);
        assert!((r.p_value - brute_force_p(&a, &b, &g)).abs() < 1e-15);
    }

    #[test]
    fn sampled_is_reproducible() {
        let pairs: Vec<(String, String)> = (0..30).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
        let g = GoldPairs::new(pairs.clone());
        let a: Vec<(&str, &str)> = pairs.iter().take(25).map(|(s, t)| (s.as_str(), t.as_str())).collect();
        let wrong: Vec<(String, String)> = (0..12).map(|i| (format!("w{i}"), format!("t{i}"))).collect();
        let b: Vec<(&str, &str)> = pairs
            .iter()
            .skip(10)
            .take(11)
            .chain(&wrong)
            .map(|(s, t)| (s.as_str(), t.as_str()))
            .collect();
        let (a, b) = (set(&a), set(&b));
        let opts = SigTestOptions::default();
        let r1 = randomization_test(&a, &b, &g, &opts).unwrap();
        let r2 = randomization_test(&a, &b, &g, &opts).unwrap();
        assert!(!r1.exhaustive);
        assert_eq!(r1.sym_diff, 14 + 12);
        assert_eq!(r1.trials, SAMPLED_TRIALS);
        assert_eq!(r1, r2);
        assert!(r1.p_value > 0.0 && r1.p_value < 0.01);
    }
}
