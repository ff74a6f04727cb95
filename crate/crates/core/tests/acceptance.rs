//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion. Set
//! `DOCALIGN_ACCEPTANCE_STRICT` to exit non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use docalign::assignment::{AlignedPair, AlignmentSet};
use docalign::corpus::{Document, DocumentStore};
use docalign::docvec::DocVecMethod;
use docalign::embedding_io::{normalize_row, Rows};
use docalign::evaluation::{
    f1_source_side, randomization_test, recall, recall_by_length, soft_recall, EvalReport, GoldPairs, LengthSide,
    SigTestOptions, SAMPLED_TRIALS,
};
use docalign::pipeline::{align, Pipeline, PipelineConfig};
use docalign::retrieval::{Candidate, CandidateList};
use docalign::scoring::{
    bimax, gmd_score, greedy_transport_cost, ot_score, rerank, sinkhorn, Method, PairDoc, RerankSpec, SideData,
    SinkhornParams, WeightScheme,
};
use docalign::segmentation::{
    apply_blob_overlap, ofls_windows, segment_blob, segment_ofls, segment_sbs, BlobOverlap, Segment, WhitespaceTokenizer,
};
use docalign::synth::{planted_corpus, PlantedConfig};
use docalign::Side;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;

// criterion 1
const BIMAX_INSTANCES: usize = 200;
const BIMAX_ORACLE_TOL: f64 = 1e-6;
const BIMAX_SYMMETRY_TOL: f64 = 1e-9;
const BIMAX_BUDGET: Duration = Duration::from_secs(5);

// criterion 2
const OT_INSTANCES: usize = 100;
const OT_EPS: f64 = 0.01;
const OT_COST_TOL: f64 = 1e-3;
const OT_MARGINAL_TOL: f64 = 1e-6;
const OT_BUDGET: Duration = Duration::from_secs(10);

// criterion 3
const GMD_INSTANCES: usize = 100;
const GMD_PERMUTATION_TOL: f64 = 1e-9;

// criterion 4
const PLANTED_K: usize = 20;
const PLANTED_MIN_RECALL: f64 = 0.95;
const PLANTED_SIGMAS: [f64; 3] = [0.1, 0.3, 0.6];
const PLANTED_BUDGET: Duration = Duration::from_secs(60);

// criterion 5
const THROUGHPUT_DOCS: usize = 100;
const THROUGHPUT_SEGMENTS: usize = 50;
const THROUGHPUT_DIM: usize = 128;
const THROUGHPUT_MIN_RATIO: f64 = 20.0;
const THROUGHPUT_BUDGET: Duration = Duration::from_secs(600);

// criterion 7
const OFLS_COMBINATIONS: usize = 1000;
const BLOB_PROFILES: usize = 100;

// criterion 8
const MNRN_F1: f64 = 0.9612;
const MNRN_F1_TOL: f64 = 0.02;
const FERNANDO_WEIGHTED_RECALL: f64 = 95.41;
const FERNANDO_TOL_POINTS: f64 = 1.5;

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.2?}, budget {budget:?}"))?;
    Ok(t)
}

fn random_unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(n * d);
    while out.len() < n * d {
        let mut row: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if normalize_row(&mut row).is_ok() {
            out.extend(row);
        }
    }
    out
}

fn scalar_maxsim(s: &[f32], t: &[f32], d: usize) -> f64 {
    let (ns, nt) = (s.len() / d, t.len() / d);
    let mut total = 0.0;
    for i in 0..ns {
        let mut best = f64::NEG_INFINITY;
        for j in 0..nt {
            let mut acc = 0.0;
            for k in 0..d {
                acc += f64::from(s[i * d + k]) * f64::from(t[j * d + k]);
            }
            if acc > best {
                best = acc;
            }
        }
        total += best;
    }
    total / ns as f64
}

fn criterion_bimax() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_oracle, mut worst_sym) = (0f64, 0f64);
    for _ in 0..BIMAX_INSTANCES {
        let (ns, nt, d) = (rng.random_range(1..=50), rng.random_range(1..=50), rng.random_range(1..=64));
        let s = random_unit_rows(&mut rng, ns, d);
        let t = random_unit_rows(&mut rng, nt, d);
        let st = bimax(Rows::new(&s, d), Rows::new(&t, d)).map_err(|e| e.to_string())?;
        let ts = bimax(Rows::new(&t, d), Rows::new(&s, d)).map_err(|e| e.to_string())?;
        let oracle = 0.5 * (scalar_maxsim(&s, &t, d) + scalar_maxsim(&t, &s, d));
        worst_oracle = worst_oracle.max((st - oracle).abs());
        worst_sym = worst_sym.max((st - ts).abs());
    }
    ensure(worst_oracle <= BIMAX_ORACLE_TOL, || format!("oracle gap {worst_oracle:e}"))?;
    ensure(worst_sym < BIMAX_SYMMETRY_TOL, || format!("asymmetry {worst_sym:e}"))?;
    let t = within_budget(start, BIMAX_BUDGET)?;
    Ok(format!(
        "{BIMAX_INSTANCES} instances, max oracle gap {worst_oracle:.1e}, max asymmetry {worst_sym:.1e}, {t:.2?}"
    ))
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Exact 2x2 optimum: the plan is fixed by its (0,0) entry, and the cost is
/// linear in it, so the optimum sits at an end of the feasible interval.
fn exact_2x2(c: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let lo = (a[0] - b[1]).max(0.0);
    let hi = a[0].min(b[0]);
    let at = |x: f64| x * c[0] + (a[0] - x) * c[1] + (b[0] - x) * c[2] + (a[1] - b[0] + x) * c[3];
    at(lo).min(at(hi))
}

/// Exact optimum of the entropic 2x2 problem. Stationarity in the free entry
/// `x` is monotone, so bisection finds it.
fn entropic_2x2(c: &[f64], a: &[f64], b: &[f64], eps: f64) -> f64 {
    let (mut lo, mut hi) = ((a[0] - b[1]).max(0.0), a[0].min(b[0]));
    let slope = c[0] - c[1] - c[2] + c[3];
    let g = |x: f64| slope + eps * (x.ln() + (a[1] - b[0] + x).ln() - (a[0] - x).ln() - (b[0] - x).ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    x * c[0] + (a[0] - x) * c[1] + (b[0] - x) * c[2] + (a[1] - b[0] + x) * c[3]
}

fn criterion_ot() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let params = SinkhornParams {
        eps: OT_EPS,
        max_iter: 100_000,
        tol: 1e-8,
    };
    let mut worst_1xn = 0f64;
    let mut worst_marginal = 0f64;
    let mut gaps_2x2 = Vec::with_capacity(OT_INSTANCES);
    let mut worst_entropic = 0f64;
    let mut check_marginals = |out: &docalign::scoring::SinkhornOutcome, a: &[f64], b: &[f64]| {
        for (got, want) in out.plan.row_sums().iter().zip(a).chain(out.plan.col_sums().iter().zip(b)) {
            worst_marginal = worst_marginal.max((got - want).abs());
        }
    };
    for _ in 0..OT_INSTANCES {
        let n = rng.random_range(1..=50);
        let b = random_distribution(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let out = sinkhorn(&c, &[1.0], &b, &params).map_err(|e| e.to_string())?;
        let exact: f64 = b.iter().zip(&c).map(|(x, y)| x * y).sum();
        worst_1xn = worst_1xn.max((out.cost - exact).abs());
        check_marginals(&out, &[1.0], &b);
    }
    for _ in 0..OT_INSTANCES {
        let a = random_distribution(&mut rng, 2);
        let b = random_distribution(&mut rng, 2);
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
        let out = sinkhorn(&c, &a, &b, &params).map_err(|e| e.to_string())?;
        gaps_2x2.push((out.cost - exact_2x2(&c, &a, &b)).abs());
        worst_entropic = worst_entropic.max((out.cost - entropic_2x2(&c, &a, &b, OT_EPS)).abs());
        check_marginals(&out, &a, &b);
    }
    let worst_2x2 = gaps_2x2.iter().copied().fold(0.0, f64::max);
    let over = gaps_2x2.iter().filter(|&&g| g > OT_COST_TOL).count();
    let summary = format!(
        "1xN max gap {worst_1xn:.1e}; 2x2 max gap {worst_2x2:.1e} ({over}/{OT_INSTANCES} over {OT_COST_TOL:e}), {worst_entropic:.1e} from the entropic optimum; max marginal error {worst_marginal:.1e}"
    );
    ensure(worst_1xn <= OT_COST_TOL, || summary.clone())?;
    ensure(over == 0, || summary.clone())?;
    ensure(worst_marginal <= OT_MARGINAL_TOL, || summary.clone())?;
    let t = within_budget(start, OT_BUDGET)?;
    Ok(format!("{summary}, {t:.2?}"))
}

fn segs(lens: &[usize]) -> Vec<Segment> {
    lens.iter()
        .enumerate()
        .map(|(i, &n)| Segment {
            text: format!("s{i}"),
            token_len: n,
            position: i,
        })
        .collect()
}

fn criterion_gmd() -> Check {
    // identical documents, uniform weights
    let rows = [1.0f32, 0.0, 0.0, 0.0, 1.0, 0.0, 0.6, 0.8, 0.0];
    let s3 = segs(&[1, 1, 1]);
    let doc = PairDoc::new(Rows::new(&rows, 3), &s3);
    let identical = gmd_score(&doc, &doc, WeightScheme::Uniform).map_err(|e| e.to_string())?;
    // 1xN: equals the forced-plan OT value 1 - (0.5*0.2 + 0.5*0.8)
    let src = [1.0f32, 0.0];
    let tgt = [0.8f32, 0.6, 0.2, (1.0f32 - 0.04).sqrt()];
    let (s1, s2) = (segs(&[1]), segs(&[1, 1]));
    let (ds, dt) = (PairDoc::new(Rows::new(&src, 2), &s1), PairDoc::new(Rows::new(&tgt, 2), &s2));
    let one_by_n = gmd_score(&ds, &dt, WeightScheme::Uniform).map_err(|e| e.to_string())?;
    let forced = ot_score(&ds, &dt, WeightScheme::Uniform, &SinkhornParams::default())
        .map_err(|e| e.to_string())?
        .score;
    // 2x2 hand simulation
    let greedy = greedy_transport_cost(&[0.1, 0.9, 0.4, 0.2], &[0.5, 0.5], &[0.5, 0.5]);
    ensure(identical == 1.0, || format!("identical docs scored {identical}"))?;
    ensure((one_by_n - forced).abs() < 1e-12 && (one_by_n - 0.5).abs() < 1e-6, || {
        format!("1xN gmd {one_by_n} vs ot {forced}")
    })?;
    ensure(1.0 - greedy == 1.0 - (0.5 * 0.1 + 0.5 * 0.2), || format!("2x2 score {}", 1.0 - greedy))?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0f64;
    for _ in 0..GMD_INSTANCES {
        let (ns, nt, d) = (rng.random_range(2..=12), rng.random_range(2..=12), rng.random_range(2..=16));
        let s = random_unit_rows(&mut rng, ns, d);
        let t = random_unit_rows(&mut rng, nt, d);
        let costs: Vec<f64> = (0..ns)
            .flat_map(|i| (0..nt).map(move |j| (i, j)))
            .map(|(i, j)| docalign::embedding_io::dot(&s[i * d..(i + 1) * d], &t[j * d..(j + 1) * d]))
            .collect();
        let mut sorted = costs.clone();
        sorted.sort_by(f64::total_cmp);
        ensure(sorted.windows(2).all(|w| w[0] != w[1]), || "instance with tied costs".to_string())?;
        let ls: Vec<usize> = (0..ns).map(|_| rng.random_range(1..40)).collect();
        let lt: Vec<usize> = (0..nt).map(|_| rng.random_range(1..40)).collect();
        let (ss, st) = (segs(&ls), segs(&lt));
        let score = |s: &[f32], ss: &[Segment], t: &[f32], st: &[Segment]| {
            gmd_score(&PairDoc::new(Rows::new(s, d), ss), &PairDoc::new(Rows::new(t, d), st), WeightScheme::SegmentLength)
        };
        let base = score(&s, &ss, &t, &st).map_err(|e| e.to_string())?;
        let mut ps: Vec<usize> = (0..ns).collect();
        let mut pt: Vec<usize> = (0..nt).collect();
        ps.shuffle(&mut rng);
        pt.shuffle(&mut rng);
        let s2: Vec<f32> = ps.iter().flat_map(|&i| s[i * d..(i + 1) * d].to_vec()).collect();
        let t2: Vec<f32> = pt.iter().flat_map(|&j| t[j * d..(j + 1) * d].to_vec()).collect();
        let ss2: Vec<Segment> = ps.iter().map(|&i| ss[i].clone()).collect();
        let st2: Vec<Segment> = pt.iter().map(|&j| st[j].clone()).collect();
        let permuted = score(&s2, &ss2, &t2, &st2).map_err(|e| e.to_string())?;
        worst = worst.max((base - permuted).abs());
    }
    ensure(worst < GMD_PERMUTATION_TOL, || format!("permutation changed score by {worst:e}"))?;
    Ok(format!("3 hand cases exact; {GMD_INSTANCES} permuted instances, max change {worst:.1e}"))
}

fn planted_recall(sigma: f64) -> Result<f64, String> {
    let corpus = planted_corpus(&PlantedConfig {
        sigma,
        ..PlantedConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let out = align(
        SideData {
            embeddings: &corpus.source,
            segments: &corpus.source_segments,
        },
        SideData {
            embeddings: &corpus.target,
            segments: &corpus.target_segments,
        },
        DocVecMethod::Mean,
        PLANTED_K,
        &RerankSpec::new(Method::Bimax),
    )
    .map_err(|e| e.to_string())?;
    recall(&out.alignment, &corpus.gold).map_err(|e| e.to_string())
}

fn criterion_planted() -> Check {
    let start = Instant::now();
    let recalls = PLANTED_SIGMAS
        .iter()
        .map(|&s| planted_recall(s))
        .collect::<Result<Vec<f64>, String>>()?;
    let shown: Vec<String> = PLANTED_SIGMAS
        .iter()
        .zip(&recalls)
        .map(|(s, r)| format!("sigma {s}: {r:.3}"))
        .collect();
    let summary = shown.join(", ");
    ensure(recalls[0] >= PLANTED_MIN_RECALL, || format!("{summary}; need >= {PLANTED_MIN_RECALL}"))?;
    ensure(recalls.windows(2).all(|w| w[1] <= w[0]), || format!("{summary}; not monotone"))?;
    let t = within_budget(start, PLANTED_BUDGET)?;
    Ok(format!("{summary}, {t:.2?}"))
}

fn criterion_throughput() -> Check {
    let start = Instant::now();
    let corpus = planted_corpus(&PlantedConfig {
        n_targets: THROUGHPUT_DOCS,
        n_sources: THROUGHPUT_DOCS,
        min_segments: THROUGHPUT_SEGMENTS,
        max_segments: THROUGHPUT_SEGMENTS,
        dim: THROUGHPUT_DIM,
        ..PlantedConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let candidates: Vec<CandidateList> = corpus
        .source
        .ranges()
        .iter()
        .map(|s| CandidateList {
            src_id: s.doc_id.clone(),
            candidates: corpus
                .target
                .ranges()
                .iter()
                .map(|t| Candidate {
                    tgt_id: t.doc_id.clone(),
                    score: 0.0,
                })
                .collect(),
        })
        .collect();
    let src = SideData {
        embeddings: &corpus.source,
        segments: &corpus.source_segments,
    };
    let tgt = SideData {
        embeddings: &corpus.target,
        segments: &corpus.target_segments,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let run = |spec: RerankSpec| pool.install(|| rerank(&candidates, &spec, src, tgt)).map_err(|e| e.to_string());
    let bimax_report = run(RerankSpec::new(Method::Bimax))?.report;
    let ot_report = run(RerankSpec {
        method: Method::Ot,
        weighting: None,
        sinkhorn: SinkhornParams {
            eps: 0.05,
            max_iter: 200,
            tol: 1e-6,
        },
    })?
    .report;
    let ratio = bimax_report.pairs_per_sec / ot_report.pairs_per_sec;
    let summary = format!(
        "{} pairs; BiMax {:.0} pairs/s, OT {:.0} pairs/s ({} hit max_iter), ratio {ratio:.1}x",
        bimax_report.pairs, bimax_report.pairs_per_sec, ot_report.pairs_per_sec, ot_report.non_converged
    );
    ensure(ratio >= THROUGHPUT_MIN_RATIO, || format!("{summary}; need >= {THROUGHPUT_MIN_RATIO}x"))?;
    let t = within_budget(start, THROUGHPUT_BUDGET)?;
    Ok(format!("{summary}, {t:.1?}"))
}

fn docs(side: Side, items: &[(&str, String)]) -> DocumentStore {
    let docs = items
        .iter()
        .map(|(id, text)| Document {
            doc_id: id.to_string(),
            url: format!("https://x/{id}"),
            domain: "x".into(),
            lang: side,
            text: text.clone(),
        })
        .collect();
    DocumentStore::from_documents(side, docs).expect("fixture store")
}

fn set(pairs: &[(&str, &str)]) -> AlignmentSet {
    AlignmentSet {
        pairs: pairs
            .iter()
            .map(|(s, t)| AlignedPair {
                src_id: s.to_string(),
                tgt_id: t.to_string(),
                score: 0.0,
            })
            .collect(),
    }
}

fn gold(pairs: &[(&str, &str)]) -> GoldPairs {
    GoldPairs::new(pairs.iter().map(|(s, t)| (s.to_string(), t.to_string())))
}

fn criterion_metrics() -> Check {
    let e = |e: docalign::Error| e.to_string();
    let g4 = gold(&[("s1", "t1"), ("s2", "t2"), ("s3", "t3"), ("s4", "t4")]);
    let all4 = set(&[("s1", "t1"), ("s2", "t2"), ("s3", "t3"), ("s4", "t4")]);
    ensure(recall(&all4, &g4).map_err(e)? == 1.0, || "recall pred == gold".into())?;
    ensure(recall(&set(&[]), &g4).map_err(e)? == 0.0, || "recall empty".into())?;
    ensure(recall(&set(&[("s1", "t1"), ("s3", "t3")]), &g4).map_err(e)? == 0.5, || "recall 2 of 4".into())?;

    // soft recall
    let base: String = "abcdefghij".repeat(10);
    let mut edited = base.clone();
    edited.replace_range(50..51, "#");
    let src = docs(Side::Source, &[("s1", "source one".into()), ("s2", "source two".into())]);
    let tgt = docs(
        Side::Target,
        &[("t1", base.clone()), ("t1b", edited), ("t2", "zzzz".into()), ("t9", "q".repeat(100))],
    );
    let g = gold(&[("s1", "t1")]);
    ensure(soft_recall(&set(&[("s1", "t1")]), &g, &src, &tgt, 0.05).map_err(e)? == 1.0, || "soft pred == gold".into())?;
    ensure(soft_recall(&set(&[("s1", "t1b")]), &g, &src, &tgt, 0.05).map_err(e)? == 1.0, || {
        "soft one-edit near duplicate".into()
    })?;
    ensure(soft_recall(&set(&[("s2", "t9")]), &g, &src, &tgt, 0.05).map_err(e)? == 0.0, || {
        "soft both sides differ".into()
    })?;

    // source-side F1
    let many: Vec<(String, String)> = (0..232).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
    let many_ref: Vec<(&str, &str)> = many.iter().map(|(s, t)| (s.as_str(), t.as_str())).collect();
    let f = f1_source_side(&set(&many_ref), &gold(&many_ref)).map_err(e)?;
    ensure(f.f1 == 1.0, || format!("232 correct gave f1 {}", f.f1))?;
    let f = f1_source_side(&set(&[("s0", "t1")]), &gold(&many_ref)).map_err(e)?;
    ensure(f.f1 == 0.0, || format!("0 correct gave f1 {}", f.f1))?;
    let g3 = gold(&[("a", "1"), ("a", "2"), ("b", "3")]);
    let f = f1_source_side(&set(&[("a", "1"), ("b", "9")]), &g3).map_err(e)?;
    ensure((f.precision, f.recall, f.f1) == (0.5, 0.5, 0.5), || format!("3-pair fixture gave {f:?}"))?;

    // length bins
    let words = |n: usize| vec!["w"; n].join(" ");
    let src = docs(
        Side::Source,
        &[("s1", words(10)), ("s2", words(100)), ("s3", words(300)), ("s4", words(500))],
    );
    let bins = recall_by_length(&set(&[("s1", "t1"), ("s2", "t2"), ("s3", "t3")]), &g4, &src, LengthSide::Source, &[0, 256])
        .map_err(e)?;
    ensure(bins.iter().map(|b| b.recall) .eq([Some(1.0), Some(0.5)]), || format!("2-bin fixture {bins:?}"))?;
    let one_bin = recall_by_length(&set(&[("s1", "t1")]), &g4, &src, LengthSide::Source, &[0]).map_err(e)?;
    ensure(one_bin[0].recall == Some(0.25), || "single bin differs from overall recall".into())?;
    let perfect = recall_by_length(&all4, &g4, &src, LengthSide::Source, &[0, 256, 1024, 2048]).map_err(e)?;
    ensure(perfect.iter().all(|b| b.recall.is_none_or(|r| r == 1.0)), || "perfect predictions".into())?;

    // randomization test
    let opts = SigTestOptions::default();
    let same = randomization_test(&all4, &all4, &g4, &opts).map_err(e)?;
    ensure(same.p_value == 0.5 && same.trials == 1, || format!("A == B gave p {}", same.p_value))?;
    let one = randomization_test(&all4, &set(&[("s1", "t1"), ("s2", "t2"), ("s3", "t3")]), &g4, &opts).map_err(e)?;
    ensure(one.trials == 2 && [1.0 / 3.0, 2.0 / 3.0].contains(&one.p_value), || {
        format!("|D| = 1 gave p {} over {} trials", one.p_value, one.trials)
    })?;
    let big: Vec<(String, String)> = (0..30).map(|i| (format!("s{i}"), format!("t{i}"))).collect();
    let big_ref: Vec<(&str, &str)> = big.iter().map(|(s, t)| (s.as_str(), t.as_str())).collect();
    let gbig = gold(&big_ref);
    let a = set(&big_ref[..21]);
    let b = set(&[]);
    let r1 = randomization_test(&a, &b, &gbig, &opts).map_err(e)?;
    let r2 = randomization_test(&a, &b, &gbig, &opts).map_err(e)?;
    ensure(r1.sym_diff == 21 && !r1.exhaustive && r1.trials == SAMPLED_TRIALS, || {
        format!("|D| = 21 ran {} trials", r1.trials)
    })?;
    ensure(r1 == r2, || "sampled mode not reproducible".into())?;
    Ok(format!(
        "recall, soft recall, F1, length bins and randomization fixtures; |D|=1 p = {:.4}, |D|=21 p = {:.2e}",
        one.p_value, r1.p_value
    ))
}

fn seg_doc(text: String) -> Document {
    Document {
        doc_id: "d".into(),
        url: "u".into(),
        domain: "x".into(),
        lang: Side::Source,
        text,
    }
}

fn criterion_segmentation() -> Check {
    let tokens: Vec<String> = (0..100).map(|i| format!("t{i}")).collect();
    let seg = segment_ofls(&seg_doc(tokens.join(" ")), &WhitespaceTokenizer, 30, 0.5).map_err(|e| e.to_string())?;
    let firsts: Vec<&str> = seg.segments.iter().map(|s| s.text.split(' ').next().unwrap_or("")).collect();
    let lens: Vec<usize> = seg.segments.iter().map(|s| s.token_len).collect();
    ensure(firsts == ["t0", "t15", "t30", "t45", "t60", "t75"] && lens == [30, 30, 30, 30, 30, 25], || {
        format!("OFLS(100, 30, 0.5) gave starts {firsts:?} lengths {lens:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..OFLS_COMBINATIONS {
        let t = rng.random_range(1..=2000);
        let fl = rng.random_range(2..=200);
        let or = rng.random_range(0.0..0.95);
        let stride = ((fl as f64 * (1.0 - or)).floor() as usize).max(1);
        let w = ofls_windows(t, fl, or);
        let mut covered_to = 0;
        for (k, &(s, e)) in w.iter().enumerate() {
            ensure(s <= covered_to && e > s, || format!("gap in OFLS({t}, {fl}, {or})"))?;
            covered_to = covered_to.max(e);
            if k + 1 < w.len() {
                let next = w[k + 1];
                let overlap = e.saturating_sub(next.0);
                ensure(next.1 == t || overlap == fl.saturating_sub(stride), || {
                    format!("overlap {overlap} in OFLS({t}, {fl}, {or})")
                })?;
            }
        }
        ensure(covered_to == t, || format!("OFLS({t}, {fl}, {or}) stops at {covered_to}"))?;
    }

    for _ in 0..BLOB_PROFILES {
        let n = rng.random_range(1..=30);
        let text = (0..n)
            .map(|s| {
                let len = rng.random_range(1..=60);
                let words: Vec<String> = (0..len).map(|i| format!("s{s}w{i}")).collect();
                format!("{}.", words.join(" "))
            })
            .collect::<Vec<_>>()
            .join(" ");
        let d = seg_doc(text);
        let max = rng.random_range(1..=150);
        let blobs = segment_blob(&d, &WhitespaceTokenizer, max).map_err(|e| e.to_string())?;
        let sentences = segment_sbs(&d, &WhitespaceTokenizer).map_err(|e| e.to_string())?;
        let joined = blobs.blobs.iter().map(|b| b.text()).collect::<Vec<_>>().join(" ");
        ensure(joined == sentences.texts().collect::<Vec<_>>().join(" "), || {
            "blob concatenation differs from the sentences".into()
        })?;
        for mode in [BlobOverlap::Tok(0.0), BlobOverlap::Sent(0), BlobOverlap::TokLim(0.0)] {
            let out = apply_blob_overlap(&blobs, mode, &WhitespaceTokenizer).map_err(|e| e.to_string())?;
            ensure(out == blobs.to_segmented(), || format!("{mode} is not the identity"))?;
        }
    }
    Ok(format!(
        "OFLS(100, 30, 0.5) exact; {OFLS_COMBINATIONS} OFLS combinations; {BLOB_PROFILES} blob profiles"
    ))
}

fn external_eval(var: &str) -> Result<Option<EvalReport>, String> {
    let Some(path) = std::env::var_os(var).map(PathBuf::from) else {
        return Ok(None);
    };
    let cfg = PipelineConfig::load(&path, &[]).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(cfg);
    pipeline.run_all().map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(pipeline.workdir().join("eval.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map(Some).map_err(|e| e.to_string())
}

fn criterion_datasets() -> Status {
    let mut parts = Vec::new();
    let mut failed = false;
    match external_eval("DOCALIGN_MNRN_CONFIG") {
        Ok(None) => parts.push("MnRN skipped (DOCALIGN_MNRN_CONFIG unset)".to_string()),
        Ok(Some(r)) => {
            let f1 = r.source_side.f1;
            failed |= (f1 - MNRN_F1).abs() > MNRN_F1_TOL;
            parts.push(format!("MnRN F1 {f1:.4} (target {MNRN_F1} +/- {MNRN_F1_TOL})"));
        }
        Err(e) => {
            failed = true;
            parts.push(format!("MnRN error: {e}"));
        }
    }
    match external_eval("DOCALIGN_FERNANDO_CONFIG") {
        Ok(None) => parts.push("Fernando skipped (DOCALIGN_FERNANDO_CONFIG unset)".to_string()),
        Ok(Some(r)) => {
            let w = r.weighted_recall.unwrap_or(0.0) * 100.0;
            failed |= (w - FERNANDO_WEIGHTED_RECALL).abs() > FERNANDO_TOL_POINTS;
            parts.push(format!(
                "Fernando weighted recall {w:.2}% (target {FERNANDO_WEIGHTED_RECALL} +/- {FERNANDO_TOL_POINTS})"
            ));
        }
        Err(e) => {
            failed = true;
            parts.push(format!("Fernando error: {e}"));
        }
    }
    let msg = parts.join("; ");
    let ran = std::env::var_os("DOCALIGN_MNRN_CONFIG").is_some() || std::env::var_os("DOCALIGN_FERNANDO_CONFIG").is_some();
    if failed {
        Status::Fail(msg)
    } else if ran {
        Status::Pass(msg)
    } else {
        Status::Skip(msg)
    }
}

fn run(f: impl FnOnce() -> Check) -> Status {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(msg)) => Status::Pass(msg),
        Ok(Err(msg)) => Status::Fail(msg),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Status::Fail(msg)
        }
    }
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this harness
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    type Criterion = Box<dyn FnOnce() -> Status>;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 bimax oracle equivalence", Box::new(|| run(criterion_bimax))),
        ("2 ot oracle equivalence", Box::new(|| run(criterion_ot))),
        ("3 gmd determinism and hand cases", Box::new(|| run(criterion_gmd))),
        ("4 planted-alignment benchmark", Box::new(|| run(criterion_planted))),
        ("5 bimax vs ot throughput", Box::new(|| run(criterion_throughput))),
        ("6 metric fixtures", Box::new(|| run(criterion_metrics))),
        ("7 segmentation fixtures", Box::new(|| run(criterion_segmentation))),
        ("8 dataset reproduction", Box::new(criterion_datasets)),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let status = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, msg) = match status {
            Status::Pass(m) => ("PASS", m),
            Status::Fail(m) => {
                failures += 1;
                ("FAIL", m)
            }
            Status::Skip(m) => ("SKIP", m),
        };
        println!("[{tag}] {name}: {msg} ({secs:.2}s)");
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        if std::env::var_os("DOCALIGN_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
