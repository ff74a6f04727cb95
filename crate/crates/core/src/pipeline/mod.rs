//! Stage orchestration over a working directory.
//!
//! Each stage reads the artifacts of earlier stages from the workdir, writes
//! its own, and records input/output hashes in `manifest.json`.

mod config;
mod manifest;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

pub use config::{apply_override, CorpusFormat, EvalSection, Paths, PipelineConfig, SideSegmentation, Stage};
pub use manifest::{sha256_file, Manifest, StageRecord, MANIFEST_FILE};

use crate::assignment::{one_to_one, read_alignment, write_alignment, AlignmentSet};
use crate::corpus::{dedup_exact, ingest_jsonl, ingest_tsv, write_tsv, DocumentStore};
use crate::docvec::{build_doc_vectors, read_doc_vectors, write_doc_vectors, DocVecMethod, DocVector};
use crate::embedding_io::{read_emb1, EmbeddingStore};
use crate::evaluation::{evaluate, randomization_test, read_gold};
use crate::provider::run_provider;
use crate::retrieval::{read_candidates, topk_blocked, write_candidates, CandidateList};
use crate::scoring::{read_scored, rerank, write_scored, RerankOutput, RerankSpec, SideData};
use crate::segmentation::{
    read_segments, read_token_sidecar, segment, segment_ofls_tokens, tokens_from_offsets, write_segments,
    SegmentationSpec, SegmentedDocument, WhitespaceTokenizer,
};
use crate::{Error, Result, Side};

/// Artifact file names inside the workdir.
pub mod artifacts {
    use crate::Side;

    pub fn docs(side: Side) -> String {
        format!("{side}.docs.tsv")
    }
    pub fn segments(side: Side) -> String {
        format!("{side}.segments.txt")
    }
    pub fn index(side: Side) -> String {
        format!("{side}.index.json")
    }
    pub fn embeddings(side: Side) -> String {
        format!("{side}.emb")
    }
    pub fn docvecs(side: Side) -> String {
        format!("{side}.docvec.emb")
    }
    pub fn docvec_index(side: Side) -> String {
        format!("{side}.docvec.index.json")
    }
    pub const INGEST_REPORT: &str = "ingest.json";
    pub const DOCVEC_REPORT: &str = "docvec.json";
    pub const CANDIDATES: &str = "candidates.tsv";
    pub const SCORED: &str = "scored.tsv";
    pub const THROUGHPUT: &str = "throughput.json";
    pub const ALIGNMENT: &str = "alignment.tsv";
    pub const EVAL_JSON: &str = "eval.json";
    pub const EVAL_TEXT: &str = "eval.txt";
    pub const SIGTEST: &str = "sigtest.json";
}

const SIDES: [Side; 2] = [Side::Source, Side::Target];

/// Runs pipeline stages for one config.
pub struct Pipeline {
    cfg: PipelineConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Pipeline { cfg }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn workdir(&self) -> &Path {
        &self.cfg.paths.workdir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.workdir().join(name)
    }

    /// Path of an upstream artifact, or an error naming the stage that makes it.
    fn upstream(&self, name: &str, what: &str, stage: Stage) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::Stage(format!("{what} not found; run {stage}")))
        }
    }

    /// Every stage `pipeline` runs, given what is configured.
    pub fn all_stages(&self) -> Vec<Stage> {
        Stage::ALL
            .into_iter()
            .filter(|st| match st {
                Stage::Eval => self.cfg.paths.gold.is_some(),
                Stage::Sigtest => self.cfg.paths.gold.is_some() && self.cfg.paths.compare.is_some(),
                _ => true,
            })
            .collect()
    }

    pub fn run_all(&self) -> Result<()> {
        let stages = self.all_stages();
        self.cfg.validate(&stages)?;
        for st in stages {
            self.run_unchecked(st)?;
        }
        Ok(())
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        self.cfg.validate(&[stage])?;
        self.run_unchecked(stage)
    }

    fn run_unchecked(&self, stage: Stage) -> Result<()> {
        std::fs::create_dir_all(self.workdir()).map_err(|e| Error::io(self.workdir(), e))?;
        log::info!("stage {stage}");
        let start = Instant::now();
        let (inputs, params, outputs) = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Segment => self.segment()?,
            Stage::Embed => self.embed()?,
            Stage::Docvec => self.docvec()?,
            Stage::Retrieve => self.retrieve()?,
            Stage::Rerank => self.rerank()?,
            Stage::Assign => self.assign()?,
            Stage::Eval => self.eval()?,
            Stage::Sigtest => self.sigtest()?,
        };
        let wall = start.elapsed().as_secs_f64();
        let mut manifest = Manifest::load(self.workdir())?;
        let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
        manifest.record(stage.as_str(), &inputs, params, self.workdir(), &outputs, wall)?;
        manifest.save(self.workdir())
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn load_docs(&self, side: Side) -> Result<(PathBuf, DocumentStore)> {
        let p = self.upstream(&artifacts::docs(side), &format!("{side} documents"), Stage::Ingest)?;
        let (store, _) = ingest_tsv(&p, side)?;
        Ok((p, store))
    }

    fn load_segments(&self, side: Side) -> Result<(Vec<PathBuf>, Vec<SegmentedDocument>)> {
        let seg = self.upstream(&artifacts::segments(side), &format!("{side} segments"), Stage::Segment)?;
        let idx = self.upstream(&artifacts::index(side), &format!("{side} segment index"), Stage::Segment)?;
        let docs = read_segments(&seg, &idx, &WhitespaceTokenizer)?;
        Ok((vec![seg, idx], docs))
    }

    fn load_embeddings(&self, side: Side) -> Result<(PathBuf, EmbeddingStore)> {
        let emb = self.upstream(&artifacts::embeddings(side), &format!("{side} embeddings"), Stage::Embed)?;
        let store = read_emb1(&emb, self.path(&artifacts::index(side)), side)?;
        Ok((emb, store))
    }

    fn ingest(&self) -> Result<StageOutput> {
        let mut report = BTreeMap::new();
        let mut outputs = Vec::new();
        for side in SIDES {
            let input = match side {
                Side::Source => &self.cfg.paths.source,
                Side::Target => &self.cfg.paths.target,
            };
            let (store, rep) = match self.cfg.format {
                CorpusFormat::Tsv => ingest_tsv(input, side)?,
                CorpusFormat::Jsonl => ingest_jsonl(input, side)?,
            };
            let (store, removed) = if self.cfg.dedup { dedup_exact(&store) } else { (store, 0) };
            log::info!("{side}: {} documents ({} skipped, {removed} duplicates removed)", store.len(), rep.skipped());
            report.insert(side.as_str(), json!({ "ingest": rep, "duplicates_removed": removed, "documents": store.len() }));
            write_tsv(&store, self.path(&artifacts::docs(side)))?;
            outputs.push(artifacts::docs(side));
        }
        self.write_json(artifacts::INGEST_REPORT, &report)?;
        outputs.push(artifacts::INGEST_REPORT.to_string());
        Ok((
            vec![self.cfg.paths.source.clone(), self.cfg.paths.target.clone()],
            json!({ "format": self.cfg.format, "dedup": self.cfg.dedup }),
            outputs,
        ))
    }

    fn segment_side(&self, store: &DocumentStore, spec: &SegmentationSpec, tokens: Option<&Path>) -> Result<Vec<SegmentedDocument>> {
        let tok = WhitespaceTokenizer;
        match tokens {
            None => store.iter().map(|d| segment(d, spec, &tok)).collect(),
            Some(path) => {
                let spans = read_token_sidecar(path)?;
                if spans.len() != store.len() {
                    return Err(Error::Consistency(format!(
                        "{}: {} token lines for {} documents",
                        path.display(),
                        spans.len(),
                        store.len()
                    )));
                }
                store
                    .iter()
                    .zip(&spans)
                    .map(|(d, s)| {
                        let toks = tokens_from_offsets(&d.text, s)?;
                        segment_ofls_tokens(&d.doc_id, &toks, &tok, spec.fl, spec.or_rate)
                    })
                    .collect()
            }
        }
    }

    fn segment(&self) -> Result<StageOutput> {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for side in SIDES {
            let (p, store) = self.load_docs(side)?;
            inputs.push(p);
            let (spec, tokens) = match side {
                Side::Source => (&self.cfg.segmentation.source, &self.cfg.paths.source_tokens),
                Side::Target => (&self.cfg.segmentation.target, &self.cfg.paths.target_tokens),
            };
            if let Some(t) = tokens {
                inputs.push(t.clone());
            }
            let docs = self.segment_side(&store, spec, tokens.as_deref())?;
            write_segments(&docs, self.path(&artifacts::segments(side)), self.path(&artifacts::index(side)))?;
            outputs.push(artifacts::segments(side));
            outputs.push(artifacts::index(side));
        }
        Ok((inputs, serde_json::to_value(&self.cfg.segmentation)?, outputs))
    }

    fn embed(&self) -> Result<StageOutput> {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for side in SIDES {
            let seg = self.upstream(&artifacts::segments(side), &format!("{side} segments"), Stage::Segment)?;
            let idx = self.upstream(&artifacts::index(side), &format!("{side} segment index"), Stage::Segment)?;
            let out = self.path(&artifacts::embeddings(side));
            run_provider(&self.cfg.provider, &seg, &idx, &out)?;
            // fail here rather than downstream if the provider output is off
            read_emb1(&out, &idx, side)?;
            inputs.extend([seg, idx]);
            outputs.push(artifacts::embeddings(side));
        }
        Ok((inputs, json!({ "provider": self.cfg.provider }), outputs))
    }

    fn docvec(&self) -> Result<StageOutput> {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut degenerate = BTreeMap::new();
        for side in SIDES {
            let (emb_path, store) = self.load_embeddings(side)?;
            let (seg_paths, docs) = self.load_segments(side)?;
            let (vecs, bad) = build_doc_vectors(&store, &docs, self.cfg.docvec)?;
            if vecs.is_empty() {
                return Err(Error::Empty(format!("no usable {side} document vectors")));
            }
            write_doc_vectors(&vecs, self.path(&artifacts::docvecs(side)), self.path(&artifacts::docvec_index(side)))?;
            degenerate.insert(side.as_str(), bad);
            inputs.push(emb_path);
            inputs.extend(seg_paths);
            outputs.extend([artifacts::docvecs(side), artifacts::docvec_index(side)]);
        }
        self.write_json(artifacts::DOCVEC_REPORT, &json!({ "degenerate": degenerate }))?;
        outputs.push(artifacts::DOCVEC_REPORT.to_string());
        Ok((inputs, serde_json::to_value(self.cfg.docvec)?, outputs))
    }

    fn retrieve(&self) -> Result<StageOutput> {
        let mut inputs = Vec::new();
        let mut vecs = Vec::new();
        let mut stores = Vec::new();
        for side in SIDES {
            let emb = self.upstream(&artifacts::docvecs(side), &format!("{side} document vectors"), Stage::Docvec)?;
            let idx = self.upstream(&artifacts::docvec_index(side), &format!("{side} document vector index"), Stage::Docvec)?;
            vecs.push(read_doc_vectors(&emb, &idx, side)?);
            let (docs_path, store) = self.load_docs(side)?;
            stores.push(store);
            inputs.extend([emb, idx, docs_path]);
        }
        let lists = if self.cfg.per_domain {
            retrieve_per_domain(&vecs[0], &vecs[1], &stores[0], &stores[1], self.cfg.k, self.cfg.block)?
        } else {
            topk_blocked(&vecs[0], &vecs[1], self.cfg.k, self.cfg.block)?
        };
        write_candidates(&lists, self.path(artifacts::CANDIDATES))?;
        Ok((
            inputs,
            json!({ "k": self.cfg.k, "block": self.cfg.block, "per_domain": self.cfg.per_domain }),
            vec![artifacts::CANDIDATES.to_string()],
        ))
    }

    fn rerank(&self) -> Result<StageOutput> {
        let cand_path = self.upstream(artifacts::CANDIDATES, "candidates", Stage::Retrieve)?;
        let candidates = read_candidates(&cand_path)?;
        let mut inputs = vec![cand_path];
        let (src_emb_path, src_emb) = self.load_embeddings(Side::Source)?;
        let (tgt_emb_path, tgt_emb) = self.load_embeddings(Side::Target)?;
        let (src_seg_paths, src_segs) = self.load_segments(Side::Source)?;
        let (tgt_seg_paths, tgt_segs) = self.load_segments(Side::Target)?;
        inputs.extend([src_emb_path, tgt_emb_path]);
        inputs.extend(src_seg_paths);
        inputs.extend(tgt_seg_paths);
        let out = rerank(
            &candidates,
            &self.cfg.rerank,
            SideData {
                embeddings: &src_emb,
                segments: &src_segs,
            },
            SideData {
                embeddings: &tgt_emb,
                segments: &tgt_segs,
            },
        )?;
        log::info!("{} pairs at {:.1} pairs/s", out.report.pairs, out.report.pairs_per_sec);
        if out.report.non_converged > 0 {
            log::warn!("{} OT problems hit max_iter", out.report.non_converged);
        }
        write_scored(&out.pairs, self.path(artifacts::SCORED))?;
        self.write_json(artifacts::THROUGHPUT, &out.report)?;
        let mut params = serde_json::to_value(self.cfg.rerank)?;
        params["effective_weighting"] = serde_json::to_value(self.cfg.rerank.weighting())?;
        // throughput.json holds timings and is left out of the output hashes
        Ok((inputs, params, vec![artifacts::SCORED.to_string()]))
    }

    fn assign(&self) -> Result<StageOutput> {
        let scored_path = self.upstream(artifacts::SCORED, "scores", Stage::Rerank)?;
        let aligned = one_to_one(&read_scored(&scored_path)?);
        write_alignment(&aligned, self.path(artifacts::ALIGNMENT))?;
        Ok((vec![scored_path], json!({ "rule": "one_to_one" }), vec![artifacts::ALIGNMENT.to_string()]))
    }

    fn load_alignment(&self) -> Result<(PathBuf, AlignmentSet)> {
        let p = self.upstream(artifacts::ALIGNMENT, "alignment", Stage::Assign)?;
        let set = read_alignment(&p)?;
        Ok((p, set))
    }

    fn gold_path(&self) -> Result<&Path> {
        self.cfg
            .paths
            .gold
            .as_deref()
            .ok_or_else(|| Error::Config(vec!["paths.gold: no gold file configured".into()]))
    }

    fn eval(&self) -> Result<StageOutput> {
        let gold_path = self.gold_path()?;
        let gold = read_gold(gold_path)?;
        let (align_path, pred) = self.load_alignment()?;
        let (src_docs_path, src) = self.load_docs(Side::Source)?;
        let (tgt_docs_path, tgt) = self.load_docs(Side::Target)?;
        let report = evaluate(&pred, &gold, &src, &tgt, &self.cfg.eval.options())?;
        self.write_json(artifacts::EVAL_JSON, &report)?;
        let table = report.to_table();
        std::fs::write(self.path(artifacts::EVAL_TEXT), &table).map_err(|e| Error::io(self.path(artifacts::EVAL_TEXT), e))?;
        Ok((
            vec![gold_path.to_path_buf(), align_path, src_docs_path, tgt_docs_path],
            serde_json::to_value(self.cfg.eval.options())?,
            vec![artifacts::EVAL_JSON.to_string(), artifacts::EVAL_TEXT.to_string()],
        ))
    }

    fn sigtest(&self) -> Result<StageOutput> {
        let gold_path = self.gold_path()?;
        let gold = read_gold(gold_path)?;
        let (align_path, ours) = self.load_alignment()?;
        let compare_path = self
            .cfg
            .paths
            .compare
            .clone()
            .ok_or_else(|| Error::Config(vec!["paths.compare: no comparison alignment configured".into()]))?;
        let theirs = read_alignment(&compare_path)?;
        let opts = self.cfg.eval.sigtest();
        let result = randomization_test(&ours, &theirs, &gold, &opts)?;
        self.write_json(artifacts::SIGTEST, &result)?;
        Ok((
            vec![gold_path.to_path_buf(), align_path, compare_path],
            serde_json::to_value(opts)?,
            vec![artifacts::SIGTEST.to_string()],
        ))
    }
}

type StageOutput = (Vec<PathBuf>, serde_json::Value, Vec<String>);

/// Top-`k` retrieval restricted to targets sharing the source's domain.
/// Output follows the order of `src`; sources whose domain has no target
/// get no candidate list.
pub fn retrieve_per_domain(
    src: &[DocVector],
    tgt: &[DocVector],
    src_docs: &DocumentStore,
    tgt_docs: &DocumentStore,
    k: usize,
    block: usize,
) -> Result<Vec<CandidateList>> {
    let domain_of = |store: &DocumentStore, id: &str| -> Result<String> {
        store
            .get(id)
            .map(|d| d.domain.clone())
            .ok_or_else(|| Error::MissingDocument(format!("{id} ({} documents)", store.side())))
    };
    let mut src_by: BTreeMap<String, Vec<DocVector>> = BTreeMap::new();
    for v in src {
        src_by.entry(domain_of(src_docs, &v.doc_id)?).or_default().push(v.clone());
    }
    let mut tgt_by: BTreeMap<String, Vec<DocVector>> = BTreeMap::new();
    for v in tgt {
        tgt_by.entry(domain_of(tgt_docs, &v.doc_id)?).or_default().push(v.clone());
    }
    let mut found: HashMap<String, CandidateList> = HashMap::new();
    for (domain, sources) in &src_by {
        match tgt_by.get(domain) {
            Some(targets) => {
                for list in topk_blocked(sources, targets, k, block)? {
                    found.insert(list.src_id.clone(), list);
                }
            }
            None => log::warn!("domain {domain}: {} sources but no targets", sources.len()),
        }
    }
    Ok(src.iter().filter_map(|v| found.remove(&v.doc_id)).collect())
}

/// Result of [`align`].
pub struct Aligned {
    pub candidates: Vec<CandidateList>,
    pub rerank: RerankOutput,
    pub alignment: AlignmentSet,
}

/// Retrieval, re-ranking and the 1-1 rule over in-memory embeddings,
/// without domain restriction.
pub fn align(
    src: SideData<'_>,
    tgt: SideData<'_>,
    docvec: DocVecMethod,
    k: usize,
    spec: &RerankSpec,
) -> Result<Aligned> {
    let (src_vecs, _) = build_doc_vectors(src.embeddings, src.segments, docvec)?;
    let (tgt_vecs, _) = build_doc_vectors(tgt.embeddings, tgt.segments, docvec)?;
    let candidates = topk_blocked(&src_vecs, &tgt_vecs, k, crate::retrieval::DEFAULT_BLOCK)?;
    let rerank = rerank(&candidates, spec, src, tgt)?;
    let alignment = one_to_one(&rerank.pairs);
    Ok(Aligned {
        candidates,
        rerank,
        alignment,
    })
}
