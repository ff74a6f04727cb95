use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::docvec::DocVecMethod;
use crate::evaluation::{EvalOptions, LengthSide, Metric, SigTestOptions, DEFAULT_BINS, DEFAULT_SOFT_THRESHOLD};
use crate::retrieval::DEFAULT_BLOCK;
use crate::scoring::RerankSpec;
use crate::segmentation::{SegmentationSpec, Strategy};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Segment,
    Embed,
    Docvec,
    Retrieve,
    Rerank,
    Assign,
    Eval,
    Sigtest,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Segment,
        Stage::Embed,
        Stage::Docvec,
        Stage::Retrieve,
        Stage::Rerank,
        Stage::Assign,
        Stage::Eval,
        Stage::Sigtest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Segment => "segment",
            Stage::Embed => "embed",
            Stage::Docvec => "docvec",
            Stage::Retrieve => "retrieve",
            Stage::Rerank => "rerank",
            Stage::Assign => "assign",
            Stage::Eval => "eval",
            Stage::Sigtest => "sigtest",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Tsv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub source: PathBuf,
    pub target: PathBuf,
    pub workdir: PathBuf,
    #[serde(default)]
    pub gold: Option<PathBuf>,
    /// Alignment TSV of a competing system, for `sigtest`.
    #[serde(default)]
    pub compare: Option<PathBuf>,
    /// Token sidecars (one line per ingested document) for OFLS.
    #[serde(default)]
    pub source_tokens: Option<PathBuf>,
    #[serde(default)]
    pub target_tokens: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SideSegmentation {
    pub source: SegmentationSpec,
    pub target: SegmentationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub soft_threshold: Option<f64>,
    pub bins: Vec<usize>,
    pub length_side: LengthSide,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            soft_threshold: Some(DEFAULT_SOFT_THRESHOLD),
            bins: DEFAULT_BINS.to_vec(),
            length_side: LengthSide::Source,
            seed: 42,
            metric: Metric::F1SourceSide,
        }
    }
}

impl EvalSection {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            soft_threshold: self.soft_threshold,
            bins: self.bins.clone(),
            length_side: self.length_side,
        }
    }

    pub fn sigtest(&self) -> SigTestOptions {
        SigTestOptions {
            metric: self.metric,
            seed: self.seed,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_k() -> usize {
    20
}

fn default_block() -> usize {
    DEFAULT_BLOCK
}

fn default_docvec() -> DocVecMethod {
    DocVecMethod::Mean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub format: CorpusFormat,
    /// Provider program and leading arguments.
    #[serde(default)]
    pub provider: Vec<String>,
    #[serde(default = "default_true")]
    pub dedup: bool,
    #[serde(default)]
    pub segmentation: SideSegmentation,
    #[serde(default = "default_docvec")]
    pub docvec: DocVecMethod,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_block")]
    pub block: usize,
    /// Restrict candidates to targets from the source's domain.
    #[serde(default = "default_true")]
    pub per_domain: bool,
    #[serde(default)]
    pub rerank: RerankSpec,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Sets `dotted.key` in a JSON tree, creating objects along the way. The
/// value is parsed as JSON when possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(vec![format!("malformed override key {key:?}")]));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    for part in parents {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(vec![format!("override {key}: {part} is not inside an object")]))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Config(vec![format!("override {key}: parent is not an object")]))?
        .insert(last.to_string(), value);
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses a config document, applies overrides, and resolves relative
    /// paths against `base`.
    pub fn from_value(mut value: Value, overrides: &[(String, String)], base: &Path) -> Result<Self> {
        for (k, v) in overrides {
            apply_override(&mut value, k, v)?;
        }
        let mut cfg: PipelineConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let p = &mut cfg.paths;
        resolve(base, &mut p.source);
        resolve(base, &mut p.target);
        resolve(base, &mut p.workdir);
        for path in [&mut p.gold, &mut p.compare, &mut p.source_tokens, &mut p.target_tokens].into_iter().flatten() {
            resolve(base, path);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = base.canonicalize().map_err(|e| Error::io(base, e))?;
        Self::from_value(value, overrides, &base)
    }

    /// Every problem that would stop `stages` from running.
    pub fn violations(&self, stages: &[Stage]) -> Vec<String> {
        let mut out = Vec::new();
        let mut need_file = |label: &str, p: &Path| {
            if !p.is_file() {
                out.push(format!("{label}: {} does not exist", p.display()));
            }
        };
        need_file("paths.source", &self.paths.source);
        need_file("paths.target", &self.paths.target);
        for (label, p) in [
            ("paths.gold", &self.paths.gold),
            ("paths.compare", &self.paths.compare),
            ("paths.source_tokens", &self.paths.source_tokens),
            ("paths.target_tokens", &self.paths.target_tokens),
        ] {
            if let Some(p) = p {
                need_file(label, p);
            }
        }
        if stages.contains(&Stage::Embed) && self.provider.is_empty() {
            out.push("provider: embed needs a provider command".into());
        }
        for st in [Stage::Eval, Stage::Sigtest] {
            if stages.contains(&st) && self.paths.gold.is_none() {
                out.push(format!("paths.gold: {st} needs a gold file"));
            }
        }
        if stages.contains(&Stage::Sigtest) && self.paths.compare.is_none() {
            out.push("paths.compare: sigtest needs a second alignment to compare against".into());
        }
        for (side, spec, tokens) in [
            ("source", &self.segmentation.source, &self.paths.source_tokens),
            ("target", &self.segmentation.target, &self.paths.target_tokens),
        ] {
            out.extend(spec.violations().into_iter().map(|v| format!("segmentation.{side}: {v}")));
            if tokens.is_some() && spec.strategy != Strategy::Ofls {
                out.push(format!("paths.{side}_tokens: token sidecars apply to OFLS only"));
            }
        }
        if let DocVecMethod::TkPert(spec) = self.docvec {
            if let Err(e) = spec.validate() {
                out.push(format!("docvec: {e}"));
            }
        }
        if self.k < 1 {
            out.push("k: must be >= 1".into());
        }
        if self.block < 1 {
            out.push("block: must be >= 1".into());
        }
        out.extend(self.rerank.sinkhorn.violations().into_iter().map(|v| format!("rerank.sinkhorn: {v}")));
        if let Some(t) = self.eval.soft_threshold {
            if !(t > 0.0 && t <= 1.0) {
                out.push(format!("eval.soft_threshold: must be in (0, 1], got {t}"));
            }
        }
        if self.eval.bins.is_empty() || self.eval.bins.windows(2).any(|w| w[0] >= w[1]) {
            out.push("eval.bins: must be a non-empty, strictly increasing list".into());
        }
        out
    }

    pub fn validate(&self, stages: &[Stage]) -> Result<()> {
        let v = self.violations(stages);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}
