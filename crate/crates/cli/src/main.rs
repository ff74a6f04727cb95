use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use docalign::pipeline::{Pipeline, PipelineConfig, Stage};
use docalign::provider::hash_embed_file;

#[derive(Parser)]
#[command(name = "docalign", version, about = "Cross-lingual document alignment")]
struct Cli {
    /// Worker threads (falls back to DOCALIGN_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read both corpora, drop malformed lines and exact duplicates.
    Ingest(StageArgs),
    /// Split documents into segments and write the segments file and index.
    Segment(StageArgs),
    /// Run the embedding provider over both segment files.
    Embed(StageArgs),
    /// Build document vectors.
    Docvec(StageArgs),
    /// Top-K candidate targets per source document.
    Retrieve(StageArgs),
    /// Score every candidate pair.
    Rerank(StageArgs),
    /// Apply the 1-1 rule to the scored pairs.
    Assign(StageArgs),
    /// Score the alignment against the gold pairs.
    Eval(StageArgs),
    /// Randomization test against a second alignment.
    Sigtest(StageArgs),
    /// Run every configured stage in order.
    Pipeline(StageArgs),
    /// Hashed bag-of-words embedding provider, for testing without a model.
    HashEmbed(HashEmbedArgs),
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,

    /// Config overrides as `--dotted.key value` pairs, e.g. `--k 32`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct HashEmbedArgs {
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long)]
    segments: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_overrides(raw: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let Some(key) = flag.strip_prefix("--") else {
            bail!("expected an override flag like --k, got {flag:?}");
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            continue;
        }
        let value = it.next().with_context(|| format!("override {flag} has no value"))?;
        out.push((key.to_string(), value.clone()));
    }
    Ok(out)
}

fn thread_count(flag: Option<usize>) -> anyhow::Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("DOCALIGN_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            let n = v.trim().parse().with_context(|| format!("DOCALIGN_THREADS={v:?} is not a number"))?;
            Ok(Some(n))
        }
        _ => Ok(None),
    }
}

fn load_config(args: &StageArgs) -> anyhow::Result<PipelineConfig> {
    let overrides = parse_overrides(&args.overrides)?;
    let mut cfg = PipelineConfig::load(&args.config, &overrides)?;
    // "self" names this binary, so configs can use the built-in provider
    if cfg.provider.first().is_some_and(|p| p == "self") {
        cfg.provider[0] = std::env::current_exe()?.display().to_string();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let (stage, args) = match &cli.command {
        Command::HashEmbed(a) => {
            hash_embed_file(&a.segments, a.index.as_deref(), &a.out, a.dim)?;
            return Ok(());
        }
        Command::Pipeline(a) => {
            return Ok(Pipeline::new(load_config(a)?).run_all()?);
        }
        Command::Ingest(a) => (Stage::Ingest, a),
        Command::Segment(a) => (Stage::Segment, a),
        Command::Embed(a) => (Stage::Embed, a),
        Command::Docvec(a) => (Stage::Docvec, a),
        Command::Retrieve(a) => (Stage::Retrieve, a),
        Command::Rerank(a) => (Stage::Rerank, a),
        Command::Assign(a) => (Stage::Assign, a),
        Command::Eval(a) => (Stage::Eval, a),
        Command::Sigtest(a) => (Stage::Sigtest, a),
    };
    Pipeline::new(load_config(args)?).run(stage)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<docalign::Error>() {
                Some(docalign::Error::Config(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
