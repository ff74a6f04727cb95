//! Embedding provider bridge.
//!
//! The engine writes a segments file and its sidecar index, then runs the
//! provider command with `--segments <path> --index <path> --out <path>`
//! appended. The provider writes an EMB1 file with one row per segment line
//! and exits 0.
//!
//! [`hash_embed_file`] is a deterministic stand-in provider (hashed bag of
//! words) used for fixtures and smoke tests. It has no cross-lingual ability.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::Command;

use crate::embedding_io::Emb1;
use crate::segmentation::read_index;
use crate::{Error, Result};

/// Runs `command` (program followed by its arguments) as an embedding provider.
pub fn run_provider(command: &[String], segments: &Path, index: &Path, out: &Path) -> Result<()> {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Error::Config(vec!["provider command is empty".into()]))?;
    log::info!("running provider {program} on {}", segments.display());
    let output = Command::new(program)
        .args(args)
        .arg("--segments")
        .arg(segments)
        .arg("--index")
        .arg(index)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| Error::Provider {
            status: format!("failed to start {program}"),
            stderr: e.to_string(),
        })?;
    if !output.status.success() {
        return Err(Error::Provider {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lowercased whitespace tokens.
pub fn hash_embed(text: &str, dim: usize) -> Vec<f32> {
    let mut v = vec![0f32; dim];
    for tok in text.split_whitespace() {
        let tok = tok.to_lowercase();
        let h = fnv1a(tok.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    v
}

/// Embeds every line of `segments` with [`hash_embed`] and writes EMB1.
pub fn hash_embed_file(segments: &Path, index: Option<&Path>, out: &Path, dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::Parameter("dim must be >= 1".into()));
    }
    let file = File::open(segments).map_err(|e| Error::io(segments, e))?;
    let mut data = Vec::new();
    let mut lines = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(segments, e))?;
        data.extend(hash_embed(&line, dim));
        lines += 1;
    }
    if let Some(index) = index {
        let total: usize = read_index(index)?.iter().map(|e| e.n_segments).sum();
        if total != lines {
            return Err(Error::Consistency(format!(
                "segments file has {lines} lines but index lists {total}"
            )));
        }
    }
    Emb1 { dim, data }.write(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embed_is_deterministic_and_case_folded() {
        let a = hash_embed("Hello world", 32);
        assert_eq!(a, hash_embed("hello   WORLD", 32));
        assert_eq!(a.iter().map(|x| x.abs()).sum::<f32>(), 2.0);
    }

    #[test]
    fn hash_embed_file_writes_one_row_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let seg = dir.path().join("s.txt");
        std::fs::write(&seg, "a b\nc\n").unwrap();
        let out = dir.path().join("o.emb");
        hash_embed_file(&seg, None, &out, 16).unwrap();
        let emb = Emb1::read(&out).unwrap();
        assert_eq!((emb.dim, emb.count()), (16, 2));
    }

    #[test]
    fn provider_failure_relays_stderr() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        let cmd = vec!["sh".to_string(), "-c".to_string(), "echo boom >&2; exit 3".to_string(), "sh".to_string()];
        let err = run_provider(&cmd, &p.join("s"), &p.join("i"), &p.join("o")).unwrap_err();
        match err {
            Error::Provider { stderr, .. } => assert_eq!(stderr, "boom"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn provider_receives_flag_arguments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        let log = p.join("args");
        let script = format!("echo \"$@\" > {}", log.display());
        let cmd = vec!["sh".to_string(), "-c".to_string(), script, "sh".to_string()];
        run_provider(&cmd, &p.join("s"), &p.join("i"), &p.join("o")).unwrap();
        let got = std::fs::read_to_string(&log).unwrap();
        let want = format!(
            "--segments {} --index {} --out {}\n",
            p.join("s").display(),
            p.join("i").display(),
            p.join("o").display()
        );
        assert_eq!(got, want);
    }
}
