use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub params: Value,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub wall_sec: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    /// Loads the workdir manifest, or an empty one if none exists yet.
    pub fn load(workdir: &Path) -> Result<Self> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, workdir: &Path) -> Result<()> {
        let path = workdir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Hashes `inputs` and `outputs` and stores the entry for `stage`.
    pub fn record(
        &mut self,
        stage: &str,
        inputs: &[&Path],
        params: Value,
        workdir: &Path,
        outputs: &[&str],
        wall_sec: f64,
    ) -> Result<()> {
        let inputs = inputs
            .iter()
            .map(|p| Ok((p.display().to_string(), sha256_file(p)?)))
            .collect::<Result<_>>()?;
        let outputs = outputs
            .iter()
            .map(|name| Ok((name.to_string(), sha256_file(&workdir.join(name))?)))
            .collect::<Result<_>>()?;
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                inputs,
                params,
                outputs,
                wall_sec,
            },
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn record_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let w = dir.path();
        std::fs::write(w.join("in"), "a").unwrap();
        std::fs::write(w.join("out"), "b").unwrap();
        let mut m = Manifest::load(w).unwrap();
        m.record("s", &[&w.join("in")], serde_json::json!({"k": 1}), w, &["out"], 0.5).unwrap();
        m.save(w).unwrap();
        assert_eq!(Manifest::load(w).unwrap(), m);
    }
}
