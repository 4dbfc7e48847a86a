use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Provenance stamped into every JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub lexicon_hash: String,
    pub scorer: String,
    pub scorer_spec: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_fingerprint: Option<String>,
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<OutDir> {
        fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn text(&self, name: &str, content: &str) -> Result<PathBuf> {
        let p = self.path(name);
        fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf> {
        let p = self.path(name);
        debias_forge::corpus::write_jsonl(&p, records)?;
        Ok(p)
    }

    pub fn csv<T: Serialize>(&self, name: &str, header: &[&str], rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.text(name, &String::from_utf8(bytes)?)
    }
}

/// Sidecar for a JSONL file: `mined.jsonl` gets `mined.meta.json`.
pub fn sidecar_name(jsonl: &str) -> String {
    format!("{}.meta.json", jsonl.trim_end_matches(".jsonl"))
}

#[derive(Serialize)]
pub struct WithMeta<'a, T: Serialize> {
    pub meta: &'a Meta,
    #[serde(flatten)]
    pub body: T,
}
