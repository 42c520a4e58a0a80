//! Output files and the run manifest.
//!
//! Every CSV starts with one comment line carrying the schema version and the
//! SHA-256 of the manifest's plan, followed by the header row.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::plan::Plan;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: the fully resolved plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub plan: Plan,
    /// SHA-256 of the serialized plan; embedded in every output file.
    pub plan_sha256: String,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn plan_hash(plan: &Plan) -> String {
    sha256_hex(&serde_json::to_vec(plan).expect("plan serializes"))
}

/// Collects output files for one command run.
pub struct OutputSink {
    dir: PathBuf,
    hash: String,
    written: Vec<OutputFile>,
}

impl OutputSink {
    pub fn new(dir: &Path, hash: String) -> Result<OutputSink> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutputSink {
            dir: dir.to_path_buf(),
            hash,
            written: Vec::new(),
        })
    }

    pub fn provenance_line(&self) -> String {
        format!("# schema_version={SCHEMA_VERSION} manifest_sha256={}\n", self.hash)
    }

    pub fn write_text(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let mut text = self.provenance_line();
        text.push_str(body);
        let path = self.dir.join(name);
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(path)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let body = String::from_utf8(w.into_inner().context("flushing csv")?).expect("csv is utf-8");
        self.write_text(name, &body)
    }

    /// JSON object with the provenance fields added at the top level.
    pub fn write_json(&mut self, name: &str, mut value: serde_json::Value) -> Result<PathBuf> {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("schema_version".into(), SCHEMA_VERSION.into());
            obj.insert("manifest_sha256".into(), self.hash.clone().into());
        }
        let text = serde_json::to_string_pretty(&value).expect("json serializes") + "\n";
        let path = self.dir.join(name);
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(path)
    }

    pub fn finish(self, plan: Plan) -> Result<PathBuf> {
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            plan,
            plan_sha256: self.hash,
            outputs: self.written,
        };
        let path = self.dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
