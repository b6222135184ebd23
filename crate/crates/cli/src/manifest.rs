//! Run manifests: what went in, which settings were used and a digest of
//! every file written. No timestamps, so identical runs give identical
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nowcast_core::simulate::SimConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub file: String,
    pub sha256: String,
}

impl InputFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            file: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digests of every file under `dir`, keyed by `/`-separated relative path.
/// The manifest itself and exported plot tables are left out.
pub fn output_digests(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let walk = WalkDir::new(dir).min_depth(1).into_iter().filter_entry(|e| {
        !(e.depth() == 1 && (e.file_name() == MANIFEST || e.file_name() == "plots"))
    });
    for entry in walk {
        let entry = entry?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walk stays under dir");
        let key = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        out.insert(key, sha256_hex(&fs::read(entry.path())?));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    command: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a SimConfig,
    outputs: BTreeMap<String, String>,
}

pub fn write_simulate_manifest(dir: &Path, config: &SimConfig, seed: u64) -> Result<()> {
    let manifest = SimulateManifest {
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
        outputs: output_digests(dir)?,
    };
    write_json(&manifest, &dir.join(MANIFEST))
}
