//! CSV writing with provenance columns.
//!
//! Every row written by the harness starts with `build_id,config_hash,seed`
//! so any report can be traced back to the binary and configuration that
//! produced it.

use std::fmt::Write as _;
use std::path::Path;

use super::Result;

/// Build identifier baked in at compile time (git describe when available).
pub fn build_id() -> &'static str {
    env!("SAMPLENET_BUILD_ID")
}

#[derive(Clone, Debug)]
pub struct Provenance {
    pub build_id: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Provenance {
            build_id: build_id().to_string(),
            config_hash,
            seed,
        }
    }

    pub fn header() -> &'static str {
        "build_id,config_hash,seed"
    }

    pub fn prefix(&self) -> String {
        format!("{},{},{}", self.build_id, self.config_hash, self.seed)
    }
}

/// Write a CSV with the provenance prefix on every row.
pub fn write_rows(
    path: &Path,
    provenance: &Provenance,
    columns: &str,
    rows: &[String],
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "{},{columns}", Provenance::header()).unwrap();
    let prefix = provenance.prefix();
    for row in rows {
        writeln!(out, "{prefix},{row}").unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}
