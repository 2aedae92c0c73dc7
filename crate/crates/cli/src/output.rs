//! Artifact directory: every file goes through one writer that records its
//! digest for the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::spec::ExperimentSpec;
use crate::svg::LineChart;

pub struct Artifacts {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    spec_hash: String,
    notes: &'a BTreeMap<String, String>,
    artifacts: &'a BTreeMap<String, String>,
    spec: &'a ExperimentSpec,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Artifacts {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), digests: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.digests.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(())
    }

    pub fn write_csv<F>(&mut self, name: &str, header: &[&str], fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        fill(&mut w)?;
        let bytes = w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?;
        self.write(name, &String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `<stem>.svg` and its sibling `<stem>.csv`.
    pub fn write_chart(&mut self, stem: &str, chart: &LineChart) -> CliResult<()> {
        self.write(&format!("{stem}.svg"), &chart.to_svg())?;
        self.write(&format!("{stem}.csv"), &chart.to_csv()?)
    }

    pub fn finish(mut self, command: &str, spec: &ExperimentSpec, notes: &BTreeMap<String, String>) -> CliResult<()> {
        let manifest = Manifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            spec_hash: spec.content_hash(),
            notes,
            artifacts: &self.digests.clone(),
            spec,
        };
        let text = toml::to_string(&manifest).map_err(|e| CliError::validation(format!("manifest: {e}")))?;
        self.write("manifest.toml", &text)
    }
}

/// Shortest round-trip formatting, so reruns are byte-identical.
pub fn num(x: f64) -> String {
    x.to_string()
}
