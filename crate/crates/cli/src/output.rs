//! Artifact writing. Everything for one experiment lands in `<out>/<subcommand>/`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::experiments::Report;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub core_version: String,
    pub subcommand: String,
    pub seed: u64,
    pub threads: usize,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

pub fn experiment_dir(out: &Path, subcommand: &str) -> PathBuf {
    out.join(subcommand)
}

pub fn write(dir: &Path, subcommand: &str, cfg: &RunConfig, report: &Report) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for table in &report.tables {
        let mut w = csv::Writer::from_path(dir.join(table.name))?;
        w.write_record(&table.header)?;
        for row in &table.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        outputs.push(table.name.to_string());
    }
    for (name, body) in &report.json_files {
        std::fs::write(dir.join(name), body)?;
        outputs.push(name.to_string());
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        core_version: attractor_lab::VERSION.into(),
        subcommand: subcommand.into(),
        seed: cfg.run.seed,
        threads: rayon::current_num_threads(),
        config: cfg.clone(),
        outputs,
        summary: report.summary.clone(),
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), body)?;
    Ok(manifest)
}
