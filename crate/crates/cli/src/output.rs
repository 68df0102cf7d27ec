//! Deterministic data-file writers.
//!
//! Every output embeds the resolved run parameters: JSON documents carry a
//! `run` object, CSV files start with `# key: value` comment lines. Nothing
//! time- or host-dependent is ever written, so a seeded command reproduces
//! its files byte for byte.

use std::path::Path;

use anyhow::Context as _;
use quditc_core::device::DeviceParams;
use serde::Serialize;

use crate::config::Context;

/// Resolved run parameters, embedded in every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub device: String,
    pub omega01_ghz: f64,
    pub omega12_ghz: f64,
    pub t1_01_us: f64,
    pub t1_12_us: f64,
    pub t2s_01_us: f64,
    pub t2s_12_us: f64,
    pub levels: usize,
    pub seed: u64,
    pub shots: u64,
}

impl RunInfo {
    pub fn new(ctx: &Context, command: &str, shots: u64) -> RunInfo {
        let d: &DeviceParams = &ctx.dev;
        RunInfo {
            command: command.to_string(),
            device: ctx.device_label.clone(),
            omega01_ghz: d.omega01_ghz,
            omega12_ghz: d.omega12_ghz,
            t1_01_us: d.t1_01_us,
            t1_12_us: d.t1_12_us,
            t2s_01_us: d.t2s_01_us,
            t2s_12_us: d.t2s_12_us,
            levels: d.levels,
            seed: ctx.seed,
            shots,
        }
    }

    /// The same information as `# key: value` CSV comment lines.
    pub fn header_lines(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), self.command.clone()),
            ("device".into(), self.device.clone()),
            (
                "device_params".into(),
                format!(
                    "omega01_ghz={} omega12_ghz={} t1_01_us={} t1_12_us={} t2s_01_us={} t2s_12_us={} levels={}",
                    self.omega01_ghz,
                    self.omega12_ghz,
                    self.t1_01_us,
                    self.t1_12_us,
                    self.t2s_01_us,
                    self.t2s_12_us,
                    self.levels
                ),
            ),
            ("seed".into(), self.seed.to_string()),
            ("shots".into(), self.shots.to_string()),
        ]
    }
}

/// Pretty JSON plus trailing newline.
pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(doc)
        .with_context(|| format!("serializing {}", path.display()))?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// CSV with a reproducibility preamble. Floats are formatted with `Display`
/// (shortest round-trip form), so equal runs yield equal bytes.
pub struct CsvDoc {
    header: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvDoc {
    pub fn new(run: &RunInfo, columns: &[&str]) -> CsvDoc {
        CsvDoc {
            header: run.header_lines(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = String::new();
        for (k, v) in &self.header {
            text.push_str(&format!("# {k}: {v}\n"));
        }
        text.push_str(&self.columns.join(","));
        text.push('\n');
        for row in &self.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Shortest round-trip float formatting used in CSV cells.
pub fn num(x: f64) -> String {
    format!("{x}")
}
