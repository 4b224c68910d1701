//! Reports and raw-data output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// One tested quantity: its value, the rule it was held to, and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub statistic: f64,
    pub threshold: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub criterion: Option<u8>,
    pub config: ExperimentConfig,
    pub metrics: Vec<Metric>,
    /// Diagnostics that do not enter the verdict.
    pub info: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub passed: bool,
    /// Kept out of `report.json` so reruns give identical files; written
    /// to `timing.json` instead.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl Report {
    /// One line: verdict and the metrics.
    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .metrics
            .iter()
            .map(|m| format!("{} = {:.4} [{}]{}", m.name, m.statistic, m.threshold, if m.pass { "" } else { " FAILED" }))
            .collect();
        format!("{}: {} ({})", self.experiment, if self.passed { "PASS" } else { "FAIL" }, parts.join("; "))
    }

    /// Writes `report.json` and `timing.json` into `dir`.
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join("report.json"))?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        let timing = serde_json::json!({ "experiment": self.experiment, "wall_clock_secs": self.wall_clock_secs });
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
        Ok(())
    }
}

/// Collects the results of a running experiment and writes its raw files
/// when an output directory was given.
#[derive(Debug, Default)]
pub struct Sink {
    dir: Option<PathBuf>,
    pub(crate) metrics: Vec<Metric>,
    pub(crate) info: BTreeMap<String, f64>,
    pub(crate) files: Vec<String>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> Self {
        Self { dir: dir.map(Path::to_path_buf), ..Self::default() }
    }

    pub fn metric(&mut self, name: &str, statistic: f64, threshold: impl Into<String>, pass: bool) {
        self.metrics.push(Metric { name: name.into(), statistic, threshold: threshold.into(), pass });
    }

    pub fn info(&mut self, name: &str, value: f64) {
        self.info.insert(name.into(), value);
    }

    /// Creates `name` in the output directory and hands it to `fill`;
    /// does nothing without an output directory.
    pub fn file(&mut self, name: &str, fill: impl FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>) -> anyhow::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        fill(&mut w)?;
        w.flush()?;
        self.files.push(name.into());
        Ok(())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }
}
