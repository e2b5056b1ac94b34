//! CSV tables and JSON metadata sidecars.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use trine_qkd::security::FiniteKeyPoint;
use trine_qkd::sim::GENERATOR_ID;

use crate::config::RunConfig;
use crate::error::Result;

/// Formats `x` to 4 significant figures for display.
pub fn sig4(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Percent with 4 significant figures.
pub fn pct4(x: f64) -> String {
    format!("{}%", sig4(100.0 * x))
}

fn full(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

/// A row type with a fixed header, written at full precision.
pub trait CsvRow {
    const HEADERS: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Writes `rows` under the header; an empty slice gives a header-only file.
pub fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(T::HEADERS)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Observed versus expected coincidences per detector pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountsRow {
    pub alice: u8,
    pub bob: u8,
    pub observed: u64,
    pub expected: f64,
}

impl CsvRow for CountsRow {
    const HEADERS: &'static [&'static str] = &["alice", "bob", "observed", "expected", "residual_sigma"];
    fn fields(&self) -> Vec<String> {
        let resid = if self.expected > 0.0 {
            (self.observed as f64 - self.expected) / self.expected.sqrt()
        } else {
            0.0
        };
        vec![
            self.alice.to_string(),
            self.bob.to_string(),
            self.observed.to_string(),
            full(self.expected),
            full(resid),
        ]
    }
}

/// Per-block QBER and rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockRow {
    pub index: usize,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub n_events: u64,
    pub conclusive: u64,
    pub i_fraction: f64,
    pub q_est: f64,
    pub q_sigma: f64,
    pub q_true: Option<f64>,
    pub r_asym: f64,
    pub secret_bps: f64,
    pub partial: bool,
}

impl CsvRow for BlockRow {
    const HEADERS: &'static [&'static str] = &[
        "block",
        "t_start_s",
        "t_end_s",
        "n_events",
        "conclusive",
        "i_fraction",
        "q_est",
        "q_sigma",
        "q_true",
        "r_asym",
        "secret_bps",
        "partial",
    ];
    fn fields(&self) -> Vec<String> {
        vec![
            self.index.to_string(),
            full(self.t_start_s),
            full(self.t_end_s),
            self.n_events.to_string(),
            self.conclusive.to_string(),
            full(self.i_fraction),
            full(self.q_est),
            full(self.q_sigma),
            opt(self.q_true),
            full(self.r_asym),
            full(self.secret_bps),
            self.partial.to_string(),
        ]
    }
}

impl CsvRow for FiniteKeyPoint {
    const HEADERS: &'static [&'static str] = &[
        "n",
        "i_fraction",
        "xi",
        "q_tilde",
        "q_est",
        "r_col",
        "r_gen",
        "phase_error",
        "smoothing",
        "ec_confidence",
        "pa_confidence",
        "ec_leak",
    ];
    fn fields(&self) -> Vec<String> {
        let t = &self.terms;
        vec![
            self.n.to_string(),
            full(self.i_fraction),
            full(self.xi),
            full(self.q_tilde),
            full(self.q_est),
            full(self.r_col),
            opt(self.r_gen),
            full(t.phase_error),
            full(t.smoothing),
            full(t.ec_confidence),
            full(t.pa_confidence),
            full(t.ec_leak),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub generator_id: &'static str,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub results: serde_json::Value,
}

impl Metadata {
    pub fn new(command: &str, cfg: &RunConfig, outputs: &[PathBuf], results: serde_json::Value) -> Self {
        Metadata {
            tool: "trine-qkd",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            seed: cfg.seed,
            generator_id: GENERATOR_ID,
            config_hash: format!("{:016x}", cfg.hash()),
            config: cfg.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            outputs: outputs
                .iter()
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into()))
                .collect(),
            results,
        }
    }
}

/// Writes `meta` as pretty JSON next to its outputs.
pub fn write_sidecar(path: &Path, meta: &Metadata) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_significant_figures() {
        assert_eq!(sig4(0.496107), "0.4961");
        assert_eq!(sig4(0.0154514), "0.01545");
        assert_eq!(sig4(10752.79), "10753");
        assert_eq!(sig4(0.7358), "0.7358");
        assert_eq!(sig4(1.0), "1.000");
        assert_eq!(sig4(-0.24464), "-0.2446");
        assert_eq!(sig4(2.055e8), "2.055e8");
        assert_eq!(sig4(1e-10), "1.000e-10");
        assert_eq!(pct4(0.0154514), "1.545%");
    }
}
