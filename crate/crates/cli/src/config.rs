//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key the tool
//! writes can be read back; unknown keys are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use trine_qkd::checksum::fnv1a64;
use trine_qkd::security::{LogBase, SecurityParams};
use trine_qkd::source::{default_params, SourceParams};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Event count; when unset it is `pair_rate_hz · duration_s`.
    pub n_events: Option<u64>,
    pub duration_s: f64,
    pub block_duration_s: f64,
    pub source: SourceParams,
    pub security: SecurityParams,
    /// Total failure probability for the general-attack rate.
    pub target_eps_gen: f64,
    pub sweep_lo_exp: u32,
    pub sweep_hi_exp: u32,
    pub sweep_per_decade: u32,
    pub batch_size: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            n_events: None,
            duration_s: 7200.0,
            block_duration_s: 80.0,
            source: default_params(),
            security: SecurityParams::default(),
            target_eps_gen: 4e-10,
            sweep_lo_exp: 3,
            sweep_hi_exp: 8,
            sweep_per_decade: 4,
            batch_size: 4096,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("bad value {value:?} for {key}")))
}

fn parse_weights(key: &str, value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!("{key} needs three comma-separated values")));
    }
    Ok([parse(key, parts[0])?, parse(key, parts[1])?, parse(key, parts[2])?])
}

/// Shortest round-trip form, in exponent notation for very small or large
/// magnitudes.
fn num(x: f64) -> String {
    if x != 0.0 && !(1e-3..1e7).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn weights(w: &[f64; 3]) -> String {
    format!("{},{},{}", num(w[0]), num(w[1]), num(w[2]))
}

fn log_base_name(b: LogBase) -> &'static str {
    match b {
        LogBase::Natural => "natural",
        LogBase::Binary => "binary",
    }
}

impl RunConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.source;
        let sp = &self.security;
        vec![
            ("seed", self.seed.to_string()),
            ("n_events", self.n_events.map_or_else(|| "auto".into(), |n| n.to_string())),
            ("duration_s", num(self.duration_s)),
            ("block_duration_s", num(self.block_duration_s)),
            ("pair_rate_hz", num(s.pair_rate_hz)),
            ("visibility", num(s.visibility)),
            ("heralding", num(s.heralding)),
            ("coincidence_window_s", num(s.coincidence_window_s)),
            ("coherence_time_s", num(s.coherence_time_s)),
            ("multipair_fraction", num(s.multipair_fraction)),
            ("dead_time_s", num(s.dead_time_s)),
            ("jitter_fwhm_s", num(s.jitter_fwhm_s)),
            ("tag_resolution_s", num(s.tag_resolution_s)),
            ("accidental_fraction", num(s.accidental_fraction)),
            ("alice_weights", weights(&s.alice_weights)),
            ("bob_weights", weights(&s.bob_weights)),
            ("eps_bar", num(sp.eps_bar)),
            ("eps_ec", num(sp.eps_ec)),
            ("eps_pa", num(sp.eps_pa)),
            ("eps_pe", num(sp.eps_pe)),
            ("f_ec", num(sp.f_ec)),
            ("xi_log", log_base_name(sp.xi_log).into()),
            ("target_eps_gen", num(self.target_eps_gen)),
            ("sweep_lo_exp", self.sweep_lo_exp.to_string()),
            ("sweep_hi_exp", self.sweep_hi_exp.to_string()),
            ("sweep_per_decade", self.sweep_per_decade.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let s = &mut self.source;
        let sp = &mut self.security;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "n_events" => self.n_events = if v == "auto" { None } else { Some(parse(key, v)?) },
            "duration_s" => self.duration_s = parse(key, v)?,
            "block_duration_s" => self.block_duration_s = parse(key, v)?,
            "pair_rate_hz" => s.pair_rate_hz = parse(key, v)?,
            "visibility" => s.visibility = parse(key, v)?,
            "heralding" => s.heralding = parse(key, v)?,
            "coincidence_window_s" => s.coincidence_window_s = parse(key, v)?,
            "coherence_time_s" => s.coherence_time_s = parse(key, v)?,
            "multipair_fraction" => s.multipair_fraction = parse(key, v)?,
            "dead_time_s" => s.dead_time_s = parse(key, v)?,
            "jitter_fwhm_s" => s.jitter_fwhm_s = parse(key, v)?,
            "tag_resolution_s" => s.tag_resolution_s = parse(key, v)?,
            "accidental_fraction" => s.accidental_fraction = parse(key, v)?,
            "alice_weights" => s.alice_weights = parse_weights(key, v)?,
            "bob_weights" => s.bob_weights = parse_weights(key, v)?,
            "eps_bar" => sp.eps_bar = parse(key, v)?,
            "eps_ec" => sp.eps_ec = parse(key, v)?,
            "eps_pa" => sp.eps_pa = parse(key, v)?,
            "eps_pe" => sp.eps_pe = parse(key, v)?,
            "f_ec" => sp.f_ec = parse(key, v)?,
            "xi_log" => {
                sp.xi_log = match v {
                    "natural" => LogBase::Natural,
                    "binary" => LogBase::Binary,
                    _ => return Err(CliError::Config(format!("xi_log must be natural or binary, got {v:?}"))),
                }
            }
            "target_eps_gen" => self.target_eps_gen = parse(key, v)?,
            "sweep_lo_exp" => self.sweep_lo_exp = parse(key, v)?,
            "sweep_hi_exp" => self.sweep_hi_exp = parse(key, v)?,
            "sweep_per_decade" => self.sweep_per_decade = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(CliError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .as_ref()
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {:?} is not key=value", p.as_ref())))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| CliError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::parse_text(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Hash of the canonical text form; recorded in every output.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.to_text().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.security.validate()?;
        if !(self.duration_s > 0.0 && self.block_duration_s > 0.0) {
            return Err(CliError::Config("durations must be positive".into()));
        }
        if self.sweep_hi_exp < self.sweep_lo_exp {
            return Err(CliError::Config("sweep_hi_exp below sweep_lo_exp".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Number of events a run produces.
    pub fn event_count(&self) -> u64 {
        self.n_events
            .unwrap_or_else(|| (self.source.pair_rate_hz * self.duration_s).round() as u64)
    }

    /// Events per block of `block_duration_s`.
    pub fn block_events(&self) -> u64 {
        ((self.source.pair_rate_hz * self.block_duration_s).round() as u64).max(1)
    }
}
