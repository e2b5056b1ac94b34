//! Key-rate report from a 3×3 coincidence table.

use std::io::Read;

use serde::Serialize;
use trine_qkd::protocol::{qber_from_inconclusive, qber_sigma};
use trine_qkd::security::{asymptotic_rate, r_collective, r_general_with, secret_rate_bps, SecurityParams};
use trine_qkd::sim::CountsTable;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteKeyAtTotal {
    pub n: u64,
    pub r_col: f64,
    pub r_gen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub total: u64,
    pub off_diagonal: u64,
    pub diagonal: u64,
    /// Half the off-diagonal fraction.
    pub i_fraction: f64,
    pub q_est: f64,
    pub q_sigma: f64,
    /// The estimator left `[0, 1/2]` for `I` and was clamped.
    pub q_saturated: bool,
    /// `Q` outside `[0, 1/2]`: no key can be distilled and rates are unset.
    pub degenerate: bool,
    pub conclusive_fraction: f64,
    pub rate_hz: Option<f64>,
    pub r_asym: Option<f64>,
    pub secret_bps: Option<f64>,
    pub finite: Option<FiniteKeyAtTotal>,
}

/// `rate_hz` is the coincidence rate; when absent it is inferred from
/// `duration_s`. The finite-key fractions are evaluated at `N = total`.
pub fn analyze_counts(
    table: &CountsTable,
    rate_hz: Option<f64>,
    duration_s: Option<f64>,
    sp: &SecurityParams,
    target_eps_gen: f64,
) -> Result<AnalysisReport> {
    let total = table.total();
    if total == 0 {
        return Err(trine_qkd::Error::Domain("counts table is empty".into()).into());
    }
    sp.validate()?;
    let off = table.off_diagonal_total();
    // each off-diagonal event is inconclusive for exactly one of the two bit values
    let i = off as f64 / total as f64 / 2.0;
    let est = qber_from_inconclusive(i);
    let degenerate = !(0.0..=0.5).contains(&est.qber);
    let rate_hz = match (rate_hz, duration_s) {
        (Some(r), _) => Some(r),
        (None, Some(d)) if d > 0.0 => Some(total as f64 / d),
        (None, Some(d)) => return Err(CliError::Usage(format!("duration {d} must be positive"))),
        (None, None) => None,
    };
    let (r_asym, secret_bps, finite) = if degenerate {
        (None, None, None)
    } else {
        let r = asymptotic_rate(est.qber, sp.f_ec);
        let col = r_collective(total, i, sp)?;
        let gen = r_general_with(total, i, target_eps_gen, sp.f_ec, sp.xi_log)?;
        let finite = FiniteKeyAtTotal { n: total, r_col: col.r_col, r_gen: gen.r_gen.unwrap_or(f64::NAN) };
        (Some(r), rate_hz.map(|hz| secret_rate_bps(hz * (1.0 - i), r)), Some(finite))
    };
    Ok(AnalysisReport {
        total,
        off_diagonal: off,
        diagonal: table.diagonal_total(),
        i_fraction: i,
        q_est: est.qber,
        q_sigma: qber_sigma(i, total),
        q_saturated: est.saturated,
        degenerate,
        conclusive_fraction: 1.0 - i,
        rate_hz,
        r_asym,
        secret_bps,
        finite,
    })
}

/// Reads a 3×3 counts table: rows are Bob's detectors 1–3, columns Alice's.
/// Values may be fractional (e.g. in millions) and are multiplied by `scale`
/// and rounded. A non-numeric first row is taken as a header; `#` starts a
/// comment line.
pub fn read_counts_csv<R: Read>(reader: R, scale: f64) -> Result<CountsTable> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(CliError::Usage(format!("scale {scale} must be positive")));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == 3 => rows.push([v[0], v[1], v[2]]),
            Err(_) if k == 0 => continue,
            _ => return Err(CliError::Usage(format!("counts row {} must hold three numbers", k + 1))),
        }
    }
    if rows.len() != 3 {
        return Err(CliError::Usage(format!("counts table has {} rows, expected 3", rows.len())));
    }
    let mut table = CountsTable::default();
    for (b, row) in rows.iter().enumerate() {
        for (a, &x) in row.iter().enumerate() {
            if !(x.is_finite() && x >= 0.0) {
                return Err(CliError::Usage(format!("count {x} must be non-negative")));
            }
            table.counts[b][a] = (x * scale).round() as u64;
        }
    }
    Ok(table)
}
