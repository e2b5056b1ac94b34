//! Batch front end for `trine-qkd`: run configuration, counts analysis,
//! streaming simulation and CSV/JSON output.

pub mod analysis;
pub mod app;
pub mod config;
pub mod error;
pub mod output;
pub mod simulate;

pub use analysis::{analyze_counts, read_counts_csv, AnalysisReport};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use simulate::{simulate, SimulationSummary};

use std::fmt::Write as _;

use output::{pct4, sig4};

/// Human-readable report, fractions at 4 significant figures.
pub fn render_report(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "events            {}", r.total);
    let _ = writeln!(s, "off-diagonal      {}", r.off_diagonal);
    let _ = writeln!(s, "inconclusive I    {}", sig4(r.i_fraction));
    let flag = if r.degenerate {
        "  (degenerate: no key)"
    } else if r.q_saturated {
        "  (estimator saturated)"
    } else {
        ""
    };
    let _ = writeln!(s, "QBER estimate     {} ± {}{flag}", pct4(r.q_est), pct4(r.q_sigma));
    let _ = writeln!(s, "conclusive        {}", sig4(r.conclusive_fraction));
    if let Some(r_asym) = r.r_asym {
        let _ = writeln!(s, "r asymptotic      {}", sig4(r_asym));
    }
    if let (Some(hz), Some(bps)) = (r.rate_hz, r.secret_bps) {
        let _ = writeln!(s, "coincidence rate  {} Hz", sig4(hz));
        let _ = writeln!(s, "secret rate       {} bit/s", sig4(bps));
    }
    if let Some(f) = &r.finite {
        let _ = writeln!(s, "r_col(N={})  {}", f.n, sig4(f.r_col));
        let _ = writeln!(s, "r_gen(N={})  {}", f.n, sig4(f.r_gen));
    }
    s
}
