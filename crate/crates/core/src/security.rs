//! Secret-fraction mathematics.
//!
//! * asymptotic fraction `r = 1 − f_EC·h(Q) − h(5Q/4)`;
//! * Hoeffding deviation `xi(eps, N) = sqrt((2/N)·ln(2/eps))` and the QBER
//!   upper bound `Q~ = (1 − 2I + xi)/(1 − I)`;
//! * collective-attack finite-key fraction
//!   `r_col = [1 − h(5Q~/4)] − 7·sqrt(log2(2/eps_bar)/N) − log2(1/eps_EC)/N
//!            − log2(2/eps_PA)/N − f_EC·h(Q)`;
//! * general attacks via postselection, `r_gen = r_col − 6·log2(N+1)/N` with
//!   each epsilon scaled down by `(N+1)^3`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Result};
use crate::protocol::qber_from_inconclusive;

/// Error-correction inefficiency used throughout unless overridden.
pub const DEFAULT_F_EC: f64 = 1.1;
/// Per-term epsilon of the reference finite-key analysis.
pub const DEFAULT_EPS: f64 = 1e-10;

/// Logarithm inside the Hoeffding deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Binary,
}

/// Log base of the Hoeffding term. The two-sided Hoeffding inequality is
/// stated with the natural logarithm; [`LogBase::Binary`] is available as an
/// override through [`SecurityParams::xi_log`].
pub const HOEFFDING_LOG_BASE: LogBase = LogBase::Natural;

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Binary => x.log2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    pub eps_bar: f64,
    pub eps_ec: f64,
    pub eps_pa: f64,
    pub eps_pe: f64,
    pub f_ec: f64,
    #[serde(default)]
    pub xi_log: LogBase,
}

impl Default for SecurityParams {
    fn default() -> Self {
        SecurityParams::uniform(DEFAULT_EPS, DEFAULT_F_EC)
    }
}

impl SecurityParams {
    /// All four epsilons equal to `eps`.
    pub fn uniform(eps: f64, f_ec: f64) -> Self {
        SecurityParams {
            eps_bar: eps,
            eps_ec: eps,
            eps_pa: eps,
            eps_pe: eps,
            f_ec,
            xi_log: HOEFFDING_LOG_BASE,
        }
    }

    pub fn eps_col(&self) -> f64 {
        self.eps_bar + self.eps_ec + self.eps_pa + self.eps_pe
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in [
            ("eps_bar", self.eps_bar),
            ("eps_ec", self.eps_ec),
            ("eps_pa", self.eps_pa),
            ("eps_pe", self.eps_pe),
        ] {
            if !(e > 0.0 && e < 1.0) {
                return Err(domain(format!("{name} = {e} not in (0, 1)")));
            }
        }
        if self.eps_col() >= 1.0 {
            return Err(domain("total epsilon must be below 1"));
        }
        if !(self.f_ec >= 1.0 && self.f_ec.is_finite()) {
            return Err(domain(format!("f_ec = {} must be >= 1", self.f_ec)));
        }
        Ok(())
    }
}

/// `h(x) = −x·log2(x) − (1−x)·log2(1−x)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("binary entropy argument {x} not in [0, 1]")));
    }
    Ok(h(x))
}

fn h(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Phase-error entropy argument `5q/4`, capped at 1.
fn phase_arg(q: f64) -> f64 {
    (1.25 * q).min(1.0)
}

/// Asymptotic secret fraction. May be negative; callers clamp when turning it
/// into key length. Meaningful for `0 ≤ q ≤ 0.8`.
pub fn asymptotic_rate(q: f64, f_ec: f64) -> f64 {
    1.0 - f_ec * h(q) - h(phase_arg(q))
}

/// Bisection for the zero of a function that is positive at `lo` and
/// negative at `hi`. Runs until the bracket stops shrinking or `max_iter`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, max_iter: usize) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(precondition("bisection bracket has no sign change"));
    }
    let rising = flo < 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const THRESHOLD_BRACKET: (f64, f64) = (1e-6, 0.4999);
pub const THRESHOLD_ITERATIONS: usize = 200;

/// QBER at which the asymptotic fraction vanishes.
pub fn threshold_qber(f_ec: f64) -> Result<f64> {
    if !(f_ec >= 1.0 && f_ec.is_finite()) {
        return Err(domain(format!("f_ec = {f_ec} must be >= 1")));
    }
    let (lo, hi) = THRESHOLD_BRACKET;
    bisect(|q| asymptotic_rate(q, f_ec), lo, hi, THRESHOLD_ITERATIONS)
}

/// Hoeffding deviation with the default (natural) logarithm.
pub fn hoeffding_xi(eps: f64, n: u64) -> Result<f64> {
    hoeffding_xi_with(eps, n, HOEFFDING_LOG_BASE)
}

pub fn hoeffding_xi_with(eps: f64, n: u64, base: LogBase) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(domain(format!("epsilon {eps} not in (0, 1)")));
    }
    if n == 0 {
        return Err(domain("N must be at least 1"));
    }
    Ok((2.0 / n as f64 * base.log(2.0 / eps)).sqrt())
}

/// Upper bound on the QBER with a clamp flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QTilde {
    pub value: f64,
    pub clamped: bool,
}

/// `(1 − 2I + xi)/(1 − I)`, clamped to `[0, 1]`.
pub fn q_tilde(i_fraction: f64, xi: f64) -> QTilde {
    let raw = (1.0 - 2.0 * i_fraction + xi) / (1.0 - i_fraction);
    if raw.is_nan() || raw > 1.0 {
        QTilde { value: 1.0, clamped: true }
    } else if raw < 0.0 {
        QTilde { value: 0.0, clamped: true }
    } else {
        QTilde { value: raw, clamped: false }
    }
}

/// The five terms of the collective-attack fraction, each with its sign
/// already applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectiveTerms {
    /// `1 − h(5Q~/4)`.
    pub phase_error: f64,
    /// `−7·sqrt(log2(2/eps_bar)/N)`.
    pub smoothing: f64,
    /// `−log2(1/eps_EC)/N`.
    pub ec_confidence: f64,
    /// `−log2(2/eps_PA)/N`.
    pub pa_confidence: f64,
    /// `−f_EC·h(Q)`.
    pub ec_leak: f64,
}

impl CollectiveTerms {
    pub fn total(&self) -> f64 {
        self.phase_error + self.smoothing + self.ec_confidence + self.pa_confidence + self.ec_leak
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeyPoint {
    pub n: u64,
    pub i_fraction: f64,
    pub xi: f64,
    pub q_tilde: f64,
    pub q_est: f64,
    pub r_col: f64,
    /// Unset for a collective-only evaluation.
    pub r_gen: Option<f64>,
    pub terms: CollectiveTerms,
}

fn check_point_inputs(n: u64, i_fraction: f64) -> Result<()> {
    if n == 0 {
        return Err(domain("N must be at least 1"));
    }
    if !(0.0..=0.5).contains(&i_fraction) {
        return Err(domain(format!("inconclusive fraction {i_fraction} not in [0, 1/2]")));
    }
    Ok(())
}

/// Term-by-term collective-attack fraction at `N` signals.
pub fn collective_terms(n: u64, i_fraction: f64, sp: &SecurityParams) -> Result<(CollectiveTerms, f64, QTilde, f64)> {
    check_point_inputs(n, i_fraction)?;
    sp.validate()?;
    let nf = n as f64;
    let xi = hoeffding_xi_with(sp.eps_pe, n, sp.xi_log)?;
    let qt = q_tilde(i_fraction, xi);
    let q = qber_from_inconclusive(i_fraction).qber;
    let terms = CollectiveTerms {
        phase_error: 1.0 - h(phase_arg(qt.value)),
        smoothing: -7.0 * ((2.0 / sp.eps_bar).log2() / nf).sqrt(),
        ec_confidence: -(1.0 / sp.eps_ec).log2() / nf,
        pa_confidence: -(2.0 / sp.eps_pa).log2() / nf,
        ec_leak: -sp.f_ec * h(q),
    };
    Ok((terms, xi, qt, q))
}

/// Collective-attack secret fraction; `r_gen` is left unset.
pub fn r_collective(n: u64, i_fraction: f64, sp: &SecurityParams) -> Result<FiniteKeyPoint> {
    let (terms, xi, qt, q) = collective_terms(n, i_fraction, sp)?;
    Ok(FiniteKeyPoint {
        n,
        i_fraction,
        xi,
        q_tilde: qt.value,
        q_est: q,
        r_col: terms.total(),
        r_gen: None,
        terms,
    })
}

/// Per-term epsilon for the general-attack evaluation: the target is split
/// evenly four ways and divided by `(N+1)^3`.
pub fn general_attack_eps(target_eps_gen: f64, n: u64) -> f64 {
    target_eps_gen / 4.0 / (n as f64 + 1.0).powi(3)
}

/// Postselection penalty `6·log2(N+1)/N`.
pub fn postselection_penalty(n: u64) -> f64 {
    6.0 * (n as f64 + 1.0).log2() / n as f64
}

/// General-attack fraction. The returned point's `r_col` and `terms` are
/// those of the collective evaluation at the scaled epsilons.
pub fn r_general(n: u64, i_fraction: f64, target_eps_gen: f64, f_ec: f64) -> Result<FiniteKeyPoint> {
    r_general_with(n, i_fraction, target_eps_gen, f_ec, HOEFFDING_LOG_BASE)
}

pub fn r_general_with(
    n: u64,
    i_fraction: f64,
    target_eps_gen: f64,
    f_ec: f64,
    xi_log: LogBase,
) -> Result<FiniteKeyPoint> {
    check_point_inputs(n, i_fraction)?;
    if !(target_eps_gen > 0.0 && target_eps_gen < 1.0) {
        return Err(domain(format!("target epsilon {target_eps_gen} not in (0, 1)")));
    }
    let sp = SecurityParams { xi_log, ..SecurityParams::uniform(general_attack_eps(target_eps_gen, n), f_ec) };
    let mut point = r_collective(n, i_fraction, &sp)?;
    point.r_gen = Some(point.r_col - postselection_penalty(n));
    Ok(point)
}

/// One point per `N`: `r_col` at `sp` and `r_gen` at `target_eps_gen`, both
/// using the inconclusive fraction measured on the first `N` events.
pub fn finite_sweep<F: Fn(u64) -> f64>(
    i_fraction_by_prefix: F,
    n_grid: &[u64],
    sp: &SecurityParams,
    target_eps_gen: f64,
) -> Result<Vec<FiniteKeyPoint>> {
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(precondition("N grid must be strictly ascending"));
    }
    n_grid
        .iter()
        .map(|&n| {
            // a short prefix can fluctuate above 1/2, where the estimator saturates
            let i = i_fraction_by_prefix(n).min(0.5);
            let mut point = r_collective(n, i, sp)?;
            let general = r_general_with(n, i, target_eps_gen, sp.f_ec, sp.xi_log)?;
            point.r_gen = general.r_gen;
            Ok(point)
        })
        .collect()
}

/// Logarithmic grid from `10^lo_exp` to `10^hi_exp` with `per_decade` points
/// per decade, rounded to integers and deduplicated.
pub fn log_grid(lo_exp: u32, hi_exp: u32, per_decade: u32) -> Vec<u64> {
    let per = per_decade.max(1);
    let steps = (hi_exp.saturating_sub(lo_exp)) * per;
    let mut grid: Vec<u64> = (0..=steps)
        .map(|k| 10f64.powf(lo_exp as f64 + k as f64 / per as f64).round() as u64)
        .collect();
    grid.dedup();
    grid
}

/// Secret bits per second from the conclusive-event rate; negative fractions
/// give zero.
pub fn secret_rate_bps(conclusive_rate_hz: f64, r: f64) -> f64 {
    conclusive_rate_hz.max(0.0) * r.max(0.0)
}
