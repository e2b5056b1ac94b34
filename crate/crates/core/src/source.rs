//! Entangled-pair source and optical path at the desk-scale operating point.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quantum::{joint_distribution, werner, JointDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    /// Detected coincidence rate.
    pub pair_rate_hz: f64,
    /// Werner visibility of the delivered pairs.
    pub visibility: f64,
    /// Coincidences over singles, per side.
    pub heralding: f64,
    pub coincidence_window_s: f64,
    pub coherence_time_s: f64,
    /// Multi-pair over one-pair events.
    pub multipair_fraction: f64,
    pub dead_time_s: f64,
    pub jitter_fwhm_s: f64,
    pub tag_resolution_s: f64,
    /// Weight of the uniform accidental background in the direct path.
    pub accidental_fraction: f64,
    /// Relative efficiency of Alice's detectors 1..3.
    pub alice_weights: [f64; 3],
    /// Relative efficiency of Bob's detectors 1..3.
    pub bob_weights: [f64; 3],
}

impl Default for SourceParams {
    fn default() -> Self {
        default_params()
    }
}

/// The measured operating point: 29 kHz coincidences, 5 % heralding, 1.5 ns
/// window, 8 ps coherence time, 3e-3 multi-pair fraction, 21 ns dead time,
/// 800 ps FWHM jitter, 81 ps tagging. Visibility is the midpoint of the
/// reported 97–98 % range.
pub fn default_params() -> SourceParams {
    SourceParams {
        pair_rate_hz: 29e3,
        visibility: 0.975,
        heralding: 0.05,
        coincidence_window_s: 1.5e-9,
        coherence_time_s: 8e-12,
        multipair_fraction: 3e-3,
        dead_time_s: 21e-9,
        jitter_fwhm_s: 800e-12,
        tag_resolution_s: 81e-12,
        accidental_fraction: 0.0,
        alice_weights: [1.0; 3],
        bob_weights: [1.0; 3],
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("pair_rate_hz", self.pair_rate_hz),
            ("coincidence_window_s", self.coincidence_window_s),
            ("coherence_time_s", self.coherence_time_s),
            ("multipair_fraction", self.multipair_fraction),
            ("dead_time_s", self.dead_time_s),
            ("jitter_fwhm_s", self.jitter_fwhm_s),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(domain(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if !(self.tag_resolution_s.is_finite() && self.tag_resolution_s > 0.0) {
            return Err(domain("tag_resolution_s must be positive"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(domain(format!("visibility {} not in [0, 1]", self.visibility)));
        }
        if !(self.heralding > 0.0 && self.heralding <= 1.0) {
            return Err(domain(format!("heralding {} not in (0, 1]", self.heralding)));
        }
        if !(0.0..1.0).contains(&self.accidental_fraction) {
            return Err(domain(format!(
                "accidental_fraction {} not in [0, 1)",
                self.accidental_fraction
            )));
        }
        if self.coincidence_window_s <= self.coherence_time_s {
            return Err(domain("coincidence window must exceed the coherence time"));
        }
        for w in self.alice_weights.iter().chain(self.bob_weights.iter()) {
            if !(w.is_finite() && *w > 0.0) {
                return Err(domain(format!("detector weight {w} must be positive")));
            }
        }
        Ok(())
    }

    /// Coincidence window in tag-resolution ticks, rounded to nearest.
    pub fn window_ticks(&self) -> u64 {
        (self.coincidence_window_s / self.tag_resolution_s).round() as u64
    }

    pub fn dead_time_ticks(&self) -> u64 {
        (self.dead_time_s / self.tag_resolution_s).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakReport {
    /// Fraction of multi-pair events partially correlated in polarization,
    /// `tau_c / window`.
    pub zeta: f64,
    /// Correlated multi-pair events over all detection events.
    pub correlated_multipair_fraction: f64,
}

pub fn leak_report(p: &SourceParams) -> LeakReport {
    let zeta = if p.coincidence_window_s > 0.0 {
        (p.coherence_time_s / p.coincidence_window_s).min(1.0)
    } else {
        0.0
    };
    LeakReport { zeta, correlated_multipair_fraction: p.multipair_fraction * zeta }
}

/// Total loss implied by the heralding efficiency, in dB.
pub fn loss_db(p: &SourceParams) -> Result<f64> {
    if p.heralding.is_nan() || p.heralding <= 0.0 {
        return Err(domain("heralding must be positive"));
    }
    Ok(-10.0 * p.heralding.log10())
}

/// Outcome distribution of a detected coincidence: Werner pairs mixed with a
/// uniform accidental background, then reweighted by detector efficiencies.
pub fn effective_distribution(p: &SourceParams) -> Result<JointDistribution> {
    p.validate()?;
    let pairs = joint_distribution(&werner(p.visibility)?);
    let mut d = pairs.mix(&JointDistribution::uniform(), p.accidental_fraction);
    if p.alice_weights != [1.0; 3] || p.bob_weights != [1.0; 3] {
        for (b, row) in d.cells.iter_mut().enumerate() {
            for (a, cell) in row.iter_mut().enumerate() {
                *cell *= p.alice_weights[a] * p.bob_weights[b];
            }
        }
        let t = d.total();
        d.cells.iter_mut().flatten().for_each(|c| *c /= t);
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::werner_qber;

    #[test]
    fn defaults_match_operating_point() {
        let p = default_params();
        assert_eq!(p.pair_rate_hz, 29000.0);
        assert_eq!(p.coincidence_window_s, 1.5e-9);
        assert_eq!(p.visibility, 0.975);
        assert_eq!(p.window_ticks(), 19);
        assert_eq!(p.dead_time_ticks(), 259);
        p.validate().unwrap();
    }

    #[test]
    fn leak_arithmetic() {
        let p = default_params();
        let r = leak_report(&p);
        assert!((r.zeta - 8.0 / 1500.0).abs() < 1e-15);
        assert!((r.zeta - 5.33e-3).abs() < 1e-5);
        let rel = (r.correlated_multipair_fraction - p.multipair_fraction * r.zeta).abs()
            / r.correlated_multipair_fraction;
        assert!(rel <= 1e-15);
        assert!((r.correlated_multipair_fraction - 1.6e-5).abs() < 1e-7);
        let zero = SourceParams { coherence_time_s: 0.0, ..p };
        assert_eq!(leak_report(&zero).zeta, 0.0);
    }

    #[test]
    fn loss_from_heralding() {
        let p = default_params();
        assert!((loss_db(&p).unwrap() - 13.0103).abs() < 1e-4);
        assert_eq!(loss_db(&SourceParams { heralding: 1.0, ..p.clone() }).unwrap(), 0.0);
        assert!((loss_db(&SourceParams { heralding: 0.5, ..p.clone() }).unwrap() - 3.0103).abs() < 1e-4);
        assert!(loss_db(&SourceParams { heralding: 0.0, ..p }).is_err());
    }

    #[test]
    fn effective_distribution_examples() {
        let p = default_params();
        let d = effective_distribution(&SourceParams { visibility: 1.0, ..p.clone() }).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let e = if a == b { 0.0 } else { 1.0 / 6.0 };
                assert!((d.cells[b][a] - e).abs() < 1e-12);
            }
        }
        // accidental_fraction = 1 is outside the parameter range; the mixing
        // step itself is checked at weight 1.
        let pairs = effective_distribution(&p).unwrap();
        let d = pairs.mix(&JointDistribution::uniform(), 1.0);
        assert!(d.cells.iter().flatten().all(|x| (x - 1.0 / 9.0).abs() < 1e-15));
        let d = effective_distribution(&SourceParams { visibility: 0.9772, ..p.clone() }).unwrap();
        assert!((d.implied_qber() - 0.0151).abs() < 5e-5);
        assert!((d.implied_qber() - werner_qber(0.9772)).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_params() {
        let p = default_params();
        assert!(effective_distribution(&SourceParams { visibility: 1.5, ..p.clone() }).is_err());
        assert!(effective_distribution(&SourceParams { accidental_fraction: 1.0, ..p.clone() }).is_err());
        assert!(SourceParams { coincidence_window_s: 1e-12, ..p.clone() }.validate().is_err());
        assert!(SourceParams { dead_time_s: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn qber_monotone_in_visibility_and_accidentals() {
        let p = default_params();
        let q = |v: f64, acc: f64| {
            effective_distribution(&SourceParams { visibility: v, accidental_fraction: acc, ..p.clone() })
                .unwrap()
                .implied_qber()
        };
        let mut last = f64::INFINITY;
        for k in 0..=20 {
            let v = k as f64 / 20.0;
            let cur = q(v, 0.01);
            assert!(cur < last);
            last = cur;
        }
        let mut last = -1.0;
        for k in 0..20 {
            let acc = k as f64 / 20.0;
            let cur = q(0.97, acc);
            assert!(cur > last);
            last = cur;
        }
    }

    #[test]
    fn cyclic_symmetry_preserved() {
        let p = SourceParams { visibility: 0.8, accidental_fraction: 0.1, ..default_params() };
        let d = effective_distribution(&p).unwrap();
        let s = d.cyclic_shift();
        for (x, y) in d.cells.iter().flatten().zip(s.cells.iter().flatten()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}
