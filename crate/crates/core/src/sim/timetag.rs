use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{chunk_rng, CoincidenceEvent, Domain, OutcomeSampler};
use crate::error::{domain, precondition, Result};
use crate::quantum::TrineIndex;
use crate::source::{effective_distribution, SourceParams};

/// FWHM of a Gaussian over its standard deviation, 2·sqrt(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTag {
    pub detector: TrineIndex,
    pub ticks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagRun {
    pub alice: Vec<TimeTag>,
    pub bob: Vec<TimeTag>,
    /// Pairs with both photons surviving, before jitter and dead time.
    pub pairs_generated: u64,
    pub alice_singles_generated: u64,
    pub bob_singles_generated: u64,
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64; 3]) -> TrineIndex {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return TrineIndex::from_zero_based(k);
        }
        u -= w;
    }
    TrineIndex::THREE
}

fn arrivals<R: Rng>(rng: &mut R, rate_hz: f64, duration_s: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if rate_hz <= 0.0 {
        return out;
    }
    let exp = Exp::new(rate_hz).expect("positive rate");
    let mut t = exp.sample(rng);
    while t < duration_s {
        out.push(t);
        t += exp.sample(rng);
    }
    out
}

/// Sort by time and drop tags arriving within the dead time of the previous
/// kept tag on the same detector.
fn finalize_stream(mut tags: Vec<TimeTag>, dead_ticks: u64) -> Vec<TimeTag> {
    tags.sort_by_key(|t| t.ticks);
    let mut last: [Option<u64>; 3] = [None; 3];
    tags.retain(|t| {
        let slot = &mut last[t.detector.zero_based()];
        match *slot {
            Some(prev) if t.ticks < prev + dead_ticks => false,
            _ => {
                *slot = Some(t.ticks);
                true
            }
        }
    });
    tags
}

/// Time-tag streams for both parties over `duration_s` seconds.
///
/// Pairs with both photons detected arrive as a Poisson process at
/// `pair_rate_hz`, labeled from the effective outcome distribution. Each side
/// also sees unpartnered singles at `pair_rate_hz·(1 − η)/η` where η is the
/// heralding efficiency, labeled from that side's marginal. Every tag gets
/// independent Gaussian jitter, is rounded to the tag resolution, and is
/// subject to per-detector non-paralyzable dead time.
pub fn sample_timetags(p: &SourceParams, duration_s: f64, seed: u64) -> Result<TimeTagRun> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(domain(format!("duration {duration_s} must be positive")));
    }
    let dist = effective_distribution(p)?;
    let sampler = OutcomeSampler::new(&dist)?;
    let mut rng = chunk_rng(seed, Domain::TimeTags, 0);

    let sigma_ticks = p.jitter_fwhm_s / FWHM_PER_SIGMA / p.tag_resolution_s;
    let jitter = Normal::new(0.0, sigma_ticks).map_err(|e| domain(e.to_string()))?;
    let res = p.tag_resolution_s;
    let to_tag = |rng: &mut rand_chacha::ChaCha20Rng, t: f64, d: TrineIndex| {
        let ticks = t / res + if sigma_ticks > 0.0 { jitter.sample(rng) } else { 0.0 };
        TimeTag { detector: d, ticks: ticks.round().max(0.0) as u64 }
    };

    let single_rate = p.pair_rate_hz * (1.0 - p.heralding) / p.heralding;
    let mut alice = Vec::new();
    let mut bob = Vec::new();

    let pair_times = arrivals(&mut rng, p.pair_rate_hz, duration_s);
    for &t in &pair_times {
        let (a, b) = sampler.sample(&mut rng);
        alice.push(to_tag(&mut rng, t, a));
        bob.push(to_tag(&mut rng, t, b));
    }

    let alice_marginal = dist.alice_marginal();
    let alice_singles = arrivals(&mut rng, single_rate, duration_s);
    for &t in &alice_singles {
        let d = pick(&mut rng, &alice_marginal);
        alice.push(to_tag(&mut rng, t, d));
    }
    let bob_marginal = dist.bob_marginal();
    let bob_singles = arrivals(&mut rng, single_rate, duration_s);
    for &t in &bob_singles {
        let d = pick(&mut rng, &bob_marginal);
        bob.push(to_tag(&mut rng, t, d));
    }

    let dead = p.dead_time_ticks();
    Ok(TimeTagRun {
        alice: finalize_stream(alice, dead),
        bob: finalize_stream(bob, dead),
        pairs_generated: pair_times.len() as u64,
        alice_singles_generated: alice_singles.len() as u64,
        bob_singles_generated: bob_singles.len() as u64,
    })
}

fn check_ordered(stream: &[TimeTag], who: &str) -> Result<()> {
    if let Some(k) = stream.windows(2).position(|w| w[1].ticks < w[0].ticks) {
        return Err(precondition(format!("{who} stream not time-ordered at index {}", k + 1)));
    }
    Ok(())
}

/// Greedy earliest-first pairing of two time-ordered streams. Each tag is
/// used at most once and every pair satisfies `|tA − tB| ≤ window_ticks`.
/// The event timestamp is the earlier of the two tags.
pub fn match_coincidences(
    alice: &[TimeTag],
    bob: &[TimeTag],
    window_ticks: u64,
) -> Result<Vec<CoincidenceEvent>> {
    check_ordered(alice, "alice")?;
    check_ordered(bob, "bob")?;
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < alice.len() && j < bob.len() {
        let (ta, tb) = (alice[i].ticks, bob[j].ticks);
        if ta.saturating_add(window_ticks) < tb {
            i += 1;
        } else if tb.saturating_add(window_ticks) < ta {
            j += 1;
        } else {
            out.push(CoincidenceEvent {
                alice: alice[i].detector,
                bob: bob[j].detector,
                timestamp_ticks: Some(ta.min(tb)),
            });
            i += 1;
            j += 1;
        }
    }
    Ok(out)
}
