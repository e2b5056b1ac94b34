//! Streaming simulation of a full run: counts histogram, block series and
//! finite-key sweep, without holding the events in memory.

use serde::Serialize;
use trine_qkd::protocol::{bit_chunk, BlockStats, SiftAccumulator};
use trine_qkd::quantum::JointDistribution;
use trine_qkd::security::{asymptotic_rate, finite_sweep, log_grid, secret_rate_bps, FiniteKeyPoint};
use trine_qkd::sim::{stream_coincidences, CountsTable};
use trine_qkd::source::effective_distribution;
use trine_qkd::TrineIndex;

use crate::analysis::{analyze_counts, AnalysisReport};
use crate::config::RunConfig;
use crate::error::Result;
use crate::output::{BlockRow, CountsRow};

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub n_events: u64,
    pub counts: CountsTable,
    pub q_true: Option<f64>,
    pub report: AnalysisReport,
    #[serde(skip)]
    pub histogram: Vec<CountsRow>,
    #[serde(skip)]
    pub blocks: Vec<BlockRow>,
    #[serde(skip)]
    pub sweep: Vec<FiniteKeyPoint>,
}

fn histogram(counts: &CountsTable, dist: &JointDistribution) -> Vec<CountsRow> {
    let n = counts.total() as f64;
    let mut rows = Vec::with_capacity(9);
    for b in TrineIndex::ALL {
        for a in TrineIndex::ALL {
            rows.push(CountsRow { alice: a.value(), bob: b.value(), observed: counts.get(a, b), expected: n * dist.get(a, b) });
        }
    }
    rows
}

fn block_row(index: usize, start: u64, acc: &SiftAccumulator, cfg: &RunConfig, partial: bool) -> BlockRow {
    let rate = cfg.source.pair_rate_hz;
    let stats = BlockStats::from_accumulator(index, acc, partial);
    let span = acc.n_total as f64 / rate;
    let r = asymptotic_rate(stats.q_est, cfg.security.f_ec);
    let conclusive = acc.n_conclusive();
    BlockRow {
        index,
        t_start_s: start as f64 / rate,
        t_end_s: (start + acc.n_total) as f64 / rate,
        n_events: acc.n_total,
        conclusive,
        i_fraction: stats.i_fraction,
        q_est: stats.q_est,
        q_sigma: stats.q_sigma,
        q_true: (conclusive > 0).then(|| acc.n_errors as f64 / conclusive as f64),
        r_asym: r,
        secret_bps: secret_rate_bps(conclusive as f64 / span, r),
        partial,
    }
}

/// Runs the configured simulation. Events are sampled from the source's
/// effective distribution; Alice's bits come from an independent stream under
/// the same seed.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationSummary> {
    cfg.validate()?;
    let dist = effective_distribution(&cfg.source)?;
    let n = cfg.event_count();
    let block = cfg.block_events();
    let grid: Vec<u64> = log_grid(cfg.sweep_lo_exp, cfg.sweep_hi_exp, cfg.sweep_per_decade)
        .into_iter()
        .filter(|&g| g >= 1 && g <= n)
        .collect();

    let mut total = SiftAccumulator::new(false);
    let mut current = SiftAccumulator::new(false);
    let mut block_start = 0u64;
    let mut blocks = Vec::new();
    let mut prefix_i = Vec::with_capacity(grid.len());
    let mut next_grid = 0;

    stream_coincidences(&dist, n as usize, cfg.seed, |k, events| {
        let bits = bit_chunk(cfg.seed, k, events.len());
        for (e, &bit) in events.iter().zip(&bits) {
            total.push(e, bit);
            current.push(e, bit);
            if next_grid < grid.len() && total.n_total == grid[next_grid] {
                prefix_i.push(total.inconclusive_fraction());
                next_grid += 1;
            }
            if current.n_total == block {
                blocks.push(block_row(blocks.len(), block_start, &current, cfg, false));
                block_start += current.n_total;
                current = SiftAccumulator::new(false);
            }
        }
    })?;
    if current.n_total > 0 {
        blocks.push(block_row(blocks.len(), block_start, &current, cfg, true));
    }

    let sweep = finite_sweep(
        |m| prefix_i[grid.iter().position(|&g| g == m).expect("grid point")],
        &grid,
        &cfg.security,
        cfg.target_eps_gen,
    )?;
    let report = analyze_counts(&total.counts, Some(cfg.source.pair_rate_hz), None, &cfg.security, cfg.target_eps_gen)?;
    let conclusive = total.n_conclusive();
    Ok(SimulationSummary {
        n_events: n,
        counts: total.counts,
        q_true: (conclusive > 0).then(|| total.n_errors as f64 / conclusive as f64),
        report,
        histogram: histogram(&total.counts, &dist),
        blocks,
        sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use trine_qkd::quantum::{joint_distribution, werner};
    use trine_qkd::security::SecurityParams;
    use trine_qkd::sim::{sample_coincidences, tally};

    #[test]
    fn run_pieces_are_consistent() {
        let cfg = RunConfig { n_events: Some(2_000_000), ..RunConfig::default() };
        let s = simulate(&cfg).unwrap();
        assert!(!s.sweep.is_empty() && s.sweep.iter().all(|p| p.n <= 2_000_000));
        assert_eq!(s.histogram.len(), 9);
        assert_eq!(s.histogram.iter().map(|r| r.observed).sum::<u64>(), 2_000_000);
        assert_eq!(s.blocks.iter().map(|b| b.n_events).sum::<u64>(), 2_000_000);
        // the largest grid point is the full prefix only when it equals N
        let last = s.sweep.last().unwrap();
        assert!(last.n == 1_778_279 && last.i_fraction > 0.49);
        // fixed-I evaluation over the same grid is monotone
        let grid: Vec<u64> = s.sweep.iter().map(|p| p.n).collect();
        let i = s.report.i_fraction;
        let fixed = finite_sweep(|_| i, &grid, &cfg.security, cfg.target_eps_gen).unwrap();
        assert!(fixed.windows(2).all(|w| w[1].r_col > w[0].r_col));
    }

    #[test]
    fn analysis_converges_to_exact_fractions() {
        let dist = joint_distribution(&werner(0.97).unwrap());
        let exact_i = (1.0 - dist.error_fraction()) / 2.0;
        let sp = SecurityParams::default();
        for n in [10_000, 1_000_000] {
            let r = analyze_counts(&tally(&sample_coincidences(&dist, n, 3).unwrap()), None, None, &sp, 4e-10).unwrap();
            assert!((r.i_fraction - exact_i).abs() < 5.0 * (0.25 / n as f64).sqrt());
        }
    }
}
