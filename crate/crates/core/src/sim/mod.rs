//! Seeded Monte-Carlo generation of coincidence events.
//!
//! All randomness comes from ChaCha20 keyed by the user seed. Work is cut into
//! fixed-size chunks; chunk `k` of domain `d` draws from stream
//! `(d << 56) | k`, so results do not depend on how chunks are scheduled
//! across threads. The canonical event order is chunk order.

mod timetag;
pub mod ttag_file;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::quantum::{JointDistribution, TrineIndex};

pub use timetag::{match_coincidences, sample_timetags, TimeTag, TimeTagRun};

/// Identifier recorded in output metadata.
pub const GENERATOR_ID: &str = "chacha20/stream-per-chunk/v1";
/// Events (or bits) per chunk.
pub const CHUNK_LEN: usize = 1 << 16;

/// Stream domains. Each consumer of randomness gets its own.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Domain {
    Coincidences = 1,
    AliceBits = 2,
    TimeTags = 3,
}

/// Generator for chunk `chunk` of `domain` under `seed`.
pub fn chunk_rng(seed: u64, domain: Domain, chunk: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) | (chunk & ((1 << 56) - 1)));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceEvent {
    pub alice: TrineIndex,
    pub bob: TrineIndex,
    /// In tag-resolution ticks, when the event came from a time-tag stream.
    pub timestamp_ticks: Option<u64>,
}

impl CoincidenceEvent {
    pub fn new(alice: TrineIndex, bob: TrineIndex) -> Self {
        CoincidenceEvent { alice, bob, timestamp_ticks: None }
    }

    pub fn is_diagonal(&self) -> bool {
        self.alice == self.bob
    }
}

/// Coincidence counts, rows = Bob's detector, columns = Alice's.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    /// `counts[bob - 1][alice - 1]`.
    pub counts: [[u64; 3]; 3],
}

impl CountsTable {
    pub fn get(&self, alice: TrineIndex, bob: TrineIndex) -> u64 {
        self.counts[bob.zero_based()][alice.zero_based()]
    }

    pub fn record(&mut self, alice: TrineIndex, bob: TrineIndex) {
        self.counts[bob.zero_based()][alice.zero_based()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn diagonal_total(&self) -> u64 {
        (0..3).map(|k| self.counts[k][k]).sum()
    }

    pub fn off_diagonal_total(&self) -> u64 {
        self.total() - self.diagonal_total()
    }

    pub fn merge(&mut self, other: &CountsTable) {
        for (r, o) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (c, x) in r.iter_mut().zip(o.iter()) {
                *c += x;
            }
        }
    }

    /// Off-diagonal cells as `(alice, bob, count)`.
    pub fn off_diagonal_cells(&self) -> impl Iterator<Item = (TrineIndex, TrineIndex, u64)> + '_ {
        TrineIndex::ALL.into_iter().flat_map(move |a| {
            TrineIndex::ALL
                .into_iter()
                .filter(move |&b| b != a)
                .map(move |b| (a, b, self.get(a, b)))
        })
    }
}

/// Inverse-CDF sampler over the nine outcome cells.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    cumulative: [f64; 9],
    last_nonzero: usize,
}

impl OutcomeSampler {
    pub fn new(dist: &JointDistribution) -> Result<Self> {
        dist.validate(1e-9)?;
        let mut cumulative = [0.0; 9];
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (k, p) in dist.cells.iter().flatten().enumerate() {
            acc += p;
            cumulative[k] = acc;
            if *p > 0.0 {
                last_nonzero = k;
            }
        }
        Ok(OutcomeSampler { cumulative, last_nonzero })
    }

    fn cell(k: usize) -> (TrineIndex, TrineIndex) {
        // k = 3 * bob + alice
        (TrineIndex::from_zero_based(k % 3), TrineIndex::from_zero_based(k / 3))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (TrineIndex, TrineIndex) {
        let u: f64 = rng.random();
        let k = self
            .cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.last_nonzero);
        Self::cell(k)
    }
}

fn chunk_bounds(n: usize) -> impl IndexedParallelIterator<Item = (u64, usize)> {
    let chunks = n.div_ceil(CHUNK_LEN);
    (0..chunks)
        .into_par_iter()
        .map(move |k| (k as u64, CHUNK_LEN.min(n - k * CHUNK_LEN)))
}

/// Events of chunk `chunk`, `len` long.
pub fn sample_chunk(sampler: &OutcomeSampler, seed: u64, chunk: u64, len: usize) -> Vec<CoincidenceEvent> {
    let mut rng = chunk_rng(seed, Domain::Coincidences, chunk);
    (0..len)
        .map(|_| {
            let (a, b) = sampler.sample(&mut rng);
            CoincidenceEvent::new(a, b)
        })
        .collect()
}

/// `n` i.i.d. coincidence outcomes drawn from `dist`.
pub fn sample_coincidences(dist: &JointDistribution, n: usize, seed: u64) -> Result<Vec<CoincidenceEvent>> {
    let sampler = OutcomeSampler::new(dist)?;
    let chunks: Vec<Vec<CoincidenceEvent>> = chunk_bounds(n)
        .map(|(k, len)| sample_chunk(&sampler, seed, k, len))
        .collect();
    Ok(chunks.concat())
}

/// Same draws as [`sample_coincidences`], tallied without materializing the
/// events. Use this for runs too large to hold in memory.
pub fn sample_counts(dist: &JointDistribution, n: usize, seed: u64) -> Result<CountsTable> {
    let sampler = OutcomeSampler::new(dist)?;
    let table = chunk_bounds(n)
        .map(|(k, len)| {
            let mut rng = chunk_rng(seed, Domain::Coincidences, k);
            let mut t = CountsTable::default();
            for _ in 0..len {
                let (a, b) = sampler.sample(&mut rng);
                t.record(a, b);
            }
            t
        })
        .reduce(CountsTable::default, |mut x, y| {
            x.merge(&y);
            x
        });
    Ok(table)
}

/// Same draws as [`sample_coincidences`], handed to `visit` one chunk at a
/// time in canonical order. Chunks are generated in parallel a batch at a
/// time, so memory stays bounded for arbitrarily long runs.
pub fn stream_coincidences<F>(dist: &JointDistribution, n: usize, seed: u64, mut visit: F) -> Result<()>
where
    F: FnMut(u64, &[CoincidenceEvent]),
{
    const BATCH_CHUNKS: usize = 64;
    let sampler = OutcomeSampler::new(dist)?;
    let chunks = n.div_ceil(CHUNK_LEN);
    let mut start = 0;
    while start < chunks {
        let end = (start + BATCH_CHUNKS).min(chunks);
        let batch: Vec<Vec<CoincidenceEvent>> = (start..end)
            .into_par_iter()
            .map(|k| sample_chunk(&sampler, seed, k as u64, CHUNK_LEN.min(n - k * CHUNK_LEN)))
            .collect();
        for (k, events) in (start..end).zip(&batch) {
            visit(k as u64, events);
        }
        start = end;
    }
    Ok(())
}

pub fn tally(events: &[CoincidenceEvent]) -> CountsTable {
    let mut t = CountsTable::default();
    for e in events {
        t.record(e.alice, e.bob);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{joint_distribution, singlet};

    #[test]
    fn empty_sample() {
        let d = JointDistribution::uniform();
        assert!(sample_coincidences(&d, 0, 3).unwrap().is_empty());
        assert_eq!(sample_counts(&d, 0, 3).unwrap().total(), 0);
    }

    #[test]
    fn rejects_unnormalized() {
        let mut d = JointDistribution::uniform();
        d.cells[0][0] = 0.5;
        assert!(sample_coincidences(&d, 10, 1).is_err());
        d.cells[0][0] = -1.0 / 9.0;
        assert!(sample_coincidences(&d, 10, 1).is_err());
    }

    #[test]
    fn deterministic_and_counts_agree() {
        let d = joint_distribution(&crate::quantum::werner(0.9).unwrap());
        let n = 3 * CHUNK_LEN + 17;
        let a = sample_coincidences(&d, n, 42).unwrap();
        let b = sample_coincidences(&d, n, 42).unwrap();
        assert_eq!(a.len(), n);
        assert_eq!(a, b);
        assert_eq!(tally(&a), sample_counts(&d, n, 42).unwrap());
        assert_ne!(a, sample_coincidences(&d, n, 43).unwrap());
        // a prefix run is a prefix of the longer run
        let p = sample_coincidences(&d, CHUNK_LEN + 5, 42).unwrap();
        assert_eq!(&a[..CHUNK_LEN], &p[..CHUNK_LEN]);
    }

    #[test]
    fn singlet_never_yields_diagonal() {
        let d = joint_distribution(&singlet());
        let t = sample_counts(&d, 600_000, 7).unwrap();
        assert_eq!(t.diagonal_total(), 0);
        assert_eq!(t.total(), 600_000);
    }

    #[test]
    fn tally_examples() {
        assert_eq!(tally(&[]), CountsTable::default());
        let t = tally(&[CoincidenceEvent::new(TrineIndex::ONE, TrineIndex::TWO)]);
        assert_eq!(t.get(TrineIndex::ONE, TrineIndex::TWO), 1);
        assert_eq!(t.counts[1][0], 1);
        assert_eq!(t.total(), 1);
    }
}
