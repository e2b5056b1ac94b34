//! Classical protocol logic: Alice's bit draw and set announcement, Bob's
//! decoding, sifting, and QBER estimation from the inconclusive fraction.
//!
//! Set `S_k` holds `(psi_k, psi_{k+1})`, first element encoding bit 0. Alice
//! holding detector `A_k` means she prepared `psi_k` for Bob.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{domain, precondition, Result};
use crate::quantum::TrineIndex;
use crate::sim::{chunk_rng, CoincidenceEvent, CountsTable, Domain, CHUNK_LEN};

/// Index of an announced set `S_1`, `S_2`, `S_3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SetIndex(TrineIndex);

impl SetIndex {
    pub const S1: SetIndex = SetIndex(TrineIndex::ONE);
    pub const S2: SetIndex = SetIndex(TrineIndex::TWO);
    pub const S3: SetIndex = SetIndex(TrineIndex::THREE);
    pub const ALL: [SetIndex; 3] = [Self::S1, Self::S2, Self::S3];

    pub fn new(value: u8) -> Result<Self> {
        TrineIndex::new(value).map(SetIndex)
    }

    pub fn value(self) -> u8 {
        self.0.value()
    }

    pub fn index(self) -> TrineIndex {
        self.0
    }
}

impl fmt::Display for SetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecodeOutcome {
    Conclusive(bool),
    Inconclusive,
}

/// The set Alice announces for her detector and bit: `psi_k` is the first
/// element of `S_k` (bit 0) and the second element of `S_{k-1}` (bit 1).
pub fn alice_announce(alice_detector: TrineIndex, bit: bool) -> SetIndex {
    if bit {
        SetIndex(alice_detector.prev())
    } else {
        SetIndex(alice_detector)
    }
}

/// Bob's reading of his click given the announced set `S_i`: detector `i+1`
/// excludes `psi_{i+1}` so he infers bit 0, detector `i` excludes `psi_i` so
/// bit 1, and detector `i+2` excludes neither state.
pub fn bob_decode(set: SetIndex, bob_detector: TrineIndex) -> DecodeOutcome {
    let i = set.index();
    if bob_detector == i.next() {
        DecodeOutcome::Conclusive(false)
    } else if bob_detector == i {
        DecodeOutcome::Conclusive(true)
    } else {
        DecodeOutcome::Inconclusive
    }
}

/// Running sift statistics, usable over a stream of event chunks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiftAccumulator {
    pub alice_bits: Vec<bool>,
    pub bob_bits: Vec<bool>,
    pub n_total: u64,
    pub n_inconclusive: u64,
    /// Conclusive events where the two bits disagree.
    pub n_errors: u64,
    pub counts: CountsTable,
    keep_bits: bool,
}

impl SiftAccumulator {
    /// `keep_bits = false` tracks statistics only.
    pub fn new(keep_bits: bool) -> Self {
        SiftAccumulator { keep_bits, ..Default::default() }
    }

    pub fn push(&mut self, event: &CoincidenceEvent, bit: bool) -> DecodeOutcome {
        self.n_total += 1;
        self.counts.record(event.alice, event.bob);
        let outcome = bob_decode(alice_announce(event.alice, bit), event.bob);
        match outcome {
            DecodeOutcome::Inconclusive => self.n_inconclusive += 1,
            DecodeOutcome::Conclusive(b) => {
                if b != bit {
                    self.n_errors += 1;
                }
                if self.keep_bits {
                    self.alice_bits.push(bit);
                    self.bob_bits.push(b);
                }
            }
        }
        outcome
    }

    pub fn n_conclusive(&self) -> u64 {
        self.n_total - self.n_inconclusive
    }

    pub fn inconclusive_fraction(&self) -> f64 {
        if self.n_total == 0 {
            0.0
        } else {
            self.n_inconclusive as f64 / self.n_total as f64
        }
    }

    pub fn finish(self) -> SiftResult {
        let inconclusive_fraction = self.inconclusive_fraction();
        SiftResult {
            alice_bits: self.alice_bits,
            bob_bits: self.bob_bits,
            n_total: self.n_total,
            n_inconclusive: self.n_inconclusive,
            n_errors: self.n_errors,
            inconclusive_fraction,
            counts: self.counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftResult {
    pub alice_bits: Vec<bool>,
    pub bob_bits: Vec<bool>,
    pub n_total: u64,
    pub n_inconclusive: u64,
    pub n_errors: u64,
    /// `I`, over all coincidence events.
    pub inconclusive_fraction: f64,
    pub counts: CountsTable,
}

impl SiftResult {
    pub fn n_conclusive(&self) -> u64 {
        self.n_total - self.n_inconclusive
    }
}

/// Sifts `events` given Alice's per-event bits.
pub fn sift(events: &[CoincidenceEvent], bits: &[bool]) -> Result<SiftResult> {
    if events.len() != bits.len() {
        return Err(precondition(format!(
            "{} events but {} bits",
            events.len(),
            bits.len()
        )));
    }
    let mut acc = SiftAccumulator::new(true);
    for (e, &b) in events.iter().zip(bits) {
        acc.push(e, b);
    }
    Ok(acc.finish())
}

/// Bits of chunk `chunk`; see [`draw_bits`].
pub fn bit_chunk(seed: u64, chunk: u64, len: usize) -> Vec<bool> {
    let mut rng = chunk_rng(seed, Domain::AliceBits, chunk);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let word = rng.next_u64();
        let take = (len - out.len()).min(64);
        out.extend((0..take).map(|k| (word >> k) & 1 == 1));
    }
    out
}

/// Alice's uniform bit per event, drawn after all events are collected and
/// from a stream independent of the event sampler.
pub fn draw_bits(n: usize, seed: u64) -> Vec<bool> {
    let mut out = Vec::with_capacity(n);
    let mut chunk = 0;
    while out.len() < n {
        let len = (n - out.len()).min(CHUNK_LEN);
        out.extend(bit_chunk(seed, chunk, len));
        chunk += 1;
    }
    out
}

/// QBER estimate with a saturation flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberEstimate {
    pub qber: f64,
    /// Set when `I` fell outside `[0, 1/2]` and the estimate was clamped.
    pub saturated: bool,
}

/// `Q = (1 − 2I)/(1 − I)`. Above `I = 1/2` the estimator saturates at 0 and
/// the result is flagged.
pub fn qber_from_inconclusive(i_fraction: f64) -> QberEstimate {
    if i_fraction > 0.5 {
        return QberEstimate { qber: 0.0, saturated: true };
    }
    if i_fraction < 0.0 || i_fraction.is_nan() {
        return QberEstimate { qber: 1.0, saturated: true };
    }
    let q = (1.0 - 2.0 * i_fraction) / (1.0 - i_fraction);
    QberEstimate { qber: q.clamp(0.0, 1.0), saturated: false }
}

/// One-sigma binomial error of the estimator at `n` events:
/// `sqrt(I(1 − I)/n) / (1 − I)^2`.
pub fn qber_sigma(i_fraction: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    let i = i_fraction.clamp(0.0, 0.5);
    (i * (1.0 - i) / n as f64).sqrt() / (1.0 - i).powi(2)
}

/// Fraction of positions where the two keys disagree.
pub fn true_qber(alice_bits: &[bool], bob_bits: &[bool]) -> Result<f64> {
    if alice_bits.len() != bob_bits.len() {
        return Err(precondition("key lengths differ"));
    }
    if alice_bits.is_empty() {
        return Err(domain("QBER of an empty key"));
    }
    let mismatches = alice_bits.iter().zip(bob_bits).filter(|(a, b)| a != b).count();
    Ok(mismatches as f64 / alice_bits.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub index: usize,
    pub n_events: u64,
    pub i_fraction: f64,
    pub q_est: f64,
    pub q_sigma: f64,
    pub saturated: bool,
    pub conclusive: u64,
    /// Last block shorter than `block_size`.
    pub partial: bool,
}

impl BlockStats {
    pub fn from_accumulator(index: usize, acc: &SiftAccumulator, partial: bool) -> Self {
        let i = acc.inconclusive_fraction();
        let est = qber_from_inconclusive(i);
        BlockStats {
            index,
            n_events: acc.n_total,
            i_fraction: i,
            q_est: est.qber,
            q_sigma: qber_sigma(i, acc.n_total),
            saturated: est.saturated,
            conclusive: acc.n_conclusive(),
            partial,
        }
    }
}

/// Per-block statistics over consecutive blocks of `block_size` events.
pub fn block_series(events: &[CoincidenceEvent], bits: &[bool], block_size: usize) -> Result<Vec<BlockStats>> {
    if block_size == 0 {
        return Err(domain("block size must be positive"));
    }
    if events.len() != bits.len() {
        return Err(precondition("events and bits differ in length"));
    }
    Ok(events
        .chunks(block_size)
        .zip(bits.chunks(block_size))
        .enumerate()
        .map(|(k, (ev, bt))| {
            let mut acc = SiftAccumulator::new(false);
            for (e, &b) in ev.iter().zip(bt) {
                acc.push(e, b);
            }
            BlockStats::from_accumulator(k, &acc, ev.len() < block_size)
        })
        .collect())
}
