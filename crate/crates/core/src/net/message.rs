//! Message payload codecs.
//!
//! | type | payload |
//! |------|---------|
//! | `SESSION_START` | `version: u8, role: u8, params_digest: u64` |
//! | `EVENT_BATCH` | `first_ordinal: u64`, then detectors packed 4 per byte |
//! | `SET_ANNOUNCE` | set indices packed 4 per byte |
//! | `INCONCLUSIVE_MARKS` | little-endian bitset, bit k set = event k inconclusive |
//! | `STATS` | `i_fraction: f64, n_total: u64, n_inconclusive: u64` |
//! | `KEY_DIGEST` | `digest: u64` |
//! | `CLOSE` | empty |
//!
//! Packed fields are 2 bits, filled from the low bits of each byte; value
//! `v ∈ {1,2,3}` is stored as `v − 1`. Trailing unused fields of the last
//! byte hold `0b11`, which no index uses, so the count is self-describing.

use super::frame::{Frame, MsgType};
use super::NetError;
use crate::protocol::SetIndex;
use crate::quantum::TrineIndex;

pub const PAD_FIELD: u8 = 0b11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Source = 0,
    Alice = 1,
    Bob = 2,
}

impl Role {
    pub fn from_code(code: u8) -> Result<Self, NetError> {
        match code {
            0 => Ok(Role::Source),
            1 => Ok(Role::Alice),
            2 => Ok(Role::Bob),
            other => Err(NetError::Protocol(format!("unknown role code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Alice => "alice",
            Role::Bob => "bob",
        }
    }
}

/// Bitset over event positions, stored as the raw little-endian bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkSet {
    bytes: Vec<u8>,
}

impl MarkSet {
    pub fn from_flags(flags: &[bool]) -> Self {
        let mut bytes = vec![0u8; flags.len().div_ceil(8)];
        for (k, _) in flags.iter().enumerate().filter(|(_, f)| **f) {
            bytes[k / 8] |= 1 << (k % 8);
        }
        MarkSet { bytes }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        MarkSet { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn get(&self, k: usize) -> bool {
        self.bytes.get(k / 8).is_some_and(|b| (b >> (k % 8)) & 1 == 1)
    }

    /// Flags for the first `n` positions. Fails if the byte length does not
    /// fit `n` or a bit past `n` is set.
    pub fn to_flags(&self, n: usize) -> Result<Vec<bool>, NetError> {
        if self.bytes.len() != n.div_ceil(8) {
            return Err(NetError::Protocol(format!(
                "mark set of {} bytes cannot cover {n} events",
                self.bytes.len()
            )));
        }
        if (n..self.bytes.len() * 8).any(|k| self.get(k)) {
            return Err(NetError::Protocol("mark set has bits past the batch end".into()));
        }
        Ok((0..n).map(|k| self.get(k)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    SessionStart { version: u8, role: Role, params_digest: u64 },
    EventBatch { first_ordinal: u64, detectors: Vec<TrineIndex> },
    SetAnnounce(Vec<SetIndex>),
    InconclusiveMarks(MarkSet),
    Stats { i_fraction: f64, n_total: u64, n_inconclusive: u64 },
    KeyDigest(u64),
    Close,
}

/// Packs values in `1..=3` four per byte.
pub fn pack_indices(values: impl ExactSizeIterator<Item = u8>) -> Vec<u8> {
    let n = values.len();
    let mut out = vec![0xffu8; n.div_ceil(4)];
    for (k, v) in values.enumerate() {
        let shift = 2 * (k % 4);
        let byte = &mut out[k / 4];
        *byte = (*byte & !(0b11 << shift)) | ((v - 1) << shift);
    }
    out
}

/// Inverse of [`pack_indices`].
pub fn unpack_indices(bytes: &[u8]) -> Result<Vec<u8>, NetError> {
    let mut out = Vec::with_capacity(bytes.len() * 4);
    let mut padding = false;
    for (pos, &b) in bytes.iter().enumerate() {
        for slot in 0..4 {
            let field = (b >> (2 * slot)) & 0b11;
            if field == PAD_FIELD {
                padding = true;
            } else if padding {
                return Err(NetError::Protocol("index field after padding".into()));
            } else {
                out.push(field + 1);
            }
        }
        if padding && pos + 1 != bytes.len() {
            return Err(NetError::Protocol("padding before the last byte".into()));
        }
    }
    if padding && out.len() % 4 == 0 {
        return Err(NetError::Protocol("padding-only byte".into()));
    }
    Ok(out)
}

fn exact_len(payload: &[u8], n: usize, what: &str) -> Result<(), NetError> {
    if payload.len() != n {
        return Err(NetError::Framing(format!("{what} payload is {} bytes, expected {n}", payload.len())));
    }
    Ok(())
}

fn u64_at(p: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(p[at..at + 8].try_into().expect("8 bytes"))
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::SessionStart { .. } => MsgType::SessionStart,
            Message::EventBatch { .. } => MsgType::EventBatch,
            Message::SetAnnounce(_) => MsgType::SetAnnounce,
            Message::InconclusiveMarks(_) => MsgType::InconclusiveMarks,
            Message::Stats { .. } => MsgType::Stats,
            Message::KeyDigest(_) => MsgType::KeyDigest,
            Message::Close => MsgType::Close,
        }
    }

    pub fn encode(&self) -> Frame {
        let payload = match self {
            Message::SessionStart { version, role, params_digest } => {
                let mut p = vec![*version, *role as u8];
                p.extend_from_slice(&params_digest.to_le_bytes());
                p
            }
            Message::EventBatch { first_ordinal, detectors } => {
                let mut p = first_ordinal.to_le_bytes().to_vec();
                p.extend(pack_indices(detectors.iter().map(|d| d.value())));
                p
            }
            Message::SetAnnounce(sets) => pack_indices(sets.iter().map(|s| s.value())),
            Message::InconclusiveMarks(marks) => marks.as_bytes().to_vec(),
            Message::Stats { i_fraction, n_total, n_inconclusive } => {
                let mut p = i_fraction.to_le_bytes().to_vec();
                p.extend_from_slice(&n_total.to_le_bytes());
                p.extend_from_slice(&n_inconclusive.to_le_bytes());
                p
            }
            Message::KeyDigest(d) => d.to_le_bytes().to_vec(),
            Message::Close => Vec::new(),
        };
        Frame::new(self.msg_type(), payload)
    }

    pub fn decode(frame: &Frame) -> Result<Self, NetError> {
        let p = frame.payload.as_slice();
        Ok(match frame.msg_type {
            MsgType::SessionStart => {
                exact_len(p, 10, "SESSION_START")?;
                Message::SessionStart {
                    version: p[0],
                    role: Role::from_code(p[1])?,
                    params_digest: u64_at(p, 2),
                }
            }
            MsgType::EventBatch => {
                if p.len() < 8 {
                    return Err(NetError::Framing("EVENT_BATCH shorter than its ordinal".into()));
                }
                let detectors = unpack_indices(&p[8..])?
                    .into_iter()
                    .map(|v| TrineIndex::new(v).expect("unpacked value in 1..=3"))
                    .collect();
                Message::EventBatch { first_ordinal: u64_at(p, 0), detectors }
            }
            MsgType::SetAnnounce => Message::SetAnnounce(
                unpack_indices(p)?
                    .into_iter()
                    .map(|v| SetIndex::new(v).expect("unpacked value in 1..=3"))
                    .collect(),
            ),
            MsgType::InconclusiveMarks => Message::InconclusiveMarks(MarkSet::from_bytes(p.to_vec())),
            MsgType::Stats => {
                exact_len(p, 24, "STATS")?;
                Message::Stats {
                    i_fraction: f64::from_le_bytes(p[..8].try_into().expect("8 bytes")),
                    n_total: u64_at(p, 8),
                    n_inconclusive: u64_at(p, 16),
                }
            }
            MsgType::KeyDigest => {
                exact_len(p, 8, "KEY_DIGEST")?;
                Message::KeyDigest(u64_at(p, 0))
            }
            MsgType::Close => {
                exact_len(p, 0, "CLOSE")?;
                Message::Close
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_announce_packing() {
        let sets = vec![SetIndex::S1, SetIndex::S2, SetIndex::S3, SetIndex::S1];
        let f = Message::SetAnnounce(sets.clone()).encode();
        assert_eq!(f.payload, vec![0b00_10_01_00]);
        assert_eq!(Message::decode(&f).unwrap(), Message::SetAnnounce(sets));
        let f = Message::SetAnnounce(vec![SetIndex::S3]).encode();
        assert_eq!(f.payload, vec![0b11_11_11_10]);
        assert_eq!(Message::SetAnnounce(vec![]).encode().payload, Vec::<u8>::new());
    }

    #[test]
    fn empty_marks_are_empty() {
        let f = Message::InconclusiveMarks(MarkSet::from_flags(&[])).encode();
        assert!(f.payload.is_empty());
        assert_eq!(MarkSet::from_flags(&[]).to_flags(0).unwrap(), Vec::<bool>::new());
    }

    #[test]
    fn marks_bit_order() {
        let m = MarkSet::from_flags(&[true, false, false, true, false, false, false, false, true]);
        assert_eq!(m.as_bytes(), &[0b0000_1001, 0b0000_0001]);
        assert!(m.to_flags(8).is_err());
        assert!(MarkSet::from_bytes(vec![0b1000_0000]).to_flags(7).is_err());
        assert_eq!(m.to_flags(9).unwrap().iter().filter(|&&b| b).count(), 3);
    }

    #[test]
    fn malformed_packing_rejected() {
        assert!(unpack_indices(&[0b11_00_11_00]).is_err());
        assert!(unpack_indices(&[0xff, 0x00]).is_err());
        assert!(unpack_indices(&[0xff]).is_err());
        assert_eq!(unpack_indices(&[0b11_11_10_01]).unwrap(), vec![2, 3]);
    }

    #[test]
    fn fixed_payload_lengths_checked() {
        let bad = Frame::new(MsgType::KeyDigest, vec![1, 2, 3]);
        assert!(matches!(Message::decode(&bad), Err(NetError::Framing(_))));
        let bad = Frame::new(MsgType::Close, vec![0]);
        assert!(matches!(Message::decode(&bad), Err(NetError::Framing(_))));
        let bad = Frame::new(MsgType::SessionStart, vec![1, 9, 0, 0, 0, 0, 0, 0, 0, 0]);
        assert!(Message::decode(&bad).is_err());
    }
}
