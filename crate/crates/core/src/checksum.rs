//! 64-bit FNV-1a. Used for key digests, config hashes and transcript
//! fingerprints; it is a consistency check and offers no secrecy.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Self(OFFSET)
    }
}

impl Fnv64 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = Fnv64::new();
    h.update(bytes);
    h.finish()
}

/// Digest of a bit string: bits are packed little-endian into bytes, the
/// bit length is appended as a little-endian u64.
pub fn key_digest(bits: &[bool]) -> u64 {
    let mut h = Fnv64::new();
    for chunk in bits.chunks(8) {
        let byte = chunk
            .iter()
            .enumerate()
            .fold(0u8, |acc, (k, &b)| acc | (u8::from(b) << k));
        h.update(&[byte]);
    }
    h.update(&(bits.len() as u64).to_le_bytes());
    h.finish()
}
