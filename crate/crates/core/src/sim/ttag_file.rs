//! Binary time-tag stream files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! header (16 bytes): b"TTAG" | version: u16 = 1 | resolution_fs: u64 | reserved: [u8; 2]
//! record (9 bytes):  ticks: u64 | detector: u8 (1..=3)
//! ```

use std::io::{self, Read, Write};

use super::TimeTag;
use crate::error::{Error, Result};
use crate::quantum::TrineIndex;

pub const MAGIC: &[u8; 4] = b"TTAG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 9;
/// 81 ps.
pub const DEFAULT_RESOLUTION_FS: u64 = 81_000;

fn io_err(e: io::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_timetags<W: Write>(mut w: W, resolution_fs: u64, tags: &[TimeTag]) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[6..14].copy_from_slice(&resolution_fs.to_le_bytes());
    w.write_all(&header).map_err(io_err)?;
    let mut rec = [0u8; RECORD_LEN];
    for t in tags {
        rec[..8].copy_from_slice(&t.ticks.to_le_bytes());
        rec[8] = t.detector.value();
        w.write_all(&rec).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Returns the tick resolution in femtoseconds and the records.
pub fn read_timetags<R: Read>(mut r: R) -> Result<(u64, Vec<TimeTag>)> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated time-tag header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected TTAG".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported time-tag version {version}")));
    }
    let resolution_fs = u64::from_le_bytes(header[6..14].try_into().expect("8 bytes"));
    if resolution_fs == 0 {
        return Err(Error::Format("zero tick resolution".into()));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(io_err)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(Error::Format(format!(
            "body length {} is not a multiple of {RECORD_LEN}",
            body.len()
        )));
    }
    let tags = body
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(k, rec)| {
            let ticks = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
            let detector = TrineIndex::new(rec[8])
                .map_err(|_| Error::Format(format!("record {k}: detector {} not in 1..=3", rec[8])))?;
            Ok(TimeTag { detector, ticks })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((resolution_fs, tags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        let tags = [TimeTag { detector: TrineIndex::TWO, ticks: 0x0102 }];
        write_timetags(&mut buf, DEFAULT_RESOLUTION_FS, &tags).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + RECORD_LEN);
        assert_eq!(&buf[..4], b"TTAG");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..14], &81_000u64.to_le_bytes());
        assert_eq!(&buf[14..16], &[0, 0]);
        assert_eq!(&buf[16..25], &[0x02, 0x01, 0, 0, 0, 0, 0, 0, 2]);
        let (res, back) = read_timetags(buf.as_slice()).unwrap();
        assert_eq!(res, 81_000);
        assert_eq!(back, tags);
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut buf = Vec::new();
        write_timetags(&mut buf, 81_000, &[TimeTag { detector: TrineIndex::ONE, ticks: 9 }]).unwrap();
        assert!(read_timetags(&buf[..10]).is_err());
        assert!(read_timetags(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_timetags(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(read_timetags(bad.as_slice()).is_err());
        let mut bad = buf.clone();
        *bad.last_mut().unwrap() = 4;
        assert!(read_timetags(bad.as_slice()).is_err());
    }
}
