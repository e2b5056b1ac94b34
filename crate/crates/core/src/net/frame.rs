//! Length-prefixed frames: `length: u32 LE | msg_type: u8 | payload`.

use std::io::{self, Read, Write};

use super::NetError;

pub const HEADER_LEN: usize = 5;
/// Upper bound on a single payload; larger lengths are treated as corrupt.
pub const MAX_PAYLOAD: u32 = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    SessionStart = 0x01,
    EventBatch = 0x02,
    SetAnnounce = 0x03,
    InconclusiveMarks = 0x04,
    Stats = 0x05,
    KeyDigest = 0x06,
    Close = 0x07,
}

impl MsgType {
    pub fn from_code(code: u8) -> Result<Self, NetError> {
        Ok(match code {
            0x01 => MsgType::SessionStart,
            0x02 => MsgType::EventBatch,
            0x03 => MsgType::SetAnnounce,
            0x04 => MsgType::InconclusiveMarks,
            0x05 => MsgType::Stats,
            0x06 => MsgType::KeyDigest,
            0x07 => MsgType::Close,
            other => return Err(NetError::UnknownType(other)),
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgType::SessionStart => "SESSION_START",
            MsgType::EventBatch => "EVENT_BATCH",
            MsgType::SetAnnounce => "SET_ANNOUNCE",
            MsgType::InconclusiveMarks => "INCONCLUSIVE_MARKS",
            MsgType::Stats => "STATS",
            MsgType::KeyDigest => "KEY_DIGEST",
            MsgType::Close => "CLOSE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Frame { msg_type, payload }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.push(self.msg_type.code());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses exactly one frame occupying all of `bytes`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        if bytes.len() < HEADER_LEN {
            return Err(NetError::Framing(format!("{} bytes is shorter than a header", bytes.len())));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        if bytes.len() - HEADER_LEN != len {
            return Err(NetError::Framing(format!(
                "declared length {len}, {} payload bytes present",
                bytes.len() - HEADER_LEN
            )));
        }
        let msg_type = MsgType::from_code(bytes[4])?;
        Ok(Frame { msg_type, payload: bytes[HEADER_LEN..].to_vec() })
    }
}

fn map_io(e: io::Error) -> NetError {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => NetError::Timeout,
        io::ErrorKind::UnexpectedEof => NetError::Framing("stream ended mid-frame".into()),
        _ => NetError::Io(e.to_string()),
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), NetError> {
    if frame.payload.len() > MAX_PAYLOAD as usize {
        return Err(NetError::Framing(format!("payload of {} bytes too large", frame.payload.len())));
    }
    w.write_all(&frame.to_bytes()).map_err(map_io)
}

pub fn flush<W: Write>(w: &mut W) -> Result<(), NetError> {
    w.flush().map_err(map_io)
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, NetError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(map_io)?;
    let len = u32::from_le_bytes(header[..4].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(NetError::Framing(format!("declared payload length {len} exceeds limit")));
    }
    let msg_type = MsgType::from_code(header[4])?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).map_err(map_io)?;
    Ok(Frame { msg_type, payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_little_endian() {
        let f = Frame::new(MsgType::KeyDigest, vec![9; 8]);
        let b = f.to_bytes();
        assert_eq!(&b[..5], &[8, 0, 0, 0, 0x06]);
        assert_eq!(Frame::from_bytes(&b).unwrap(), f);
        let mut cursor = b.as_slice();
        assert_eq!(read_frame(&mut cursor).unwrap(), f);
    }

    #[test]
    fn unknown_type_and_bad_length() {
        assert!(matches!(Frame::from_bytes(&[0, 0, 0, 0, 0x7f]), Err(NetError::UnknownType(0x7f))));
        assert!(matches!(Frame::from_bytes(&[2, 0, 0, 0, 0x07, 1]), Err(NetError::Framing(_))));
        let mut short: &[u8] = &[4, 0, 0, 0, 0x06, 1, 2];
        assert!(matches!(read_frame(&mut short), Err(NetError::Framing(_))));
        let mut huge: &[u8] = &[0xff, 0xff, 0xff, 0xff, 0x02];
        assert!(matches!(read_frame(&mut huge), Err(NetError::Framing(_))));
    }
}
