//! Classical post-processing between two peers over a reliable byte stream.
//!
//! Wire format and session flow are documented in [`frame`], [`message`] and
//! [`session`]. All integers are little-endian.

pub mod frame;
pub mod message;
pub mod session;

use std::io;

use thiserror::Error;

pub use frame::{Frame, MsgType};
pub use message::{MarkSet, Message, Role};
pub use session::{
    feed_source, run_alice, run_bob, run_loopback, run_source, serve_alice, serve_bob, Link, LoopbackOutcome,
    PeerOutcome, PeerStats, Phase, SessionConfig, Transcript,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("timed out waiting for peer")]
    Timeout,
    #[error("framing error: {0}")]
    Framing(String),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("{role} in phase {phase} received unexpected {got}")]
    Phase { role: &'static str, phase: Phase, got: String },
    #[error("protocol version mismatch: ours {ours}, theirs {theirs}")]
    Version { ours: u8, theirs: u8 },
    #[error("peer disagreement: {0}")]
    Mismatch(String),
}

impl From<io::Error> for NetError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => NetError::Timeout,
            _ => NetError::Io(e.to_string()),
        }
    }
}
