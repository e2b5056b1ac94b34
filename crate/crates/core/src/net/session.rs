//! Peer state machines for the source, Alice and Bob.
//!
//! Link topology: the source feeds both peers; Alice and Bob share one
//! classical link. Every connecting side opens with `SESSION_START`.
//!
//! ```text
//! source → alice : SESSION_START, EVENT_BATCH*, CLOSE
//! source → bob   : SESSION_START, EVENT_BATCH*, CLOSE
//! bob   ↔ alice  : SESSION_START (both ways)
//! alice → bob    : SET_ANNOUNCE*            (bits drawn after all events)
//! bob   → alice  : INCONCLUSIVE_MARKS*      (one per SET_ANNOUNCE)
//! both ways      : STATS, KEY_DIGEST, CLOSE
//! ```

use std::fmt;
use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::frame::{flush, read_frame, write_frame, Frame, MsgType};
use super::message::{MarkSet, Message, Role};
use super::NetError;
use crate::checksum::{fnv1a64, key_digest, Fnv64};
use crate::protocol::{alice_announce, bob_decode, draw_bits, DecodeOutcome, SetIndex};
use crate::quantum::TrineIndex;
use crate::sim::CoincidenceEvent;

pub const PROTOCOL_VERSION: u8 = 1;
pub const DEFAULT_BATCH_SIZE: usize = 4096;
pub const DEFAULT_PORT: u16 = 7401;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Idle,
    Events,
    Announce,
    Marks,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Idle => "idle",
            Phase::Events => "events",
            Phase::Announce => "announce",
            Phase::Marks => "marks",
            Phase::Done => "done",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub version: u8,
    /// Must match on all three parties.
    pub params_digest: u64,
    /// Events per EVENT_BATCH and per SET_ANNOUNCE.
    pub batch_size: usize,
    /// Seed of Alice's bit stream.
    pub bit_seed: u64,
    pub timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            version: PROTOCOL_VERSION,
            params_digest: default_params_digest(),
            batch_size: DEFAULT_BATCH_SIZE,
            bit_seed: 0,
            timeout: Duration::from_secs(30),
        }
    }
}

pub fn default_params_digest() -> u64 {
    fnv1a64(format!("trine-qkd/v{PROTOCOL_VERSION}").as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub peer: Role,
    pub msg_type: MsgType,
    pub payload_len: usize,
    pub payload_digest: u64,
}

/// Ordered log of every frame a party sent or received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub role: Role,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn new(role: Role) -> Self {
        Transcript { role, entries: Vec::new() }
    }

    fn log(&mut self, direction: Direction, peer: Role, frame: &Frame) {
        self.entries.push(TranscriptEntry {
            direction,
            peer,
            msg_type: frame.msg_type,
            payload_len: frame.payload.len(),
            payload_digest: fnv1a64(&frame.payload),
        });
    }

    /// One line per frame.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let arrow = match e.direction {
                Direction::Sent => "->",
                Direction::Received => "<-",
            };
            out.push_str(&format!(
                "{} {arrow} {} {} len={} fnv={:016x}\n",
                self.role.name(),
                e.peer.name(),
                e.msg_type.name(),
                e.payload_len,
                e.payload_digest
            ));
        }
        out
    }

    pub fn digest(&self) -> u64 {
        fnv1a64(self.render().as_bytes())
    }
}

/// One side of a bidirectional link with buffered writes. Any receive
/// flushes pending output first.
pub struct Link<R: Read, W: Write> {
    peer: Role,
    reader: R,
    writer: W,
}

impl<R: Read, W: Write> Link<R, W> {
    pub fn new(peer: Role, reader: R, writer: W) -> Self {
        Link { peer, reader, writer }
    }
}

pub type TcpLink = Link<BufReader<TcpStream>, BufWriter<TcpStream>>;

impl TcpLink {
    pub fn tcp(peer: Role, stream: TcpStream, timeout: Duration) -> Result<Self, NetError> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
        Ok(Link::new(peer, reader, BufWriter::with_capacity(1 << 16, stream)))
    }
}

struct Party {
    role: Role,
    phase: Phase,
    transcript: Transcript,
}

impl Party {
    fn new(role: Role) -> Self {
        Party { role, phase: Phase::Idle, transcript: Transcript::new(role) }
    }

    fn enter(&mut self, next: Phase) {
        debug_assert!(next >= self.phase, "phase moved backwards");
        self.phase = next;
    }

    fn send<R: Read, W: Write>(&mut self, link: &mut Link<R, W>, msg: &Message) -> Result<(), NetError> {
        let frame = msg.encode();
        write_frame(&mut link.writer, &frame)?;
        self.transcript.log(Direction::Sent, link.peer, &frame);
        Ok(())
    }

    fn flush<R: Read, W: Write>(&mut self, link: &mut Link<R, W>) -> Result<(), NetError> {
        flush(&mut link.writer)
    }

    fn recv<R: Read, W: Write>(&mut self, link: &mut Link<R, W>) -> Result<Message, NetError> {
        flush(&mut link.writer)?;
        let frame = read_frame(&mut link.reader)?;
        self.transcript.log(Direction::Received, link.peer, &frame);
        Message::decode(&frame)
    }

    fn unexpected(&self, from: Role, msg: &Message) -> NetError {
        NetError::Phase {
            role: self.role.name(),
            phase: self.phase,
            got: format!("{} from {}", msg.msg_type().name(), from.name()),
        }
    }

    fn expect_hello<R: Read, W: Write>(
        &mut self,
        link: &mut Link<R, W>,
        cfg: &SessionConfig,
    ) -> Result<(), NetError> {
        match self.recv(link)? {
            Message::SessionStart { version, role, params_digest } => {
                if role != link.peer {
                    return Err(NetError::Protocol(format!(
                        "expected {} on this link, got {}",
                        link.peer.name(),
                        role.name()
                    )));
                }
                if version != cfg.version {
                    return Err(NetError::Version { ours: cfg.version, theirs: version });
                }
                if params_digest != cfg.params_digest {
                    return Err(NetError::Mismatch(format!(
                        "params digest {params_digest:016x} from {} differs from ours {:016x}",
                        role.name(),
                        cfg.params_digest
                    )));
                }
                Ok(())
            }
            other => Err(self.unexpected(link.peer, &other)),
        }
    }

    fn hello(&self, cfg: &SessionConfig) -> Message {
        Message::SessionStart { version: cfg.version, role: self.role, params_digest: cfg.params_digest }
    }

    fn receive_events<R: Read, W: Write>(&mut self, link: &mut Link<R, W>) -> Result<Vec<TrineIndex>, NetError> {
        self.enter(Phase::Events);
        let mut detectors = Vec::new();
        loop {
            match self.recv(link)? {
                Message::EventBatch { first_ordinal, detectors: batch } => {
                    if first_ordinal != detectors.len() as u64 {
                        return Err(NetError::Protocol(format!(
                            "event batch starts at ordinal {first_ordinal}, expected {}",
                            detectors.len()
                        )));
                    }
                    detectors.extend(batch);
                }
                Message::Close => return Ok(detectors),
                other => return Err(self.unexpected(link.peer, &other)),
            }
        }
    }

    /// Exchanges STATS and KEY_DIGEST, then CLOSE. Returns the peer's digest.
    fn finish<R: Read, W: Write>(
        &mut self,
        link: &mut Link<R, W>,
        stats: &PeerStats,
        digest: u64,
    ) -> Result<u64, NetError> {
        self.enter(Phase::Done);
        self.send(
            link,
            &Message::Stats {
                i_fraction: stats.i_fraction,
                n_total: stats.n_total,
                n_inconclusive: stats.n_inconclusive,
            },
        )?;
        self.send(link, &Message::KeyDigest(digest))?;
        let theirs = match self.recv(link)? {
            Message::Stats { i_fraction, n_total, n_inconclusive } => PeerStats { n_total, n_inconclusive, i_fraction },
            other => return Err(self.unexpected(link.peer, &other)),
        };
        if theirs != *stats {
            return Err(NetError::Mismatch(format!("statistics differ: ours {stats:?}, theirs {theirs:?}")));
        }
        let peer_digest = match self.recv(link)? {
            Message::KeyDigest(d) => d,
            other => return Err(self.unexpected(link.peer, &other)),
        };
        self.send(link, &Message::Close)?;
        match self.recv(link)? {
            Message::Close => {}
            other => return Err(self.unexpected(link.peer, &other)),
        }
        self.flush(link)?;
        Ok(peer_digest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerStats {
    pub n_total: u64,
    pub n_inconclusive: u64,
    pub i_fraction: f64,
}

impl PeerStats {
    fn from_counts(n_total: u64, n_inconclusive: u64) -> Self {
        let i_fraction = if n_total == 0 { 0.0 } else { n_inconclusive as f64 / n_total as f64 };
        PeerStats { n_total, n_inconclusive, i_fraction }
    }
}

/// What a peer holds when its session ends cleanly.
#[derive(Debug, Clone)]
pub struct PeerOutcome {
    pub role: Role,
    /// This party's sifted key bits in event order.
    pub key: Vec<bool>,
    /// Ordinals of the conclusive events.
    pub kept_ordinals: Vec<u64>,
    pub stats: PeerStats,
    pub own_digest: u64,
    pub peer_digest: u64,
    pub transcript: Transcript,
}

impl PeerOutcome {
    /// Equal digests mean equal keys up to checksum collisions. Keys differ
    /// whenever the QBER is nonzero; this is a test-only consistency signal.
    pub fn digests_match(&self) -> bool {
        self.own_digest == self.peer_digest
    }
}

/// Feeds each peer its half of every coincidence event.
pub fn run_source<R1: Read, W1: Write, R2: Read, W2: Write>(
    alice: &mut Link<R1, W1>,
    bob: &mut Link<R2, W2>,
    events: &[CoincidenceEvent],
    cfg: &SessionConfig,
) -> Result<Transcript, NetError> {
    let mut me = Party::new(Role::Source);
    let batch = cfg.batch_size.max(1);
    me.send(alice, &me.hello(cfg))?;
    me.send(bob, &me.hello(cfg))?;
    me.enter(Phase::Events);
    for (k, chunk) in events.chunks(batch).enumerate() {
        let first_ordinal = (k * batch) as u64;
        me.send(
            alice,
            &Message::EventBatch { first_ordinal, detectors: chunk.iter().map(|e| e.alice).collect() },
        )?;
        me.send(bob, &Message::EventBatch { first_ordinal, detectors: chunk.iter().map(|e| e.bob).collect() })?;
    }
    me.send(alice, &Message::Close)?;
    me.send(bob, &Message::Close)?;
    me.flush(alice)?;
    me.flush(bob)?;
    me.enter(Phase::Done);
    Ok(me.transcript)
}

pub fn run_alice<R1: Read, W1: Write, R2: Read, W2: Write>(
    source: &mut Link<R1, W1>,
    bob: &mut Link<R2, W2>,
    cfg: &SessionConfig,
) -> Result<PeerOutcome, NetError> {
    let mut me = Party::new(Role::Alice);
    me.expect_hello(source, cfg)?;
    me.expect_hello(bob, cfg)?;
    me.send(bob, &me.hello(cfg))?;

    let detectors = me.receive_events(source)?;
    let bits = draw_bits(detectors.len(), cfg.bit_seed);

    me.enter(Phase::Announce);
    let batch = cfg.batch_size.max(1);
    for (dets, bs) in detectors.chunks(batch).zip(bits.chunks(batch)) {
        let sets: Vec<SetIndex> = dets.iter().zip(bs).map(|(&d, &b)| alice_announce(d, b)).collect();
        me.send(bob, &Message::SetAnnounce(sets))?;
    }

    me.enter(Phase::Marks);
    let mut key = Vec::new();
    let mut kept = Vec::new();
    let mut n_inconclusive = 0u64;
    for (k, bs) in bits.chunks(batch).enumerate() {
        let marks = match me.recv(bob)? {
            Message::InconclusiveMarks(m) => m.to_flags(bs.len())?,
            other => return Err(me.unexpected(Role::Bob, &other)),
        };
        for (j, (&inconclusive, &bit)) in marks.iter().zip(bs).enumerate() {
            if inconclusive {
                n_inconclusive += 1;
            } else {
                kept.push((k * batch + j) as u64);
                key.push(bit);
            }
        }
    }

    let stats = PeerStats::from_counts(detectors.len() as u64, n_inconclusive);
    let own_digest = key_digest(&key);
    let peer_digest = me.finish(bob, &stats, own_digest)?;
    Ok(PeerOutcome {
        role: Role::Alice,
        key,
        kept_ordinals: kept,
        stats,
        own_digest,
        peer_digest,
        transcript: me.transcript,
    })
}

pub fn run_bob<R1: Read, W1: Write, R2: Read, W2: Write>(
    source: &mut Link<R1, W1>,
    alice: &mut Link<R2, W2>,
    cfg: &SessionConfig,
) -> Result<PeerOutcome, NetError> {
    let mut me = Party::new(Role::Bob);
    me.send(alice, &me.hello(cfg))?;
    me.flush(alice)?;
    me.expect_hello(source, cfg)?;
    me.expect_hello(alice, cfg)?;

    let detectors = me.receive_events(source)?;

    me.enter(Phase::Announce);
    let mut outcomes: Vec<Vec<DecodeOutcome>> = Vec::new();
    let mut seen = 0usize;
    while seen < detectors.len() {
        let sets = match me.recv(alice)? {
            Message::SetAnnounce(s) => s,
            other => return Err(me.unexpected(Role::Alice, &other)),
        };
        if sets.is_empty() || seen + sets.len() > detectors.len() {
            return Err(NetError::Protocol(format!(
                "announcement of {} sets at ordinal {seen} does not fit {} events",
                sets.len(),
                detectors.len()
            )));
        }
        let batch: Vec<DecodeOutcome> = sets
            .iter()
            .zip(&detectors[seen..])
            .map(|(&s, &d)| bob_decode(s, d))
            .collect();
        seen += batch.len();
        outcomes.push(batch);
    }

    me.enter(Phase::Marks);
    let mut key = Vec::new();
    let mut kept = Vec::new();
    let mut n_inconclusive = 0u64;
    let mut ordinal = 0u64;
    for batch in &outcomes {
        let flags: Vec<bool> = batch.iter().map(|o| *o == DecodeOutcome::Inconclusive).collect();
        me.send(alice, &Message::InconclusiveMarks(MarkSet::from_flags(&flags)))?;
        for o in batch {
            match o {
                DecodeOutcome::Inconclusive => n_inconclusive += 1,
                DecodeOutcome::Conclusive(bit) => {
                    kept.push(ordinal);
                    key.push(*bit);
                }
            }
            ordinal += 1;
        }
    }

    let stats = PeerStats::from_counts(detectors.len() as u64, n_inconclusive);
    let own_digest = key_digest(&key);
    let peer_digest = me.finish(alice, &stats, own_digest)?;
    Ok(PeerOutcome {
        role: Role::Bob,
        key,
        kept_ordinals: kept,
        stats,
        own_digest,
        peer_digest,
        transcript: me.transcript,
    })
}

/// Reads the role byte of the SESSION_START waiting on `stream` without
/// consuming it.
fn peek_role(stream: &TcpStream) -> Result<Role, NetError> {
    let mut buf = [0u8; 7];
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Err(NetError::Framing("connection closed before SESSION_START".into()));
        }
        if n >= buf.len() {
            break;
        }
        std::thread::sleep(Duration::from_millis(1));
    }
    if buf[4] != MsgType::SessionStart.code() {
        return Err(NetError::Phase {
            role: Role::Alice.name(),
            phase: Phase::Idle,
            got: format!("frame type 0x{:02x} before SESSION_START", buf[4]),
        });
    }
    Role::from_code(buf[6])
}

/// Alice's listener: accepts the source and Bob (in either order) and runs
/// her side of the session.
pub fn serve_alice(listener: &TcpListener, cfg: &SessionConfig) -> Result<PeerOutcome, NetError> {
    let mut source = None;
    let mut bob = None;
    while source.is_none() || bob.is_none() {
        let (stream, _) = listener.accept()?;
        stream.set_read_timeout(Some(cfg.timeout))?;
        match peek_role(&stream)? {
            Role::Source if source.is_none() => source = Some(stream),
            Role::Bob if bob.is_none() => bob = Some(stream),
            r => return Err(NetError::Protocol(format!("unexpected connection from {}", r.name()))),
        }
    }
    let mut source = TcpLink::tcp(Role::Source, source.expect("accepted"), cfg.timeout)?;
    let mut bob = TcpLink::tcp(Role::Bob, bob.expect("accepted"), cfg.timeout)?;
    run_alice(&mut source, &mut bob, cfg)
}

fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<TcpStream, NetError> {
    let mut last = None;
    for a in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(s) => return Ok(s),
            Err(e) => last = Some(e),
        }
    }
    Err(last.map(NetError::from).unwrap_or_else(|| NetError::Io("no address resolved".into())))
}

/// Bob: accepts the source on `listener`, connects to Alice at `alice`.
pub fn serve_bob(
    listener: &TcpListener,
    alice: impl ToSocketAddrs,
    cfg: &SessionConfig,
) -> Result<PeerOutcome, NetError> {
    let mut alice = TcpLink::tcp(Role::Alice, connect(alice, cfg.timeout)?, cfg.timeout)?;
    let (stream, _) = listener.accept()?;
    let mut source = TcpLink::tcp(Role::Source, stream, cfg.timeout)?;
    run_bob(&mut source, &mut alice, cfg)
}

/// Source: connects to both peers and streams the events.
pub fn feed_source(
    alice: impl ToSocketAddrs,
    bob: impl ToSocketAddrs,
    events: &[CoincidenceEvent],
    cfg: &SessionConfig,
) -> Result<Transcript, NetError> {
    let mut a = TcpLink::tcp(Role::Alice, connect(alice, cfg.timeout)?, cfg.timeout)?;
    let mut b = TcpLink::tcp(Role::Bob, connect(bob, cfg.timeout)?, cfg.timeout)?;
    run_source(&mut a, &mut b, events, cfg)
}

#[derive(Debug, Clone)]
pub struct LoopbackOutcome {
    pub alice: PeerOutcome,
    pub bob: PeerOutcome,
    pub source: Transcript,
}

impl LoopbackOutcome {
    /// Digest over all three transcripts.
    pub fn transcript_digest(&self) -> u64 {
        let mut h = Fnv64::new();
        for t in [&self.source, &self.alice.transcript, &self.bob.transcript] {
            h.update(t.render().as_bytes());
        }
        h.finish()
    }
}

/// Runs all three parties on 127.0.0.1 in separate threads.
pub fn run_loopback(
    events: &[CoincidenceEvent],
    alice_cfg: &SessionConfig,
    bob_cfg: &SessionConfig,
    source_cfg: &SessionConfig,
) -> Result<LoopbackOutcome, NetError> {
    let alice_listener = TcpListener::bind("127.0.0.1:0")?;
    let bob_listener = TcpListener::bind("127.0.0.1:0")?;
    let alice_addr: SocketAddr = alice_listener.local_addr()?;
    let bob_addr: SocketAddr = bob_listener.local_addr()?;

    std::thread::scope(|s| {
        let alice = s.spawn(move || serve_alice(&alice_listener, alice_cfg));
        let bob = s.spawn(move || serve_bob(&bob_listener, alice_addr, bob_cfg));
        let source = feed_source(alice_addr, bob_addr, events, source_cfg);
        let alice = alice.join().map_err(|_| NetError::Io("alice thread panicked".into()))?;
        let bob = bob.join().map_err(|_| NetError::Io("bob thread panicked".into()))?;
        Ok(LoopbackOutcome { alice: alice?, bob: bob?, source: source? })
    })
}
