//! Equiangular three-state (trine) quantum key distribution in its
//! entanglement-based form.
//!
//! The crate covers the whole classical side of the protocol and a model of
//! the quantum side:
//!
//! * [`quantum`]: trine states, the trine POVM, singlet and Werner states,
//!   Born-rule outcome distributions.
//! * [`source`]: operating point of the pair source, leak arithmetic and the
//!   effective 3×3 outcome distribution.
//! * [`sim`]: seeded Monte-Carlo coincidence sampling, time-tag streams and
//!   window matching, plus the binary time-tag file format.
//! * [`protocol`]: set announcement, Bob's decoding, sifting and QBER
//!   estimation from the inconclusive fraction.
//! * [`security`]: asymptotic and finite-key secret fractions.
//! * [`net`]: framed two-peer post-processing over a byte stream.

pub mod checksum;
pub mod error;
pub mod net;
pub mod protocol;
pub mod quantum;
pub mod security;
pub mod sim;
pub mod source;

pub use error::{Error, Result};
pub use quantum::TrineIndex;
