//! Classically-verifiable quantum coins.
//!
//! A bank mints coins of k two-qubit registers, each encoding a secret 4-bit
//! string; holders prove possession over a plain classical channel through a
//! six-step challenge–response protocol. The crate provides the exact
//! two-qubit simulator behind the registers, the hidden-matching encoding
//! layer, the mint and ledger, both protocol state machines, a JSON wire
//! transport, and a Monte Carlo harness measuring forgery acceptance.

pub mod adversary;
pub mod cli;
pub mod coin;
pub mod hmp;
pub mod protocol;
pub mod qsim;
pub mod transport;

pub use coin::{BankLedger, CoinId, Mint, QCoin, SecretRecord};
pub use hmp::{BitString4, HmpQuery, MeasurementOutcome};
pub use protocol::{ProtocolMessage, ProtocolParams, Reason, Verdict};
pub use qsim::{Basis, BellState, Gate, RngSeed, StandardGate, StateVector};
