//! The six-step verification protocol as two state machines — a bank session
//! and a holder session — exchanging [`ProtocolMessage`] values. The machines
//! are transport-agnostic; anything that can carry messages between them can
//! run a verification.
//!
//! One run walks: VerifyRequest → BankChallenge → HolderSelection → BankBits
//! → HolderResults → Verdict. Index lists travel sorted ascending and the
//! m bits and (a, b) pairs align positionally with the sorted selection.
//! Indices are 0-based on the wire.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coin::{BankLedger, CoinId, QCoin, SecretRecord};
use crate::hmp::{hmp4_member, HmpQuery, MeasurementOutcome};
use crate::qsim::RngSeed;

/// Stream ids for the holder's seed: one lane for selections, one per register.
const SELECTION_STREAM: u64 = 0;
const REGISTER_STREAM_BASE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("t must be a positive multiple of 3 (the protocol requires 3|t), got {0}")]
    InvalidChallengeSize(usize),
}

/// Verification parameters: the bank challenges t indices and the holder
/// measures 2t/3 of them, so each successful run burns 2t/3 registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProtocolParams {
    t: usize,
}

impl ProtocolParams {
    pub fn new(t: usize) -> Result<Self, ProtocolError> {
        if t == 0 || !t.is_multiple_of(3) {
            return Err(ProtocolError::InvalidChallengeSize(t));
        }
        Ok(ProtocolParams { t })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// 2t/3, the number of registers one run consumes.
    pub fn selection_size(&self) -> usize {
        2 * self.t / 3
    }
}

/// Machine-readable verdict reasons, also the wire encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    Ok,
    UnknownCoin,
    BadSelection,
    HmpCheckFailed,
    CoinExhausted,
    ProtocolViolation,
    Timeout,
}

impl Reason {
    pub const ALL: [Reason; 7] = [
        Reason::Ok,
        Reason::UnknownCoin,
        Reason::BadSelection,
        Reason::HmpCheckFailed,
        Reason::CoinExhausted,
        Reason::ProtocolViolation,
        Reason::Timeout,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Reason::Ok => "OK",
            Reason::UnknownCoin => "UNKNOWN_COIN",
            Reason::BadSelection => "BAD_SELECTION",
            Reason::HmpCheckFailed => "HMP_CHECK_FAILED",
            Reason::CoinExhausted => "COIN_EXHAUSTED",
            Reason::ProtocolViolation => "PROTOCOL_VIOLATION",
            Reason::Timeout => "TIMEOUT",
        }
    }
}

impl FromStr for Reason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Reason::ALL
            .into_iter()
            .find(|reason| reason.code() == s)
            .ok_or_else(|| format!("unknown verdict reason `{s}`"))
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// The bank's final word on a verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub valid: bool,
    pub reason: Reason,
}

impl Verdict {
    pub const VALID: Verdict = Verdict {
        valid: true,
        reason: Reason::Ok,
    };

    pub fn invalid(reason: Reason) -> Verdict {
        Verdict {
            valid: false,
            reason,
        }
    }
}

/// The six wire messages of one verification.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolMessage {
    /// Step 1, holder → bank: the coin's identification number.
    VerifyRequest { coin_id: CoinId },
    /// Step 2, bank → holder: t challenge indices, sorted ascending.
    BankChallenge { indices: Vec<usize> },
    /// Step 3, holder → bank: 2t/3 of the challenge indices, sorted ascending.
    HolderSelection { indices: Vec<usize> },
    /// Step 4, bank → holder: one basis bit per selected index, in order.
    BankBits { m: Vec<HmpQuery> },
    /// Step 5, holder → bank: one (a, b) pair per selected index, in order.
    HolderResults { pairs: Vec<MeasurementOutcome> },
    /// Step 6, bank → holder.
    Verdict(Verdict),
}

impl ProtocolMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::VerifyRequest { .. } => "verify_request",
            ProtocolMessage::BankChallenge { .. } => "bank_challenge",
            ProtocolMessage::HolderSelection { .. } => "holder_selection",
            ProtocolMessage::BankBits { .. } => "bank_bits",
            ProtocolMessage::HolderResults { .. } => "holder_results",
            ProtocolMessage::Verdict(_) => "verdict",
        }
    }
}

fn is_sorted_distinct(indices: &[usize]) -> bool {
    indices.windows(2).all(|w| w[0] < w[1])
}

/// Bank side of one verification session.
///
/// Every incoming message produces exactly one reply; after the reply is a
/// [`ProtocolMessage::Verdict`] the session is closed and further input is a
/// violation. The ledger is read-only, so any number of sessions may share it.
pub struct BankSession<'a> {
    ledger: &'a BankLedger,
    params: ProtocolParams,
    rng: ChaCha8Rng,
    state: BankState,
}

enum BankState {
    AwaitRequest,
    AwaitSelection {
        record: SecretRecord,
        challenge: Vec<usize>,
    },
    AwaitResults {
        record: SecretRecord,
        selection: Vec<usize>,
        queries: Vec<HmpQuery>,
    },
    Closed,
}

impl<'a> BankSession<'a> {
    pub fn new(ledger: &'a BankLedger, params: ProtocolParams, rng: ChaCha8Rng) -> Self {
        BankSession {
            ledger,
            params,
            rng,
            state: BankState::AwaitRequest,
        }
    }

    pub fn seeded(ledger: &'a BankLedger, params: ProtocolParams, seed: RngSeed) -> Self {
        Self::new(ledger, params, seed.rng())
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.state, BankState::Closed)
    }

    fn close_with(&mut self, verdict: Verdict) -> ProtocolMessage {
        self.state = BankState::Closed;
        ProtocolMessage::Verdict(verdict)
    }

    /// Feeds one holder message and returns the bank's reply.
    pub fn step(&mut self, incoming: &ProtocolMessage) -> ProtocolMessage {
        match std::mem::replace(&mut self.state, BankState::Closed) {
            BankState::AwaitRequest => match incoming {
                ProtocolMessage::VerifyRequest { coin_id } => self.on_request(coin_id),
                _ => self.close_with(Verdict::invalid(Reason::ProtocolViolation)),
            },
            BankState::AwaitSelection { record, challenge } => match incoming {
                ProtocolMessage::HolderSelection { indices } => {
                    self.on_selection(record, challenge, indices)
                }
                _ => self.close_with(Verdict::invalid(Reason::ProtocolViolation)),
            },
            BankState::AwaitResults {
                record,
                selection,
                queries,
            } => match incoming {
                ProtocolMessage::HolderResults { pairs } => {
                    self.on_results(&record, &selection, &queries, pairs)
                }
                _ => self.close_with(Verdict::invalid(Reason::ProtocolViolation)),
            },
            BankState::Closed => self.close_with(Verdict::invalid(Reason::ProtocolViolation)),
        }
    }

    /// Step 2: look up the record and sample t distinct indices uniformly.
    fn on_request(&mut self, coin_id: &CoinId) -> ProtocolMessage {
        let Some(record) = self.ledger.lookup(coin_id) else {
            return self.close_with(Verdict::invalid(Reason::UnknownCoin));
        };
        let record = record.clone();
        if self.params.t() > record.k() {
            // The configured challenge does not fit this coin.
            return self.close_with(Verdict::invalid(Reason::ProtocolViolation));
        }
        let mut challenge: Vec<usize> = sample_indices(&mut self.rng, record.k(), self.params.t())
            .into_iter()
            .collect();
        challenge.sort_unstable();
        self.state = BankState::AwaitSelection {
            record,
            challenge: challenge.clone(),
        };
        ProtocolMessage::BankChallenge { indices: challenge }
    }

    /// Steps 3 → 4: validate the holder's selection and draw one m per index.
    fn on_selection(
        &mut self,
        record: SecretRecord,
        challenge: Vec<usize>,
        selection: &[usize],
    ) -> ProtocolMessage {
        let expected = self.params.selection_size();
        let subset = selection.iter().all(|i| challenge.binary_search(i).is_ok());
        if selection.len() != expected || !is_sorted_distinct(selection) || !subset {
            return self.close_with(Verdict::invalid(Reason::BadSelection));
        }
        let queries: Vec<HmpQuery> = selection
            .iter()
            .map(|_| HmpQuery::sample(&mut self.rng))
            .collect();
        let reply = ProtocolMessage::BankBits { m: queries.clone() };
        self.state = BankState::AwaitResults {
            record,
            selection: selection.to_vec(),
            queries,
        };
        reply
    }

    /// Step 6: the coin is valid iff every (xᵢ, mᵢ, aᵢ, bᵢ) is a member.
    fn on_results(
        &mut self,
        record: &SecretRecord,
        selection: &[usize],
        queries: &[HmpQuery],
        pairs: &[MeasurementOutcome],
    ) -> ProtocolMessage {
        if pairs.len() != selection.len() {
            return self.close_with(Verdict::invalid(Reason::ProtocolViolation));
        }
        let all_members = selection
            .iter()
            .zip(queries.iter())
            .zip(pairs.iter())
            .all(|((&index, &query), &pair)| hmp4_member(record.entries[index], query, pair));
        if all_members {
            self.close_with(Verdict::VALID)
        } else {
            self.close_with(Verdict::invalid(Reason::HmpCheckFailed))
        }
    }
}

/// A holder-side abort: the session stops without sending anything further.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("session aborted: {reason}")]
pub struct SessionAbort {
    pub reason: Reason,
}

/// Anything that can play the holder's side of a verification. Honest
/// holders and attack strategies implement the same interface and run
/// against the same bank machine.
pub trait HolderRole {
    /// The opening message (step 1).
    fn begin(&mut self) -> ProtocolMessage;

    /// Feeds a bank message. `Ok(Some(..))` replies, `Ok(None)` finishes the
    /// session (after a verdict), `Err` aborts it.
    fn step(&mut self, incoming: &ProtocolMessage)
        -> Result<Option<ProtocolMessage>, SessionAbort>;
}

/// Honest holder session around a coin.
///
/// Measurement randomness is split into one stream per register index, so
/// the order in which registers are measured never changes their outcomes.
pub struct HolderSession<'c> {
    coin: &'c mut QCoin,
    seed: RngSeed,
    selection_rng: ChaCha8Rng,
    state: HolderState,
    verdict: Option<Verdict>,
}

enum HolderState {
    Start,
    AwaitChallenge,
    AwaitQueries { selection: Vec<usize> },
    AwaitVerdict,
    Done,
}

impl<'c> HolderSession<'c> {
    pub fn new(coin: &'c mut QCoin, seed: RngSeed) -> Self {
        HolderSession {
            coin,
            seed,
            selection_rng: seed.stream(SELECTION_STREAM),
            state: HolderState::Start,
            verdict: None,
        }
    }

    /// The bank's verdict, once the session finished.
    pub fn verdict(&self) -> Option<Verdict> {
        self.verdict
    }

    fn abort(&mut self, reason: Reason) -> SessionAbort {
        self.state = HolderState::Done;
        SessionAbort { reason }
    }

    /// Step 3: pick 2t/3 unused indices from the challenge and mark them used
    /// immediately. If too few are fresh the session aborts before marking
    /// anything, so an exhausted coin is not damaged further.
    fn select(&mut self, challenge: &[usize]) -> Result<Vec<usize>, SessionAbort> {
        if challenge.is_empty()
            || !challenge.len().is_multiple_of(3)
            || !is_sorted_distinct(challenge)
            || challenge.iter().any(|&index| index >= self.coin.k())
        {
            return Err(self.abort(Reason::ProtocolViolation));
        }
        let fresh: Vec<usize> = challenge
            .iter()
            .copied()
            .filter(|&index| !self.coin.is_used(index))
            .collect();
        // The selection size is fixed by the challenge size: 2t/3.
        let want = challenge.len() * 2 / 3;
        if fresh.len() < want {
            return Err(self.abort(Reason::CoinExhausted));
        }
        let mut selection: Vec<usize> = sample_indices(&mut self.selection_rng, fresh.len(), want)
            .into_iter()
            .map(|position| fresh[position])
            .collect();
        selection.sort_unstable();
        for &index in &selection {
            self.coin
                .mark_used(index)
                .expect("fresh indices were just checked");
        }
        Ok(selection)
    }

    /// Step 5: measure each selected register in the basis the bank chose.
    fn measure(
        &mut self,
        selection: &[usize],
        queries: &[HmpQuery],
    ) -> Result<Vec<MeasurementOutcome>, SessionAbort> {
        if queries.len() != selection.len() {
            return Err(self.abort(Reason::ProtocolViolation));
        }
        let mut pairs = Vec::with_capacity(selection.len());
        for (&index, &query) in selection.iter().zip(queries.iter()) {
            let mut register_rng = self.seed.stream(REGISTER_STREAM_BASE + index as u64);
            match self.coin.measure_marked(index, query, &mut register_rng) {
                Ok(outcome) => pairs.push(outcome),
                Err(_) => return Err(self.abort(Reason::ProtocolViolation)),
            }
        }
        Ok(pairs)
    }
}

impl HolderRole for HolderSession<'_> {
    fn begin(&mut self) -> ProtocolMessage {
        self.state = HolderState::AwaitChallenge;
        ProtocolMessage::VerifyRequest {
            coin_id: self.coin.id().clone(),
        }
    }

    fn step(
        &mut self,
        incoming: &ProtocolMessage,
    ) -> Result<Option<ProtocolMessage>, SessionAbort> {
        match std::mem::replace(&mut self.state, HolderState::Done) {
            HolderState::AwaitChallenge => match incoming {
                ProtocolMessage::BankChallenge { indices } => {
                    let selection = self.select(indices)?;
                    self.state = HolderState::AwaitQueries {
                        selection: selection.clone(),
                    };
                    Ok(Some(ProtocolMessage::HolderSelection {
                        indices: selection,
                    }))
                }
                ProtocolMessage::Verdict(verdict) => {
                    self.verdict = Some(*verdict);
                    Ok(None)
                }
                _ => Err(self.abort(Reason::ProtocolViolation)),
            },
            HolderState::AwaitQueries { selection } => match incoming {
                ProtocolMessage::BankBits { m } => {
                    let pairs = self.measure(&selection, m)?;
                    self.state = HolderState::AwaitVerdict;
                    Ok(Some(ProtocolMessage::HolderResults { pairs }))
                }
                ProtocolMessage::Verdict(verdict) => {
                    self.verdict = Some(*verdict);
                    Ok(None)
                }
                _ => Err(self.abort(Reason::ProtocolViolation)),
            },
            HolderState::AwaitVerdict => match incoming {
                ProtocolMessage::Verdict(verdict) => {
                    self.verdict = Some(*verdict);
                    Ok(None)
                }
                _ => Err(self.abort(Reason::ProtocolViolation)),
            },
            HolderState::Start | HolderState::Done => Err(self.abort(Reason::ProtocolViolation)),
        }
    }
}

/// Result of driving one verification to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationOutcome {
    pub verdict: Verdict,
    /// Every message both sides exchanged, in order.
    pub transcript: Vec<ProtocolMessage>,
}

/// Drives a bank session and any holder role over an in-memory channel until
/// a verdict is reached or the holder aborts.
pub fn drive<H: HolderRole>(bank: &mut BankSession, holder: &mut H) -> VerificationOutcome {
    let mut transcript = Vec::with_capacity(6);
    let mut outgoing = holder.begin();
    transcript.push(outgoing.clone());
    loop {
        let reply = bank.step(&outgoing);
        transcript.push(reply.clone());
        match holder.step(&reply) {
            Ok(Some(next)) => {
                transcript.push(next.clone());
                outgoing = next;
            }
            Ok(None) => {
                let verdict = match &reply {
                    ProtocolMessage::Verdict(verdict) => *verdict,
                    // A holder finished without a verdict; treat as violation.
                    _ => Verdict::invalid(Reason::ProtocolViolation),
                };
                return VerificationOutcome {
                    verdict,
                    transcript,
                };
            }
            Err(abort) => {
                return VerificationOutcome {
                    verdict: Verdict::invalid(abort.reason),
                    transcript,
                }
            }
        }
    }
}

/// Runs a full honest verification of `coin` against `ledger`.
pub fn run_verification(
    ledger: &BankLedger,
    coin: &mut QCoin,
    params: ProtocolParams,
    bank_seed: RngSeed,
    holder_seed: RngSeed,
) -> VerificationOutcome {
    let mut bank = BankSession::seeded(ledger, params, bank_seed);
    let mut holder = HolderSession::new(coin, holder_seed);
    drive(&mut bank, &mut holder)
}
