//! Attack strategies that play the holder role without an intact coin, plus
//! a Monte Carlo harness estimating how often the bank accepts them.
//!
//! Strategies run against the same bank state machine as honest holders; no
//! shortcuts. None of them can see the bank's secret record — a blind
//! guesser knows only the coin id, a wrong-basis adversary holds a coin it
//! already measured, and a replay adversary holds one old transcript.
//!
//! The `oracle` submodule computes reference acceptance rates by exhaustive
//! enumeration, independent of the simulation path, so the Monte Carlo
//! estimates have something exact to be checked against.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::coin::{BankLedger, CoinId, Mint, QCoin};
use crate::hmp::{self, HmpQuery, MeasurementOutcome};
use crate::protocol::{
    drive, run_verification, BankSession, HolderRole, HolderSession, ProtocolMessage,
    ProtocolParams, Reason, SessionAbort, VerificationOutcome,
};
use crate::qsim::{RngSeed, StateVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("unknown strategy `{0}` (expected honest, blind, wrong-basis, or replay)")]
    UnknownStrategy(String),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("coin size k = {k} cannot host a challenge of t = {t}")]
    CoinTooSmall { k: usize, t: usize },
    #[error("replay transcript is incomplete: missing {0}")]
    IncompleteTranscript(&'static str),
}

/// The strategies the harness can run. `Honest` is included so the harness
/// demonstrates completeness with the same machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Honest,
    BlindGuess,
    WrongBasis,
    Replay,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Honest => "honest",
            Strategy::BlindGuess => "blind",
            Strategy::WrongBasis => "wrong-basis",
            Strategy::Replay => "replay",
        }
    }
}

impl FromStr for Strategy {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(Strategy::Honest),
            "blind" => Ok(Strategy::BlindGuess),
            "wrong-basis" => Ok(Strategy::WrongBasis),
            "replay" => Ok(Strategy::Replay),
            other => Err(AttackError::UnknownStrategy(other.to_string())),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Answers every query with a uniformly random pair, knowing nothing but the
/// coin id and the protocol parameters.
pub struct BlindGuessSession {
    coin_id: CoinId,
    rng: ChaCha8Rng,
    selection: Option<Vec<usize>>,
}

impl BlindGuessSession {
    pub fn new(coin_id: CoinId, seed: RngSeed) -> Self {
        BlindGuessSession {
            coin_id,
            rng: seed.rng(),
            selection: None,
        }
    }
}

impl HolderRole for BlindGuessSession {
    fn begin(&mut self) -> ProtocolMessage {
        ProtocolMessage::VerifyRequest {
            coin_id: self.coin_id.clone(),
        }
    }

    fn step(
        &mut self,
        incoming: &ProtocolMessage,
    ) -> Result<Option<ProtocolMessage>, SessionAbort> {
        match incoming {
            ProtocolMessage::BankChallenge { indices } => {
                // Any subset of the right size will do; take the low end.
                let selection: Vec<usize> = indices
                    .iter()
                    .copied()
                    .take(indices.len() * 2 / 3)
                    .collect();
                self.selection = Some(selection.clone());
                Ok(Some(ProtocolMessage::HolderSelection {
                    indices: selection,
                }))
            }
            ProtocolMessage::BankBits { m } => {
                let Some(selection) = self.selection.take() else {
                    return Err(SessionAbort {
                        reason: Reason::ProtocolViolation,
                    });
                };
                if m.len() != selection.len() {
                    return Err(SessionAbort {
                        reason: Reason::ProtocolViolation,
                    });
                }
                let pairs = m
                    .iter()
                    .map(|_| MeasurementOutcome::new(self.rng.gen(), self.rng.gen()))
                    .collect();
                Ok(Some(ProtocolMessage::HolderResults { pairs }))
            }
            ProtocolMessage::Verdict(_) => Ok(None),
            _ => Err(SessionAbort {
                reason: Reason::ProtocolViolation,
            }),
        }
    }
}

struct PreMeasured {
    query: HmpQuery,
    outcome: MeasurementOutcome,
    collapsed: StateVector,
}

/// Holds a stolen coin it has already measured, every register in a
/// self-chosen random basis, before learning the bank's bases.
///
/// When the bank's m agrees with the early choice the recorded outcome is
/// replayed; otherwise the leftover collapsed state is physically measured
/// again in the bank's basis.
pub struct WrongBasisSession {
    coin_id: CoinId,
    premeasured: Vec<PreMeasured>,
    rng: ChaCha8Rng,
    selection: Option<Vec<usize>>,
}

impl WrongBasisSession {
    /// Consumes the coin: every register is measured up front under a random
    /// basis choice drawn from per-register streams of `seed`.
    pub fn new(mut coin: QCoin, seed: RngSeed) -> Self {
        let mut rng = seed.rng();
        let premeasured = (0..coin.k())
            .map(|index| {
                let query = HmpQuery::sample(&mut rng);
                let mut register_rng = seed.stream(1 + index as u64);
                let outcome = coin
                    .consume_register(index, query, &mut register_rng)
                    .expect("fresh stolen coin");
                let collapsed = *coin
                    .post_measurement_state(index)
                    .expect("register measured a moment ago");
                PreMeasured {
                    query,
                    outcome,
                    collapsed,
                }
            })
            .collect();
        WrongBasisSession {
            coin_id: coin.id().clone(),
            premeasured,
            rng,
            selection: None,
        }
    }
}

impl HolderRole for WrongBasisSession {
    fn begin(&mut self) -> ProtocolMessage {
        ProtocolMessage::VerifyRequest {
            coin_id: self.coin_id.clone(),
        }
    }

    fn step(
        &mut self,
        incoming: &ProtocolMessage,
    ) -> Result<Option<ProtocolMessage>, SessionAbort> {
        match incoming {
            ProtocolMessage::BankChallenge { indices } => {
                // Indices beyond the stolen coin answer nothing useful; a
                // challenge containing them is not worth playing.
                if indices.iter().any(|&index| index >= self.premeasured.len()) {
                    return Err(SessionAbort {
                        reason: Reason::ProtocolViolation,
                    });
                }
                let selection: Vec<usize> = indices
                    .iter()
                    .copied()
                    .take(indices.len() * 2 / 3)
                    .collect();
                self.selection = Some(selection.clone());
                Ok(Some(ProtocolMessage::HolderSelection {
                    indices: selection,
                }))
            }
            ProtocolMessage::BankBits { m } => {
                let Some(selection) = self.selection.take() else {
                    return Err(SessionAbort {
                        reason: Reason::ProtocolViolation,
                    });
                };
                if m.len() != selection.len() {
                    return Err(SessionAbort {
                        reason: Reason::ProtocolViolation,
                    });
                }
                let pairs = selection
                    .iter()
                    .zip(m.iter())
                    .map(|(&index, &query)| {
                        let early = &self.premeasured[index];
                        if early.query == query {
                            early.outcome
                        } else {
                            // Re-measure the collapsed leftover in the basis
                            // the bank actually asked for.
                            let (outcome, _) =
                                hmp::run_query(&early.collapsed, query, &mut self.rng);
                            outcome
                        }
                    })
                    .collect();
                Ok(Some(ProtocolMessage::HolderResults { pairs }))
            }
            ProtocolMessage::Verdict(_) => Ok(None),
            _ => Err(SessionAbort {
                reason: Reason::ProtocolViolation,
            }),
        }
    }
}

/// Replays the (a, b) pairs of one observed honest verification against a
/// fresh challenge, guessing blindly on indices the transcript never covered.
pub struct ReplaySession {
    coin_id: CoinId,
    replayed: Vec<(usize, MeasurementOutcome)>,
    rng: ChaCha8Rng,
    selection: Option<Vec<usize>>,
}

impl ReplaySession {
    /// Extracts the replay material from a full honest transcript.
    pub fn from_transcript(
        transcript: &[ProtocolMessage],
        seed: RngSeed,
    ) -> Result<Self, AttackError> {
        let coin_id = transcript
            .iter()
            .find_map(|message| match message {
                ProtocolMessage::VerifyRequest { coin_id } => Some(coin_id.clone()),
                _ => None,
            })
            .ok_or(AttackError::IncompleteTranscript("verify_request"))?;
        let selection = transcript
            .iter()
            .find_map(|message| match message {
                ProtocolMessage::HolderSelection { indices } => Some(indices.clone()),
                _ => None,
            })
            .ok_or(AttackError::IncompleteTranscript("holder_selection"))?;
        let pairs = transcript
            .iter()
            .find_map(|message| match message {
                ProtocolMessage::HolderResults { pairs } => Some(pairs.clone()),
                _ => None,
            })
            .ok_or(AttackError::IncompleteTranscript("holder_results"))?;
        if pairs.len() != selection.len() {
            return Err(AttackError::IncompleteTranscript("aligned results"));
        }
        Ok(ReplaySession {
            coin_id,
            replayed: selection.into_iter().zip(pairs).collect(),
            rng: seed.rng(),
            selection: None,
        })
    }

    /// Redirects the replay at a different coin id.
    pub fn against_coin(mut self, coin_id: CoinId) -> Self {
        self.coin_id = coin_id;
        self
    }

    fn recorded(&self, index: usize) -> Option<MeasurementOutcome> {
        self.replayed
            .iter()
            .find(|(i, _)| *i == index)
            .map(|(_, outcome)| *outcome)
    }
}

impl HolderRole for ReplaySession {
    fn begin(&mut self) -> ProtocolMessage {
        ProtocolMessage::VerifyRequest {
            coin_id: self.coin_id.clone(),
        }
    }

    fn step(
        &mut self,
        incoming: &ProtocolMessage,
    ) -> Result<Option<ProtocolMessage>, SessionAbort> {
        match incoming {
            ProtocolMessage::BankChallenge { indices } => {
                // Prefer indices with replay material, then pad with the rest.
                let want = indices.len() * 2 / 3;
                let (covered, uncovered): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .copied()
                    .partition(|&index| self.recorded(index).is_some());
                let mut selection: Vec<usize> =
                    covered.into_iter().chain(uncovered).take(want).collect();
                selection.sort_unstable();
                self.selection = Some(selection.clone());
                Ok(Some(ProtocolMessage::HolderSelection {
                    indices: selection,
                }))
            }
            ProtocolMessage::BankBits { m } => {
                // The fresh m values are ignored: recorded pairs are replayed
                // verbatim, uncovered indices get a uniform guess.
                let Some(selection) = self.selection.take() else {
                    return Err(SessionAbort {
                        reason: Reason::ProtocolViolation,
                    });
                };
                if m.len() != selection.len() {
                    return Err(SessionAbort {
                        reason: Reason::ProtocolViolation,
                    });
                }
                let pairs = selection
                    .iter()
                    .map(|&index| {
                        self.recorded(index).unwrap_or_else(|| {
                            MeasurementOutcome::new(self.rng.gen(), self.rng.gen())
                        })
                    })
                    .collect();
                Ok(Some(ProtocolMessage::HolderResults { pairs }))
            }
            ProtocolMessage::Verdict(_) => Ok(None),
            _ => Err(SessionAbort {
                reason: Reason::ProtocolViolation,
            }),
        }
    }
}

/// Point estimate plus the exact binomial confidence interval of a strategy's
/// acceptance probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub strategy: String,
    pub k: usize,
    pub t: usize,
    pub seed: u64,
    pub trials: u64,
    pub acceptances: u64,
    pub estimate: f64,
    /// 95% Clopper–Pearson interval.
    pub ci95: [f64; 2],
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-trial, per-lane seeds derived from one base seed.
fn lane_seed(seed: RngSeed, trial: u64, lane: u64) -> RngSeed {
    RngSeed(splitmix(
        splitmix(seed.0 ^ splitmix(trial)) ^ splitmix(lane.wrapping_add(101)),
    ))
}

/// Runs `trials` independent verification sessions of `strategy` and reports
/// the acceptance fraction. Every trial mints a fresh coin, so estimates
/// average over records as well as protocol randomness.
pub fn estimate(
    strategy: Strategy,
    k: usize,
    params: ProtocolParams,
    trials: u64,
    seed: RngSeed,
) -> Result<AttackReport, AttackError> {
    if trials == 0 {
        return Err(AttackError::NoTrials);
    }
    if k < params.t() {
        return Err(AttackError::CoinTooSmall { k, t: params.t() });
    }
    let mut acceptances = 0u64;
    for trial in 0..trials {
        if run_trial(strategy, k, params, seed, trial)? {
            acceptances += 1;
        }
    }
    let estimate = acceptances as f64 / trials as f64;
    let ci95 = binomial_ci(acceptances, trials, 0.95);
    Ok(AttackReport {
        strategy: strategy.name().to_string(),
        k,
        t: params.t(),
        seed: seed.0,
        trials,
        acceptances,
        estimate,
        ci95: [ci95.0, ci95.1],
    })
}

fn run_trial(
    strategy: Strategy,
    k: usize,
    params: ProtocolParams,
    seed: RngSeed,
    trial: u64,
) -> Result<bool, AttackError> {
    let mut mint = Mint::new(trial);
    let (mut coin, record) = mint
        .mint(k, &mut lane_seed(seed, trial, 0).rng())
        .expect("k >= t >= 3");
    let coin_id = record.coin_id.clone();
    let mut ledger = BankLedger::new();
    ledger.insert(record).expect("fresh ledger");

    let bank_seed = lane_seed(seed, trial, 1);
    let actor_seed = lane_seed(seed, trial, 2);
    let mut bank = BankSession::seeded(&ledger, params, bank_seed);

    let outcome: VerificationOutcome = match strategy {
        Strategy::Honest => {
            let mut holder = HolderSession::new(&mut coin, actor_seed);
            drive(&mut bank, &mut holder)
        }
        Strategy::BlindGuess => {
            let mut session = BlindGuessSession::new(coin_id, actor_seed);
            drive(&mut bank, &mut session)
        }
        Strategy::WrongBasis => {
            let mut session = WrongBasisSession::new(coin, actor_seed);
            drive(&mut bank, &mut session)
        }
        Strategy::Replay => {
            // Observe one honest verification of the coin, then replay it
            // against fresh bank randomness.
            let honest = run_verification(
                &ledger,
                &mut coin,
                params,
                lane_seed(seed, trial, 3),
                lane_seed(seed, trial, 4),
            );
            debug_assert!(honest.verdict.valid, "honest observation run");
            let mut session = ReplaySession::from_transcript(&honest.transcript, actor_seed)?;
            drive(&mut bank, &mut session)
        }
    };
    Ok(outcome.verdict.valid)
}

/// Exact (Clopper–Pearson) two-sided binomial confidence interval.
pub fn binomial_ci(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(successes <= trials && trials > 0);
    assert!((0.0..1.0).contains(&confidence));
    let alpha = 1.0 - confidence;
    let half = alpha / 2.0;
    let n = trials;
    let s = successes;

    // ln k! table shared by both tail evaluations.
    let mut ln_fact = vec![0.0f64; n as usize + 1];
    for i in 1..=n as usize {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let ln_choose = |k: u64| ln_fact[n as usize] - ln_fact[k as usize] - ln_fact[(n - k) as usize];
    let cdf = |upto: u64, p: f64| -> f64 {
        // P(X <= upto) for X ~ Binomial(n, p), summed in log space.
        if p <= 0.0 {
            return 1.0;
        }
        if p >= 1.0 {
            return if upto == n { 1.0 } else { 0.0 };
        }
        let ln_p = p.ln();
        let ln_q = (1.0 - p).ln();
        let mut total = 0.0;
        for k in 0..=upto {
            total += (ln_choose(k) + k as f64 * ln_p + (n - k) as f64 * ln_q).exp();
        }
        total.min(1.0)
    };

    let bisect = |mut lo: f64, mut hi: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        // f is monotone with a sign change across [lo, hi].
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    };

    let lower = if s == 0 {
        0.0
    } else {
        // Largest p with P(X >= s | p) <= half; P(X >= s) grows with p.
        bisect(0.0, 1.0, &|p| (1.0 - cdf(s - 1, p)) - half)
    };
    let upper = if s == n {
        1.0
    } else {
        // Smallest p with P(X <= s | p) <= half; P(X <= s) falls with p.
        bisect(0.0, 1.0, &|p| half - cdf(s, p))
    };
    (lower, upper)
}

/// Reference acceptance rates computed by exhaustive enumeration over all 16
/// strings, both queries, and every outcome combination. Nothing in here
/// samples; these are the values the Monte Carlo estimates must reproduce.
pub mod oracle {
    use crate::hmp::{encode, hmp4_member, query_basis, BitString4, HmpQuery, MeasurementOutcome};

    /// Per-register success of answering with a uniform (a, b): the fraction
    /// of member pairs over the 16 × 2 × 4 = 128 cases.
    pub fn blind_guess_register_rate() -> f64 {
        let mut members = 0usize;
        let mut cases = 0usize;
        for x in BitString4::all() {
            for q in HmpQuery::BOTH {
                for outcome in MeasurementOutcome::ALL {
                    cases += 1;
                    if hmp4_member(x, q, outcome) {
                        members += 1;
                    }
                }
            }
        }
        members as f64 / cases as f64
    }

    /// Acceptance of the blind guesser: every one of the 2t/3 registers must
    /// pass independently.
    pub fn blind_guess_acceptance(t: usize) -> f64 {
        blind_guess_register_rate().powi((2 * t / 3) as i32)
    }

    /// Per-register success after collapsing in the wrong basis and
    /// re-measuring in the right one, averaged over strings and outcomes:
    /// sum over collapse outcome j and re-measure outcome l of
    /// p(j | x, m′) · p(l | vⱼ, m) · [member(x, m, l)].
    pub fn wrong_basis_mismatch_rate() -> f64 {
        let mut total = 0.0;
        let mut cases = 0usize;
        for x in BitString4::all() {
            for wrong in HmpQuery::BOTH {
                let right = if wrong == HmpQuery::M0 {
                    HmpQuery::M1
                } else {
                    HmpQuery::M0
                };
                let state = encode(x);
                let wrong_basis = query_basis(wrong);
                let right_basis = query_basis(right);
                let mut success = 0.0;
                for j in 0..4 {
                    let p_collapse = wrong_basis.amplitude_of(j, &state).norm_sqr();
                    if p_collapse == 0.0 {
                        continue;
                    }
                    let collapsed = wrong_basis.vector(j);
                    for l in 0..4 {
                        let p_remeasure = right_basis.amplitude_of(l, collapsed).norm_sqr();
                        if hmp4_member(x, right, MeasurementOutcome::from_basis_index(l)) {
                            success += p_collapse * p_remeasure;
                        }
                    }
                }
                total += success;
                cases += 1;
            }
        }
        total / cases as f64
    }

    /// Per-register success of the wrong-basis adversary: the early basis
    /// matches the bank's with probability 1/2 (then the recorded outcome is
    /// always a member) and mismatches otherwise.
    pub fn wrong_basis_register_rate() -> f64 {
        0.5 + 0.5 * wrong_basis_mismatch_rate()
    }

    pub fn wrong_basis_acceptance(t: usize) -> f64 {
        wrong_basis_register_rate().powi((2 * t / 3) as i32)
    }

    /// Fraction of (x, m_old, a) cases where a recorded pair stays a member
    /// after the basis bit flips. The recorded b answers the XOR of the old
    /// query; it answers the new query's XOR too exactly when x₂ = x₃.
    pub fn replay_mismatch_rate() -> f64 {
        let mut stays = 0usize;
        let mut cases = 0usize;
        for x in BitString4::all() {
            for old in HmpQuery::BOTH {
                let new = if old == HmpQuery::M0 {
                    HmpQuery::M1
                } else {
                    HmpQuery::M0
                };
                for a in [false, true] {
                    // The honest recorded pair for (x, old, a).
                    let m_old = usize::from(old.m());
                    let b = if !a {
                        x.bit(1) ^ x.bit(2 + m_old)
                    } else {
                        x.bit(3 - m_old) ^ x.bit(4)
                    };
                    cases += 1;
                    if hmp4_member(x, new, MeasurementOutcome::new(a, b)) {
                        stays += 1;
                    }
                }
            }
        }
        stays as f64 / cases as f64
    }

    /// Per-register success of a replayed answer: the fresh m agrees with the
    /// recorded one half the time.
    pub fn replay_register_rate() -> f64 {
        0.5 + 0.5 * replay_mismatch_rate()
    }

    fn choose(n: u64, r: u64) -> u128 {
        if r > n {
            return 0;
        }
        let r = r.min(n - r);
        let mut result: u128 = 1;
        for i in 0..r {
            result = result * (n - i) as u128 / (i + 1) as u128;
        }
        result
    }

    /// Acceptance of the replay strategy: the overlap O between the fresh
    /// t-index challenge and the 2t/3 replayed indices is hypergeometric;
    /// overlapped registers succeed at the replay rate and the rest at the
    /// blind rate.
    pub fn replay_acceptance(k: usize, t: usize) -> f64 {
        let select = (2 * t / 3) as u64;
        let k = k as u64;
        let t = t as u64;
        let replay_rate = replay_register_rate();
        let blind_rate = blind_guess_register_rate();
        let total = choose(k, t) as f64;
        let mut acceptance = 0.0;
        for overlap in 0..=select.min(t) {
            let ways = choose(select, overlap) * choose(k - select, t - overlap);
            if ways == 0 {
                continue;
            }
            let probability = ways as f64 / total;
            acceptance += probability
                * replay_rate.powi(overlap as i32)
                * blind_rate.powi((select - overlap) as i32);
        }
        acceptance
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t: usize) -> ProtocolParams {
        ProtocolParams::new(t).unwrap()
    }

    fn four_sigma(p: f64, n: u64) -> f64 {
        4.0 * (p * (1.0 - p) / n as f64).sqrt()
    }

    #[test]
    fn strategy_names_round_trip() {
        for strategy in [
            Strategy::Honest,
            Strategy::BlindGuess,
            Strategy::WrongBasis,
            Strategy::Replay,
        ] {
            assert_eq!(strategy.name().parse::<Strategy>().unwrap(), strategy);
        }
        assert!(matches!(
            "quantum".parse::<Strategy>(),
            Err(AttackError::UnknownStrategy(_))
        ));
    }

    #[test]
    fn enumeration_rates_come_out_exact() {
        // One of the four pairs per a-value is a member: rate 1/2.
        assert!((oracle::blind_guess_register_rate() - 0.5).abs() < 1e-12);
        assert!((oracle::blind_guess_acceptance(3) - 0.25).abs() < 1e-12);
        assert!((oracle::blind_guess_acceptance(15) - 2f64.powi(-10)).abs() < 1e-15);

        // Collapsing in the wrong basis leaves a uniform re-measurement with
        // two member outcomes out of four.
        assert!((oracle::wrong_basis_mismatch_rate() - 0.5).abs() < 1e-12);
        assert!((oracle::wrong_basis_register_rate() - 0.75).abs() < 1e-12);

        // A replayed pair survives a basis flip exactly when x₂ = x₃.
        assert!((oracle::replay_mismatch_rate() - 0.5).abs() < 1e-12);
        assert!((oracle::replay_register_rate() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn estimate_validates_its_inputs() {
        assert_eq!(
            estimate(Strategy::BlindGuess, 60, params(15), 0, RngSeed(1)),
            Err(AttackError::NoTrials)
        );
        assert_eq!(
            estimate(Strategy::BlindGuess, 6, params(15), 1, RngSeed(1)),
            Err(AttackError::CoinTooSmall { k: 6, t: 15 })
        );
    }

    #[test]
    fn single_trial_reports_zero_or_one() {
        let report = estimate(Strategy::BlindGuess, 15, params(15), 1, RngSeed(5)).unwrap();
        assert!(report.acceptances <= 1);
        assert!(report.estimate == 0.0 || report.estimate == 1.0);
    }

    #[test]
    fn honest_strategy_always_accepts() {
        let report = estimate(Strategy::Honest, 15, params(15), 500, RngSeed(6)).unwrap();
        assert_eq!(report.acceptances, 500);
        assert_eq!(report.estimate, 1.0);
        assert_eq!(report.ci95[1], 1.0);
    }

    #[test]
    fn blind_guess_matches_its_oracle() {
        let trials = 20_000u64;
        for t in [3usize, 9, 15] {
            let expected = oracle::blind_guess_acceptance(t);
            let report = estimate(Strategy::BlindGuess, t, params(t), trials, RngSeed(7)).unwrap();
            assert!(
                (report.estimate - expected).abs() <= four_sigma(expected, trials),
                "t={t}: estimate {} vs oracle {expected}",
                report.estimate
            );
            assert!(report.ci95[0] <= report.estimate && report.estimate <= report.ci95[1]);
        }
    }

    #[test]
    fn blind_guess_acceptance_decays_with_t() {
        let trials = 20_000u64;
        let mut previous = f64::INFINITY;
        for t in [3usize, 6, 9, 12, 15] {
            let report = estimate(Strategy::BlindGuess, t, params(t), trials, RngSeed(70)).unwrap();
            assert!(
                report.estimate < previous,
                "t={t}: {} did not fall below {previous}",
                report.estimate
            );
            previous = report.estimate;
        }
    }

    #[test]
    fn wrong_basis_matches_its_oracle_and_beats_blind() {
        let trials = 20_000u64;
        let t = 15;
        let expected = oracle::wrong_basis_acceptance(t);
        let report = estimate(Strategy::WrongBasis, t, params(t), trials, RngSeed(8)).unwrap();
        assert!(
            (report.estimate - expected).abs() <= four_sigma(expected, trials),
            "estimate {} vs oracle {expected}",
            report.estimate
        );
        // Strictly between the blind-guess rate and certainty.
        assert!(report.estimate > oracle::blind_guess_acceptance(t));
        assert!(report.estimate < 1.0);
    }

    #[test]
    fn replay_matches_its_oracle() {
        let trials = 20_000u64;
        let (k, t) = (60, 15);
        let expected = oracle::replay_acceptance(k, t);
        let report = estimate(Strategy::Replay, k, params(t), trials, RngSeed(9)).unwrap();
        assert!(
            (report.estimate - expected).abs() <= four_sigma(expected, trials),
            "estimate {} vs oracle {expected}",
            report.estimate
        );
        // Partial knowledge sits between guessing and honesty here too.
        assert!(report.estimate > oracle::blind_guess_acceptance(t));
        assert!(report.estimate < 1.0);
    }

    #[test]
    fn replaying_a_forced_identical_challenge_accepts() {
        // With the bank seeded identically, the fresh challenge and bases
        // duplicate the observed run, so the replay is a perfect answer.
        let mut mint = Mint::new(0);
        let (mut coin, record) = mint.mint(60, &mut RngSeed(10).rng()).unwrap();
        let mut ledger = BankLedger::new();
        ledger.insert(record).unwrap();

        let honest = run_verification(&ledger, &mut coin, params(15), RngSeed(11), RngSeed(12));
        assert!(honest.verdict.valid);

        let mut replay = ReplaySession::from_transcript(&honest.transcript, RngSeed(13)).unwrap();
        let mut bank = BankSession::seeded(&ledger, params(15), RngSeed(11));
        let outcome = drive(&mut bank, &mut replay);
        assert!(
            outcome.verdict.valid,
            "identical bank seed must accept the replay"
        );
    }

    #[test]
    fn replaying_against_an_unknown_coin_fails() {
        let mut mint = Mint::new(0);
        let (mut coin, record) = mint.mint(60, &mut RngSeed(14).rng()).unwrap();
        let mut ledger = BankLedger::new();
        ledger.insert(record).unwrap();
        let honest = run_verification(&ledger, &mut coin, params(15), RngSeed(15), RngSeed(16));

        let replay = ReplaySession::from_transcript(&honest.transcript, RngSeed(17)).unwrap();
        let mut replay = replay.against_coin(CoinId::from("somebody-else"));
        let mut bank = BankSession::seeded(&ledger, params(15), RngSeed(18));
        let outcome = drive(&mut bank, &mut replay);
        assert!(!outcome.verdict.valid);
        assert!(matches!(
            outcome.verdict.reason,
            Reason::UnknownCoin | Reason::HmpCheckFailed
        ));
    }

    #[test]
    fn confidence_intervals_match_closed_forms() {
        // s = 0: lower is 0, upper is 1 − (α/2)^(1/n).
        let (lo, hi) = binomial_ci(0, 100, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.025f64.powf(1.0 / 100.0))).abs() < 1e-6);

        // s = n: mirror image.
        let (lo, hi) = binomial_ci(100, 100, 0.95);
        assert_eq!(hi, 1.0);
        assert!((lo - 0.025f64.powf(1.0 / 100.0)).abs() < 1e-6);

        // A textbook midpoint: 5 of 10 gives roughly [0.187, 0.813].
        let (lo, hi) = binomial_ci(5, 10, 0.95);
        assert!((lo - 0.187).abs() < 2e-3, "{lo}");
        assert!((hi - 0.813).abs() < 2e-3, "{hi}");
    }

    #[test]
    fn reports_serialize_with_stable_fields() {
        let report = estimate(Strategy::BlindGuess, 3, params(3), 10, RngSeed(20)).unwrap();
        let json = report.to_json();
        for field in [
            "\"strategy\":\"blind\"",
            "\"k\":3",
            "\"t\":3",
            "\"seed\":20",
            "\"trials\":10",
            "\"acceptances\":",
            "\"estimate\":",
            "\"ci95\":[",
        ] {
            assert!(json.contains(field), "{json} missing {field}");
        }
    }
}
