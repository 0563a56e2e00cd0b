//! Coin objects, the mint, and the bank's ledger of secret records.
//!
//! A coin carries k two-qubit registers prepared from a secret record of k
//! classical 4-bit strings, plus a bitmask of used registers. The bank keeps
//! only the classical record; it never sees the registers. Both sides have an
//! on-disk JSON form; the coin file serializes simulated amplitudes, which a
//! physical coin could never allow, and is marked accordingly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmp::{self, BitString4, HmpQuery, MeasurementOutcome};
use crate::qsim::StateVector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoinError {
    #[error("a coin needs at least one register")]
    EmptyCoin,
    #[error("register {index} is out of range for a coin with {k} registers")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("register {index} has already been used")]
    RegisterUsed { index: usize },
    #[error("register {index} is not marked for measurement")]
    RegisterNotMarked { index: usize },
    #[error("register {index} has already collapsed")]
    RegisterCollapsed { index: usize },
    #[error("coin id `{0}` already exists in the ledger")]
    DuplicateCoinId(CoinId),
}

/// Errors while reading or writing ledger and coin files.
#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Format(String),
}

impl PersistError {
    fn format(msg: impl Into<String>) -> Self {
        PersistError::Format(msg.into())
    }
}

/// Unique identifier assigned by the mint: a mint-epoch prefix plus a
/// decimal 64-bit counter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoinId(String);

impl CoinId {
    pub fn new(id: impl Into<String>) -> Self {
        CoinId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CoinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CoinId {
    fn from(s: &str) -> Self {
        CoinId(s.to_string())
    }
}

/// The bank-side secret backing one coin: k classical 4-bit strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretRecord {
    pub coin_id: CoinId,
    pub entries: Vec<BitString4>,
}

impl SecretRecord {
    pub fn k(&self) -> usize {
        self.entries.len()
    }
}

/// One quantum register slot of a coin.
#[derive(Debug, Clone, PartialEq)]
enum Register {
    Live(StateVector),
    /// Post-measurement state, retained for inspection only.
    Collapsed(StateVector),
}

/// A coin: k two-qubit registers, a used-marker per register, and an id.
///
/// The used markers are the holder's classical bookkeeping of which registers
/// have been spent on verification. Marking happens when a register is
/// selected for a protocol run, before its measurement result ever leaves the
/// holder, so an interrupted run still burns the registers it touched.
#[derive(Debug, Clone, PartialEq)]
pub struct QCoin {
    id: CoinId,
    used: Vec<bool>,
    registers: Vec<Register>,
}

impl QCoin {
    pub fn id(&self) -> &CoinId {
        &self.id
    }

    pub fn k(&self) -> usize {
        self.registers.len()
    }

    pub fn is_used(&self, index: usize) -> bool {
        self.used[index]
    }

    pub fn used_bits(&self) -> &[bool] {
        &self.used
    }

    pub fn used_count(&self) -> usize {
        self.used.iter().filter(|&&u| u).count()
    }

    /// Indices with a clear used marker.
    pub fn fresh_indices(&self) -> Vec<usize> {
        (0..self.k()).filter(|&i| !self.used[i]).collect()
    }

    fn check_index(&self, index: usize) -> Result<(), CoinError> {
        if index >= self.k() {
            return Err(CoinError::IndexOutOfRange { index, k: self.k() });
        }
        Ok(())
    }

    /// Sets the used marker of a fresh register without measuring it.
    pub fn mark_used(&mut self, index: usize) -> Result<(), CoinError> {
        self.check_index(index)?;
        if self.used[index] {
            return Err(CoinError::RegisterUsed { index });
        }
        self.used[index] = true;
        Ok(())
    }

    /// Measures a register previously marked by [`QCoin::mark_used`].
    pub fn measure_marked<R: Rng>(
        &mut self,
        index: usize,
        query: HmpQuery,
        rng: &mut R,
    ) -> Result<MeasurementOutcome, CoinError> {
        self.check_index(index)?;
        if !self.used[index] {
            return Err(CoinError::RegisterNotMarked { index });
        }
        self.measure_slot(index, query, rng)
    }

    /// Marks and measures a fresh register in one step. A register can go
    /// through this exactly once; the second attempt reports the collapse.
    pub fn consume_register<R: Rng>(
        &mut self,
        index: usize,
        query: HmpQuery,
        rng: &mut R,
    ) -> Result<MeasurementOutcome, CoinError> {
        self.check_index(index)?;
        if self.used[index] {
            return Err(CoinError::RegisterUsed { index });
        }
        self.used[index] = true;
        self.measure_slot(index, query, rng)
    }

    fn measure_slot<R: Rng>(
        &mut self,
        index: usize,
        query: HmpQuery,
        rng: &mut R,
    ) -> Result<MeasurementOutcome, CoinError> {
        let state = match &self.registers[index] {
            Register::Live(state) => *state,
            Register::Collapsed(_) => return Err(CoinError::RegisterCollapsed { index }),
        };
        let (outcome, collapsed) = hmp::run_query(&state, query, rng);
        self.registers[index] = Register::Collapsed(collapsed);
        Ok(outcome)
    }

    /// The live state of an unmeasured register, if any.
    pub fn live_state(&self, index: usize) -> Option<&StateVector> {
        match &self.registers[index] {
            Register::Live(state) => Some(state),
            Register::Collapsed(_) => None,
        }
    }

    /// Post-measurement state of a collapsed register. Inspection only: the
    /// honest protocol path never reads a register after it collapsed.
    pub fn post_measurement_state(&self, index: usize) -> Option<&StateVector> {
        match &self.registers[index] {
            Register::Collapsed(state) => Some(state),
            Register::Live(_) => None,
        }
    }
}

/// Allocates coin ids and prepares fresh coins from random secret records.
#[derive(Debug)]
pub struct Mint {
    epoch: u64,
    counter: u64,
}

impl Mint {
    /// `epoch` becomes the id prefix; two mints with different epochs never
    /// collide on ids.
    pub fn new(epoch: u64) -> Self {
        Mint { epoch, counter: 0 }
    }

    fn next_id(&mut self) -> CoinId {
        let id = CoinId(format!("{}-{}", self.epoch, self.counter));
        self.counter += 1;
        id
    }

    /// Draws k uniform 4-bit strings and prepares the matching coin.
    ///
    /// Registers are produced by running the preparation circuits, not by
    /// evaluating the encoding formula, so minting exercises the same path a
    /// gate-based device would.
    pub fn mint<R: Rng>(
        &mut self,
        k: usize,
        rng: &mut R,
    ) -> Result<(QCoin, SecretRecord), CoinError> {
        if k == 0 {
            return Err(CoinError::EmptyCoin);
        }
        let entries: Vec<BitString4> = (0..k).map(|_| BitString4::sample(rng)).collect();
        let coin_id = self.next_id();
        let registers = entries
            .iter()
            .map(|&x| Register::Live(hmp::preparation_circuit(x).run()))
            .collect();
        let coin = QCoin {
            id: coin_id.clone(),
            used: vec![false; k],
            registers,
        };
        Ok((coin, SecretRecord { coin_id, entries }))
    }

    /// Mints a coin for a caller-chosen record; used by tests that pin x values.
    pub fn mint_with_entries(
        &mut self,
        entries: Vec<BitString4>,
    ) -> Result<(QCoin, SecretRecord), CoinError> {
        if entries.is_empty() {
            return Err(CoinError::EmptyCoin);
        }
        let coin_id = self.next_id();
        let registers = entries
            .iter()
            .map(|&x| Register::Live(hmp::preparation_circuit(x).run()))
            .collect();
        let coin = QCoin {
            id: coin_id.clone(),
            used: vec![false; entries.len()],
            registers,
        };
        Ok((coin, SecretRecord { coin_id, entries }))
    }
}

/// The bank's static database: coin id → secret record, append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankLedger {
    records: BTreeMap<CoinId, SecretRecord>,
}

impl BankLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: SecretRecord) -> Result<(), CoinError> {
        if self.records.contains_key(&record.coin_id) {
            return Err(CoinError::DuplicateCoinId(record.coin_id));
        }
        self.records.insert(record.coin_id.clone(), record);
        Ok(())
    }

    pub fn lookup(&self, id: &CoinId) -> Option<&SecretRecord> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SecretRecord> {
        self.records.values()
    }
}

const LEDGER_VERSION: u32 = 1;
const COIN_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LedgerFile {
    version: u32,
    coins: Vec<LedgerEntry>,
}

#[derive(Serialize, Deserialize)]
struct LedgerEntry {
    id: String,
    k: usize,
    entries: Vec<String>,
}

/// Serializes a ledger to its canonical JSON document.
pub fn ledger_to_json(ledger: &BankLedger) -> String {
    let file = LedgerFile {
        version: LEDGER_VERSION,
        coins: ledger
            .iter()
            .map(|record| LedgerEntry {
                id: record.coin_id.to_string(),
                k: record.k(),
                entries: record.entries.iter().map(BitString4::to_string).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("ledger serialization cannot fail")
}

/// Parses and validates a ledger document, naming the offending coin and
/// entry on failure.
pub fn ledger_from_json(json: &str) -> Result<BankLedger, PersistError> {
    let file: LedgerFile = serde_json::from_str(json)?;
    if file.version != LEDGER_VERSION {
        return Err(PersistError::format(format!(
            "unsupported ledger version {}",
            file.version
        )));
    }
    let mut ledger = BankLedger::new();
    for (pos, coin) in file.coins.iter().enumerate() {
        if coin.entries.len() != coin.k {
            return Err(PersistError::format(format!(
                "coin `{}` (position {pos}): k = {} but {} entries",
                coin.id,
                coin.k,
                coin.entries.len()
            )));
        }
        let mut entries = Vec::with_capacity(coin.k);
        for (index, entry) in coin.entries.iter().enumerate() {
            let bits: BitString4 = entry.parse().map_err(|e| {
                PersistError::format(format!("coin `{}` entry {index}: {e}", coin.id))
            })?;
            entries.push(bits);
        }
        ledger
            .insert(SecretRecord {
                coin_id: CoinId::new(coin.id.clone()),
                entries,
            })
            .map_err(|e| PersistError::format(format!("position {pos}: {e}")))?;
    }
    Ok(ledger)
}

pub fn save_ledger(ledger: &BankLedger, path: &Path) -> Result<(), PersistError> {
    fs::write(path, ledger_to_json(ledger) + "\n")?;
    Ok(())
}

pub fn load_ledger(path: &Path) -> Result<BankLedger, PersistError> {
    let json = fs::read_to_string(path)?;
    ledger_from_json(&json)
}

#[derive(Serialize, Deserialize)]
struct CoinFile {
    version: u32,
    /// A serialized register dump only exists because this is a simulation;
    /// real quantum registers cannot be copied to disk.
    simulation_only: bool,
    id: String,
    k: usize,
    p: String,
    registers: Vec<CoinFileRegister>,
}

#[derive(Serialize, Deserialize)]
struct CoinFileRegister {
    amplitudes: [[f64; 2]; 4],
    collapsed: bool,
}

/// Serializes a coin, amplitudes and used markers included.
pub fn coin_to_json(coin: &QCoin) -> String {
    let registers = coin
        .registers
        .iter()
        .map(|register| {
            let (state, collapsed) = match register {
                Register::Live(state) => (state, false),
                Register::Collapsed(state) => (state, true),
            };
            CoinFileRegister {
                amplitudes: state.amplitudes().map(|a| [a.re, a.im]),
                collapsed,
            }
        })
        .collect();
    let file = CoinFile {
        version: COIN_FILE_VERSION,
        simulation_only: true,
        id: coin.id.to_string(),
        k: coin.k(),
        p: coin
            .used
            .iter()
            .map(|&u| if u { '1' } else { '0' })
            .collect(),
        registers,
    };
    serde_json::to_string(&file).expect("coin serialization cannot fail")
}

pub fn coin_from_json(json: &str) -> Result<QCoin, PersistError> {
    let file: CoinFile = serde_json::from_str(json)?;
    if file.version != COIN_FILE_VERSION {
        return Err(PersistError::format(format!(
            "unsupported coin file version {}",
            file.version
        )));
    }
    if !file.simulation_only {
        return Err(PersistError::format(
            "missing simulation-only marker; refusing to treat this as a register dump",
        ));
    }
    if file.registers.len() != file.k || file.p.chars().count() != file.k {
        return Err(PersistError::format(format!(
            "coin `{}`: k = {} but {} registers and {} markers",
            file.id,
            file.k,
            file.registers.len(),
            file.p.chars().count()
        )));
    }
    let mut used = Vec::with_capacity(file.k);
    for (index, ch) in file.p.chars().enumerate() {
        match ch {
            '0' => used.push(false),
            '1' => used.push(true),
            other => {
                return Err(PersistError::format(format!(
                    "coin `{}` marker {index}: invalid character `{other}`",
                    file.id
                )))
            }
        }
    }
    let mut registers = Vec::with_capacity(file.k);
    for (index, register) in file.registers.iter().enumerate() {
        let amps = register
            .amplitudes
            .map(|[re, im]| num_complex::Complex64::new(re, im));
        let state = StateVector::new(amps).map_err(|e| {
            PersistError::format(format!("coin `{}` register {index}: {e}", file.id))
        })?;
        registers.push(if register.collapsed {
            Register::Collapsed(state)
        } else {
            Register::Live(state)
        });
    }
    Ok(QCoin {
        id: CoinId::new(file.id),
        used,
        registers,
    })
}

pub fn save_coin(coin: &QCoin, path: &Path) -> Result<(), PersistError> {
    fs::write(path, coin_to_json(coin) + "\n")?;
    Ok(())
}

pub fn load_coin(path: &Path) -> Result<QCoin, PersistError> {
    let json = fs::read_to_string(path)?;
    coin_from_json(&json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmp::encode;
    use crate::qsim::{RngSeed, ALGEBRAIC_TOL};
    use proptest::prelude::*;

    #[test]
    fn mint_rejects_empty_coins() {
        let mut mint = Mint::new(0);
        let err = mint.mint(0, &mut RngSeed(1).rng()).unwrap_err();
        assert_eq!(err, CoinError::EmptyCoin);
    }

    #[test]
    fn forced_record_produces_the_worked_register() {
        let mut mint = Mint::new(7);
        let (coin, record) = mint
            .mint_with_entries(vec!["0110".parse().unwrap()])
            .unwrap();
        assert_eq!(record.k(), 1);
        assert_eq!(coin.used_count(), 0);
        let expected = StateVector::from_real([0.5, -0.5, -0.5, 0.5]).unwrap();
        assert!(coin
            .live_state(0)
            .unwrap()
            .approx_eq(&expected, ALGEBRAIC_TOL));
    }

    #[test]
    fn fresh_coins_match_their_records() {
        // 100 seeded mints with k = 12; every register equals encode(xᵢ).
        let mut mint = Mint::new(1);
        for seed in 0..100u64 {
            let mut rng = RngSeed(seed).rng();
            let (coin, record) = mint.mint(12, &mut rng).unwrap();
            assert_eq!(coin.k(), 12);
            assert!(coin.used_bits().iter().all(|&u| !u));
            for (i, &x) in record.entries.iter().enumerate() {
                let register = coin.live_state(i).unwrap();
                assert!(
                    register.max_abs_diff(&encode(x)) < ALGEBRAIC_TOL,
                    "seed {seed} register {i}"
                );
            }
        }
    }

    #[test]
    fn same_seed_gives_equal_records_with_distinct_ids() {
        let mut first = Mint::new(100);
        let mut second = Mint::new(200);
        let (_, record_a) = first.mint(60, &mut RngSeed(9).rng()).unwrap();
        let (_, record_b) = second.mint(60, &mut RngSeed(9).rng()).unwrap();
        assert_eq!(record_a.entries, record_b.entries);
        assert_ne!(record_a.coin_id, record_b.coin_id);
    }

    #[test]
    fn consume_register_collapses_exactly_once() {
        let mut mint = Mint::new(0);
        let (mut coin, record) = mint
            .mint_with_entries(vec!["0000".parse().unwrap(), "0110".parse().unwrap()])
            .unwrap();
        let mut rng = RngSeed(5).rng();

        let outcome = coin.consume_register(0, HmpQuery::M0, &mut rng).unwrap();
        assert!(coin.is_used(0));
        assert_eq!(coin.used_count(), 1);
        // Record entry 0000 with m = 0 only reaches (0,0) and (1,0).
        assert_eq!(record.entries[0].to_string(), "0000");
        assert!(!outcome.b);
        assert!(coin.post_measurement_state(0).is_some());
        assert!(coin.live_state(0).is_none());

        let err = coin
            .consume_register(0, HmpQuery::M1, &mut rng)
            .unwrap_err();
        assert_eq!(err, CoinError::RegisterUsed { index: 0 });
        assert_eq!(coin.used_count(), 1);

        let err = coin
            .consume_register(99, HmpQuery::M0, &mut rng)
            .unwrap_err();
        assert_eq!(err, CoinError::IndexOutOfRange { index: 99, k: 2 });
    }

    #[test]
    fn mark_then_measure_mirrors_the_protocol_split() {
        let mut mint = Mint::new(0);
        let (mut coin, _) = mint.mint(4, &mut RngSeed(2).rng()).unwrap();
        let mut rng = RngSeed(3).rng();

        // Measuring before marking is rejected.
        let err = coin.measure_marked(1, HmpQuery::M0, &mut rng).unwrap_err();
        assert_eq!(err, CoinError::RegisterNotMarked { index: 1 });

        coin.mark_used(1).unwrap();
        assert_eq!(coin.used_count(), 1);
        assert!(coin.live_state(1).is_some(), "marked but not yet measured");

        coin.measure_marked(1, HmpQuery::M0, &mut rng).unwrap();
        let err = coin.measure_marked(1, HmpQuery::M1, &mut rng).unwrap_err();
        assert_eq!(err, CoinError::RegisterCollapsed { index: 1 });

        let err = coin.mark_used(1).unwrap_err();
        assert_eq!(err, CoinError::RegisterUsed { index: 1 });

        // Markers never reset: consume the rest and recount.
        for i in [0usize, 2, 3] {
            coin.consume_register(i, HmpQuery::M1, &mut rng).unwrap();
        }
        assert_eq!(coin.used_count(), 4);
        assert!(coin.fresh_indices().is_empty());
    }

    #[test]
    fn consumption_outcomes_sit_in_the_support() {
        // Coin from record (0000): m = 0 outcomes are only (0,0) and (1,0).
        let mut mint = Mint::new(0);
        for seed in 0..50u64 {
            let (mut coin, _) = mint
                .mint_with_entries(vec!["0000".parse().unwrap()])
                .unwrap();
            let outcome = coin
                .consume_register(0, HmpQuery::M0, &mut RngSeed(seed).rng())
                .unwrap();
            assert!(!outcome.b, "seed {seed} produced {outcome}");
        }
    }

    #[test]
    fn ledger_inserts_reject_duplicates() {
        let mut ledger = BankLedger::new();
        let record = SecretRecord {
            coin_id: CoinId::from("5-0"),
            entries: vec!["0110".parse().unwrap()],
        };
        ledger.insert(record.clone()).unwrap();
        let err = ledger.insert(record).unwrap_err();
        assert_eq!(err, CoinError::DuplicateCoinId(CoinId::from("5-0")));
        assert_eq!(ledger.len(), 1);
    }

    #[test]
    fn ledger_round_trips_exactly() {
        let empty = BankLedger::new();
        assert_eq!(ledger_from_json(&ledger_to_json(&empty)).unwrap(), empty);

        let mut ledger = BankLedger::new();
        ledger
            .insert(SecretRecord {
                coin_id: CoinId::from("9-0"),
                entries: vec![
                    "0110".parse().unwrap(),
                    "0000".parse().unwrap(),
                    "1111".parse().unwrap(),
                ],
            })
            .unwrap();
        let json = ledger_to_json(&ledger);
        assert_eq!(
            json,
            r#"{"version":1,"coins":[{"id":"9-0","k":3,"entries":["0110","0000","1111"]}]}"#
        );
        let reloaded = ledger_from_json(&json).unwrap();
        assert_eq!(reloaded, ledger);
        // Canonical writer: a second save emits identical bytes.
        assert_eq!(ledger_to_json(&reloaded), json);
    }

    #[test]
    fn ledger_load_names_the_offending_entry() {
        let bad = r#"{"version":1,"coins":[{"id":"9-0","k":1,"entries":["01101"]}]}"#;
        let err = ledger_from_json(bad).unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains("9-0") && message.contains("entry 0"),
            "{message}"
        );
        assert!(message.contains("5"), "{message}");

        let dup = r#"{"version":1,"coins":[{"id":"a","k":0,"entries":[]},{"id":"a","k":0,"entries":[]}]}"#;
        let err = ledger_from_json(dup).unwrap_err();
        assert!(err.to_string().contains("already exists"));

        let mismatch = r#"{"version":1,"coins":[{"id":"b","k":2,"entries":["0000"]}]}"#;
        let err = ledger_from_json(mismatch).unwrap_err();
        assert!(err.to_string().contains("k = 2"));
    }

    #[test]
    fn coin_files_round_trip_with_consumed_registers() {
        let mut mint = Mint::new(3);
        let (mut coin, _) = mint.mint(5, &mut RngSeed(8).rng()).unwrap();
        coin.consume_register(2, HmpQuery::M1, &mut RngSeed(9).rng())
            .unwrap();
        coin.mark_used(4).unwrap();

        let json = coin_to_json(&coin);
        assert!(json.contains("\"simulation_only\":true"));
        let reloaded = coin_from_json(&json).unwrap();
        assert_eq!(reloaded, coin);
        assert_eq!(coin_to_json(&reloaded), json);

        let stripped = json.replace("\"simulation_only\":true", "\"simulation_only\":false");
        assert!(coin_from_json(&stripped).is_err());
    }

    proptest! {
        // Round-trip identity over randomly generated ledgers.
        #[test]
        fn ledger_round_trip_property(coins in proptest::collection::vec(
            (0u64..1000, proptest::collection::vec(0u8..16, 1..20)),
            0..12,
        )) {
            let mut ledger = BankLedger::new();
            for (counter, (id, nibbles)) in coins.into_iter().enumerate() {
                let record = SecretRecord {
                    coin_id: CoinId::new(format!("{id}-{counter}")),
                    entries: nibbles.into_iter().map(BitString4::from_nibble).collect(),
                };
                ledger.insert(record).unwrap();
            }
            let json = ledger_to_json(&ledger);
            let reloaded = ledger_from_json(&json).unwrap();
            prop_assert_eq!(&reloaded, &ledger);
            prop_assert_eq!(ledger_to_json(&reloaded), json);
        }
    }
}
