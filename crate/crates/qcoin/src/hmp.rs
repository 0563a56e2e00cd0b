//! The hidden-matching layer: encoding 4-bit classical strings into two-qubit
//! states, the sixteen preparation circuits, the two query bases, the query
//! measurement producing an (a, b) pair, and the classical membership
//! predicate the bank checks against.
//!
//! `encode` computes the target amplitudes straight from the defining
//! formula and serves as the oracle; the preparation circuits are the
//! implementation under test, never the other way around.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::Rng;
use thiserror::Error;

use crate::qsim::{
    self, bell_state, Basis, BellState, Gate, Qubit, StandardGate, StateVector, ALGEBRAIC_TOL,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitStringError {
    #[error("expected 4 bits, got {0} characters")]
    WrongLength(usize),
    #[error("invalid bit character `{0}` (expected 0 or 1)")]
    InvalidBit(char),
}

/// A classical string x₁x₂x₃x₄ of four bits.
///
/// Bits are 1-indexed to match the verification predicate; x₁ is the leftmost
/// character of the textual form, so "0110" has x₂ = x₃ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString4 {
    bits: [bool; 4],
}

impl BitString4 {
    pub fn new(bits: [bool; 4]) -> Self {
        BitString4 { bits }
    }

    /// Builds from the low 4 bits of `n`, most significant bit first
    /// (0b0110 is "0110").
    pub fn from_nibble(n: u8) -> Self {
        BitString4 {
            bits: [
                n & 0b1000 != 0,
                n & 0b0100 != 0,
                n & 0b0010 != 0,
                n & 0b0001 != 0,
            ],
        }
    }

    pub fn nibble(&self) -> u8 {
        self.bits
            .iter()
            .fold(0, |acc, &bit| (acc << 1) | u8::from(bit))
    }

    /// Bit xᵢ for i in 1..=4.
    pub fn bit(&self, i: usize) -> bool {
        assert!((1..=4).contains(&i), "bit index {i} out of range 1..=4");
        self.bits[i - 1]
    }

    /// Bitwise complement x̄.
    pub fn complement(&self) -> Self {
        BitString4 {
            bits: [!self.bits[0], !self.bits[1], !self.bits[2], !self.bits[3]],
        }
    }

    /// All 16 strings in nibble order.
    pub fn all() -> impl Iterator<Item = BitString4> {
        (0..16u8).map(BitString4::from_nibble)
    }

    /// Draws a uniform string.
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        BitString4::from_nibble(rng.gen_range(0..16))
    }
}

impl FromStr for BitString4 {
    type Err = BitStringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.chars().count() != 4 {
            return Err(BitStringError::WrongLength(s.chars().count()));
        }
        let mut bits = [false; 4];
        for (slot, ch) in bits.iter_mut().zip(s.chars()) {
            *slot = match ch {
                '0' => false,
                '1' => true,
                other => return Err(BitStringError::InvalidBit(other)),
            };
        }
        Ok(BitString4 { bits })
    }
}

impl fmt::Display for BitString4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &bit in &self.bits {
            write!(f, "{}", u8::from(bit))?;
        }
        Ok(())
    }
}

/// The challenge bit m selecting one of the two measurement bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HmpQuery(bool);

impl HmpQuery {
    pub const M0: HmpQuery = HmpQuery(false);
    pub const M1: HmpQuery = HmpQuery(true);
    pub const BOTH: [HmpQuery; 2] = [HmpQuery::M0, HmpQuery::M1];

    pub fn new(m: bool) -> Self {
        HmpQuery(m)
    }

    pub fn m(self) -> bool {
        self.0
    }

    pub fn bit(self) -> u8 {
        u8::from(self.0)
    }

    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        HmpQuery(rng.gen())
    }
}

impl fmt::Display for HmpQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m={}", self.bit())
    }
}

/// The (a, b) pair produced by one query measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeasurementOutcome {
    pub a: bool,
    pub b: bool,
}

impl MeasurementOutcome {
    pub fn new(a: bool, b: bool) -> Self {
        MeasurementOutcome { a, b }
    }

    /// Maps a 0-based basis outcome to its pair:
    /// v₁ → (0,0), v₂ → (0,1), v₃ → (1,0), v₄ → (1,1).
    pub fn from_basis_index(j: usize) -> Self {
        assert!(j < 4, "basis outcome {j} out of range");
        MeasurementOutcome {
            a: j & 0b10 != 0,
            b: j & 0b01 != 0,
        }
    }

    pub fn basis_index(self) -> usize {
        (usize::from(self.a) << 1) | usize::from(self.b)
    }

    pub const ALL: [MeasurementOutcome; 4] = [
        MeasurementOutcome { a: false, b: false },
        MeasurementOutcome { a: false, b: true },
        MeasurementOutcome { a: true, b: false },
        MeasurementOutcome { a: true, b: true },
    ];
}

impl fmt::Display for MeasurementOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", u8::from(self.a), u8::from(self.b))
    }
}

/// Encodes a classical string as its two-qubit state:
/// amplitudes (1/2)·[(−1)^{x₁}, (−1)^{x₂}, (−1)^{x₃}, (−1)^{x₄}].
///
/// Computed directly from the formula; this is the reference against which
/// the preparation circuits are checked.
pub fn encode(x: BitString4) -> StateVector {
    let sign = |i: usize| if x.bit(i) { -0.5 } else { 0.5 };
    StateVector::from_real([sign(1), sign(2), sign(3), sign(4)])
        .expect("±1/2 amplitudes are normalized")
}

/// Amplitude sign of one unentangled input qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// How one of the sixteen states is prepared on hardware-style inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparationKind {
    /// Tensor product of two balanced qubits (s|0⟩ ± |1⟩)/√2; no entanglement.
    Product { q1: (Sign, Sign), q2: (Sign, Sign) },
    /// A Bell state pushed through a word of parallel gate layers,
    /// applied left to right.
    Entangled {
        bell: BellState,
        word: Vec<(StandardGate, StandardGate)>,
    },
}

/// The preparation circuit for one classical string, labelled by its row in
/// the construction tables (1..=16).
#[derive(Debug, Clone, PartialEq)]
pub struct PreparationCircuit {
    pub label: u8,
    pub kind: PreparationKind,
}

impl PreparationCircuit {
    /// Runs the circuit through the statevector engine.
    pub fn run(&self) -> StateVector {
        match &self.kind {
            PreparationKind::Product { q1, q2 } => {
                let first = Qubit::balanced(q1.0.value(), q1.1.value());
                let second = Qubit::balanced(q2.0.value(), q2.1.value());
                StateVector::product(&first, &second)
            }
            PreparationKind::Entangled { bell, word } => {
                let mut state = bell_state(*bell);
                for (first, second) in word {
                    let layer = Gate::standard(*first)
                        .tensor(&Gate::standard(*second))
                        .expect("word layers are single-qubit gates");
                    state = layer.apply(&state).expect("4×4 layer");
                }
                state
            }
        }
    }
}

/// The sixteen circuits, indexed by the nibble of the string they prepare.
/// Building the table checks every circuit against `encode`, so a bad row
/// fails fast at first use.
static PREPARATIONS: LazyLock<[PreparationCircuit; 16]> = LazyLock::new(|| {
    use BellState::*;
    use Sign::{Minus as N, Plus as P};
    use StandardGate::{H, I, X, Z};

    let product = |label, q1, q2| PreparationCircuit {
        label,
        kind: PreparationKind::Product { q1, q2 },
    };
    let entangled = |label, bell, word: &[(StandardGate, StandardGate)]| PreparationCircuit {
        label,
        kind: PreparationKind::Entangled {
            bell,
            word: word.to_vec(),
        },
    };

    let by_string: [(&str, PreparationCircuit); 16] = [
        // Product rows: sign choices (α, β) for q₁ and (γ, δ) for q₂.
        ("1100", product(1, (N, P), (P, P))),
        ("0011", product(2, (P, N), (P, P))),
        ("1010", product(3, (P, P), (N, P))),
        ("0101", product(4, (P, P), (P, N))),
        ("1111", product(5, (N, N), (P, P))),
        ("0110", product(6, (N, P), (N, P))),
        ("1001", product(7, (N, P), (P, N))),
        ("0000", product(8, (N, N), (N, N))),
        // Entangled rows: Bell input plus a gate word.
        ("0001", entangled(9, PhiPlus, &[(H, I)])),
        ("0010", entangled(10, PsiPlus, &[(H, I)])),
        ("0100", entangled(11, PhiMinus, &[(H, I)])),
        ("1000", entangled(12, PsiPlus, &[(H, I), (X, I)])),
        ("0111", entangled(13, PhiMinus, &[(H, I), (Z, I)])),
        ("1011", entangled(14, PsiPlus, &[(H, I), (X, I), (Z, I)])),
        ("1101", entangled(15, PsiPlus, &[(H, I), (X, I), (I, Z)])),
        (
            "1110",
            entangled(16, PsiPlus, &[(H, I), (X, I), (Z, I), (X, I)]),
        ),
    ];

    let mut table: [Option<PreparationCircuit>; 16] = Default::default();
    for (string, circuit) in by_string {
        let x: BitString4 = string.parse().expect("table strings are 4 bits");
        let produced = circuit.run();
        let expected = encode(x);
        assert!(
            produced.approx_eq(&expected, ALGEBRAIC_TOL),
            "circuit {} for x={x} produced {produced}, expected {expected}",
            circuit.label,
        );
        assert!(
            table[x.nibble() as usize].replace(circuit).is_none(),
            "duplicate circuit for x={x}"
        );
    }
    table.map(|slot| slot.expect("all 16 strings covered"))
});

/// The preparation circuit whose output equals `encode(x)`, sign for sign.
pub fn preparation_circuit(x: BitString4) -> &'static PreparationCircuit {
    &PREPARATIONS[x.nibble() as usize]
}

/// The two measurement bases, built from their gate constructions once.
static QUERY_BASES: LazyLock<[Basis; 2]> = LazyLock::new(|| {
    let i_h = Gate::standard(StandardGate::I)
        .tensor(&Gate::standard(StandardGate::H))
        .expect("single-qubit inputs");
    let swapped = Gate::standard(StandardGate::Swap)
        .compose(&i_h)
        .expect("4×4 inputs");
    [
        Basis::from_gate_columns(&i_h).expect("I⊗H is unitary"),
        Basis::from_gate_columns(&swapped).expect("SWAP·(I⊗H) is unitary"),
    ]
});

/// The measurement basis for a query: columns of I⊗H for m = 0, columns of
/// SWAP·(I⊗H) for m = 1. Column j is vⱼ₊₁.
pub fn query_basis(q: HmpQuery) -> &'static Basis {
    &QUERY_BASES[usize::from(q.m())]
}

/// Measures `state` with the query's basis and maps the outcome to its
/// (a, b) pair. Returns the pair and the collapsed register state.
pub fn run_query<R: Rng>(
    state: &StateVector,
    q: HmpQuery,
    rng: &mut R,
) -> (MeasurementOutcome, StateVector) {
    let (index, collapsed) = qsim::measure_in_basis(state, query_basis(q), rng);
    (MeasurementOutcome::from_basis_index(index), collapsed)
}

/// The classical membership predicate the bank verifies:
/// b must equal x₁ ⊕ x₍₂₊ₘ₎ when a = 0, and x₍₃₋ₘ₎ ⊕ x₄ when a = 1.
pub fn hmp4_member(x: BitString4, q: HmpQuery, outcome: MeasurementOutcome) -> bool {
    let m = usize::from(q.m());
    let expected = if !outcome.a {
        x.bit(1) ^ x.bit(2 + m)
    } else {
        x.bit(3 - m) ^ x.bit(4)
    };
    outcome.b == expected
}

/// Exact outcome probabilities |⟨vⱼ|α(x)⟩|² for one query, in outcome order
/// (0,0), (0,1), (1,0), (1,1). Test oracle for the measurement path.
pub fn support_table(x: BitString4, q: HmpQuery) -> [(MeasurementOutcome, f64); 4] {
    let state = encode(x);
    let basis = query_basis(q);
    let mut rows = [(MeasurementOutcome::new(false, false), 0.0); 4];
    for (j, row) in rows.iter_mut().enumerate() {
        *row = (
            MeasurementOutcome::from_basis_index(j),
            basis.amplitude_of(j, &state).norm_sqr(),
        );
    }
    rows
}
