//! Dense statevector engine for one- and two-qubit systems.
//!
//! Amplitudes are ordered by the computational basis |00⟩, |01⟩, |10⟩, |11⟩.
//! The first qubit of a pair is the most significant bit of the basis index,
//! so |10⟩ lives at index 2. Gates are exact complex matrices validated for
//! unitarity at construction; measurement is projective in an arbitrary
//! orthonormal basis and consumes an explicit RNG stream.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Tolerance for algebraic identities: unitarity, orthonormality, fixed state tables.
pub const ALGEBRAIC_TOL: f64 = 1e-12;
/// Tolerance for state norms, allowing rounding to accumulate over gate words.
pub const NORM_TOL: f64 = 1e-9;
/// Basis amplitudes below this magnitude are treated as impossible outcomes.
pub const AMPLITUDE_CUTOFF: f64 = 1e-9;

pub type Matrix2 = [[Complex64; 2]; 2];
pub type Matrix4 = [[Complex64; 4]; 4];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsimError {
    #[error("state is not normalized: |ψ|² = {norm_sqr}")]
    NotNormalized { norm_sqr: f64 },
    #[error("state has no nonzero amplitude")]
    ZeroState,
    #[error("matrix is not unitary: max |U†U − I| entry is {deviation:.3e}")]
    NotUnitary { deviation: f64 },
    #[error("expected a {expected}×{expected} gate, got {actual}×{actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("basis vectors {i} and {j} are not orthonormal: deviation {deviation:.3e}")]
    NotOrthonormal { i: usize, j: usize, deviation: f64 },
    #[error("unknown gate name `{0}`")]
    UnknownGate(String),
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// A single qubit, used to assemble two-qubit product states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qubit {
    amps: [Complex64; 2],
}

impl Qubit {
    pub fn new(amp0: Complex64, amp1: Complex64) -> Result<Self, QsimError> {
        let norm_sqr = amp0.norm_sqr() + amp1.norm_sqr();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(QsimError::NotNormalized { norm_sqr });
        }
        Ok(Qubit { amps: [amp0, amp1] })
    }

    /// The balanced state (s₀|0⟩ + s₁|1⟩)/√2 for signs s ∈ {−1, +1}.
    pub fn balanced(sign0: f64, sign1: f64) -> Self {
        Qubit {
            amps: [
                c(sign0.signum() * FRAC_1_SQRT_2),
                c(sign1.signum() * FRAC_1_SQRT_2),
            ],
        }
    }

    pub fn amplitudes(&self) -> &[Complex64; 2] {
        &self.amps
    }
}

/// A two-qubit state: four complex amplitudes over |00⟩..|11⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    amps: [Complex64; 4],
}

impl StateVector {
    /// Builds a state from raw amplitudes, rejecting unnormalized or all-zero input.
    pub fn new(amps: [Complex64; 4]) -> Result<Self, QsimError> {
        let norm_sqr: f64 = amps.iter().map(Complex64::norm_sqr).sum();
        if norm_sqr == 0.0 {
            return Err(QsimError::ZeroState);
        }
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(QsimError::NotNormalized { norm_sqr });
        }
        Ok(StateVector { amps })
    }

    /// Real amplitudes, for states written down as sign patterns.
    pub fn from_real(amps: [f64; 4]) -> Result<Self, QsimError> {
        Self::new([c(amps[0]), c(amps[1]), c(amps[2]), c(amps[3])])
    }

    /// The computational basis state with the given index (|10⟩ has index 2).
    pub fn basis_state(index: usize) -> Self {
        assert!(index < 4, "basis index {index} out of range");
        let mut amps = [c(0.0); 4];
        amps[index] = c(1.0);
        StateVector { amps }
    }

    /// Tensor product of two single qubits; `first` becomes the most significant bit.
    pub fn product(first: &Qubit, second: &Qubit) -> Self {
        let a = first.amplitudes();
        let b = second.amplitudes();
        StateVector {
            amps: [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]],
        }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    /// Largest componentwise deviation from `other`, signs included.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Sign-sensitive comparison; a global phase counts as a difference.
    pub fn approx_eq(&self, other: &StateVector, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// Physical equivalence: equal up to a global phase of unit magnitude.
    pub fn equal_up_to_phase(&self, other: &StateVector, tol: f64) -> bool {
        let (pivot, _) = self
            .amps
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.norm().total_cmp(&b.norm()))
            .expect("four amplitudes");
        if self.amps[pivot].norm() < AMPLITUDE_CUTOFF {
            return false;
        }
        let phase = other.amps[pivot] / self.amps[pivot];
        if (phase.norm() - 1.0).abs() > tol {
            return false;
        }
        self.amps
            .iter()
            .zip(other.amps.iter())
            .all(|(a, b)| (a * phase - b).norm() <= tol)
    }

    /// Inner product ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{:.4}{:+.4}i, {:.4}{:+.4}i, {:.4}{:+.4}i, {:.4}{:+.4}i]",
            self.amps[0].re,
            self.amps[0].im,
            self.amps[1].re,
            self.amps[1].im,
            self.amps[2].re,
            self.amps[2].im,
            self.amps[3].re,
            self.amps[3].im
        )
    }
}

/// The six named gates of the scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StandardGate {
    H,
    X,
    Z,
    I,
    Cnot,
    Swap,
}

impl StandardGate {
    pub const ALL: [StandardGate; 6] = [
        StandardGate::H,
        StandardGate::X,
        StandardGate::Z,
        StandardGate::I,
        StandardGate::Cnot,
        StandardGate::Swap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StandardGate::H => "H",
            StandardGate::X => "X",
            StandardGate::Z => "Z",
            StandardGate::I => "I",
            StandardGate::Cnot => "CNOT",
            StandardGate::Swap => "SWAP",
        }
    }
}

impl FromStr for StandardGate {
    type Err = QsimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "H" => Ok(StandardGate::H),
            "X" => Ok(StandardGate::X),
            "Z" => Ok(StandardGate::Z),
            "I" => Ok(StandardGate::I),
            "CNOT" => Ok(StandardGate::Cnot),
            "SWAP" => Ok(StandardGate::Swap),
            other => Err(QsimError::UnknownGate(other.to_string())),
        }
    }
}

impl fmt::Display for StandardGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A unitary gate on one qubit (2×2) or two qubits (4×4).
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Single(Matrix2),
    Double(Matrix4),
}

impl Gate {
    /// Validates unitarity of a 2×2 matrix.
    pub fn single(m: Matrix2) -> Result<Self, QsimError> {
        let gate = Gate::Single(m);
        gate.check_unitary()?;
        Ok(gate)
    }

    /// Validates unitarity of a 4×4 matrix.
    pub fn double(m: Matrix4) -> Result<Self, QsimError> {
        let gate = Gate::Double(m);
        gate.check_unitary()?;
        Ok(gate)
    }

    /// The exact matrix of a named gate. H carries the 1/√2 factor.
    pub fn standard(which: StandardGate) -> Gate {
        let h = FRAC_1_SQRT_2;
        match which {
            StandardGate::H => Gate::Single([[c(h), c(h)], [c(h), c(-h)]]),
            StandardGate::X => Gate::Single([[c(0.0), c(1.0)], [c(1.0), c(0.0)]]),
            StandardGate::Z => Gate::Single([[c(1.0), c(0.0)], [c(0.0), c(-1.0)]]),
            StandardGate::I => Gate::Single([[c(1.0), c(0.0)], [c(0.0), c(1.0)]]),
            StandardGate::Cnot => Gate::Double([
                [c(1.0), c(0.0), c(0.0), c(0.0)],
                [c(0.0), c(1.0), c(0.0), c(0.0)],
                [c(0.0), c(0.0), c(0.0), c(1.0)],
                [c(0.0), c(0.0), c(1.0), c(0.0)],
            ]),
            StandardGate::Swap => Gate::Double([
                [c(1.0), c(0.0), c(0.0), c(0.0)],
                [c(0.0), c(0.0), c(1.0), c(0.0)],
                [c(0.0), c(1.0), c(0.0), c(0.0)],
                [c(0.0), c(0.0), c(0.0), c(1.0)],
            ]),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Gate::Single(_) => 2,
            Gate::Double(_) => 4,
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        match self {
            Gate::Single(m) => m[row][col],
            Gate::Double(m) => m[row][col],
        }
    }

    /// Kronecker product. `self` acts on the first (most significant) qubit.
    pub fn tensor(&self, other: &Gate) -> Result<Gate, QsimError> {
        let (a, b) = match (self, other) {
            (Gate::Single(a), Gate::Single(b)) => (a, b),
            (g, Gate::Single(_)) | (_, g) => {
                return Err(QsimError::DimensionMismatch {
                    expected: 2,
                    actual: g.dimension(),
                })
            }
        };
        let mut m = [[c(0.0); 4]; 4];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m[i * 2 + k][j * 2 + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        Ok(Gate::Double(m))
    }

    /// Matrix product `self · earlier`: applying the result equals applying
    /// `earlier` first and `self` second.
    pub fn compose(&self, earlier: &Gate) -> Result<Gate, QsimError> {
        let (a, b) = match (self, earlier) {
            (Gate::Double(a), Gate::Double(b)) => (a, b),
            (g, Gate::Double(_)) | (_, g) => {
                return Err(QsimError::DimensionMismatch {
                    expected: 4,
                    actual: g.dimension(),
                })
            }
        };
        let mut m = [[c(0.0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    m[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        Ok(Gate::Double(m))
    }

    /// Applies a 4×4 gate to a two-qubit state.
    pub fn apply(&self, state: &StateVector) -> Result<StateVector, QsimError> {
        let m = match self {
            Gate::Double(m) => m,
            Gate::Single(_) => {
                return Err(QsimError::DimensionMismatch {
                    expected: 4,
                    actual: 2,
                })
            }
        };
        let s = state.amplitudes();
        let mut amps = [c(0.0); 4];
        for (i, row) in m.iter().enumerate() {
            amps[i] = row.iter().zip(s.iter()).map(|(e, a)| e * a).sum();
        }
        // Unitarity is enforced at construction, so the norm is preserved.
        Ok(StateVector { amps })
    }

    pub fn dagger(&self) -> Gate {
        match self {
            Gate::Single(m) => {
                let mut d = [[c(0.0); 2]; 2];
                for (i, row) in d.iter_mut().enumerate() {
                    for (j, entry) in row.iter_mut().enumerate() {
                        *entry = m[j][i].conj();
                    }
                }
                Gate::Single(d)
            }
            Gate::Double(m) => {
                let mut d = [[c(0.0); 4]; 4];
                for (i, row) in d.iter_mut().enumerate() {
                    for (j, entry) in row.iter_mut().enumerate() {
                        *entry = m[j][i].conj();
                    }
                }
                Gate::Double(d)
            }
        }
    }

    /// Max entrywise deviation of U†U from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dimension();
        let dag = self.dagger();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut entry = c(0.0);
                for k in 0..n {
                    entry += dag.entry(i, k) * self.entry(k, j);
                }
                let expected = if i == j { c(1.0) } else { c(0.0) };
                worst = worst.max((entry - expected).norm());
            }
        }
        worst
    }

    fn check_unitary(&self) -> Result<(), QsimError> {
        let deviation = self.unitarity_deviation();
        if deviation > ALGEBRAIC_TOL {
            return Err(QsimError::NotUnitary { deviation });
        }
        Ok(())
    }
}

/// The four maximally entangled two-qubit states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    /// Computational basis input that the Hadamard–CNOT circuit maps to this state.
    pub fn circuit_input(self) -> usize {
        match self {
            BellState::PhiPlus => 0,  // |00⟩
            BellState::PsiPlus => 1,  // |01⟩
            BellState::PhiMinus => 2, // |10⟩
            BellState::PsiMinus => 3, // |11⟩
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BellState::PhiPlus => "Φ+",
            BellState::PhiMinus => "Φ-",
            BellState::PsiPlus => "Ψ+",
            BellState::PsiMinus => "Ψ-",
        }
    }
}

/// Prepares a Bell state by running the Hadamard–CNOT circuit on the matching
/// computational basis input: a Hadamard on the first qubit, then CNOT.
pub fn bell_state(which: BellState) -> StateVector {
    let input = StateVector::basis_state(which.circuit_input());
    let h_first = Gate::standard(StandardGate::H)
        .tensor(&Gate::standard(StandardGate::I))
        .expect("H and I are single-qubit gates");
    let cnot = Gate::standard(StandardGate::Cnot);
    let after_h = h_first.apply(&input).expect("4×4 gate");
    cnot.apply(&after_h).expect("4×4 gate")
}

/// Four orthonormal measurement vectors v₁..v₄.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    vectors: [StateVector; 4],
}

impl Basis {
    /// Validates pairwise orthonormality within [`ALGEBRAIC_TOL`].
    pub fn new(vectors: [StateVector; 4]) -> Result<Self, QsimError> {
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { c(1.0) } else { c(0.0) };
                let deviation = (vectors[i].inner(&vectors[j]) - expected).norm();
                if deviation > ALGEBRAIC_TOL {
                    return Err(QsimError::NotOrthonormal { i, j, deviation });
                }
            }
        }
        Ok(Basis { vectors })
    }

    /// Basis whose vector vⱼ is column j of a 4×4 unitary.
    pub fn from_gate_columns(gate: &Gate) -> Result<Self, QsimError> {
        if gate.dimension() != 4 {
            return Err(QsimError::DimensionMismatch {
                expected: 4,
                actual: gate.dimension(),
            });
        }
        let column = |j: usize| {
            StateVector::new([
                gate.entry(0, j),
                gate.entry(1, j),
                gate.entry(2, j),
                gate.entry(3, j),
            ])
        };
        Basis::new([column(0)?, column(1)?, column(2)?, column(3)?])
    }

    pub fn vector(&self, j: usize) -> &StateVector {
        &self.vectors[j]
    }

    /// ⟨vⱼ|ψ⟩.
    pub fn amplitude_of(&self, j: usize, state: &StateVector) -> Complex64 {
        self.vectors[j].inner(state)
    }

    /// |⟨vⱼ|ψ⟩|² for all four outcomes.
    pub fn probabilities(&self, state: &StateVector) -> [f64; 4] {
        [
            self.amplitude_of(0, state).norm_sqr(),
            self.amplitude_of(1, state).norm_sqr(),
            self.amplitude_of(2, state).norm_sqr(),
            self.amplitude_of(3, state).norm_sqr(),
        ]
    }
}

/// Projective measurement of `state` in `basis`.
///
/// Returns the 0-based outcome index j (vector v_{j+1}) and the collapsed
/// state, which is exactly the measured basis vector. Outcomes whose
/// amplitude magnitude is below [`AMPLITUDE_CUTOFF`] are never sampled.
pub fn measure_in_basis<R: Rng>(
    state: &StateVector,
    basis: &Basis,
    rng: &mut R,
) -> (usize, StateVector) {
    let mut probs = [0.0f64; 4];
    for (j, p) in probs.iter_mut().enumerate() {
        let amp = basis.amplitude_of(j, state);
        if amp.norm() >= AMPLITUDE_CUTOFF {
            *p = amp.norm_sqr();
        }
    }
    let total: f64 = probs.iter().sum();
    debug_assert!(total > 0.0, "normalized state has no measurable outcome");
    let draw = rng.gen::<f64>() * total;
    let mut outcome = probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("at least one outcome");
    let mut cumulative = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        cumulative += p;
        if draw < cumulative {
            outcome = j;
            break;
        }
    }
    (outcome, *basis.vector(outcome))
}

/// A 64-bit seed from which independent, reproducible RNG streams are derived.
///
/// Equal (seed, stream) pairs always yield identical sequences, so a caller
/// can split one seed into per-register streams and measurement order stops
/// mattering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn stream(self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(id);
        rng
    }

    pub fn rng(self) -> ChaCha8Rng {
        self.stream(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn gate(which: StandardGate) -> Gate {
        Gate::standard(which)
    }

    fn tensor(a: StandardGate, b: StandardGate) -> Gate {
        gate(a).tensor(&gate(b)).unwrap()
    }

    #[test]
    fn standard_gates_match_their_tables() {
        let h = FRAC_1_SQRT_2;
        let hadamard = gate(StandardGate::H);
        assert_eq!(hadamard.entry(0, 0), c(h));
        assert_eq!(hadamard.entry(1, 1), c(-h));
        let identity = gate(StandardGate::I);
        assert_eq!(identity.entry(0, 0), c(1.0));
        assert_eq!(identity.entry(0, 1), c(0.0));
        let swap = gate(StandardGate::Swap);
        let expected_swap = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(swap.entry(i, j), c(expected_swap[i][j]));
            }
        }
        // CNOT flips the target exactly when the control is 1.
        let cnot = gate(StandardGate::Cnot);
        assert_eq!(cnot.entry(2, 3), c(1.0));
        assert_eq!(cnot.entry(3, 2), c(1.0));
        assert_eq!(cnot.entry(2, 2), c(0.0));
    }

    #[test]
    fn all_standard_gates_are_unitary() {
        for which in StandardGate::ALL {
            assert!(
                gate(which).unitarity_deviation() <= ALGEBRAIC_TOL,
                "{which}"
            );
        }
    }

    #[test]
    fn gate_names_round_trip_and_unknown_is_rejected() {
        for which in StandardGate::ALL {
            assert_eq!(which.name().parse::<StandardGate>().unwrap(), which);
        }
        assert_eq!(
            "Y".parse::<StandardGate>(),
            Err(QsimError::UnknownGate("Y".into()))
        );
    }

    #[test]
    fn non_unitary_matrix_is_rejected() {
        let err = Gate::single([[c(1.0), c(0.0)], [c(1.0), c(1.0)]]).unwrap_err();
        assert!(matches!(err, QsimError::NotUnitary { .. }));
    }

    #[test]
    fn tensor_of_identities_is_identity() {
        let ii = tensor(StandardGate::I, StandardGate::I);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(ii.entry(i, j), c(expected));
            }
        }
    }

    #[test]
    fn tensor_i_h_is_the_expanded_hadamard() {
        let ih = tensor(StandardGate::I, StandardGate::H);
        let h = FRAC_1_SQRT_2;
        let expected = [
            [h, h, 0.0, 0.0],
            [h, -h, 0.0, 0.0],
            [0.0, 0.0, h, h],
            [0.0, 0.0, h, -h],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((ih.entry(i, j) - c(expected[i][j])).norm() <= ALGEBRAIC_TOL);
            }
        }
    }

    #[test]
    fn tensor_rejects_two_qubit_inputs() {
        let err = gate(StandardGate::Swap)
            .tensor(&gate(StandardGate::H))
            .unwrap_err();
        assert!(matches!(err, QsimError::DimensionMismatch { .. }));
    }

    #[test]
    fn compose_swap_after_expanded_hadamard() {
        let ih = tensor(StandardGate::I, StandardGate::H);
        let m1 = gate(StandardGate::Swap).compose(&ih).unwrap();
        let h = FRAC_1_SQRT_2;
        let expected = [
            [h, h, 0.0, 0.0],
            [0.0, 0.0, h, h],
            [h, -h, 0.0, 0.0],
            [0.0, 0.0, h, -h],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((m1.entry(i, j) - c(expected[i][j])).norm() <= ALGEBRAIC_TOL);
            }
        }
    }

    #[test]
    fn compose_is_identity_preserving_and_squares_x() {
        let u = tensor(StandardGate::H, StandardGate::Z);
        let ii = tensor(StandardGate::I, StandardGate::I);
        assert_eq!(ii.compose(&u).unwrap(), u);

        let xi = tensor(StandardGate::X, StandardGate::I);
        let squared = xi.compose(&xi).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((squared.entry(i, j) - c(expected)).norm() <= ALGEBRAIC_TOL);
            }
        }
    }

    #[test]
    fn compose_rejects_single_qubit_inputs() {
        let err = gate(StandardGate::H)
            .compose(&gate(StandardGate::Swap))
            .unwrap_err();
        assert!(matches!(err, QsimError::DimensionMismatch { .. }));
    }

    #[test]
    fn apply_matches_worked_amplitudes() {
        // CNOT leaves |00⟩ alone.
        let cnot = gate(StandardGate::Cnot);
        let s = cnot.apply(&StateVector::basis_state(0)).unwrap();
        assert!(s.approx_eq(&StateVector::basis_state(0), ALGEBRAIC_TOL));

        // (H ⊗ I) on (1/√2)[1,0,0,1] gives (1/2)[1,1,1,−1].
        let hi = tensor(StandardGate::H, StandardGate::I);
        let phi_plus = StateVector::from_real([FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap();
        let out = hi.apply(&phi_plus).unwrap();
        let expected = StateVector::from_real([0.5, 0.5, 0.5, -0.5]).unwrap();
        assert!(out.approx_eq(&expected, ALGEBRAIC_TOL));

        // (X ⊗ I) on (1/2)[1,1,−1,1] gives (1/2)[−1,1,1,1].
        let xi = tensor(StandardGate::X, StandardGate::I);
        let input = StateVector::from_real([0.5, 0.5, -0.5, 0.5]).unwrap();
        let out = xi.apply(&input).unwrap();
        let expected = StateVector::from_real([-0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(out.approx_eq(&expected, ALGEBRAIC_TOL));
    }

    #[test]
    fn apply_rejects_single_qubit_gate() {
        let err = gate(StandardGate::H)
            .apply(&StateVector::basis_state(0))
            .unwrap_err();
        assert!(matches!(err, QsimError::DimensionMismatch { .. }));
    }

    #[test]
    fn bell_states_come_out_of_the_circuit() {
        let r = FRAC_1_SQRT_2;
        let cases = [
            (BellState::PhiPlus, [r, 0.0, 0.0, r]),
            (BellState::PhiMinus, [r, 0.0, 0.0, -r]),
            (BellState::PsiPlus, [0.0, r, r, 0.0]),
            (BellState::PsiMinus, [0.0, r, -r, 0.0]),
        ];
        for (which, expected) in cases {
            let state = bell_state(which);
            let expected = StateVector::from_real(expected).unwrap();
            assert!(
                state.approx_eq(&expected, ALGEBRAIC_TOL),
                "{} came out as {state}",
                which.name()
            );
        }
    }

    #[test]
    fn state_constructor_rejects_bad_input() {
        assert!(matches!(
            StateVector::from_real([1.0, 1.0, 0.0, 0.0]),
            Err(QsimError::NotNormalized { .. })
        ));
        assert!(matches!(
            StateVector::from_real([0.0; 4]),
            Err(QsimError::ZeroState)
        ));
    }

    #[test]
    fn phase_insensitive_comparison_accepts_negated_states() {
        let a = StateVector::from_real([0.5, -0.5, -0.5, 0.5]).unwrap();
        let b = StateVector::from_real([-0.5, 0.5, 0.5, -0.5]).unwrap();
        assert!(!a.approx_eq(&b, ALGEBRAIC_TOL));
        assert!(a.equal_up_to_phase(&b, ALGEBRAIC_TOL));
        let other = StateVector::from_real([0.5, 0.5, -0.5, 0.5]).unwrap();
        assert!(!a.equal_up_to_phase(&other, ALGEBRAIC_TOL));
    }

    #[test]
    fn basis_rejects_non_orthonormal_vectors() {
        let v = StateVector::from_real([FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0]).unwrap();
        let err = Basis::new([
            v,
            v,
            StateVector::basis_state(2),
            StateVector::basis_state(3),
        ])
        .unwrap_err();
        assert!(matches!(err, QsimError::NotOrthonormal { .. }));
    }

    #[test]
    fn measuring_an_eigenstate_is_deterministic() {
        let ih = tensor(StandardGate::I, StandardGate::H);
        let basis = Basis::from_gate_columns(&ih).unwrap();
        let mut rng = RngSeed(11).rng();
        for j in 0..4 {
            let state = *basis.vector(j);
            for _ in 0..32 {
                let (outcome, collapsed) = measure_in_basis(&state, &basis, &mut rng);
                assert_eq!(outcome, j);
                assert!(collapsed.approx_eq(&state, ALGEBRAIC_TOL));
            }
        }
    }

    #[test]
    fn measurement_statistics_match_probabilities() {
        let basis = Basis::from_gate_columns(&tensor(StandardGate::I, StandardGate::H)).unwrap();

        // (1/2)[1,1,1,−1] has support {v1, v4} at 1/2 each in this basis.
        let signed = StateVector::from_real([0.5, 0.5, 0.5, -0.5]).unwrap();
        let p = basis.probabilities(&signed);
        assert!((p[0] - 0.5).abs() <= ALGEBRAIC_TOL && (p[3] - 0.5).abs() <= ALGEBRAIC_TOL);
        assert!(p[1] <= ALGEBRAIC_TOL && p[2] <= ALGEBRAIC_TOL);

        // (1/√2)[1,0,0,1] is uniform over all four outcomes.
        let uniform = StateVector::from_real([FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap();
        let probs = basis.probabilities(&uniform);
        for p in probs {
            assert!((p - 0.25).abs() <= ALGEBRAIC_TOL);
        }

        let trials = 100_000usize;
        let mut counts = [0usize; 4];
        let mut rng = RngSeed(7).rng();
        for _ in 0..trials {
            let (outcome, _) = measure_in_basis(&uniform, &basis, &mut rng);
            counts[outcome] += 1;
        }
        // 4σ binomial tolerance around p = 1/4.
        let sigma = (0.25 * 0.75 * trials as f64).sqrt();
        for count in counts {
            assert!((count as f64 - trials as f64 * 0.25).abs() <= 4.0 * sigma);
        }
    }

    #[test]
    fn zero_amplitude_outcomes_are_never_sampled() {
        // v₁ of the I⊗H basis has support on outcome 1 only.
        let ih_basis = Basis::from_gate_columns(&tensor(StandardGate::I, StandardGate::H)).unwrap();
        let state = StateVector::from_real([FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0]).unwrap();
        let mut rng = RngSeed(3).rng();
        for _ in 0..1000 {
            let (outcome, _) = measure_in_basis(&state, &ih_basis, &mut rng);
            assert_eq!(outcome, 0);
        }
    }

    #[test]
    fn identical_seeds_give_identical_outcome_sequences() {
        let state = StateVector::from_real([0.5, 0.5, 0.5, -0.5]).unwrap();
        let basis = Basis::from_gate_columns(&tensor(StandardGate::I, StandardGate::H)).unwrap();
        let run = |seed: RngSeed| {
            let mut rng = seed.rng();
            (0..256)
                .map(|_| measure_in_basis(&state, &basis, &mut rng).0)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(RngSeed(99)), run(RngSeed(99)));
        assert_ne!(run(RngSeed(99)), run(RngSeed(100)));
    }

    #[test]
    fn rng_streams_are_independent_of_consumption_order() {
        let seed = RngSeed(5);
        let mut a = seed.stream(1);
        let first_direct = a.next_u64();
        let mut b = seed.stream(2);
        let _ = b.next_u64();
        let mut a_again = seed.stream(1);
        assert_eq!(first_direct, a_again.next_u64());
    }

    #[test]
    fn random_gate_words_preserve_norm_and_compose() {
        // 10⁴ random states through random words of length ≤ 8.
        let mut rng = RngSeed(42).rng();
        let two_qubit_pool: Vec<Gate> = {
            let singles = [
                StandardGate::H,
                StandardGate::X,
                StandardGate::Z,
                StandardGate::I,
            ];
            let mut pool = Vec::new();
            for a in singles {
                for b in singles {
                    pool.push(Gate::standard(a).tensor(&Gate::standard(b)).unwrap());
                }
            }
            pool.push(Gate::standard(StandardGate::Cnot));
            pool.push(Gate::standard(StandardGate::Swap));
            pool
        };

        for _ in 0..10_000 {
            let raw: Vec<Complex64> = (0..4)
                .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let norm: f64 = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let state =
                StateVector::new([raw[0] / norm, raw[1] / norm, raw[2] / norm, raw[3] / norm])
                    .unwrap();

            let len = rng.gen_range(0..=8);
            let word: Vec<&Gate> = (0..len)
                .map(|_| &two_qubit_pool[rng.gen_range(0..two_qubit_pool.len())])
                .collect();

            let mut stepped = state;
            for g in &word {
                stepped = g.apply(&stepped).unwrap();
            }
            assert!((stepped.norm_sqr() - 1.0).abs() <= NORM_TOL);

            // The composed word acts the same as stepping gate by gate.
            let mut composed = Gate::standard(StandardGate::I)
                .tensor(&Gate::standard(StandardGate::I))
                .unwrap();
            for g in &word {
                composed = g.compose(&composed).unwrap();
            }
            assert!(composed.unitarity_deviation() <= ALGEBRAIC_TOL);
            let collapsed = composed.apply(&state).unwrap();
            assert!(stepped.approx_eq(&collapsed, ALGEBRAIC_TOL));
        }
    }
}
