//! Protocol-level quantum objects: the five-element Pauli family (including
//! the diagonal combinations σ₄ = σ_{x+y} and σ₅ = σ_{x−y}), their
//! eigenstates under a fixed phase convention, Bell states, Born-rule
//! evaluation, projective measurement, and the conjugation outcome-flip rule
//! used by the preparation certifier.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::linalg::{embed_product_state, kron, Layout, OpFlags, Operator, Register, StateVector};
use crate::questions::Question;
use crate::{Error, Result, HERMITICITY_TOL};

/// One of the five measurement bases used by the protocol, numbered 1–5.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Basis {
    /// σx (symbol 1).
    X,
    /// σy (symbol 2).
    Y,
    /// σz (symbol 3).
    Z,
    /// (σx + σy)/√2 (symbol 4).
    XPlusY,
    /// (σx − σy)/√2 (symbol 5).
    XMinusY,
}

impl Basis {
    /// All five bases in symbol order.
    pub const ALL: [Basis; 5] = [Basis::X, Basis::Y, Basis::Z, Basis::XPlusY, Basis::XMinusY];

    /// The basis symbol, 1..=5.
    pub fn symbol(self) -> u8 {
        match self {
            Basis::X => 1,
            Basis::Y => 2,
            Basis::Z => 3,
            Basis::XPlusY => 4,
            Basis::XMinusY => 5,
        }
    }

    /// Parses a symbol in 1..=5.
    pub fn from_symbol(symbol: u8) -> Result<Basis> {
        match symbol {
            1 => Ok(Basis::X),
            2 => Ok(Basis::Y),
            3 => Ok(Basis::Z),
            4 => Ok(Basis::XPlusY),
            5 => Ok(Basis::XMinusY),
            other => Err(Error::InvalidBasis(other)),
        }
    }
}

impl From<Basis> for u8 {
    fn from(b: Basis) -> u8 {
        b.symbol()
    }
}

impl TryFrom<u8> for Basis {
    type Error = Error;
    fn try_from(symbol: u8) -> Result<Basis> {
        Basis::from_symbol(symbol)
    }
}

impl std::fmt::Display for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// A ±1 measurement outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    /// The outcome as ±1.
    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    /// Bit encoding: `Plus → 0`, `Minus → 1`.
    pub fn bit(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }

    /// Inverse of [`Outcome::bit`] (any nonzero bit maps to `Minus`).
    pub fn from_bit(bit: usize) -> Outcome {
        if bit == 0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    /// The opposite outcome.
    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::Plus => write!(f, "+"),
            Outcome::Minus => write!(f, "-"),
        }
    }
}

/// Decodes `n` outcomes from the low bits of `index` (most significant bit
/// first, matching row-major basis-state indexing).
pub fn outcomes_from_index(index: usize, n: usize) -> Vec<Outcome> {
    (0..n)
        .map(|j| Outcome::from_bit((index >> (n - 1 - j)) & 1))
        .collect()
}

/// Inverse of [`outcomes_from_index`].
pub fn outcomes_to_index(outcomes: &[Outcome]) -> usize {
    outcomes.iter().fold(0, |acc, o| (acc << 1) | o.bit())
}

/// The 2×2 observable for a basis: σ₁=σx, σ₂=σy, σ₃=σz,
/// σ₄=(σx+σy)/√2, σ₅=(σx−σy)/√2.
pub fn pauli(b: Basis) -> Operator {
    let h = FRAC_1_SQRT_2;
    let rows: [[(f64, f64); 2]; 2] = match b {
        Basis::X => [[(0.0, 0.0), (1.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]],
        Basis::Y => [[(0.0, 0.0), (0.0, -1.0)], [(0.0, 1.0), (0.0, 0.0)]],
        Basis::Z => [[(1.0, 0.0), (0.0, 0.0)], [(0.0, 0.0), (-1.0, 0.0)]],
        Basis::XPlusY => [[(0.0, 0.0), (h, -h)], [(h, h), (0.0, 0.0)]],
        Basis::XMinusY => [[(0.0, 0.0), (h, h)], [(h, -h), (0.0, 0.0)]],
    };
    let mat = Array2::from_shape_fn((2, 2), |(i, j)| C64::new(rows[i][j].0, rows[i][j].1));
    Operator::with_flags(
        mat,
        OpFlags {
            hermitian: true,
            unitary: true,
            projector: false,
        },
    )
}

/// Raw qubit amplitudes of the ±1 eigenstate of `pauli(b)`.
///
/// Phase convention: the |0⟩ amplitude is real and nonnegative (for the σz
/// −1 eigenstate, where it vanishes, the |1⟩ amplitude is 1).
pub fn eigenstate_amps(b: Basis, s: Outcome) -> [C64; 2] {
    let h = FRAC_1_SQRT_2;
    let sg = s.sign();
    match b {
        Basis::Z => {
            if s == Outcome::Plus {
                [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
            } else {
                [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
            }
        }
        Basis::X => [C64::new(h, 0.0), C64::new(sg * h, 0.0)],
        Basis::Y => [C64::new(h, 0.0), C64::new(0.0, sg * h)],
        // e^{±iπ/4} = (1 ± i)/√2.
        Basis::XPlusY => [C64::new(h, 0.0), C64::new(sg * 0.5, sg * 0.5)],
        Basis::XMinusY => [C64::new(h, 0.0), C64::new(sg * 0.5, -sg * 0.5)],
    }
}

/// The eigenstate of [`eigenstate_amps`] as a state on the register `reg`.
pub fn eigenstate_on(b: Basis, s: Outcome, reg: Register) -> StateVector {
    let amps = eigenstate_amps(b, s);
    StateVector::new(
        Layout::new(vec![(reg, 2)]).expect("single register layout"),
        amps.to_vec(),
    )
    .expect("qubit amplitudes")
}

/// The eigenstate on a default single-qubit register (B1).
pub fn eigenstate(b: Basis, s: Outcome) -> StateVector {
    eigenstate_on(b, s, Register::B(1))
}

/// The rank-1 projector onto `eigenstate(b, s)`.
pub fn eigen_projector(b: Basis, s: Outcome) -> Operator {
    let v = eigenstate_amps(b, s);
    let mat = Array2::from_shape_fn((2, 2), |(i, j)| v[i] * v[j].conj());
    Operator::with_flags(
        mat,
        OpFlags {
            hermitian: true,
            unitary: false,
            projector: true,
        },
    )
}

/// Amplitudes of the four Bell states in the order
/// 1 → Φ⁺, 2 → Φ⁻, 3 → Ψ⁺, 4 → Ψ⁻.
pub fn bell_amps(k: u8) -> Result<[C64; 4]> {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let z = C64::new(0.0, 0.0);
    match k {
        1 => Ok([h, z, z, h]),
        2 => Ok([h, z, z, -h]),
        3 => Ok([z, h, h, z]),
        4 => Ok([z, h, -h, z]),
        other => Err(Error::InvalidQuestion {
            question: other.to_string(),
            reason: "Bell index must be in 1..=4",
        }),
    }
}

/// The rank-1 projector onto the `k`-th Bell state (4×4).
pub fn bell_projector(k: u8) -> Result<Operator> {
    let v = bell_amps(k)?;
    let mat = Array2::from_shape_fn((4, 4), |(i, j)| v[i] * v[j].conj());
    Ok(Operator::with_flags(
        mat,
        OpFlags {
            hermitian: true,
            unitary: false,
            projector: true,
        },
    ))
}

/// `n` maximally entangled pairs ⨂ⱼ |Φ⁺⟩ on the block layout
/// `A1..An, B1..Bn` (pair `j` lives on registers `Aj` and `Bj`).
pub fn bell_pairs(n: usize) -> Result<StateVector> {
    if n == 0 {
        return Err(Error::NoBellPairs(
            "bell_pairs requires at least one pair".into(),
        ));
    }
    let mut regs = Vec::with_capacity(2 * n);
    for j in 1..=n as u32 {
        regs.push((Register::A(j), 2));
    }
    for j in 1..=n as u32 {
        regs.push((Register::B(j), 2));
    }
    let layout = Layout::new(regs)?;
    let factors: Vec<StateVector> = (1..=n as u32)
        .map(|j| {
            let pair_layout =
                Layout::new(vec![(Register::A(j), 2), (Register::B(j), 2)]).expect("pair layout");
            StateVector::new(pair_layout, bell_amps(1).unwrap().to_vec()).expect("bell amplitudes")
        })
        .collect();
    let refs: Vec<&StateVector> = factors.iter().collect();
    embed_product_state(&layout, &refs)
}

/// Born-rule expectation ⟨ψ|M|ψ⟩ of a Hermitian full-space operator.
pub fn expectation(psi: &StateVector, m: &Operator) -> Result<f64> {
    m.require_hermitian(HERMITICITY_TOL)?;
    let applied = m.apply_vec(psi.amps())?;
    let value: C64 = psi
        .amps()
        .iter()
        .zip(applied.iter())
        .map(|(a, b)| a.conj() * b)
        .sum();
    if value.im.abs() > 1e-9 {
        return Err(Error::NotHermitian {
            max_dev: value.im.abs(),
        });
    }
    Ok(value.re)
}

/// Projects `psi` with a full-space projector, returning the subnormalized
/// post-measurement state and the outcome probability ‖P|ψ⟩‖².
pub fn project(psi: &StateVector, p: &Operator) -> Result<(StateVector, f64)> {
    require_projector(p)?;
    let amps = p.apply_vec(psi.amps())?;
    let out = StateVector::new(psi.layout().clone(), amps.to_vec())?;
    let prob = out.norm().powi(2);
    Ok((out, prob))
}

/// Projects on a subset of registers (identity elsewhere).
pub fn project_on(
    psi: &StateVector,
    p: &Operator,
    regs: &[Register],
) -> Result<(StateVector, f64)> {
    require_projector(p)?;
    let out = crate::linalg::apply_to_registers(psi, p, regs)?;
    let prob = out.norm().powi(2);
    Ok((out, prob))
}

fn require_projector(p: &Operator) -> Result<()> {
    p.require_hermitian(HERMITICITY_TOL)?;
    let sq = p.matmul(p)?;
    let dev = sq.max_abs_diff(p);
    if dev > 1e-9 {
        return Err(Error::NotProjective {
            context: "P^2 != P".into(),
            max_dev: dev,
        });
    }
    Ok(())
}

/// The conjugation flip rule: outcome `a_j` is negated exactly at positions
/// where the question symbol is z. This realizes the reference states'
/// complex conjugation as a relabeling of measurement outcomes.
pub fn conjugate_outcomes(a: &[Outcome], chi: &Question) -> Result<Vec<Outcome>> {
    if a.len() != chi.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: chi.len(),
            context: "outcome string vs question length",
        });
    }
    Ok(a.iter()
        .zip(chi.symbols())
        .map(|(o, b)| {
            if *b == Basis::Z.symbol() {
                o.flipped()
            } else {
                *o
            }
        })
        .collect())
}

/// Shorthand for the per-pair observable product σ_b ⊗ σ_c (4×4).
pub fn pauli_pair(b: Basis, c: Basis) -> Operator {
    kron(&pauli(b), &pauli(c))
}
