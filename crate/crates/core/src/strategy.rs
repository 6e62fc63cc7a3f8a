//! Prover strategies: what state the two provers share and how they measure.
//!
//! Two representations coexist behind one API:
//!
//! * **Pair-product** strategies (the honest family, optionally with local
//!   depolarizing noise purified onto hidden environment registers) describe
//!   one canonical pair state plus per-pair measurement operators. Every
//!   requested correlator touches at most two adjacent pairs, so evaluation
//!   never materializes the `2^{2n}`-dimensional state and scales to large
//!   `n`.
//! * **Global** strategies carry the full state vector and (for adversarial
//!   inputs loaded from files) explicit joint projector families. This path
//!   is capped at small `n`.
//!
//! [`Strategy::densify`] converts the first form into the second, which is
//! what the isometry and preparation modules consume, and doubles as a
//! cross-check that the fast path computes the same physics.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::linalg::{
    apply_to_registers, embed_product_state, Layout, OpFlags, Operator, Register, StateVector,
};
use crate::quantum::{bell_projector, outcomes_from_index, pauli, Basis, Outcome};
use crate::questions::Question;
use crate::{Error, Result, DENSE_N_CAP};

/// Noise model attached to a strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub p: f64,
}

/// Supported noise kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Depolarizing,
}

impl NoiseSpec {
    /// The noiseless spec.
    pub fn none() -> NoiseSpec {
        NoiseSpec {
            kind: NoiseKind::None,
            p: 0.0,
        }
    }

    /// Pairwise depolarizing at strength `p`.
    pub fn depolarizing(p: f64) -> NoiseSpec {
        NoiseSpec {
            kind: NoiseKind::Depolarizing,
            p,
        }
    }

    /// Checks `0 ≤ p ≤ 1`.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !self.p.is_finite() {
            return Err(Error::InvalidQuestion {
                question: format!("p={}", self.p),
                reason: "noise probability must lie in [0, 1]",
            });
        }
        Ok(())
    }
}

/// Bob's question in a protocol round: one of the six observable labels, or
/// one of the two Bell-measurement requests (odd pairs / even pairs).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum BobQuestion {
    /// `y ∈ 1..=6`, the D/E observables.
    Obs(u8),
    /// Bell measurements on pairs (1,2), (3,4), … (code 7).
    OddBells,
    /// Bell measurements on pairs (2,3), (4,5), … (code 8).
    EvenBells,
}

impl BobQuestion {
    /// Numeric wire code: observables keep their label, odd Bells = 7,
    /// even Bells = 8.
    pub fn code(self) -> u8 {
        match self {
            BobQuestion::Obs(y) => y,
            BobQuestion::OddBells => 7,
            BobQuestion::EvenBells => 8,
        }
    }

    /// Parses a wire code.
    pub fn from_code(code: u8) -> Result<BobQuestion> {
        match code {
            1..=6 => Ok(BobQuestion::Obs(code)),
            7 => Ok(BobQuestion::OddBells),
            8 => Ok(BobQuestion::EvenBells),
            other => Err(Error::InvalidQuestion {
                question: format!("y={other}"),
                reason: "Bob's question must be in 1..=8",
            }),
        }
    }

    /// All eight questions.
    pub fn all() -> [BobQuestion; 8] {
        [
            BobQuestion::Obs(1),
            BobQuestion::Obs(2),
            BobQuestion::Obs(3),
            BobQuestion::Obs(4),
            BobQuestion::Obs(5),
            BobQuestion::Obs(6),
            BobQuestion::OddBells,
            BobQuestion::EvenBells,
        ]
    }
}

impl From<BobQuestion> for u8 {
    fn from(y: BobQuestion) -> u8 {
        y.code()
    }
}

impl TryFrom<u8> for BobQuestion {
    type Error = Error;
    fn try_from(code: u8) -> Result<BobQuestion> {
        BobQuestion::from_code(code)
    }
}

/// Bob's answer: sign strings for observable questions, Bell outcome digits
/// (1..=4 per measured pair) for the ◊/♦ questions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BobAnswer {
    Signs(Vec<Outcome>),
    Bells(Vec<u8>),
}

/// An operator together with the registers it acts on (in the operator's
/// tensor-factor order).
#[derive(Clone, Debug)]
pub struct LocalOperator {
    pub op: Operator,
    pub regs: Vec<Register>,
}

impl LocalOperator {
    pub fn new(op: Operator, regs: Vec<Register>) -> LocalOperator {
        LocalOperator { op, regs }
    }
}

/// How the shared state is represented.
#[derive(Clone, Debug)]
enum StateRep {
    /// One canonical pair state (registers `A1, B1[, E1]`), tensored
    /// implicitly across all `n` pairs.
    PairProduct { pair: StateVector, env_dim: usize },
    /// The explicit global state.
    Global(StateVector),
}

/// Alice's measurement description.
// One instance per strategy; boxing the per-pair arrays would buy nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
enum AliceRep {
    /// Question-independent per-pair observables for symbols 1..=5: the
    /// measurement for question `x` is the product over pairs of the
    /// observable `obs[x_j - 1]`.
    PerPair { obs: [Operator; 5] },
    /// Explicit joint projector families `x → [Π_{a|x}]` on the A block,
    /// indexed by the outcome-string index.
    Explicit {
        families: BTreeMap<Question, Vec<Operator>>,
    },
}

/// Bob's measurement description.
// One instance per strategy; boxing the per-pair arrays would buy nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
enum BobRep {
    /// Per-pair observables for `y ∈ 1..=6` plus the Bell projector family
    /// applied to adjacent pairs.
    PerPair {
        obs: [Operator; 6],
        gamma: [Operator; 4],
    },
    /// Explicit joint families on the B block: `y → [Π_{b|y}]` and
    /// `j → [Γ_b^{(j)}]`.
    Explicit {
        families: BTreeMap<u8, Vec<Operator>>,
        gamma: BTreeMap<usize, Vec<Operator>>,
    },
}

/// A complete prover strategy.
#[derive(Clone, Debug)]
pub struct Strategy {
    n: usize,
    state: StateRep,
    alice: AliceRep,
    bob: BobRep,
    noise: NoiseSpec,
}

/// The canonical pair layout used by pair-product strategies.
fn pair_layout(j: u32, env_dim: usize) -> Layout {
    let mut regs = vec![(Register::A(j), 2), (Register::B(j), 2)];
    if env_dim > 1 {
        regs.push((Register::Env(j), env_dim));
    }
    Layout::new(regs).expect("pair layout")
}

/// The honest strategy: `n` Bell pairs, Alice's observables
/// `A₁ = σ₁, A₂ = −σ₂, A₃ = σ₃, A₄ = σ₅, A₅ = σ₄` (question-independent),
/// Bob's six D/E combinations, and Bell-basis projectors for adjacent pairs.
pub fn honest_strategy(n: usize) -> Result<Strategy> {
    if n == 0 {
        return Err(Error::NoBellPairs("strategy needs n ≥ 1".into()));
    }
    let pair = StateVector::new(pair_layout(1, 1), crate::quantum::bell_amps(1)?.to_vec())?;
    let minus = C64::new(-1.0, 0.0);
    let alice_obs = [
        pauli(Basis::X),
        pauli(Basis::Y).scaled(minus),
        pauli(Basis::Z),
        pauli(Basis::XMinusY),
        pauli(Basis::XPlusY),
    ];
    let bob_obs = honest_bob_observables();
    let gamma = [
        bell_projector(1)?,
        bell_projector(2)?,
        bell_projector(3)?,
        bell_projector(4)?,
    ];
    Ok(Strategy {
        n,
        state: StateRep::PairProduct { pair, env_dim: 1 },
        alice: AliceRep::PerPair { obs: alice_obs },
        bob: BobRep::PerPair {
            obs: bob_obs,
            gamma,
        },
        noise: NoiseSpec::none(),
    })
}

/// The six honest D/E observables in question order
/// `1 → D_{z,x}, 2 → E_{z,x}, 3 → D_{z,y}, 4 → E_{z,y}, 5 → D_{x,y},
/// 6 → E_{x,y}` with `D_{k,l} = (σ_k + σ_l)/√2` and
/// `E_{k,l} = (σ_k − σ_l)/√2`.
fn honest_bob_observables() -> [Operator; 6] {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let de = |k: Basis, l: Basis, sign: f64| {
        pauli(k)
            .add_scaled(C64::new(sign, 0.0), &pauli(l))
            .unwrap()
            .scaled(h)
    };
    [
        de(Basis::Z, Basis::X, 1.0),
        de(Basis::Z, Basis::X, -1.0),
        de(Basis::Z, Basis::Y, 1.0),
        de(Basis::Z, Basis::Y, -1.0),
        de(Basis::X, Basis::Y, 1.0),
        de(Basis::X, Basis::Y, -1.0),
    ]
}

/// The honest strategy with every measurement operator of *both* parties
/// replaced by its entrywise complex conjugate. This passes every requested
/// correlation with the same values as the honest strategy (the shared state
/// has real amplitudes) and realizes the unavoidable conjugation ambiguity
/// of the self-test.
pub fn conjugated_honest_strategy(n: usize) -> Result<Strategy> {
    let base = honest_strategy(n)?;
    let (alice, bob) = match (&base.alice, &base.bob) {
        (AliceRep::PerPair { obs }, BobRep::PerPair { obs: bobs, gamma }) => {
            let conj5: [Operator; 5] = std::array::from_fn(|i| obs[i].conjugate());
            let conj6: [Operator; 6] = std::array::from_fn(|i| bobs[i].conjugate());
            let conjg: [Operator; 4] = std::array::from_fn(|i| gamma[i].conjugate());
            (
                AliceRep::PerPair { obs: conj5 },
                BobRep::PerPair {
                    obs: conj6,
                    gamma: conjg,
                },
            )
        }
        _ => unreachable!("honest strategy is per-pair"),
    };
    Ok(Strategy { alice, bob, ..base })
}

/// Replaces each pair's Bell state with
/// `(1−p)|Φ⁺⟩⟨Φ⁺| + p·I/4`, realized as a pure state on an appended
/// 4-dimensional environment register so the whole stack stays vector-based.
/// Measurements are unchanged. Requires a pair-product strategy.
pub fn depolarize(s: &Strategy, spec: NoiseSpec) -> Result<Strategy> {
    spec.validate()?;
    let env_dim = match &s.state {
        StateRep::PairProduct { env_dim, .. } => *env_dim,
        StateRep::Global(_) => {
            return Err(Error::LayoutMismatch {
                context: "depolarize requires a pair-product strategy",
            })
        }
    };
    if env_dim != 1 {
        return Err(Error::LayoutMismatch {
            context: "strategy already carries an environment",
        });
    }
    if spec.kind == NoiseKind::None || spec.p == 0.0 {
        let mut out = s.clone();
        out.noise = NoiseSpec::none();
        return Ok(out);
    }
    let p = spec.p;
    // Purification of the Bell-diagonal pair state: the Φ⁺ branch keeps
    // weight 1 − 3p/4 and the other three Bell states get p/4 each, with an
    // orthonormal environment flag per branch.
    let weights = [
        (1.0 - 0.75 * p).sqrt(),
        (0.25 * p).sqrt(),
        (0.25 * p).sqrt(),
        (0.25 * p).sqrt(),
    ];
    let layout = pair_layout(1, 4);
    let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
    for (k, w) in weights.iter().enumerate() {
        let bell = crate::quantum::bell_amps(k as u8 + 1)?;
        for (ab, amp) in bell.iter().enumerate() {
            // Layout (A1, B1, E1): flat index = ab * 4 + env.
            amps[ab * 4 + k] += C64::new(*w, 0.0) * amp;
        }
    }
    let pair = StateVector::new(layout, amps)?;
    Ok(Strategy {
        state: StateRep::PairProduct { pair, env_dim: 4 },
        noise: spec,
        ..s.clone()
    })
}

impl Strategy {
    /// Number of position pairs `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The attached noise description.
    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    /// True for the pair-product (fast-path) representation.
    pub fn is_factorized(&self) -> bool {
        matches!(self.state, StateRep::PairProduct { .. })
    }

    /// The explicit global state (available after [`Strategy::densify`]).
    pub fn global_state(&self) -> Result<&StateVector> {
        match &self.state {
            StateRep::Global(psi) => Ok(psi),
            StateRep::PairProduct { .. } => Err(Error::LayoutMismatch {
                context: "strategy is pair-product; call densify() first",
            }),
        }
    }

    /// Replaces Alice's per-pair observables (for perturbation experiments);
    /// the five operators must be 2×2 Hermitian involutions.
    pub fn with_alice_observables(&self, obs: [Operator; 5]) -> Result<Strategy> {
        for o in &obs {
            require_involution(o, "Alice observable")?;
        }
        match &self.alice {
            AliceRep::PerPair { .. } => Ok(Strategy {
                alice: AliceRep::PerPair { obs },
                ..self.clone()
            }),
            AliceRep::Explicit { .. } => Err(Error::LayoutMismatch {
                context: "per-pair observable replacement needs a per-pair strategy",
            }),
        }
    }

    /// Replaces Bob's per-pair observables; the six operators must be 2×2
    /// Hermitian involutions.
    pub fn with_bob_observables(&self, obs: [Operator; 6]) -> Result<Strategy> {
        for o in &obs {
            require_involution(o, "Bob observable")?;
        }
        match &self.bob {
            BobRep::PerPair { gamma, .. } => Ok(Strategy {
                bob: BobRep::PerPair {
                    obs,
                    gamma: gamma.clone(),
                },
                ..self.clone()
            }),
            BobRep::Explicit { .. } => Err(Error::LayoutMismatch {
                context: "per-pair observable replacement needs a per-pair strategy",
            }),
        }
    }

    /// Replaces Bob's adjacent-pair Bell family with arbitrary 4×4 operators,
    /// deliberately *without* validation, so corrupted or non-projective
    /// measurement what-ifs can be audited.
    pub fn with_bob_gamma(&self, gamma: [Operator; 4]) -> Result<Strategy> {
        match &self.bob {
            BobRep::PerPair { obs, .. } => Ok(Strategy {
                bob: BobRep::PerPair {
                    obs: obs.clone(),
                    gamma,
                },
                ..self.clone()
            }),
            BobRep::Explicit { .. } => Err(Error::LayoutMismatch {
                context: "per-pair Bell replacement needs a per-pair strategy",
            }),
        }
    }

    /// The canonical pair state relabeled onto pair `j`.
    fn pair_state_for(&self, j: u32) -> Result<StateVector> {
        match &self.state {
            StateRep::PairProduct { pair, env_dim } => Ok(StateVector::new(
                pair_layout(j, *env_dim),
                pair.amps().to_vec(),
            )?),
            StateRep::Global(_) => Err(Error::LayoutMismatch {
                context: "pair states undefined for a global strategy",
            }),
        }
    }

    /// Expands a pair-product strategy into an explicit global state on the
    /// block layout `A1..An, B1..Bn[, E1..En]`. Global strategies are
    /// returned unchanged.
    pub fn densify(&self) -> Result<Strategy> {
        let (pair, env_dim) = match &self.state {
            StateRep::Global(_) => return Ok(self.clone()),
            StateRep::PairProduct { pair, env_dim } => (pair, *env_dim),
        };
        if self.n > DENSE_N_CAP {
            return Err(Error::DenseTooLarge {
                n: self.n,
                cap: DENSE_N_CAP,
            });
        }
        let _ = pair;
        let mut regs = Vec::new();
        for j in 1..=self.n as u32 {
            regs.push((Register::A(j), 2));
        }
        for j in 1..=self.n as u32 {
            regs.push((Register::B(j), 2));
        }
        if env_dim > 1 {
            for j in 1..=self.n as u32 {
                regs.push((Register::Env(j), env_dim));
            }
        }
        let layout = Layout::new(regs)?;
        let factors: Vec<StateVector> = (1..=self.n as u32)
            .map(|j| self.pair_state_for(j))
            .collect::<Result<_>>()?;
        let refs: Vec<&StateVector> = factors.iter().collect();
        let psi = embed_product_state(&layout, &refs)?;
        Ok(Strategy {
            state: StateRep::Global(psi),
            ..self.clone()
        })
    }

    /// Alice's ±1 marginal observable at position `j` for question `x`:
    /// `A_x^{(j)} = Π^{A,j}_{+|x} − Π^{A,j}_{−|x}`.
    pub fn alice_observable(&self, x: &Question, j: usize) -> Result<LocalOperator> {
        self.check_position(j)?;
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: self.n,
                context: "question length vs n",
            });
        }
        match &self.alice {
            AliceRep::PerPair { obs } => {
                let basis = x.basis_at(j)?;
                Ok(LocalOperator::new(
                    obs[basis.symbol() as usize - 1].clone(),
                    vec![Register::A(j as u32)],
                ))
            }
            AliceRep::Explicit { families } => {
                let family = families
                    .get(x)
                    .ok_or_else(|| Error::QuestionNotInDomain(x.to_string()))?;
                let mut acc = Operator::zeros(family[0].rows(), family[0].cols());
                for (idx, proj) in family.iter().enumerate() {
                    let sign = outcomes_from_index(idx, self.n)[j - 1].sign();
                    acc = acc.add_scaled(C64::new(sign, 0.0), proj)?;
                }
                Ok(LocalOperator::new(acc, self.a_block_regs()))
            }
        }
    }

    /// Bob's ±1 marginal observable `B_y^{(j)}` for `y ∈ 1..=6`.
    pub fn bob_observable(&self, y: u8, j: usize) -> Result<LocalOperator> {
        self.check_position(j)?;
        if !(1..=6).contains(&y) {
            return Err(Error::InvalidQuestion {
                question: format!("y={y}"),
                reason: "observable questions are 1..=6",
            });
        }
        match &self.bob {
            BobRep::PerPair { obs, .. } => Ok(LocalOperator::new(
                obs[y as usize - 1].clone(),
                vec![Register::B(j as u32)],
            )),
            BobRep::Explicit { families, .. } => {
                let family = families
                    .get(&y)
                    .ok_or_else(|| Error::QuestionNotInDomain(format!("y={y}")))?;
                let mut acc = Operator::zeros(family[0].rows(), family[0].cols());
                for (idx, proj) in family.iter().enumerate() {
                    let sign = outcomes_from_index(idx, self.n)[j - 1].sign();
                    acc = acc.add_scaled(C64::new(sign, 0.0), proj)?;
                }
                Ok(LocalOperator::new(acc, self.b_block_regs()))
            }
        }
    }

    /// Bob's (not necessarily unitary) combinations:
    /// `Q₁ = (B₅+B₆)/√2`, `Q₂ = (B₅−B₆)/√2`, `Q₃ = (B₁+B₂)/√2`,
    /// `Q₄ = B₅`, `Q₅ = B₆`.
    pub fn bob_combination(&self, q: u8, j: usize) -> Result<LocalOperator> {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let combine = |a: LocalOperator, sign: f64, b: LocalOperator| -> Result<LocalOperator> {
            Ok(LocalOperator::new(
                a.op.add_scaled(C64::new(sign, 0.0), &b.op)?.scaled(h),
                a.regs,
            ))
        };
        match q {
            1 => combine(self.bob_observable(5, j)?, 1.0, self.bob_observable(6, j)?),
            2 => combine(self.bob_observable(5, j)?, -1.0, self.bob_observable(6, j)?),
            3 => combine(self.bob_observable(1, j)?, 1.0, self.bob_observable(2, j)?),
            4 => self.bob_observable(5, j),
            5 => self.bob_observable(6, j),
            other => Err(Error::InvalidQuestion {
                question: format!("q={other}"),
                reason: "combinations are labeled 1..=5",
            }),
        }
    }

    /// The Bell projector `Γ_b^{(j)}` for adjacent pair `j` (`b ∈ 1..=4`).
    pub fn gamma(&self, j: usize, b: u8) -> Result<LocalOperator> {
        if j == 0 || j >= self.n {
            return Err(Error::NoBellPairs(format!(
                "Γ^({j}) needs 1 ≤ j < n = {}",
                self.n
            )));
        }
        if !(1..=4).contains(&b) {
            return Err(Error::InvalidQuestion {
                question: format!("b={b}"),
                reason: "Bell outcomes are 1..=4",
            });
        }
        match &self.bob {
            BobRep::PerPair { gamma, .. } => Ok(LocalOperator::new(
                gamma[b as usize - 1].clone(),
                vec![Register::B(j as u32), Register::B(j as u32 + 1)],
            )),
            BobRep::Explicit { gamma, .. } => {
                let family = gamma
                    .get(&j)
                    .ok_or_else(|| Error::QuestionNotInDomain(format!("gamma j={j}")))?;
                Ok(LocalOperator::new(
                    family[b as usize - 1].clone(),
                    self.b_block_regs(),
                ))
            }
        }
    }

    /// Expectation value `⟨ψ| O₁ O₂ … |ψ⟩` of a product of local operators
    /// (applied right to left in the given order). The imaginary part must
    /// vanish within 1e-9.
    pub fn correlator(&self, ops: &[&LocalOperator]) -> Result<f64> {
        let value = match &self.state {
            StateRep::Global(psi) => {
                let mut v = psi.clone();
                for op in ops.iter().rev() {
                    v = apply_to_registers(&v, &op.op, &op.regs)?;
                }
                psi.inner(&v)?
            }
            StateRep::PairProduct { .. } => {
                let mut pairs: Vec<u32> = ops
                    .iter()
                    .flat_map(|op| op.regs.iter().map(|r| pair_index(*r)))
                    .collect::<Result<_>>()?;
                pairs.sort_unstable();
                pairs.dedup();
                if pairs.is_empty() {
                    return Err(Error::LayoutMismatch {
                        context: "correlator needs at least one operator",
                    });
                }
                let mut state = self.pair_state_for(pairs[0])?;
                for &j in &pairs[1..] {
                    state = state.tensor(&self.pair_state_for(j)?)?;
                }
                let mut v = state.clone();
                for op in ops.iter().rev() {
                    v = apply_to_registers(&v, &op.op, &op.regs)?;
                }
                state.inner(&v)?
            }
        };
        if value.im.abs() > 1e-9 {
            return Err(Error::NotHermitian {
                max_dev: value.im.abs(),
            });
        }
        Ok(value.re)
    }

    /// `‖Σ_k c_k (O_{k,1} O_{k,2} …)|ψ⟩‖` for products of local operators
    /// (each product applied right to left). Computing relation residuals
    /// this way — in the vector rather than as a quadratic form — keeps full
    /// floating-point precision under exact cancellation.
    pub fn residual_norm(&self, terms: &[(C64, Vec<&LocalOperator>)]) -> Result<f64> {
        let state = match &self.state {
            StateRep::Global(psi) => psi.clone(),
            StateRep::PairProduct { .. } => {
                let mut pairs: Vec<u32> = Vec::new();
                for (_, ops) in terms {
                    for op in ops {
                        for r in &op.regs {
                            pairs.push(pair_index(*r)?);
                        }
                    }
                }
                pairs.sort_unstable();
                pairs.dedup();
                if pairs.is_empty() {
                    pairs.push(1);
                }
                let mut st = self.pair_state_for(pairs[0])?;
                for &j in &pairs[1..] {
                    st = st.tensor(&self.pair_state_for(j)?)?;
                }
                st
            }
        };
        let mut acc = StateVector::zeros(state.layout().clone());
        for (c, ops) in terms {
            let mut v = state.clone();
            for op in ops.iter().rev() {
                v = apply_to_registers(&v, &op.op, &op.regs)?;
            }
            acc = acc.add_scaled(*c, &v)?;
        }
        Ok(acc.norm())
    }

    /// Alice's outcome projector(s) for question `x` and outcome string `a`,
    /// as a list of local operators to be applied jointly.
    pub fn alice_outcome_projectors(
        &self,
        x: &Question,
        a: &[Outcome],
    ) -> Result<Vec<LocalOperator>> {
        if a.len() != self.n || x.len() != self.n {
            return Err(Error::DimensionMismatch {
                left: a.len(),
                right: self.n,
                context: "outcome string length vs n",
            });
        }
        match &self.alice {
            AliceRep::PerPair { obs } => (1..=self.n)
                .map(|j| {
                    let basis = x.basis_at(j)?;
                    let o = &obs[basis.symbol() as usize - 1];
                    Ok(LocalOperator::new(
                        sign_projector(o, a[j - 1])?,
                        vec![Register::A(j as u32)],
                    ))
                })
                .collect(),
            AliceRep::Explicit { families } => {
                let family = families
                    .get(x)
                    .ok_or_else(|| Error::QuestionNotInDomain(x.to_string()))?;
                let idx = crate::quantum::outcomes_to_index(a);
                Ok(vec![LocalOperator::new(
                    family[idx].clone(),
                    self.a_block_regs(),
                )])
            }
        }
    }

    /// Draws one protocol round: Alice answers `a ∈ {+,−}ⁿ`; Bob answers
    /// sign strings for `y ∈ 1..=6`, or Bell outcomes (odd/even adjacent
    /// pairs) for the ◊/♦ questions.
    pub fn sample_round<R: Rng>(
        &self,
        x: &Question,
        y: BobQuestion,
        rng: &mut R,
    ) -> Result<(Vec<Outcome>, BobAnswer)> {
        let dist = self.round_distribution(x, y)?;
        Ok(dist.sample(rng).clone())
    }

    /// The exact Born distribution of a round as an explicit categorical
    /// table (outcome, probability). Requires the joint outcome space to be
    /// enumerable (it is for all protocol questions at the supported sizes).
    pub fn round_distribution(&self, x: &Question, y: BobQuestion) -> Result<RoundDistribution> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: self.n,
                context: "question length vs n",
            });
        }
        x.bases()?; // validate symbols
        let buckets = self.measurement_buckets(x, y)?;
        match &self.state {
            StateRep::PairProduct { .. } => self.product_distribution(&buckets),
            StateRep::Global(psi) => {
                let mut entries = Vec::new();
                let norm2 = psi.norm().powi(2);
                chain_enumerate(self, psi, &buckets, 0, norm2, &mut Vec::new(), &mut entries)?;
                RoundDistribution::new(self.n, y, entries)
            }
        }
    }

    /// Decomposes the measurement for `(x, y)` into independent buckets
    /// (pair-product path) or sequential stages (global path).
    fn measurement_buckets(&self, x: &Question, y: BobQuestion) -> Result<Vec<Bucket>> {
        let n = self.n;
        match y {
            BobQuestion::Obs(label) => {
                if !(1..=6).contains(&label) {
                    return Err(Error::InvalidQuestion {
                        question: format!("y={label}"),
                        reason: "observable questions are 1..=6",
                    });
                }
                match &self.alice {
                    AliceRep::PerPair { .. } => Ok((1..=n)
                        .map(|j| Bucket::PairObs {
                            j,
                            x: x.clone(),
                            y: label,
                        })
                        .collect()),
                    AliceRep::Explicit { .. } => Ok(vec![
                        Bucket::AliceJoint { x: x.clone() },
                        Bucket::BobJoint { y: label },
                    ]),
                }
            }
            BobQuestion::OddBells | BobQuestion::EvenBells => {
                if n < 2 {
                    return Err(Error::NoBellPairs(
                        "Bell-measurement questions need n ≥ 2".into(),
                    ));
                }
                let first = if y == BobQuestion::OddBells { 1 } else { 2 };
                let gamma_js: Vec<usize> = (first..n).step_by(2).collect();
                let covered: Vec<usize> = gamma_js.iter().flat_map(|&j| [j, j + 1]).collect();
                match &self.alice {
                    AliceRep::PerPair { .. } => {
                        let mut buckets = Vec::new();
                        for &j in &gamma_js {
                            buckets.push(Bucket::GammaPair { j, x: x.clone() });
                        }
                        for j in 1..=n {
                            if !covered.contains(&j) {
                                buckets.push(Bucket::AliceOnly { j, x: x.clone() });
                            }
                        }
                        Ok(buckets)
                    }
                    AliceRep::Explicit { .. } => {
                        let mut buckets = vec![Bucket::AliceJoint { x: x.clone() }];
                        for &j in &gamma_js {
                            buckets.push(Bucket::GammaJoint { j });
                        }
                        Ok(buckets)
                    }
                }
            }
        }
    }

    /// Enumerates the outcome table of one bucket against an explicit state,
    /// returning `(label, projectors, probability-weight)` triples. The
    /// probability is ‖Π state‖² (i.e., conditional on the state given).
    fn bucket_outcomes(
        &self,
        bucket: &Bucket,
        state: &StateVector,
    ) -> Result<Vec<(BucketOutcome, StateVector, f64)>> {
        let mut out = Vec::new();
        match bucket {
            Bucket::PairObs { j, x, y } => {
                let a_op = self.alice_observable(x, *j)?;
                let b_op = self.bob_observable(*y, *j)?;
                for a in [Outcome::Plus, Outcome::Minus] {
                    let pa = LocalOperator::new(sign_projector(&a_op.op, a)?, a_op.regs.clone());
                    for b in [Outcome::Plus, Outcome::Minus] {
                        let pb =
                            LocalOperator::new(sign_projector(&b_op.op, b)?, b_op.regs.clone());
                        let mut v = apply_to_registers(state, &pa.op, &pa.regs)?;
                        v = apply_to_registers(&v, &pb.op, &pb.regs)?;
                        let p = v.norm().powi(2);
                        out.push((
                            BucketOutcome {
                                alice: vec![(*j, a)],
                                bob_sign: vec![(*j, b)],
                                bob_bell: vec![],
                            },
                            v,
                            p,
                        ));
                    }
                }
            }
            Bucket::AliceOnly { j, x } => {
                let a_op = self.alice_observable(x, *j)?;
                for a in [Outcome::Plus, Outcome::Minus] {
                    let pa = sign_projector(&a_op.op, a)?;
                    let v = apply_to_registers(state, &pa, &a_op.regs)?;
                    let p = v.norm().powi(2);
                    out.push((
                        BucketOutcome {
                            alice: vec![(*j, a)],
                            bob_sign: vec![],
                            bob_bell: vec![],
                        },
                        v,
                        p,
                    ));
                }
            }
            Bucket::GammaPair { j, x } => {
                let a1 = self.alice_observable(x, *j)?;
                let a2 = self.alice_observable(x, *j + 1)?;
                for aj in [Outcome::Plus, Outcome::Minus] {
                    for ak in [Outcome::Plus, Outcome::Minus] {
                        for b in 1..=4u8 {
                            let g = self.gamma(*j, b)?;
                            let mut v =
                                apply_to_registers(state, &sign_projector(&a1.op, aj)?, &a1.regs)?;
                            v = apply_to_registers(&v, &sign_projector(&a2.op, ak)?, &a2.regs)?;
                            v = apply_to_registers(&v, &g.op, &g.regs)?;
                            let p = v.norm().powi(2);
                            out.push((
                                BucketOutcome {
                                    alice: vec![(*j, aj), (*j + 1, ak)],
                                    bob_sign: vec![],
                                    bob_bell: vec![(*j, b)],
                                },
                                v,
                                p,
                            ));
                        }
                    }
                }
            }
            Bucket::AliceJoint { x } => {
                for idx in 0..(1usize << self.n) {
                    let a = outcomes_from_index(idx, self.n);
                    let projs = self.alice_outcome_projectors(x, &a)?;
                    let mut v = state.clone();
                    for p in &projs {
                        v = apply_to_registers(&v, &p.op, &p.regs)?;
                    }
                    let p = v.norm().powi(2);
                    out.push((
                        BucketOutcome {
                            alice: a.iter().enumerate().map(|(i, &o)| (i + 1, o)).collect(),
                            bob_sign: vec![],
                            bob_bell: vec![],
                        },
                        v,
                        p,
                    ));
                }
            }
            Bucket::BobJoint { y } => match &self.bob {
                BobRep::Explicit { families, .. } => {
                    let family = families
                        .get(y)
                        .ok_or_else(|| Error::QuestionNotInDomain(format!("y={y}")))?;
                    for (idx, proj) in family.iter().enumerate() {
                        let b = outcomes_from_index(idx, self.n);
                        let v = apply_to_registers(state, proj, &self.b_block_regs())?;
                        let p = v.norm().powi(2);
                        out.push((
                            BucketOutcome {
                                alice: vec![],
                                bob_sign: b.iter().enumerate().map(|(i, &o)| (i + 1, o)).collect(),
                                bob_bell: vec![],
                            },
                            v,
                            p,
                        ));
                    }
                }
                BobRep::PerPair { .. } => unreachable!("BobJoint bucket implies explicit rep"),
            },
            Bucket::GammaJoint { j } => {
                for b in 1..=4u8 {
                    let g = self.gamma(*j, b)?;
                    let v = apply_to_registers(state, &g.op, &g.regs)?;
                    let p = v.norm().powi(2);
                    out.push((
                        BucketOutcome {
                            alice: vec![],
                            bob_sign: vec![],
                            bob_bell: vec![(*j, b)],
                        },
                        v,
                        p,
                    ));
                }
            }
        }
        Ok(out)
    }

    /// Joint distribution for independent buckets on the pair-product state.
    fn product_distribution(&self, buckets: &[Bucket]) -> Result<RoundDistribution> {
        // Each bucket is evaluated on the tensor of the pairs it touches;
        // independence across buckets makes the joint a product.
        let mut tables: Vec<Vec<(BucketOutcome, f64)>> = Vec::with_capacity(buckets.len());
        for bucket in buckets {
            let pairs = bucket.pairs();
            let mut state = self.pair_state_for(pairs[0] as u32)?;
            for &j in &pairs[1..] {
                state = state.tensor(&self.pair_state_for(j as u32)?)?;
            }
            let outcomes = self.bucket_outcomes(bucket, &state)?;
            tables.push(outcomes.into_iter().map(|(o, _, p)| (o, p)).collect());
        }
        let mut entries: Vec<(BucketOutcome, f64)> = vec![(BucketOutcome::default(), 1.0)];
        for table in &tables {
            let mut next = Vec::with_capacity(entries.len() * table.len());
            for (acc, pacc) in &entries {
                for (o, p) in table {
                    next.push((acc.merged(o), pacc * p));
                }
            }
            entries = next;
        }
        let y = buckets_question(buckets);
        RoundDistribution::new(self.n, y, entries)
    }

    fn a_block_regs(&self) -> Vec<Register> {
        (1..=self.n as u32).map(Register::A).collect()
    }

    fn b_block_regs(&self) -> Vec<Register> {
        (1..=self.n as u32).map(Register::B).collect()
    }

    fn check_position(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.n {
            return Err(Error::InvalidQuestion {
                question: format!("j={j}"),
                reason: "position out of range",
            });
        }
        Ok(())
    }

    /// Structural validation: state normalized; per-pair observables are
    /// Hermitian involutions; projector families are complete, orthogonal,
    /// and projective — all within 1e-9.
    pub fn validate(&self) -> Result<()> {
        let norm = match &self.state {
            StateRep::PairProduct { pair, .. } => pair.norm(),
            StateRep::Global(psi) => psi.norm(),
        };
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { norm });
        }
        match &self.alice {
            AliceRep::PerPair { obs } => {
                for o in obs {
                    require_involution(o, "Alice observable")?;
                }
            }
            AliceRep::Explicit { families } => {
                for (x, family) in families {
                    validate_family(family, 1 << self.n, &format!("Alice x={x}"))?;
                }
            }
        }
        match &self.bob {
            BobRep::PerPair { obs, gamma } => {
                for o in obs {
                    require_involution(o, "Bob observable")?;
                }
                validate_family(gamma, 4, "Bell projector family")?;
            }
            BobRep::Explicit { families, gamma } => {
                for (y, family) in families {
                    validate_family(family, 1 << self.n, &format!("Bob y={y}"))?;
                }
                for (j, family) in gamma {
                    validate_family(family, 4, &format!("Gamma j={j}"))?;
                }
            }
        }
        Ok(())
    }
}

/// One independently-sampleable stage of a round measurement.
#[derive(Clone, Debug)]
enum Bucket {
    /// Alice observable + Bob observable on pair `j`.
    PairObs { j: usize, x: Question, y: u8 },
    /// Alice observable alone on pair `j` (uncovered pair of a ◊/♦ round).
    AliceOnly { j: usize, x: Question },
    /// Alice observables on pairs `j, j+1` + Bell measurement `Γ^{(j)}`.
    GammaPair { j: usize, x: Question },
    /// Alice's full joint measurement (explicit families).
    AliceJoint { x: Question },
    /// Bob's full joint measurement for `y ∈ 1..=6` (explicit families).
    BobJoint { y: u8 },
    /// One Bell family `Γ^{(j)}` on the full B block (explicit families).
    GammaJoint { j: usize },
}

impl Bucket {
    /// The pair indices this bucket touches (pair-product evaluation).
    fn pairs(&self) -> Vec<usize> {
        match self {
            Bucket::PairObs { j, .. } | Bucket::AliceOnly { j, .. } => vec![*j],
            Bucket::GammaPair { j, .. } => vec![*j, *j + 1],
            _ => vec![],
        }
    }
}

fn buckets_question(buckets: &[Bucket]) -> BobQuestion {
    for b in buckets {
        match b {
            Bucket::PairObs { y, .. } | Bucket::BobJoint { y } => return BobQuestion::Obs(*y),
            Bucket::GammaPair { j, .. } | Bucket::GammaJoint { j } => {
                return if j % 2 == 1 {
                    BobQuestion::OddBells
                } else {
                    BobQuestion::EvenBells
                }
            }
            Bucket::AliceOnly { .. } | Bucket::AliceJoint { .. } => continue,
        }
    }
    // Only reachable for ♦ at n = 2 (no Γ measured): even Bells.
    BobQuestion::EvenBells
}

/// Partial outcome labels accumulated across buckets.
#[derive(Clone, Debug, Default)]
struct BucketOutcome {
    alice: Vec<(usize, Outcome)>,
    bob_sign: Vec<(usize, Outcome)>,
    bob_bell: Vec<(usize, u8)>,
}

impl BucketOutcome {
    fn merged(&self, other: &BucketOutcome) -> BucketOutcome {
        let mut out = self.clone();
        out.alice.extend(other.alice.iter().copied());
        out.bob_sign.extend(other.bob_sign.iter().copied());
        out.bob_bell.extend(other.bob_bell.iter().copied());
        out
    }
}

/// Sequential (chain-rule) enumeration of the joint distribution for global
/// states: project bucket by bucket, tracking subnormalized branches.
fn chain_enumerate(
    strategy: &Strategy,
    state: &StateVector,
    buckets: &[Bucket],
    depth: usize,
    branch_prob: f64,
    acc: &mut Vec<BucketOutcome>,
    entries: &mut Vec<(BucketOutcome, f64)>,
) -> Result<()> {
    if branch_prob < 1e-15 {
        return Ok(()); // dead branch; outcomes below register as prob 0
    }
    if depth == buckets.len() {
        let mut merged = BucketOutcome::default();
        for o in acc.iter() {
            merged = merged.merged(o);
        }
        entries.push((merged, branch_prob));
        return Ok(());
    }
    let outcomes = strategy.bucket_outcomes(&buckets[depth], state)?;
    for (label, post, p) in outcomes {
        acc.push(label);
        // p is ‖Π state‖² relative to the (subnormalized) input state, so the
        // absolute branch probability is p itself once state started at ψ.
        chain_enumerate(strategy, &post, buckets, depth + 1, p, acc, entries)?;
        acc.pop();
    }
    Ok(())
}

/// An explicit categorical distribution over round outcomes.
#[derive(Clone, Debug)]
pub struct RoundDistribution {
    outcomes: Vec<(Vec<Outcome>, BobAnswer)>,
    cumulative: Vec<f64>,
    probs: Vec<f64>,
}

impl RoundDistribution {
    fn new(
        n: usize,
        y: BobQuestion,
        entries: Vec<(BucketOutcome, f64)>,
    ) -> Result<RoundDistribution> {
        let mut outcomes = Vec::with_capacity(entries.len());
        let mut probs = Vec::with_capacity(entries.len());
        for (label, p) in entries {
            let mut a = vec![Outcome::Plus; n];
            for (j, o) in &label.alice {
                a[*j - 1] = *o;
            }
            let answer = match y {
                BobQuestion::Obs(_) => {
                    let mut b = vec![Outcome::Plus; n];
                    for (j, o) in &label.bob_sign {
                        b[*j - 1] = *o;
                    }
                    BobAnswer::Signs(b)
                }
                BobQuestion::OddBells | BobQuestion::EvenBells => {
                    let mut bells = label.bob_bell.clone();
                    bells.sort_unstable_by_key(|(j, _)| *j);
                    BobAnswer::Bells(bells.into_iter().map(|(_, b)| b).collect())
                }
            };
            outcomes.push((a, answer));
            probs.push(p);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { norm: total });
        }
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut run = 0.0;
        for p in &probs {
            run += p;
            cumulative.push(run);
        }
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(RoundDistribution {
            outcomes,
            cumulative,
            probs,
        })
    }

    /// The outcome table with probabilities.
    pub fn entries(&self) -> impl Iterator<Item = (&(Vec<Outcome>, BobAnswer), f64)> {
        self.outcomes.iter().zip(self.probs.iter().copied())
    }

    /// Draws one outcome.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> &(Vec<Outcome>, BobAnswer) {
        let u: f64 = rng.random();
        let idx = self
            .cumulative
            .partition_point(|&c| c < u)
            .min(self.outcomes.len() - 1);
        &self.outcomes[idx]
    }
}

/// The register's pair index (A3 → 3, Env2 → 2, …); ancilla registers are
/// rejected (strategies own only A/B/Env).
fn pair_index(reg: Register) -> Result<u32> {
    match reg {
        Register::A(j) | Register::B(j) | Register::Env(j) => Ok(j),
        other => Err(Error::UnknownRegister(other.to_string())),
    }
}

/// The spectral projector `(I ± O)/2` of a ±1 observable.
fn sign_projector(o: &Operator, s: Outcome) -> Result<Operator> {
    let dim = o.dim()?;
    let half = C64::new(0.5, 0.0);
    let mut p = Operator::identity(dim).add_scaled(C64::new(s.sign(), 0.0), o)?;
    p = p.scaled(half);
    Ok(Operator::with_flags(
        p.mat().clone(),
        OpFlags {
            hermitian: true,
            unitary: false,
            projector: true,
        },
    ))
}

/// Checks a ±1 observable: Hermitian with O² = I within 1e-9.
fn require_involution(o: &Operator, context: &'static str) -> Result<()> {
    o.require_hermitian(1e-9)?;
    let sq = o.matmul(o)?;
    let dev = sq.max_abs_diff(&Operator::identity(o.dim()?));
    if dev > 1e-9 {
        return Err(Error::NotProjective {
            context: format!("{context}: O² ≠ I"),
            max_dev: dev,
        });
    }
    Ok(())
}

/// Checks a projector family: right count, each member projective, pairwise
/// orthogonal, completing to the identity — all within 1e-9.
fn validate_family(family: &[Operator], expected: usize, context: &str) -> Result<()> {
    if family.len() != expected {
        return Err(Error::MalformedFile(format!(
            "{context}: expected {expected} projectors, got {}",
            family.len()
        )));
    }
    let dim = family[0].dim()?;
    let mut sum = Operator::zeros(dim, dim);
    for (i, p) in family.iter().enumerate() {
        p.require_hermitian(1e-9)?;
        let sq = p.matmul(p)?;
        let dev = sq.max_abs_diff(p);
        if dev > 1e-9 {
            return Err(Error::NotProjective {
                context: format!("{context}[{i}]: P² ≠ P"),
                max_dev: dev,
            });
        }
        for (k, q) in family.iter().enumerate().skip(i + 1) {
            let cross = p.matmul(q)?;
            if cross.max_abs() > 1e-9 {
                return Err(Error::NotProjective {
                    context: format!("{context}: members {i} and {k} overlap"),
                    max_dev: cross.max_abs(),
                });
            }
        }
        sum = sum.add(p)?;
    }
    let dev = sum.max_abs_diff(&Operator::identity(dim));
    if dev > 1e-9 {
        return Err(Error::NotProjective {
            context: format!("{context}: family does not sum to identity"),
            max_dev: dev,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Adversarial strategy files
// ---------------------------------------------------------------------------

/// Matrix payload: base64-encoded little-endian f64 pairs (re, im),
/// row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixPayload {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl MatrixPayload {
    /// Encodes a dense matrix.
    pub fn encode(m: &Array2<C64>) -> MatrixPayload {
        let mut bytes = Vec::with_capacity(m.len() * 16);
        for row in m.rows() {
            for z in row {
                bytes.extend_from_slice(&z.re.to_le_bytes());
                bytes.extend_from_slice(&z.im.to_le_bytes());
            }
        }
        MatrixPayload {
            rows: m.nrows(),
            cols: m.ncols(),
            data: BASE64.encode(bytes),
        }
    }

    /// Decodes into a dense matrix.
    pub fn decode(&self) -> Result<Array2<C64>> {
        let bytes = BASE64
            .decode(&self.data)
            .map_err(|e| Error::MalformedFile(format!("base64 payload: {e}")))?;
        if bytes.len() != self.rows * self.cols * 16 {
            return Err(Error::MalformedFile(format!(
                "payload holds {} bytes, expected {} for {}x{}",
                bytes.len(),
                self.rows * self.cols * 16,
                self.rows,
                self.cols
            )));
        }
        let mut m = Array2::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            for j in 0..self.cols {
                let o = (i * self.cols + j) * 16;
                let re = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
                let im = f64::from_le_bytes(bytes[o + 8..o + 16].try_into().unwrap());
                m[(i, j)] = C64::new(re, im);
            }
        }
        Ok(m)
    }
}

/// On-disk form of an explicit (adversarial) strategy.
///
/// `a_dims`/`b_dims`/`env_dims` give the local dimensions of Alice's, Bob's,
/// and optional purification registers; the state is a column vector over
/// the concatenated layout `A…, B…, Env…`. Alice's families map question
/// digit strings to `2ⁿ` projectors on the A block; Bob's map `"1"–"6"` to
/// `2ⁿ` projectors and `gamma` maps a position digit to 4 projectors, both
/// on the B block.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyFile {
    pub n: usize,
    pub a_dims: Vec<usize>,
    pub b_dims: Vec<usize>,
    #[serde(default)]
    pub env_dims: Vec<usize>,
    pub psi: MatrixPayload,
    pub alice: BTreeMap<String, Vec<MatrixPayload>>,
    pub bob: BTreeMap<String, Vec<MatrixPayload>>,
    #[serde(default)]
    pub gamma: BTreeMap<String, Vec<MatrixPayload>>,
}

impl StrategyFile {
    /// Parses and validates a strategy from JSON text.
    pub fn parse(json: &str) -> Result<Strategy> {
        let file: StrategyFile = serde_json::from_str(json)?;
        file.into_strategy()
    }

    /// Serializes a strategy (must be global + explicit) to JSON.
    pub fn to_json(s: &Strategy) -> Result<String> {
        let psi = s.global_state()?;
        let (alice, bob, gamma) = match (&s.alice, &s.bob) {
            (
                AliceRep::Explicit { families },
                BobRep::Explicit {
                    families: bfam,
                    gamma,
                },
            ) => (families, bfam, gamma),
            _ => {
                return Err(Error::LayoutMismatch {
                    context: "only explicit strategies serialize to files",
                })
            }
        };
        let dims_of = |label: fn(u32) -> Register| -> Vec<usize> {
            psi.layout()
                .registers()
                .iter()
                .filter(|(r, _)| (1..=s.n as u32 * 4).any(|j| *r == label(j)))
                .map(|(_, d)| *d)
                .collect()
        };
        let col = Array2::from_shape_fn((psi.amps().len(), 1), |(i, _)| psi.amps()[i]);
        let file = StrategyFile {
            n: s.n,
            a_dims: dims_of(Register::A),
            b_dims: dims_of(Register::B),
            env_dims: dims_of(Register::Env),
            psi: MatrixPayload::encode(&col),
            alice: alice
                .iter()
                .map(|(x, fam)| {
                    (
                        x.to_string(),
                        fam.iter().map(|p| MatrixPayload::encode(p.mat())).collect(),
                    )
                })
                .collect(),
            bob: bob
                .iter()
                .map(|(y, fam)| {
                    (
                        y.to_string(),
                        fam.iter().map(|p| MatrixPayload::encode(p.mat())).collect(),
                    )
                })
                .collect(),
            gamma: gamma
                .iter()
                .map(|(j, fam)| {
                    (
                        j.to_string(),
                        fam.iter().map(|p| MatrixPayload::encode(p.mat())).collect(),
                    )
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    fn into_strategy(self) -> Result<Strategy> {
        if self.n == 0 {
            return Err(Error::MalformedFile("n must be at least 1".into()));
        }
        if self.n > DENSE_N_CAP {
            return Err(Error::DenseTooLarge {
                n: self.n,
                cap: DENSE_N_CAP,
            });
        }
        if self.a_dims.is_empty() || self.b_dims.is_empty() {
            return Err(Error::MalformedFile(
                "a_dims and b_dims must be nonempty".into(),
            ));
        }
        let mut regs = Vec::new();
        for (i, &d) in self.a_dims.iter().enumerate() {
            regs.push((Register::A(i as u32 + 1), d));
        }
        for (i, &d) in self.b_dims.iter().enumerate() {
            regs.push((Register::B(i as u32 + 1), d));
        }
        for (i, &d) in self.env_dims.iter().enumerate() {
            regs.push((Register::Env(i as u32 + 1), d));
        }
        let layout = Layout::new(regs)?;
        let psi_mat = self.psi.decode()?;
        if psi_mat.ncols() != 1 || psi_mat.nrows() != layout.dim() {
            return Err(Error::MalformedFile(format!(
                "state must be a {}x1 column, got {}x{}",
                layout.dim(),
                psi_mat.nrows(),
                psi_mat.ncols()
            )));
        }
        let psi = StateVector::new(layout, psi_mat.column(0).to_vec())?;

        let da: usize = self.a_dims.iter().product();
        let db: usize = self.b_dims.iter().product();
        let mut alice = BTreeMap::new();
        for (xs, payloads) in &self.alice {
            let x = Question::parse(xs)?;
            if x.len() != self.n {
                return Err(Error::MalformedFile(format!(
                    "question {xs} has length {}, expected {}",
                    x.len(),
                    self.n
                )));
            }
            alice.insert(x, decode_family(payloads, da)?);
        }
        let mut bob = BTreeMap::new();
        for (ys, payloads) in &self.bob {
            let y: u8 = ys
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad Bob question {ys}")))?;
            if !(1..=6).contains(&y) {
                return Err(Error::MalformedFile(format!(
                    "Bob question {y} not in 1..=6"
                )));
            }
            bob.insert(y, decode_family(payloads, db)?);
        }
        let mut gamma = BTreeMap::new();
        for (js, payloads) in &self.gamma {
            let j: usize = js
                .parse()
                .map_err(|_| Error::MalformedFile(format!("bad gamma position {js}")))?;
            if j == 0 || j >= self.n {
                return Err(Error::MalformedFile(format!(
                    "gamma position {j} out of range"
                )));
            }
            gamma.insert(j, decode_family(payloads, db)?);
        }
        let strategy = Strategy {
            n: self.n,
            state: StateRep::Global(psi),
            alice: AliceRep::Explicit { families: alice },
            bob: BobRep::Explicit {
                families: bob,
                gamma,
            },
            noise: NoiseSpec::none(),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

fn decode_family(payloads: &[MatrixPayload], dim: usize) -> Result<Vec<Operator>> {
    payloads
        .iter()
        .map(|p| {
            let m = p.decode()?;
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::MalformedFile(format!(
                    "projector is {}x{}, expected {dim}x{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            Ok(Operator::with_flags(
                m,
                OpFlags {
                    hermitian: true,
                    unitary: false,
                    projector: true,
                },
            ))
        })
        .collect()
}

/// A random valid single-pair (`n = 1`) explicit strategy: a random shared
/// state on `C^{da} ⊗ C^{db}` and independent random projective two-outcome
/// families for Alice's five questions and Bob's six.
pub fn random_single_pair_strategy<R: Rng>(da: usize, db: usize, rng: &mut R) -> Result<Strategy> {
    let layout = Layout::new(vec![(Register::A(1), da), (Register::B(1), db)])?;
    let mut amps: Vec<C64> = (0..da * db)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let nrm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|z| *z /= nrm);
    let psi = StateVector::new(layout, amps)?;

    let mut alice = BTreeMap::new();
    for sym in 1..=5u8 {
        let fam = random_two_outcome_family(da, rng)?;
        alice.insert(Question::from_symbols(&[sym])?, fam);
    }
    let mut bob = BTreeMap::new();
    for y in 1..=6u8 {
        bob.insert(y, random_two_outcome_family(db, rng)?);
    }
    Ok(Strategy {
        n: 1,
        state: StateRep::Global(psi),
        alice: AliceRep::Explicit { families: alice },
        bob: BobRep::Explicit {
            families: bob,
            gamma: BTreeMap::new(),
        },
        noise: NoiseSpec::none(),
    })
}

/// A random rank split `(P, I − P)` from the eigenbasis of a random
/// Hermitian matrix; rank may be 0 or `dim` (deterministic observables).
fn random_two_outcome_family<R: Rng>(dim: usize, rng: &mut R) -> Result<Vec<Operator>> {
    let raw = Array2::from_shape_fn((dim, dim), |_| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let herm = Array2::from_shape_fn((dim, dim), |(i, j)| {
        0.5 * (raw[(i, j)] + raw[(j, i)].conj())
    });
    let (_, vecs) = crate::linalg::eigen::hermitian_eigen(&herm, true)?;
    let v = vecs.expect("eigenvectors requested");
    let rank = rng.random_range(0..=dim);
    let mut p = Array2::zeros((dim, dim));
    for k in 0..rank {
        for i in 0..dim {
            for j in 0..dim {
                p[(i, j)] += v[(i, k)] * v[(j, k)].conj();
            }
        }
    }
    let flags = OpFlags {
        hermitian: true,
        unitary: false,
        projector: true,
    };
    let p = Operator::with_flags(p, flags);
    let q = Operator::with_flags(Operator::identity(dim).sub(&p)?.mat().clone(), flags);
    Ok(vec![p, q])
}

/// The deterministic strategy whose every observable is the identity
/// (`Π₊ = I, Π₋ = 0` for every question on both sides) at `n = 1`.
pub fn identity_single_pair_strategy() -> Result<Strategy> {
    let layout = Layout::new(vec![(Register::A(1), 2), (Register::B(1), 2)])?;
    let psi = StateVector::basis_state(layout, 0)?;
    let flags = OpFlags {
        hermitian: true,
        unitary: false,
        projector: true,
    };
    let trivial = || -> Vec<Operator> {
        vec![
            Operator::with_flags(Operator::identity(2).mat().clone(), flags),
            Operator::with_flags(Operator::zeros(2, 2).mat().clone(), flags),
        ]
    };
    let mut alice = BTreeMap::new();
    for sym in 1..=5u8 {
        alice.insert(Question::from_symbols(&[sym])?, trivial());
    }
    let mut bob = BTreeMap::new();
    for y in 1..=6u8 {
        bob.insert(y, trivial());
    }
    Ok(Strategy {
        n: 1,
        state: StateRep::Global(psi),
        alice: AliceRep::Explicit { families: alice },
        bob: BobRep::Explicit {
            families: bob,
            gamma: BTreeMap::new(),
        },
        noise: NoiseSpec::none(),
    })
}
