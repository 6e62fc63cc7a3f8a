//! Operator relations and the extraction isometry.
//!
//! The audit ([`crate::verifier`]) says how far a strategy is from saturating
//! the Bell tests; this module turns that into structure. It has two layers:
//!
//! 1. [`relation_check`] measures, directly in the state vector, the
//!    algebraic relations the audit is known to enforce: Alice's marginal at
//!    each position agrees with Bob's regularized combination, same-position
//!    pairs anticommute, distinct positions commute, and the six-fold
//!    conjugation product fixes the state. The largest residual `η` is the
//!    single number every later distance depends on. [`global_conj_check`]
//!    probes the derived cross-position branch relation that keeps the two
//!    conjugation branches coherent.
//! 2. [`apply_isometry`] builds the local swap/phase-kickback circuits out of
//!    the strategy's *own* operators, applies them to the shared state, and
//!    reports distances from the ideal images: fresh Bell pairs on the primed
//!    registers, Pauli actions carried over to Bob's extracted qubits, and a
//!    pair of junk vectors whose weights split the state between an "as is"
//!    branch and a complex-conjugated one.
//!
//! Residuals and distances are always *reported*, never clamped or silently
//! thresholded; acceptance policy belongs to the caller.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::linalg::{
    apply_to_registers, embed_product_state, regularize, Layout, Operator, Register, StateVector,
};
use crate::quantum::pauli;
use crate::strategy::LocalOperator;
use crate::{Basis, Error, Question, QuestionSet, Result, Strategy};

/// Bob's regularized combination `T̂_q^{(j)}` for `q ∈ {1,2,3}`: the unitary
/// Hermitian part of `Q_q^{(j)}`. Alice's observables are used as measured;
/// only Bob's combinations need this polar correction.
pub fn regularized_q(s: &Strategy, j: usize, q: u8) -> Result<LocalOperator> {
    if !(1..=3).contains(&q) {
        return Err(Error::InvalidQuestion {
            question: format!("q={q}"),
            reason: "regularized combinations are labeled 1..=3",
        });
    }
    let raw = s.bob_combination(q, j)?;
    Ok(LocalOperator::new(regularize(&raw.op)?, raw.regs))
}

/// One symmetry residual `‖(S_q^{(j)} − T̂_q^{(j)})|ψ⟩‖`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SymmetryCell {
    pub chi: String,
    pub j: usize,
    pub q: u8,
    pub residual: f64,
}

/// One cross-position commutator residual `‖[O_q^{(j)}, O_r^{(k)}]|ψ⟩‖`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommCell {
    pub j: usize,
    pub k: usize,
    pub q: u8,
    pub r: u8,
    pub residual: f64,
}

/// One same-position anticommutator residual `‖{O_q^{(j)}, O_r^{(j)}}|ψ⟩‖`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AcommCell {
    pub j: usize,
    pub q: u8,
    pub r: u8,
    pub residual: f64,
}

/// One conjugation residual
/// `‖(I + S₁^{(j)}S₁^{(j+1)}S₂^{(j)}S₂^{(j+1)}S₃^{(j)}S₃^{(j+1)})|ψ⟩‖`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConjRelCell {
    pub chi: String,
    pub j: usize,
    pub residual: f64,
}

/// Every operator-relation residual for one special question, with
/// `eta = max` over all entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RelationReport {
    pub symmetry: Vec<SymmetryCell>,
    pub comm_bob: Vec<CommCell>,
    pub comm_alice: Vec<CommCell>,
    pub acomm_alice: Vec<AcommCell>,
    pub acomm_bob: Vec<AcommCell>,
    pub conj: Vec<ConjRelCell>,
    pub eta: f64,
}

impl RelationReport {
    /// The largest residual across every relation class.
    pub fn max_residual(&self) -> f64 {
        let mut m: f64 = 0.0;
        for c in &self.symmetry {
            m = m.max(c.residual);
        }
        for c in self.comm_bob.iter().chain(&self.comm_alice) {
            m = m.max(c.residual);
        }
        for c in self.acomm_alice.iter().chain(&self.acomm_bob) {
            m = m.max(c.residual);
        }
        for c in &self.conj {
            m = m.max(c.residual);
        }
        m
    }
}

/// Measures every operator relation for the special question `chi`.
///
/// With `S_q^{(j)}` Alice's marginal at `j` for `chi` with position `j`
/// replaced by `q`, and `T̂_q^{(j)}` Bob's regularized combination, the
/// residuals are vector norms on `|ψ⟩` of: `S − T̂` (symmetry), `[·,·]`
/// across distinct positions (both sides), `{·,·}` within a position (both
/// sides), and the six-fold conjugation product `I + Π_q S_q^{(j)}S_q^{(j+1)}`.
pub fn relation_check(s: &Strategy, chi: &Question) -> Result<RelationReport> {
    let n = s.n();
    if chi.len() != n {
        return Err(Error::DimensionMismatch {
            left: chi.len(),
            right: n,
            context: "question length vs n",
        });
    }
    chi.validate_alphabet(5)?;

    let mut s_ops: Vec<Vec<LocalOperator>> = Vec::with_capacity(n);
    let mut t_ops: Vec<Vec<LocalOperator>> = Vec::with_capacity(n);
    for j in 1..=n {
        let mut srow = Vec::with_capacity(3);
        let mut trow = Vec::with_capacity(3);
        for q in 1..=3u8 {
            srow.push(s.alice_observable(&chi.with_symbol(j, q)?, j)?);
            trow.push(regularized_q(s, j, q)?);
        }
        s_ops.push(srow);
        t_ops.push(trow);
    }
    let one = C64::new(1.0, 0.0);
    let minus = C64::new(-1.0, 0.0);
    let chi_str = chi.to_string();

    let mut report = RelationReport {
        symmetry: Vec::new(),
        comm_bob: Vec::new(),
        comm_alice: Vec::new(),
        acomm_alice: Vec::new(),
        acomm_bob: Vec::new(),
        conj: Vec::new(),
        eta: 0.0,
    };

    for j in 1..=n {
        for q in 1..=3u8 {
            let sq = &s_ops[j - 1][q as usize - 1];
            let tq = &t_ops[j - 1][q as usize - 1];
            let residual = s.residual_norm(&[(one, vec![sq]), (minus, vec![tq])])?;
            report.symmetry.push(SymmetryCell {
                chi: chi_str.clone(),
                j,
                q,
                residual,
            });
        }
    }

    for j in 1..=n {
        for k in (j + 1)..=n {
            for q in 1..=3u8 {
                for r in 1..=3u8 {
                    let (aq, ar) = (&s_ops[j - 1][q as usize - 1], &s_ops[k - 1][r as usize - 1]);
                    let residual =
                        s.residual_norm(&[(one, vec![aq, ar]), (minus, vec![ar, aq])])?;
                    report.comm_alice.push(CommCell {
                        j,
                        k,
                        q,
                        r,
                        residual,
                    });
                    let (tq, tr) = (&t_ops[j - 1][q as usize - 1], &t_ops[k - 1][r as usize - 1]);
                    let residual =
                        s.residual_norm(&[(one, vec![tq, tr]), (minus, vec![tr, tq])])?;
                    report.comm_bob.push(CommCell {
                        j,
                        k,
                        q,
                        r,
                        residual,
                    });
                }
            }
        }
    }

    for j in 1..=n {
        for q in 1..=3u8 {
            for r in (q + 1)..=3u8 {
                let (aq, ar) = (&s_ops[j - 1][q as usize - 1], &s_ops[j - 1][r as usize - 1]);
                let residual = s.residual_norm(&[(one, vec![aq, ar]), (one, vec![ar, aq])])?;
                report.acomm_alice.push(AcommCell { j, q, r, residual });
                let (tq, tr) = (&t_ops[j - 1][q as usize - 1], &t_ops[j - 1][r as usize - 1]);
                let residual = s.residual_norm(&[(one, vec![tq, tr]), (one, vec![tr, tq])])?;
                report.acomm_bob.push(AcommCell { j, q, r, residual });
            }
        }
    }

    for j in 1..n {
        let product = vec![
            &s_ops[j - 1][0],
            &s_ops[j][0],
            &s_ops[j - 1][1],
            &s_ops[j][1],
            &s_ops[j - 1][2],
            &s_ops[j][2],
        ];
        let residual = s.residual_norm(&[(one, vec![]), (one, product)])?;
        report.conj.push(ConjRelCell {
            chi: chi_str.clone(),
            j,
            residual,
        });
    }

    report.eta = report.max_residual();
    Ok(report)
}

/// One branch-coherence residual
/// `‖(I + σT̂₃^{(j)})(I + iT̂₂^{(j)}T̂₁^{(j)})(I − σT̂₃^{(j+1)})(I + iT̂₂^{(j+1)}T̂₁^{(j+1)})|ψ⟩‖`
/// for the sign choice `σ = sign`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GlobalConjCell {
    /// Left position of the adjacent pair `(j, j+1)`.
    pub j: usize,
    /// Sign on the `(I ± T̂₃^{(j)})` factor; position `j+1` gets the opposite.
    pub sign: i8,
    pub residual: f64,
}

/// `(I + sign·T̂₃^{(j)})(I + i T̂₂^{(j)} T̂₁^{(j)})` as one local operator.
fn branch_factor(s: &Strategy, j: usize, sign: f64) -> Result<LocalOperator> {
    let t1 = regularized_q(s, j, 1)?;
    let t2 = regularized_q(s, j, 2)?;
    let t3 = regularized_q(s, j, 3)?;
    let id = Operator::identity(t3.op.rows());
    let m3 = id.add_scaled(C64::new(sign, 0.0), &t3.op)?;
    let m21 = id.add_scaled(C64::new(0.0, 1.0), &t2.op.matmul(&t1.op)?)?;
    Ok(LocalOperator::new(m3.matmul(&m21)?, t3.regs))
}

/// Measures the cross-position branch relation for every adjacent pair and
/// both sign choices. When the strategy passes [`relation_check`] at `η`,
/// each residual is bounded by `118·η`. The residuals are reported verbatim;
/// whether the premise holds (the audit's conjugation cells) is the caller's
/// gate to enforce.
pub fn global_conj_check(s: &Strategy) -> Result<Vec<GlobalConjCell>> {
    let n = s.n();
    if n < 2 {
        return Err(Error::NoBellPairs(
            "the correlated-conjugation probe needs n ≥ 2".into(),
        ));
    }
    let one = C64::new(1.0, 0.0);
    let mut cells = Vec::with_capacity(2 * (n - 1));
    for j in 1..n {
        for sign in [1i8, -1] {
            let left = branch_factor(s, j, f64::from(sign))?;
            let right = branch_factor(s, j + 1, -f64::from(sign))?;
            let residual = s.residual_norm(&[(one, vec![&left, &right])])?;
            cells.push(GlobalConjCell { j, sign, residual });
        }
    }
    Ok(cells)
}

/// Distance of Bob's extracted observable at position `k` from its ideal
/// Pauli image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObservableCell {
    pub k: usize,
    pub q: u8,
    pub distance: f64,
}

/// Distance of a product of Alice's observables (positions with `s_j = 1`,
/// symbols taken from `chi`) from its ideal image.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProductCell {
    pub chi: String,
    pub s: String,
    pub distance: f64,
}

/// Everything the extraction isometry yields for one special question.
///
/// `v_b` is Bob's side of the isometry as an explicit `8ⁿ × 2ⁿ` matrix over
/// [`bob_isometry_layout`]; it depends only on Bob's operators, never on
/// `chi` or Alice — [`self_test_report`] enforces that by fingerprint.
#[derive(Clone, Debug)]
pub struct IsometryResult {
    pub chi: Question,
    /// `‖V|ψ⟩ − Φ⁺^{⊗n} ⊗ ξ‖` with `ξ` assembled from the junk vectors.
    pub extracted_state_distance: f64,
    /// `‖V S_q^{(k)}|ψ⟩ − reference‖` for all `k` and `q ∈ 1..=5`.
    pub observable_distances: Vec<ObservableCell>,
    /// Product-action distances for every subset of positions.
    pub product_distances: Vec<ProductCell>,
    /// `ξ₊ⁿ` on the original registers (the "as is" branch, subnormalized).
    pub junk_plus: StateVector,
    /// `ξ₋ⁿ` on the original registers (the conjugated branch).
    pub junk_minus: StateVector,
    /// `(⟨ξ₊|ξ₊⟩, ⟨ξ₋|ξ₋⟩)`; sums to 1 for strategies passing the relations.
    pub junk_weights: (f64, f64),
    /// Bob's isometry matrix (columns indexed by his original basis states).
    pub v_b: Operator,
    /// SHA-256 of `v_b` (row-major, little-endian `f64` re/im pairs).
    pub vb_fingerprint: String,
}

/// The register order of [`IsometryResult::v_b`]'s rows:
/// `B′₁..B′ₙ, B″₁..B″ₙ, B₁..Bₙ` — extracted qubits first, then the kickback
/// bits, then Bob's original system, matching how prepared states are
/// compared downstream.
pub fn bob_isometry_layout(n: usize) -> Result<Layout> {
    let mut regs = Vec::with_capacity(3 * n);
    for j in 1..=n as u32 {
        regs.push((Register::BSwap(j), 2));
    }
    for j in 1..=n as u32 {
        regs.push((Register::BKick(j), 2));
    }
    for j in 1..=n as u32 {
        regs.push((Register::B(j), 2));
    }
    Layout::new(regs)
}

/// SHA-256 hex fingerprint of a matrix: row-major entries, each as the
/// little-endian bytes of the real then imaginary part.
pub fn matrix_fingerprint(m: &Operator) -> String {
    let mut hasher = Sha256::new();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let e = m.entry(i, j);
            hasher.update(e.re.to_le_bytes());
            hasher.update(e.im.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

/// `‖a − b‖`.
fn distance(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.add_scaled(C64::new(-1.0, 0.0), b)?.norm())
}

fn hadamard(reg: Register) -> LocalOperator {
    let h = FRAC_1_SQRT_2;
    LocalOperator::new(
        Operator::from_rows(&[vec![(h, 0.0), (h, 0.0)], vec![(h, 0.0), (-h, 0.0)]]),
        vec![reg],
    )
}

/// `|0⟩⟨0| ⊗ I + |1⟩⟨1| ⊗ G` with the control as the leading tensor factor.
fn controlled(control: Register, g: &Operator, target_regs: &[Register]) -> LocalOperator {
    let d = g.rows();
    let mut mat = Array2::zeros((2 * d, 2 * d));
    for i in 0..d {
        mat[(i, i)] = C64::new(1.0, 0.0);
        for k in 0..d {
            mat[(d + i, d + k)] = g.entry(i, k);
        }
    }
    let mut regs = Vec::with_capacity(1 + target_regs.len());
    regs.push(control);
    regs.extend_from_slice(target_regs);
    LocalOperator::new(Operator::from_array(mat), regs)
}

fn phi_plus(a: Register, b: Register) -> Result<StateVector> {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let zero = C64::new(0.0, 0.0);
    StateVector::new(Layout::new(vec![(a, 2), (b, 2)])?, vec![h, zero, zero, h])
}

fn qubit_basis(reg: Register, bit: usize) -> Result<StateVector> {
    StateVector::basis_state(Layout::new(vec![(reg, 2)])?, bit)
}

/// `ξ_±ⁿ = (2√2)^{-n} Π_j (I ± T̂₃^{(j)})(I + iT̂₂^{(j)}T̂₁^{(j)}) |ψ⟩` on the
/// original registers.
fn junk_vector(sd: &Strategy, sign: f64) -> Result<StateVector> {
    let scale = C64::new(1.0 / (2.0 * SQRT_2), 0.0);
    let mut cur = sd.global_state()?.clone();
    for j in 1..=sd.n() {
        let f = branch_factor(sd, j, sign)?;
        cur = apply_to_registers(&cur, &f.op.scaled(scale), &f.regs)?;
    }
    Ok(cur)
}

/// The assembled extraction circuit for one strategy and special question.
struct Extractor {
    n: usize,
    sd: Strategy,
    chi: Question,
    orig_layout: Layout,
    ext_layout: Layout,
    anc_dim: usize,
    /// Full gate program, first-applied first: per stage `j`, the two swap
    /// blocks `W_A^{(j)}`, `W_B^{(j)}` followed immediately by the kickback
    /// blocks `K_A^{(j)}`, `K_B^{(j)}`.
    gates: Vec<LocalOperator>,
    /// Reference branch components `Φ⁺^{⊗n} ⊗ |β…β⟩_{A″B″} ⊗ ξ_±ⁿ`.
    comp: [StateVector; 2],
    xi_plus: StateVector,
    xi_minus: StateVector,
    v_b: Operator,
}

impl Extractor {
    fn new(s: &Strategy, chi: &Question) -> Result<Extractor> {
        let n = s.n();
        if chi.len() != n {
            return Err(Error::DimensionMismatch {
                left: chi.len(),
                right: n,
                context: "question length vs n",
            });
        }
        chi.validate_alphabet(5)?;
        let sd = s.densify()?;
        let orig_layout = sd.global_state()?.layout().clone();

        let mut regs = orig_layout.registers().to_vec();
        for j in 1..=n as u32 {
            regs.push((Register::ASwap(j), 2));
        }
        for j in 1..=n as u32 {
            regs.push((Register::AKick(j), 2));
        }
        for j in 1..=n as u32 {
            regs.push((Register::BSwap(j), 2));
        }
        for j in 1..=n as u32 {
            regs.push((Register::BKick(j), 2));
        }
        let ext_layout = Layout::new(regs)?;
        let anc_dim = 1usize << (4 * n);

        let minus_i = C64::new(0.0, -1.0);
        let plus_i = C64::new(0.0, 1.0);
        let mut gates = Vec::with_capacity(14 * n);
        let mut bob_gates = Vec::with_capacity(7 * n);
        for j in 1..=n {
            let s1 = sd.alice_observable(&chi.with_symbol(j, 1)?, j)?;
            let s2 = sd.alice_observable(&chi.with_symbol(j, 2)?, j)?;
            let s3 = sd.alice_observable(&chi.with_symbol(j, 3)?, j)?;
            let t1 = regularized_q(&sd, j, 1)?;
            let t2 = regularized_q(&sd, j, 2)?;
            let t3 = regularized_q(&sd, j, 3)?;
            let ju = j as u32;
            let s21 = s2.op.matmul(&s1.op)?.scaled(minus_i);
            let t21 = t2.op.matmul(&t1.op)?.scaled(plus_i);

            gates.push(hadamard(Register::ASwap(ju)));
            gates.push(controlled(Register::ASwap(ju), &s21, &s1.regs));
            gates.push(hadamard(Register::ASwap(ju)));
            gates.push(controlled(Register::ASwap(ju), &s1.op, &s1.regs));

            let wb = vec![
                hadamard(Register::BSwap(ju)),
                controlled(Register::BSwap(ju), &t21, &t1.regs),
                hadamard(Register::BSwap(ju)),
                controlled(Register::BSwap(ju), &t1.op, &t1.regs),
            ];
            gates.extend(wb.iter().cloned());

            gates.push(hadamard(Register::AKick(ju)));
            gates.push(controlled(Register::AKick(ju), &s3.op, &s3.regs));
            gates.push(hadamard(Register::AKick(ju)));

            let kb = vec![
                hadamard(Register::BKick(ju)),
                controlled(Register::BKick(ju), &t3.op, &t3.regs),
                hadamard(Register::BKick(ju)),
            ];
            gates.extend(kb.iter().cloned());

            bob_gates.extend(wb);
            bob_gates.extend(kb);
        }

        let xi_plus = junk_vector(&sd, 1.0)?;
        let xi_minus = junk_vector(&sd, -1.0)?;
        let comp = [
            branch_component(&ext_layout, n, &xi_plus, 0)?,
            branch_component(&ext_layout, n, &xi_minus, 1)?,
        ];
        let v_b = build_v_b(n, &bob_gates)?;

        Ok(Extractor {
            n,
            sd,
            chi: chi.clone(),
            orig_layout,
            ext_layout,
            anc_dim,
            gates,
            comp,
            xi_plus,
            xi_minus,
            v_b,
        })
    }

    /// Tensors the ancilla registers (all `|0⟩`) onto a state over the
    /// original registers.
    fn extend(&self, v: &StateVector) -> Result<StateVector> {
        if v.layout().dim() != self.orig_layout.dim() {
            return Err(Error::DimensionMismatch {
                left: v.layout().dim(),
                right: self.orig_layout.dim(),
                context: "state vs original registers",
            });
        }
        let mut out = StateVector::zeros(self.ext_layout.clone());
        for (i, amp) in v.amps().iter().enumerate() {
            out.amps_mut()[i * self.anc_dim] = *amp;
        }
        Ok(out)
    }

    /// `V|v⟩`: ancilla embedding followed by the full gate program.
    fn v_apply(&self, v: &StateVector) -> Result<StateVector> {
        let mut cur = self.extend(v)?;
        for g in &self.gates {
            cur = apply_to_registers(&cur, &g.op, &g.regs)?;
        }
        Ok(cur)
    }

    /// Reference image: Pauli actions on the extracted `B′` qubits applied to
    /// `comp₀ + branch_sign·comp₁`.
    fn reference(&self, paulis: &[(u32, Operator)], branch1_sign: f64) -> Result<StateVector> {
        let mut out = self.comp[0].add_scaled(C64::new(branch1_sign, 0.0), &self.comp[1])?;
        for (j, m) in paulis {
            out = apply_to_registers(&out, m, &[Register::BSwap(*j)])?;
        }
        Ok(out)
    }

    /// `‖V Π_{j∈positions} S_{χ_j}^{(j)} |ψ⟩ − reference‖`, the reference
    /// being the matching Pauli product on the `B′` qubits with the
    /// conjugated branch picking up `(−1)` per selected z position.
    fn product_distance(&self, positions: &[usize]) -> Result<f64> {
        let mut seen = vec![false; self.n + 1];
        for &j in positions {
            if j == 0 || j > self.n || seen[j] {
                return Err(Error::InvalidQuestion {
                    question: format!("positions {positions:?}"),
                    reason: "positions must be distinct and within 1..=n",
                });
            }
            seen[j] = true;
        }
        let mut cur = self.sd.global_state()?.clone();
        for &j in positions.iter().rev() {
            let op = self.sd.alice_observable(&self.chi, j)?;
            cur = apply_to_registers(&cur, &op.op, &op.regs)?;
        }
        let img = self.v_apply(&cur)?;

        let mut paulis = Vec::with_capacity(positions.len());
        let mut z_count = 0usize;
        for &j in positions {
            let b = self.chi.basis_at(j)?;
            if b == Basis::Z {
                z_count += 1;
            }
            paulis.push((j as u32, pauli(b)));
        }
        let sign = if z_count % 2 == 1 { -1.0 } else { 1.0 };
        distance(&img, &self.reference(&paulis, sign)?)
    }
}

fn branch_component(
    ext_layout: &Layout,
    n: usize,
    xi: &StateVector,
    beta: usize,
) -> Result<StateVector> {
    let mut factors: Vec<StateVector> = vec![xi.clone()];
    for j in 1..=n as u32 {
        factors.push(phi_plus(Register::ASwap(j), Register::BSwap(j))?);
    }
    for j in 1..=n as u32 {
        factors.push(qubit_basis(Register::AKick(j), beta)?);
    }
    for j in 1..=n as u32 {
        factors.push(qubit_basis(Register::BKick(j), beta)?);
    }
    let refs: Vec<&StateVector> = factors.iter().collect();
    embed_product_state(ext_layout, &refs)
}

/// Bob's isometry as an explicit matrix: his gate program applied to each of
/// his basis states with fresh `|0⟩` ancillae.
fn build_v_b(n: usize, bob_gates: &[LocalOperator]) -> Result<Operator> {
    let layout = bob_isometry_layout(n)?;
    let rows = layout.dim();
    let cols = 1usize << n;
    let mut mat = Array2::zeros((rows, cols));
    for b in 0..cols {
        // The B block is least significant in the layout, so basis state `b`
        // of Bob's system with all-|0⟩ ancillae sits at index `b`.
        let mut col = StateVector::basis_state(layout.clone(), b)?;
        for g in bob_gates {
            col = apply_to_registers(&col, &g.op, &g.regs)?;
        }
        for (i, amp) in col.amps().iter().enumerate() {
            mat[(i, b)] = *amp;
        }
    }
    Ok(Operator::from_array(mat))
}

/// Builds the per-position swap/kickback isometry `V = V^{(n)} … V^{(1)}`
/// from the strategy's own operators (`S_q^{(j)}` Alice's marginals for `chi`
/// with position `j` replaced, `T̂_q^{(j)}` Bob's regularized combinations),
/// applies it, and measures every self-testing distance.
///
/// Dense path only: the strategy is densified, so `n` is capped at
/// [`crate::DENSE_N_CAP`].
pub fn apply_isometry(s: &Strategy, chi: &Question) -> Result<IsometryResult> {
    let ex = Extractor::new(s, chi)?;
    let psi = ex.sd.global_state()?.clone();

    let v_psi = ex.v_apply(&psi)?;
    let extracted_state_distance = distance(&v_psi, &ex.reference(&[], 1.0)?)?;

    let mut observable_distances = Vec::with_capacity(5 * ex.n);
    for k in 1..=ex.n {
        for q in 1..=5u8 {
            let op = ex.sd.alice_observable(&chi.with_symbol(k, q)?, k)?;
            let img = ex.v_apply(&apply_to_registers(&psi, &op.op, &op.regs)?)?;
            let m = pauli(Basis::from_symbol(q)?);
            let sign = if q == 3 { -1.0 } else { 1.0 };
            let refv = ex.reference(&[(k as u32, m)], sign)?;
            observable_distances.push(ObservableCell {
                k,
                q,
                distance: distance(&img, &refv)?,
            });
        }
    }

    let mut product_distances = Vec::with_capacity(1 << ex.n);
    for mask in 0..(1usize << ex.n) {
        let positions: Vec<usize> = (1..=ex.n).filter(|j| mask >> (j - 1) & 1 == 1).collect();
        let d = ex.product_distance(&positions)?;
        let bits: String = (1..=ex.n)
            .map(|j| if mask >> (j - 1) & 1 == 1 { '1' } else { '0' })
            .collect();
        product_distances.push(ProductCell {
            chi: chi.to_string(),
            s: bits,
            distance: d,
        });
    }

    let junk_weights = (ex.xi_plus.norm().powi(2), ex.xi_minus.norm().powi(2));
    let vb_fingerprint = matrix_fingerprint(&ex.v_b);
    Ok(IsometryResult {
        chi: ex.chi,
        extracted_state_distance,
        observable_distances,
        product_distances,
        junk_plus: ex.xi_plus,
        junk_minus: ex.xi_minus,
        junk_weights,
        v_b: ex.v_b,
        vb_fingerprint,
    })
}

/// Distance of the combined action `V Π_{j∈positions} S_{χ_j}^{(j)} |ψ⟩` from
/// its reference image. When each selected observable individually extracts
/// within `δ` (and the state within the same `δ`), the product stays within
/// `(2m+1)·δ`.
pub fn product_action_check(s: &Strategy, chi: &Question, positions: &[usize]) -> Result<f64> {
    let ex = Extractor::new(s, chi)?;
    ex.product_distance(positions)
}

/// The aggregated self-test over every special question: per-question `η`,
/// worst-case distances, junk weights, and the (required-identical) B-side
/// isometry fingerprint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelfTestReport {
    /// `chi → eta` from [`relation_check`].
    pub eta_table: BTreeMap<String, f64>,
    /// Largest relation residual over all special questions.
    pub eta: f64,
    /// Largest extracted-state distance over all special questions.
    pub state_distance: f64,
    /// `"k,q" → distance`, maximized over special questions.
    pub observable_distances: BTreeMap<String, f64>,
    /// `"chi:s" → distance` for every position subset of every special
    /// question.
    pub product_distances: BTreeMap<String, f64>,
    pub junk_weights: [f64; 2],
    /// SHA-256 of Bob's isometry matrix; identical across special questions.
    pub vb_fingerprint: String,
}

impl SelfTestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<SelfTestReport> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Runs [`relation_check`] and [`apply_isometry`] for every special question
/// and aggregates. Errors if the B-side isometry fingerprint ever differs
/// between special questions — it cannot, by construction, and that
/// independence is part of what the report certifies.
pub fn self_test_report(s: &Strategy, specials: &QuestionSet) -> Result<SelfTestReport> {
    if specials.is_empty() {
        return Err(Error::InvalidQuestion {
            question: "∅".into(),
            reason: "at least one special question is required",
        });
    }
    let mut eta_table = BTreeMap::new();
    let mut eta: f64 = 0.0;
    let mut state_distance: f64 = 0.0;
    let mut observable_distances: BTreeMap<String, f64> = BTreeMap::new();
    let mut product_distances: BTreeMap<String, f64> = BTreeMap::new();
    let mut fingerprint: Option<String> = None;
    let mut junk_weights = [0.0, 0.0];

    for chi in specials.members() {
        let rel = relation_check(s, chi)?;
        eta = eta.max(rel.eta);
        eta_table.insert(chi.to_string(), rel.eta);

        let iso = apply_isometry(s, chi)?;
        state_distance = state_distance.max(iso.extracted_state_distance);
        for cell in &iso.observable_distances {
            let entry = observable_distances
                .entry(format!("{},{}", cell.k, cell.q))
                .or_insert(0.0);
            *entry = entry.max(cell.distance);
        }
        for cell in &iso.product_distances {
            product_distances.insert(format!("{}:{}", cell.chi, cell.s), cell.distance);
        }
        match &fingerprint {
            None => {
                fingerprint = Some(iso.vb_fingerprint.clone());
                junk_weights = [iso.junk_weights.0, iso.junk_weights.1];
            }
            Some(f) if *f != iso.vb_fingerprint => {
                return Err(Error::LayoutMismatch {
                    context: "B-side isometry varies across special questions",
                });
            }
            _ => {}
        }
    }

    Ok(SelfTestReport {
        eta_table,
        eta,
        state_distance,
        observable_distances,
        product_distances,
        junk_weights,
        vb_fingerprint: fingerprint.expect("at least one special question"),
    })
}
