//! Remote state preparation: Bob's post-measurement states against the ideal
//! targets, and the probabilistic trace-distance tail bound.
//!
//! Once the extraction isometry certifies a strategy ([`crate::selftest`]),
//! Alice's measurement of a special question `χ` steers Bob's system into a
//! definite state per outcome `a`. This module computes those reduced states
//! exactly ([`post_measurement_rho`]), pushes them through Bob's isometry,
//! and compares against the ideal pair of branches ([`ideal_target`]): the
//! requested eigenstate product `e_{a|χ}` riding with junk `β₀`, and its
//! conjugated twin `e*_{a|χ}` (outcomes flipped at z positions) riding with
//! `β₁`. Per-outcome trace distances, Born probabilities, and the
//! probability mass exceeding a threshold are gathered into a [`PrepReport`].
//!
//! The threshold machinery follows a Markov-type tail bound: if the measured
//! product-observable distances are within `γ`, then the trace distance
//! exceeds `γ^{2/3}` with probability at most `4γ^{2/3}` over outcomes.
//! [`robust_prob_oracle`] checks the underlying lemma directly on synthetic
//! vector families.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::linalg::{
    apply_to_registers, embed_product_state, kron, partial_trace, trace_norm, Layout, Operator,
    Register, StateVector,
};
use crate::quantum::{conjugate_outcomes, eigenstate_on, outcomes_from_index, Outcome};
use crate::selftest::apply_isometry;
use crate::{Error, Question, Result, Strategy};

/// Outcomes with Born probability below this cutoff carry no usable
/// probability mass: they are rejected by [`post_measurement_rho`] and
/// excluded from distance statistics.
pub const PROB_CUTOFF: f64 = 1e-12;

/// Compact `+-…` rendering of an outcome string.
fn outcome_string(a: &[Outcome]) -> String {
    a.iter().map(|o| o.to_string()).collect()
}

/// Alice's projection applied to the shared state: the (unnormalized)
/// post-measurement vector and its squared norm `p(a)`.
fn projected_state(sd: &Strategy, chi: &Question, a: &[Outcome]) -> Result<(f64, StateVector)> {
    let mut cur = sd.global_state()?.clone();
    for proj in sd.alice_outcome_projectors(chi, a)? {
        cur = apply_to_registers(&cur, &proj.op, &proj.regs)?;
    }
    let p = cur.norm().powi(2);
    Ok((p, cur))
}

/// Bob's registers in ascending order, the row order of reduced states.
fn b_block(n: usize) -> Vec<Register> {
    (1..=n as u32).map(Register::B).collect()
}

/// Bob's reduced state after Alice measures `chi` and announces `a`:
/// `tr_A (Π_{a|χ} |ψ⟩⟨ψ| Π_{a|χ}) / p(a)`.
///
/// Rows/columns are ordered `B₁..Bₙ`. Outcomes with `p(a)` below
/// [`PROB_CUTOFF`] are rejected.
pub fn post_measurement_rho(s: &Strategy, chi: &Question, a: &[Outcome]) -> Result<Operator> {
    let sd = s.densify()?;
    let (p, mut v) = projected_state(&sd, chi, a)?;
    if p < PROB_CUTOFF {
        return Err(Error::ZeroProbability {
            outcome: outcome_string(a),
            prob: p,
        });
    }
    v.scale(C64::new(1.0 / p.sqrt(), 0.0));
    partial_trace(&v.density(), v.layout(), &b_block(sd.n()))
}

/// The ideal prepared state on registers `(B′, B″, B)`:
/// `|e_{a|χ}⟩⟨e| ⊗ |0…0⟩⟨0…0| ⊗ β₀ + |e*_{a|χ}⟩⟨e*| ⊗ |1…1⟩⟨1…1| ⊗ β₁`,
/// where `e` is the product of requested eigenstates, `e*` flips the
/// outcomes at z positions, and the middle register is the kickback flag
/// separating the two branches.
///
/// `β₀`/`β₁` are the (subnormalized) junk operators on Bob's original
/// system; their traces are expected to sum to 1 but are not enforced here.
pub fn ideal_target(
    chi: &Question,
    a: &[Outcome],
    beta0: &Operator,
    beta1: &Operator,
) -> Result<Operator> {
    let n = chi.len();
    chi.validate_alphabet(5)?;
    if a.len() != n {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: n,
            context: "outcome string vs question length",
        });
    }
    let dim = 1usize << n;
    for beta in [beta0, beta1] {
        if beta.rows() != dim || beta.cols() != dim {
            return Err(Error::DimensionMismatch {
                left: beta.rows(),
                right: dim,
                context: "junk operator vs B block",
            });
        }
    }
    let flipped = conjugate_outcomes(a, chi)?;
    let branch0 = branch_projector(chi, a, 0)?;
    let branch1 = branch_projector(chi, &flipped, 1)?;
    kron(&branch0, beta0).add(&kron(&branch1, beta1))
}

/// `|e⟩⟨e| ⊗ |β…β⟩⟨β…β|` on the `(B′, B″)` registers.
fn branch_projector(chi: &Question, a: &[Outcome], flag: usize) -> Result<Operator> {
    let n = chi.len();
    let mut regs = Vec::with_capacity(2 * n);
    for j in 1..=n as u32 {
        regs.push((Register::BSwap(j), 2));
    }
    for j in 1..=n as u32 {
        regs.push((Register::BKick(j), 2));
    }
    let layout = Layout::new(regs)?;
    let mut factors: Vec<StateVector> = Vec::with_capacity(2 * n);
    for j in 1..=n {
        factors.push(eigenstate_on(
            chi.basis_at(j)?,
            a[j - 1],
            Register::BSwap(j as u32),
        ));
    }
    for j in 1..=n as u32 {
        factors.push(StateVector::basis_state(
            Layout::new(vec![(Register::BKick(j), 2)])?,
            flag,
        )?);
    }
    let refs: Vec<&StateVector> = factors.iter().collect();
    Ok(embed_product_state(&layout, &refs)?.density())
}

/// Per-outcome verification of remote state preparation for one special
/// question.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrepReport {
    pub chi: String,
    /// `a → (p(a), D(a))` for every outcome with `p(a)` above the cutoff.
    pub per_outcome: BTreeMap<String, (f64, f64)>,
    /// `tr β₀`, the weight of the as-is branch.
    pub beta0_trace: f64,
    /// `tr β₁`, the weight of the conjugated branch.
    pub beta1_trace: f64,
    /// Distances above this count towards [`PrepReport::exceed_probability`].
    pub threshold: f64,
    /// Total probability mass of outcomes with `D(a) > threshold`.
    pub exceed_probability: f64,
}

impl PrepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<PrepReport> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Computes `D(a) = ½‖V_B ρ_B^{a|χ} V_B† − target‖₁` for every outcome of
/// the special question, with `β₀`/`β₁` reduced from the extraction
/// isometry's junk vectors.
///
/// `threshold`: pass `None` for the default `γ^{2/3}`, where `γ` is the
/// largest measured product-observable distance (the tail bound then reads
/// `exceed_probability ≤ 4·threshold`). `γ` is floored at [`PROB_CUTOFF`] so
/// the exact case is not spoiled by floating-point noise.
pub fn prep_distance_report(
    s: &Strategy,
    chi: &Question,
    threshold: Option<f64>,
) -> Result<PrepReport> {
    let sd = s.densify()?;
    let n = sd.n();
    let iso = apply_isometry(s, chi)?;
    let keep = b_block(n);
    let orig_layout = sd.global_state()?.layout().clone();
    let beta0 = partial_trace(&iso.junk_plus.density(), &orig_layout, &keep)?;
    let beta1 = partial_trace(&iso.junk_minus.density(), &orig_layout, &keep)?;

    let gamma = iso
        .product_distances
        .iter()
        .map(|c| c.distance)
        .fold(0.0f64, f64::max);
    let threshold = threshold.unwrap_or_else(|| gamma.max(PROB_CUTOFF).powf(2.0 / 3.0));

    let v_b_dag = iso.v_b.dagger();
    let mut per_outcome = BTreeMap::new();
    let mut exceed_probability = 0.0;
    for idx in 0..(1usize << n) {
        let a = outcomes_from_index(idx, n);
        let (p, mut v) = projected_state(&sd, chi, &a)?;
        if p < PROB_CUTOFF {
            continue;
        }
        v.scale(C64::new(1.0 / p.sqrt(), 0.0));
        let rho = partial_trace(&v.density(), &orig_layout, &keep)?;
        let pushed = iso.v_b.matmul(&rho)?.matmul(&v_b_dag)?;
        let target = ideal_target(chi, &a, &beta0, &beta1)?;
        let d = 0.5 * trace_norm(&pushed.sub(&target)?)?;
        if d > threshold {
            exceed_probability += p;
        }
        per_outcome.insert(outcome_string(&a), (p, d));
    }

    Ok(PrepReport {
        chi: chi.to_string(),
        per_outcome,
        beta0_trace: beta0.trace().re,
        beta1_trace: beta1.trace().re,
        threshold,
        exceed_probability,
    })
}

/// One `σ` row of a family for [`robust_prob_oracle`]: the weight `π(σ)`
/// and, per `ω`, the pair of raw vectors `(u_σ^ω, v_σ^ω)`. The `u` row must
/// satisfy `Σ_ω ‖u_σ^ω‖² = 1`; `v` must be nonzero wherever the joint
/// probability `π(σ)‖u_σ^ω‖²` is.
#[derive(Clone, Debug)]
pub struct VectorFamily {
    pub weight: f64,
    pub pairs: Vec<(Vec<C64>, Vec<C64>)>,
}

/// Result of checking the trace-distance tail bound on vector families.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustProbOutcome {
    /// Probability mass with `D(σ,ω) > δ^c`.
    pub exceed_fraction: f64,
    /// The guaranteed ceiling `4·δ^{2(1−c)}` on that mass.
    pub bound: f64,
    /// `δ^c`.
    pub threshold: f64,
    /// Measured `Σ_σ π(σ) Σ_ω ‖u − v‖²`, to compare against `δ²`.
    pub hypothesis_lhs: f64,
    /// Whether the hypothesis `hypothesis_lhs ≤ δ²` actually holds; the
    /// bound is only meaningful when it does. Reported, never asserted.
    pub hypothesis_holds: bool,
}

/// Draws a random problem instance for [`robust_prob_oracle`]: one to three
/// `σ` rows with random weights, each holding up to four vector pairs of
/// dimension up to four, with `v` a random perturbation of `u`. Returns the
/// families together with the `δ` that saturates the hypothesis exactly
/// (`δ²` equals the measured left-hand side), the hardest instance the
/// bound must still cover.
pub fn random_families<R: rand::Rng>(rng: &mut R) -> (Vec<VectorFamily>, f64) {
    let n_sigma = rng.random_range(1..=3usize);
    let raw: Vec<f64> = (0..n_sigma).map(|_| rng.random::<f64>() + 0.01).collect();
    let wsum: f64 = raw.iter().sum();
    let mut families = Vec::with_capacity(n_sigma);
    let mut lhs = 0.0;
    for w in &raw {
        let weight = w / wsum;
        let n_omega = rng.random_range(1..=4usize);
        let dim = rng.random_range(1..=4usize);
        let mut us: Vec<Vec<C64>> = (0..n_omega)
            .map(|_| {
                (0..dim)
                    .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect()
            })
            .collect();
        let mass: f64 = us.iter().flat_map(|u| u.iter()).map(|z| z.norm_sqr()).sum();
        let scale = C64::new(1.0 / mass.sqrt(), 0.0);
        for u in &mut us {
            for z in u.iter_mut() {
                *z *= scale;
            }
        }
        let eps = 0.3 * rng.random::<f64>();
        let pairs: Vec<(Vec<C64>, Vec<C64>)> = us
            .into_iter()
            .map(|u| {
                let v: Vec<C64> = u
                    .iter()
                    .map(|z| {
                        z + C64::new(
                            eps * (rng.random::<f64>() - 0.5),
                            eps * (rng.random::<f64>() - 0.5),
                        )
                    })
                    .collect();
                lhs += weight
                    * u.iter()
                        .zip(&v)
                        .map(|(a, b)| (a - b).norm_sqr())
                        .sum::<f64>();
                (u, v)
            })
            .collect();
        families.push(VectorFamily { weight, pairs });
    }
    (families, lhs.sqrt())
}

/// Evaluates the probabilistic trace-distance lemma on explicit families:
/// with `p(σ,ω) = π(σ)‖u_σ^ω‖²` and `D(σ,ω)` the trace distance between the
/// normalized `u` and `v`, it measures the mass of `{D > δ^c}` and returns
/// it alongside the bound `4·δ^{2(1−c)}` that holds whenever
/// `Σ_σ π(σ) Σ_ω ‖u−v‖² ≤ δ²`.
pub fn robust_prob_oracle(
    families: &[VectorFamily],
    delta: f64,
    c: f64,
) -> Result<RobustProbOutcome> {
    if c.is_nan() || c <= 0.0 || delta < 0.0 {
        return Err(Error::InvalidQuestion {
            question: format!("delta={delta}, c={c}"),
            reason: "tail bound needs delta ≥ 0 and c > 0",
        });
    }
    let total_weight: f64 = families.iter().map(|f| f.weight).sum();
    if families.iter().any(|f| f.weight < 0.0) || (total_weight - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { norm: total_weight });
    }

    let threshold = delta.powf(c);
    let mut exceed_fraction = 0.0;
    let mut hypothesis_lhs = 0.0;
    for (i, family) in families.iter().enumerate() {
        let mut row_mass = 0.0;
        for (k, (u, v)) in family.pairs.iter().enumerate() {
            if u.len() != v.len() {
                return Err(Error::DimensionMismatch {
                    left: u.len(),
                    right: v.len(),
                    context: "paired vectors",
                });
            }
            let nu2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
            let nv2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            row_mass += nu2;
            hypothesis_lhs += family.weight
                * u.iter()
                    .zip(v)
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>();
            let p = family.weight * nu2;
            if p > 0.0 {
                if nv2 == 0.0 {
                    return Err(Error::ZeroProbability {
                        outcome: format!("reference vector (sigma={i}, omega={k})"),
                        prob: 0.0,
                    });
                }
                let overlap: C64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
                let d = (1.0 - overlap.norm_sqr() / (nu2 * nv2)).max(0.0).sqrt();
                if d > threshold {
                    exceed_fraction += p;
                }
            }
        }
        if family.weight > 0.0 && (row_mass - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { norm: row_mass });
        }
    }

    Ok(RobustProbOutcome {
        exceed_fraction,
        bound: 4.0 * delta.powf(2.0 * (1.0 - c)),
        threshold,
        hypothesis_lhs,
        hypothesis_holds: hypothesis_lhs <= delta * delta + 1e-12,
    })
}
