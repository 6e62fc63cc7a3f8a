//! Audit of the requested Bell correlations: exact evaluation for a given
//! strategy, statistical estimation from trial logs, and the sum-of-squares
//! residuals that drive the self-testing bounds.
//!
//! Three families of requests are checked, each with its own tolerance
//! convention folded into one global `ε`:
//!
//! * **Triple CHSH** at every position `j` and every reduced question
//!   `x̂_j ∈ ℛ^{(j)}`: value ≥ 6√2 − ε/√2 (deficit rescaled ×√2).
//! * **Perfect correlations** `⟨A₄ ⊗ D_{x,y}⟩` and `⟨A₅ ⊗ E_{x,y}⟩` at every
//!   special question and position: value ≥ 1 − ε.
//! * **Conjugation correlations** tying adjacent positions through the Bell
//!   family, for one fixed special question: value ≥ 1 − ε/2 (deficit ×2).

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::SQRT_2;

use crate::questions::{insert_position, reduced_set, QuestionSet};
use crate::strategy::{BobAnswer, BobQuestion, LocalOperator, Strategy};
use crate::{chsh_max, Error, Outcome, Question, Result};

/// The 12 signed constituents of the triple CHSH expression, as
/// `(Alice symbol q, Bob label y, sign)`:
/// `C = A₃(B₁+B₂) + A₁(B₁−B₂) + A₃(B₃+B₄) + A₂(B₃−B₄) + A₁(B₅+B₆) + A₂(B₅−B₆)`.
pub const TRIPLE_TERMS: [(u8, u8, f64); 12] = [
    (3, 1, 1.0),
    (3, 2, 1.0),
    (1, 1, 1.0),
    (1, 2, -1.0),
    (3, 3, 1.0),
    (3, 4, 1.0),
    (2, 3, 1.0),
    (2, 4, -1.0),
    (1, 5, 1.0),
    (1, 6, 1.0),
    (2, 5, 1.0),
    (2, 6, -1.0),
];

/// Signs attached to the four Bell outcomes in the conjugation request for
/// Alice symbol `q`: `((−1)^{[q=2]}, (−1)^{[q=1]}, (−1)^{[q=3]}, −1)`.
pub fn conj_signs(q: u8) -> Result<[f64; 4]> {
    let flip = |cond: bool| if cond { -1.0 } else { 1.0 };
    if !(1..=3).contains(&q) {
        return Err(Error::InvalidQuestion {
            question: format!("q={q}"),
            reason: "conjugation checks use q in 1..=3",
        });
    }
    Ok([flip(q == 2), flip(q == 1), flip(q == 3), -1.0])
}

/// `⟨C^{(j)}_{x̂_j}⟩`: the triple CHSH value at position `j` for the reduced
/// question `x̂_j` (length `n−1`), assembled from the 12 constituents.
pub fn triple_chsh_value(s: &Strategy, j: usize, xj: &Question) -> Result<f64> {
    check_reduced(s, j, xj)?;
    let mut total = 0.0;
    for (q, y, sign) in TRIPLE_TERMS {
        let x = insert_position(xj, j, q)?;
        let a = s.alice_observable(&x, j)?;
        let b = s.bob_observable(y, j)?;
        total += sign * s.correlator(&[&a, &b])?;
    }
    Ok(total)
}

/// `⟨A₄ ⊗ D_{x,y}⟩` (`which = 4`) or `⟨A₅ ⊗ E_{x,y}⟩` (`which = 5`) at
/// position `j`, with Alice asked the special question `χ` modified to carry
/// the extra symbol at position `j`.
pub fn perfect_corr_value(s: &Strategy, j: usize, chi: &Question, which: u8) -> Result<f64> {
    let y = match which {
        4 => 5,
        5 => 6,
        other => {
            return Err(Error::InvalidQuestion {
                question: format!("which={other}"),
                reason: "perfect correlations use symbols 4 and 5",
            })
        }
    };
    let x = chi.with_symbol(j, which)?;
    let a = s.alice_observable(&x, j)?;
    let b = s.bob_observable(y, j)?;
    s.correlator(&[&a, &b])
}

/// The conjugation correlation at adjacent positions `(j, j+1)` for Alice
/// symbol `q`, built on `w = χ` with positions `j, j+1` replaced by `q`:
/// `⟨A_w^{(j)} A_w^{(j+1)} ⊗ Σ_b s_b Γ_b^{(j)}⟩`.
pub fn conj_corr_value(s: &Strategy, j: usize, q: u8, chi: &Question) -> Result<f64> {
    if j == 0 || j >= s.n() {
        return Err(Error::NoBellPairs(format!(
            "conjugation checks need 1 ≤ j < n = {}",
            s.n()
        )));
    }
    let signs = conj_signs(q)?;
    let w = chi.with_symbol(j, q)?.with_symbol(j + 1, q)?;
    let a1 = s.alice_observable(&w, j)?;
    let a2 = s.alice_observable(&w, j + 1)?;
    let g0 = s.gamma(j, 1)?;
    let mut signed = g0.op.scaled(num_complex::Complex64::new(signs[0], 0.0));
    for b in 2..=4u8 {
        let g = s.gamma(j, b)?;
        signed = signed.add_scaled(
            num_complex::Complex64::new(signs[b as usize - 1], 0.0),
            &g.op,
        )?;
    }
    let gamma_sum = LocalOperator::new(signed, g0.regs);
    s.correlator(&[&a1, &a2, &gamma_sum])
}

/// The six sum-of-squares residuals `‖F_i|ψ⟩‖` at position `j` for reduced
/// question `x̂_j`, where `6√2·I − C = (1/√2) Σ_i F_i²` with
/// `F = A_q − (B_y ± B_{y'})/√2` pairs matching the three CHSH blocks.
/// Each residual obeys `‖F_i|ψ⟩‖ ≤ √(deficit·√2)` for the cell's deficit.
pub fn sos_residuals(s: &Strategy, j: usize, xj: &Question) -> Result<Vec<f64>> {
    check_reduced(s, j, xj)?;
    let mut out = Vec::with_capacity(6);
    for (q, y_plus, y_minus) in SOS_PAIRS {
        let x = insert_position(xj, j, q)?;
        let a = s.alice_observable(&x, j)?;
        let by = s.bob_observable(y_plus, j)?;
        let byp = s.bob_observable(y_minus.unsigned_abs(), j)?;
        let sign = if y_minus < 0 { -1.0 } else { 1.0 };
        let comb = LocalOperator::new(
            by.op
                .add_scaled(num_complex::Complex64::new(sign, 0.0), &byp.op)?
                .scaled(num_complex::Complex64::new(
                    std::f64::consts::FRAC_1_SQRT_2,
                    0.0,
                )),
            by.regs,
        );
        let one = num_complex::Complex64::new(1.0, 0.0);
        out.push(s.residual_norm(&[(one, vec![&a]), (-one, vec![&comb])])?);
    }
    Ok(out)
}

/// `(q, y, ±y′)` triples defining the six SOS terms `A_q − (B_y ± B_{y′})/√2`.
const SOS_PAIRS: [(u8, u8, i8); 6] = [
    (3, 1, 2),
    (1, 1, -2),
    (3, 3, 4),
    (2, 3, -4),
    (1, 5, 6),
    (2, 5, -6),
];

fn check_reduced(s: &Strategy, j: usize, xj: &Question) -> Result<()> {
    if j == 0 || j > s.n() {
        return Err(Error::InvalidQuestion {
            question: format!("j={j}"),
            reason: "position out of range",
        });
    }
    if xj.len() + 1 != s.n() {
        return Err(Error::DimensionMismatch {
            left: xj.len(),
            right: s.n() - 1,
            context: "reduced question length",
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Audit report
// ---------------------------------------------------------------------------

/// One triple CHSH cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TripleCell {
    pub j: usize,
    pub xj: String,
    pub value: f64,
    /// `6√2 − value` (raw, may be negative).
    pub deficit: f64,
    /// Confidence radius (sum of the 12 constituent radii); `None` for exact
    /// audits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

/// One perfect-correlation cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerfectCell {
    pub j: usize,
    pub chi: String,
    pub which: u8,
    pub value: f64,
    /// `1 − value` (raw).
    pub deficit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

/// One conjugation cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConjCell {
    pub j: usize,
    pub q: u8,
    pub chi: String,
    pub value: f64,
    /// `1 − value` (raw).
    pub deficit: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

/// Result of a full audit: every requested cell with its value and deficit,
/// the derived global tolerance `ε`, and the number of scalar correlators
/// evaluated.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuditReport {
    pub n: usize,
    pub m: u8,
    pub specials: Vec<String>,
    pub triple_chsh: Vec<TripleCell>,
    pub perfect_corr: Vec<PerfectCell>,
    pub conj_corr: Vec<ConjCell>,
    /// `max(0, max over cells of rescaled deficit)`: triple ×√2, perfect ×1,
    /// conjugation ×2.
    pub epsilon: f64,
    pub correlator_count: usize,
}

impl AuditReport {
    /// JSON serialization (pretty-printed, stable field order).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses a report back from JSON.
    pub fn from_json(text: &str) -> Result<AuditReport> {
        Ok(serde_json::from_str(text)?)
    }

    fn assemble(
        n: usize,
        m: u8,
        specials: &QuestionSet,
        triple_chsh: Vec<TripleCell>,
        perfect_corr: Vec<PerfectCell>,
        conj_corr: Vec<ConjCell>,
    ) -> AuditReport {
        let mut epsilon: f64 = 0.0;
        for c in &triple_chsh {
            epsilon = epsilon.max(c.deficit * SQRT_2);
        }
        for c in &perfect_corr {
            epsilon = epsilon.max(c.deficit);
        }
        for c in &conj_corr {
            epsilon = epsilon.max(2.0 * c.deficit);
        }
        let correlator_count = 12 * triple_chsh.len() + perfect_corr.len() + conj_corr.len();
        AuditReport {
            n,
            m,
            specials: specials.members().iter().map(|q| q.to_string()).collect(),
            triple_chsh,
            perfect_corr,
            conj_corr,
            epsilon,
            correlator_count,
        }
    }
}

/// The audit cell coordinates implied by a special-question set: triple CHSH
/// over `j × ℛ^{(j)}`, perfect correlations over `𝒮 × j × {4,5}`, and
/// conjugation cells `(j, q)` for the first special question.
struct AuditCells {
    triple: Vec<(usize, Question)>,
    perfect: Vec<(usize, Question, u8)>,
    conj: Vec<(usize, u8, Question)>,
}

fn audit_cells(specials: &QuestionSet, n: usize) -> Result<AuditCells> {
    if specials.is_empty() {
        return Err(Error::InvalidQuestion {
            question: "𝒮".into(),
            reason: "special-question set is empty",
        });
    }
    if specials.n() != n {
        return Err(Error::DimensionMismatch {
            left: specials.n(),
            right: n,
            context: "special questions vs strategy size",
        });
    }
    let mut triple = Vec::new();
    for j in 1..=n {
        for xj in reduced_set(specials, j)?.members() {
            triple.push((j, xj.clone()));
        }
    }
    let mut perfect = Vec::new();
    for chi in specials.members() {
        for j in 1..=n {
            for which in [4u8, 5u8] {
                perfect.push((j, chi.clone(), which));
            }
        }
    }
    let mut conj = Vec::new();
    if n >= 2 {
        // One fixed special question suffices; the set is sorted, so the
        // first member is a deterministic choice.
        let chi = &specials.members()[0];
        for j in 1..n {
            for q in 1..=3u8 {
                conj.push((j, q, chi.clone()));
            }
        }
    }
    Ok(AuditCells {
        triple,
        perfect,
        conj,
    })
}

/// Exact audit of a strategy against the full request set derived from the
/// special questions.
pub fn full_audit(s: &Strategy, specials: &QuestionSet) -> Result<AuditReport> {
    let cells = audit_cells(specials, s.n())?;
    let triple = cells
        .triple
        .iter()
        .map(|(j, xj)| {
            let value = triple_chsh_value(s, *j, xj)?;
            Ok(TripleCell {
                j: *j,
                xj: xj.to_string(),
                value,
                deficit: chsh_max() - value,
                radius: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let perfect = cells
        .perfect
        .iter()
        .map(|(j, chi, which)| {
            let value = perfect_corr_value(s, *j, chi, *which)?;
            Ok(PerfectCell {
                j: *j,
                chi: chi.to_string(),
                which: *which,
                value,
                deficit: 1.0 - value,
                radius: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let conj = cells
        .conj
        .iter()
        .map(|(j, q, chi)| {
            let value = conj_corr_value(s, *j, *q, chi)?;
            Ok(ConjCell {
                j: *j,
                q: *q,
                chi: chi.to_string(),
                value,
                deficit: 1.0 - value,
                radius: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditReport::assemble(
        s.n(),
        specials.m(),
        specials,
        triple,
        perfect,
        conj,
    ))
}

// ---------------------------------------------------------------------------
// Trial records and statistical estimation
// ---------------------------------------------------------------------------

/// One protocol round as logged by the verifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub round: usize,
    pub x: Question,
    pub y: BobQuestion,
    pub a: Vec<Outcome>,
    pub b: BobAnswer,
}

impl TrialRecord {
    /// Structural validation: answer alphabets and lengths match the
    /// question pair.
    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if self.a.len() != n {
            return Err(Error::DimensionMismatch {
                left: self.a.len(),
                right: n,
                context: "Alice answer length",
            });
        }
        match (&self.y, &self.b) {
            (BobQuestion::Obs(_), BobAnswer::Signs(b)) => {
                if b.len() != n {
                    return Err(Error::DimensionMismatch {
                        left: b.len(),
                        right: n,
                        context: "Bob sign-answer length",
                    });
                }
            }
            (BobQuestion::OddBells, BobAnswer::Bells(b)) => {
                if b.len() != n / 2 || b.iter().any(|&v| !(1..=4).contains(&v)) {
                    return Err(Error::MalformedFile(format!(
                        "round {}: odd-pairs answer must be {} Bell digits",
                        self.round,
                        n / 2
                    )));
                }
            }
            (BobQuestion::EvenBells, BobAnswer::Bells(b)) => {
                let want = n.div_ceil(2) - 1;
                if b.len() != want || b.iter().any(|&v| !(1..=4).contains(&v)) {
                    return Err(Error::MalformedFile(format!(
                        "round {}: even-pairs answer must be {want} Bell digits",
                        self.round
                    )));
                }
            }
            _ => {
                return Err(Error::MalformedFile(format!(
                    "round {}: answer kind does not match question kind",
                    self.round
                )))
            }
        }
        Ok(())
    }

    fn to_line(&self) -> String {
        let a: String = self.a.iter().map(|o| o.to_string()).collect();
        let b = match &self.b {
            BobAnswer::Signs(v) => v.iter().map(|o| o.to_string()).collect::<String>(),
            BobAnswer::Bells(v) => v.iter().map(|d| d.to_string()).collect::<String>(),
        };
        format!("{},{},{},{},{}", self.round, self.x, self.y.code(), a, b)
    }

    fn from_line(line: &str, lineno: usize) -> Result<TrialRecord> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::MalformedFile(format!(
                "line {lineno}: expected 5 comma-separated fields, got {}",
                fields.len()
            )));
        }
        let round: usize = fields[0]
            .parse()
            .map_err(|_| Error::MalformedFile(format!("line {lineno}: bad round index")))?;
        let x = Question::parse(fields[1])?;
        let ycode: u8 = fields[2]
            .parse()
            .map_err(|_| Error::MalformedFile(format!("line {lineno}: bad question label")))?;
        let y = BobQuestion::from_code(ycode)?;
        let parse_signs = |text: &str| -> Result<Vec<Outcome>> {
            text.chars()
                .map(|c| match c {
                    '+' => Ok(Outcome::Plus),
                    '-' => Ok(Outcome::Minus),
                    other => Err(Error::MalformedFile(format!(
                        "line {lineno}: bad outcome symbol {other:?}"
                    ))),
                })
                .collect()
        };
        let a = parse_signs(fields[3])?;
        let b = match y {
            BobQuestion::Obs(_) => BobAnswer::Signs(parse_signs(fields[4])?),
            _ => BobAnswer::Bells(
                fields[4]
                    .chars()
                    .map(|c| {
                        c.to_digit(10).map(|d| d as u8).ok_or_else(|| {
                            Error::MalformedFile(format!("line {lineno}: bad Bell digit {c:?}"))
                        })
                    })
                    .collect::<Result<Vec<u8>>>()?,
            ),
        };
        let record = TrialRecord { round, x, y, a, b };
        record.validate()?;
        Ok(record)
    }
}

/// Serializes trial records as CSV (`round,x,y,a,b`).
pub fn write_trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from("round,x,y,a,b\n");
    for r in records {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Parses a CSV trial log produced by [`write_trials_csv`].
pub fn read_trials_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "round,x,y,a,b" => {}
        _ => {
            return Err(Error::MalformedFile(
                "trial log must start with header round,x,y,a,b".into(),
            ))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        records.push(TrialRecord::from_line(line, i + 1)?);
    }
    Ok(records)
}

/// Two-sided Hoeffding radius `√(ln(2/α)/(2N))` for an `N`-sample mean at
/// confidence level `1 − α`.
pub fn hoeffding_radius(samples: usize, alpha: f64) -> f64 {
    if samples == 0 {
        return f64::INFINITY;
    }
    ((2.0 / alpha).ln() / (2.0 * samples as f64)).sqrt()
}

/// Deterministic per-cell generator: a ChaCha stream keyed by
/// `SHA-256(seed ‖ domain ‖ index)`. Identical inputs give identical
/// streams on every platform, which makes parallel sampling reproducible.
pub fn cell_rng(seed: u64, domain: &[u8], index: u64) -> ChaCha12Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(domain);
    h.update(index.to_le_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha12Rng::from_seed(digest)
}

/// Every `(x, y)` question cell the trial log must cover for the audit
/// implied by the special questions, sorted and deduplicated.
pub fn required_cells(specials: &QuestionSet, n: usize) -> Result<Vec<(Question, BobQuestion)>> {
    let cells = audit_cells(specials, n)?;
    let mut set: BTreeSet<(Question, BobQuestion)> = BTreeSet::new();
    for (j, xj) in &cells.triple {
        for (q, y, _) in TRIPLE_TERMS {
            set.insert((insert_position(xj, *j, q)?, BobQuestion::Obs(y)));
        }
    }
    for (j, chi, which) in &cells.perfect {
        let y = if *which == 4 { 5 } else { 6 };
        set.insert((chi.with_symbol(*j, *which)?, BobQuestion::Obs(y)));
    }
    for (j, q, chi) in &cells.conj {
        let w = chi.with_symbol(*j, *q)?.with_symbol(*j + 1, *q)?;
        let y = if j % 2 == 1 {
            BobQuestion::OddBells
        } else {
            BobQuestion::EvenBells
        };
        set.insert((w, y));
    }
    Ok(set.into_iter().collect())
}

/// Samples `per_cell` rounds from every required question cell
/// (round-robin coverage), with independent deterministic generator streams
/// per cell so the result is reproducible under parallel execution.
pub fn generate_trials(
    s: &Strategy,
    specials: &QuestionSet,
    per_cell: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    let cells = required_cells(specials, s.n())?;
    let batches: Vec<Vec<TrialRecord>> = cells
        .par_iter()
        .enumerate()
        .map(|(ci, (x, y))| -> Result<Vec<TrialRecord>> {
            let dist = s.round_distribution(x, *y)?;
            let mut rng = cell_rng(seed, b"trials", ci as u64);
            let mut out = Vec::with_capacity(per_cell);
            for i in 0..per_cell {
                let (a, b) = dist.sample(&mut rng).clone();
                out.push(TrialRecord {
                    round: ci * per_cell + i,
                    x: x.clone(),
                    y: *y,
                    a,
                    b,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Index of trial records grouped by question cell.
struct CellIndex<'a> {
    groups: BTreeMap<(Question, u8), Vec<&'a TrialRecord>>,
}

impl<'a> CellIndex<'a> {
    fn build(records: &'a [TrialRecord]) -> Result<CellIndex<'a>> {
        let mut groups: BTreeMap<(Question, u8), Vec<&TrialRecord>> = BTreeMap::new();
        for r in records {
            r.validate()?;
            groups.entry((r.x.clone(), r.y.code())).or_default().push(r);
        }
        Ok(CellIndex { groups })
    }

    fn records(&self, x: &Question, y: BobQuestion) -> Option<&Vec<&'a TrialRecord>> {
        self.groups.get(&(x.clone(), y.code()))
    }
}

/// Empirical `⟨A_x^{(j)} B_y^{(j)}⟩` with its Hoeffding radius.
fn empirical_pair(
    index: &CellIndex<'_>,
    x: &Question,
    y: u8,
    j: usize,
    alpha: f64,
    missing: &mut Vec<String>,
) -> (f64, f64) {
    match index.records(x, BobQuestion::Obs(y)) {
        Some(rs) if !rs.is_empty() => {
            let mut acc = 0.0;
            for r in rs {
                if let BobAnswer::Signs(b) = &r.b {
                    acc += r.a[j - 1].sign() * b[j - 1].sign();
                }
            }
            (acc / rs.len() as f64, hoeffding_radius(rs.len(), alpha))
        }
        _ => {
            missing.push(format!("(x={x}, y={y})"));
            (0.0, f64::INFINITY)
        }
    }
}

/// Statistical audit: reconstructs every requested correlation from the
/// trial log, attaching a Hoeffding confidence radius to each cell. Errors
/// if any required question cell is uncovered.
pub fn estimate_from_trials(
    records: &[TrialRecord],
    specials: &QuestionSet,
    alpha: f64,
) -> Result<AuditReport> {
    if specials.is_empty() {
        return Err(Error::InvalidQuestion {
            question: "𝒮".into(),
            reason: "special-question set is empty",
        });
    }
    let n = specials.n();
    let index = CellIndex::build(records)?;
    let cells = audit_cells(specials, n)?;
    let mut missing: Vec<String> = Vec::new();

    let mut triple = Vec::new();
    for (j, xj) in &cells.triple {
        let mut value = 0.0;
        let mut radius = 0.0;
        for (q, y, sign) in TRIPLE_TERMS {
            let x = insert_position(xj, *j, q)?;
            let (v, r) = empirical_pair(&index, &x, y, *j, alpha, &mut missing);
            value += sign * v;
            radius += r;
        }
        triple.push(TripleCell {
            j: *j,
            xj: xj.to_string(),
            value,
            deficit: chsh_max() - value,
            radius: Some(radius),
        });
    }

    let mut perfect = Vec::new();
    for (j, chi, which) in &cells.perfect {
        let x = chi.with_symbol(*j, *which)?;
        let y = if *which == 4 { 5 } else { 6 };
        let (value, radius) = empirical_pair(&index, &x, y, *j, alpha, &mut missing);
        perfect.push(PerfectCell {
            j: *j,
            chi: chi.to_string(),
            which: *which,
            value,
            deficit: 1.0 - value,
            radius: Some(radius),
        });
    }

    let mut conj = Vec::new();
    for (j, q, chi) in &cells.conj {
        let w = chi.with_symbol(*j, *q)?.with_symbol(*j + 1, *q)?;
        let y = if j % 2 == 1 {
            BobQuestion::OddBells
        } else {
            BobQuestion::EvenBells
        };
        let signs = conj_signs(*q)?;
        // Position of Γ^{(j)} within Bob's answer vector for this question.
        let first = if y == BobQuestion::OddBells { 1 } else { 2 };
        let slot = (j - first) / 2;
        let (value, radius) = match index.records(&w, y) {
            Some(rs) if !rs.is_empty() => {
                let mut acc = 0.0;
                for r in rs {
                    if let BobAnswer::Bells(b) = &r.b {
                        let s_b = signs[b[slot] as usize - 1];
                        acc += s_b * r.a[*j - 1].sign() * r.a[*j].sign();
                    }
                }
                (acc / rs.len() as f64, hoeffding_radius(rs.len(), alpha))
            }
            _ => {
                missing.push(format!("(x={w}, y={})", y.code()));
                (0.0, f64::INFINITY)
            }
        };
        conj.push(ConjCell {
            j: *j,
            q: *q,
            chi: chi.to_string(),
            value,
            deficit: 1.0 - value,
            radius: Some(radius),
        });
    }

    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingCells {
            missing: missing.len(),
            first: missing[0].clone(),
        });
    }
    Ok(AuditReport::assemble(
        n,
        specials.m(),
        specials,
        triple,
        perfect,
        conj,
    ))
}
