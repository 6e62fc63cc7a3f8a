//! Construction and validation of the verifier's question sets.
//!
//! Questions are fixed-length strings over the symbol alphabet `1..=m`
//! (`m = 5` in the protocol, where symbols name measurement bases). The
//! verifier never uses all `mⁿ` strings: starting from a small set of
//! *special* questions it expands each by the two-position perturbation set
//! 𝒟, which is exactly enough structure for the coverage lemmas (any pair of
//! positions can be steered to any symbol pair while the rest of a special
//! question stays put) at a total question count polynomial in `n`.
//!
//! Positions are 1-based throughout, matching the register names `A1..An`.
//! Symbol arithmetic is componentwise modulo `m` on the zero-based values
//! `symbol − 1`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;

use crate::quantum::Basis;
use crate::{Error, Result};

/// A question string: symbols in `1..=m`, possibly empty (reduced sets at
/// `n = 1` produce the empty string).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Question {
    symbols: Vec<u8>,
}

impl Question {
    /// Builds a question from 1-based symbols (each in `1..=9` so the
    /// digit-line file format stays unambiguous).
    pub fn from_symbols(symbols: &[u8]) -> Result<Question> {
        for &s in symbols {
            if s == 0 || s > 9 {
                return Err(Error::InvalidQuestion {
                    question: format!("{symbols:?}"),
                    reason: "symbols must be single digits in 1..=9",
                });
            }
        }
        Ok(Question {
            symbols: symbols.to_vec(),
        })
    }

    /// The empty question (length 0).
    pub fn empty() -> Question {
        Question { symbols: vec![] }
    }

    /// String length `n`.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// True for the empty string.
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The symbols, 1-based values.
    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    /// Symbol at 1-based position `j`.
    pub fn symbol_at(&self, j: usize) -> Result<u8> {
        if j == 0 || j > self.len() {
            return Err(Error::InvalidQuestion {
                question: self.to_string(),
                reason: "position out of range",
            });
        }
        Ok(self.symbols[j - 1])
    }

    /// The measurement basis at 1-based position `j` (requires symbol ≤ 5).
    pub fn basis_at(&self, j: usize) -> Result<Basis> {
        Basis::from_symbol(self.symbol_at(j)?)
    }

    /// All symbols as bases (requires every symbol ≤ 5).
    pub fn bases(&self) -> Result<Vec<Basis>> {
        self.symbols
            .iter()
            .map(|&s| Basis::from_symbol(s))
            .collect()
    }

    /// Checks every symbol lies in `1..=m`.
    pub fn validate_alphabet(&self, m: u8) -> Result<()> {
        if self.symbols.iter().any(|&s| s == 0 || s > m) {
            return Err(Error::InvalidQuestion {
                question: self.to_string(),
                reason: "symbol exceeds alphabet size",
            });
        }
        Ok(())
    }

    /// Componentwise sum modulo `m` (on zero-based values).
    pub fn add_mod(&self, other: &Question, m: u8) -> Result<Question> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                left: self.len(),
                right: other.len(),
                context: "question addition",
            });
        }
        let symbols: Vec<u8> = self
            .symbols
            .iter()
            .zip(other.symbols.iter())
            .map(|(&a, &b)| ((a - 1 + b - 1) % m) + 1)
            .collect();
        Ok(Question { symbols })
    }

    /// Copy with the symbol at 1-based position `j` replaced.
    pub fn with_symbol(&self, j: usize, symbol: u8) -> Result<Question> {
        self.symbol_at(j)?; // range check
        let mut symbols = self.symbols.clone();
        symbols[j - 1] = symbol;
        Question::from_symbols(&symbols)
    }

    /// Parses a digit string such as `"1325"`.
    pub fn parse(text: &str) -> Result<Question> {
        let mut symbols = Vec::with_capacity(text.len());
        for c in text.chars() {
            let d = c.to_digit(10).ok_or_else(|| Error::InvalidQuestion {
                question: text.to_string(),
                reason: "non-digit character",
            })?;
            symbols.push(d as u8);
        }
        Question::from_symbols(&symbols)
    }

    /// Number of positions carrying the z symbol (3).
    pub fn z_count(&self) -> usize {
        self.symbols.iter().filter(|&&s| s == 3).count()
    }
}

impl std::fmt::Display for Question {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.symbols {
            f.write_char(char::from_digit(s as u32, 10).unwrap())?;
        }
        Ok(())
    }
}

impl From<Question> for String {
    fn from(q: Question) -> String {
        q.to_string()
    }
}

impl TryFrom<String> for Question {
    type Error = Error;
    fn try_from(s: String) -> Result<Question> {
        Question::parse(&s)
    }
}

/// Removes the symbol at 1-based position `j`.
pub fn drop_position(x: &Question, j: usize) -> Result<Question> {
    x.symbol_at(j)?;
    let symbols: Vec<u8> = x
        .symbols()
        .iter()
        .enumerate()
        .filter(|(i, _)| i + 1 != j)
        .map(|(_, &s)| s)
        .collect();
    Ok(Question { symbols })
}

/// Inserts `symbol` at 1-based position `j` (result has length `n + 1`).
pub fn insert_position(x: &Question, j: usize, symbol: u8) -> Result<Question> {
    if j == 0 || j > x.len() + 1 {
        return Err(Error::InvalidQuestion {
            question: x.to_string(),
            reason: "insertion position out of range",
        });
    }
    let mut symbols = x.symbols().to_vec();
    symbols.insert(j - 1, symbol);
    Question::from_symbols(&symbols)
}

/// An ordered, deduplicated set of equal-length questions over `1..=m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSet {
    m: u8,
    n: usize,
    members: Vec<Question>,
}

impl QuestionSet {
    /// Builds a set: members are validated against the alphabet, checked for
    /// uniform length `n`, sorted lexicographically, and deduplicated.
    pub fn new(m: u8, n: usize, members: Vec<Question>) -> Result<QuestionSet> {
        if m < 2 {
            return Err(Error::InvalidQuestion {
                question: format!("m={m}"),
                reason: "alphabet size must be at least 2",
            });
        }
        let mut set = BTreeSet::new();
        for q in members {
            if q.len() != n {
                return Err(Error::DimensionMismatch {
                    left: q.len(),
                    right: n,
                    context: "question length vs set length",
                });
            }
            q.validate_alphabet(m)?;
            set.insert(q);
        }
        Ok(QuestionSet {
            m,
            n,
            members: set.into_iter().collect(),
        })
    }

    /// Alphabet size.
    pub fn m(&self) -> u8 {
        self.m
    }

    /// Question length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of members.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// True when the set has no members.
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in canonical (lexicographic) order.
    pub fn members(&self) -> &[Question] {
        &self.members
    }

    /// Membership test.
    pub fn contains(&self, q: &Question) -> bool {
        self.members.binary_search(q).is_ok()
    }

    /// One question per line, digits only, trailing newline.
    pub fn to_digit_lines(&self) -> String {
        let mut out = String::new();
        for q in &self.members {
            out.push_str(&q.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the digit-line format produced by [`QuestionSet::to_digit_lines`].
    pub fn from_digit_lines(m: u8, text: &str) -> Result<QuestionSet> {
        let mut members = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            members.push(Question::parse(line)?);
        }
        let n = members
            .first()
            .map(|q| q.len())
            .ok_or_else(|| Error::MalformedFile("question file has no questions".into()))?;
        QuestionSet::new(m, n, members)
    }
}

/// The perturbation set 𝒟: all strings `k·e_i + l·e_j` (mod `m`, zero-based
/// values) over position pairs `i < j`. As symbols, the identity element is
/// the all-ones string. For `n = 1`, where no position pair exists, the set
/// degenerates to the single-position family `{k·e₁}` so the coverage lemma
/// below still holds.
pub fn base_set(m: u8, n: usize) -> Result<QuestionSet> {
    if n == 0 {
        return Err(Error::InvalidQuestion {
            question: "n=0".into(),
            reason: "question length must be at least 1",
        });
    }
    let mut members = Vec::new();
    let ones = Question::from_symbols(&vec![1; n])?;
    if n == 1 {
        for k in 0..m {
            members.push(ones.with_symbol(1, k + 1)?);
        }
    } else {
        for i in 1..=n {
            for j in (i + 1)..=n {
                for k in 0..m {
                    for l in 0..m {
                        members.push(ones.with_symbol(i, k + 1)?.with_symbol(j, l + 1)?);
                    }
                }
            }
        }
    }
    QuestionSet::new(m, n, members)
}

/// The expansion 𝒳_χ = {χ + d : d ∈ 𝒟} of a single special question.
pub fn expand_special(chi: &Question, m: u8) -> Result<QuestionSet> {
    chi.validate_alphabet(m)?;
    let d = base_set(m, chi.len())?;
    let members: Vec<Question> = d
        .members()
        .iter()
        .map(|d| chi.add_mod(d, m))
        .collect::<Result<_>>()?;
    QuestionSet::new(m, chi.len(), members)
}

/// Alice's full question set 𝒳: the union of 𝒳_χ over all specials.
pub fn build_question_set(specials: &QuestionSet) -> Result<QuestionSet> {
    if specials.is_empty() {
        return Err(Error::InvalidQuestion {
            question: "∅".into(),
            reason: "need at least one special question",
        });
    }
    let mut members = Vec::new();
    for chi in specials.members() {
        members.extend(expand_special(chi, specials.m())?.members().iter().cloned());
    }
    QuestionSet::new(specials.m(), specials.n(), members)
}

/// The reduced set ℛ^(j): drop position `j` from each special, then perturb
/// any single remaining position by every symbol value.
pub fn reduced_set(specials: &QuestionSet, j: usize) -> Result<QuestionSet> {
    if j == 0 || j > specials.n() {
        return Err(Error::InvalidQuestion {
            question: format!("j={j}"),
            reason: "position out of range",
        });
    }
    let m = specials.m();
    let mut members = Vec::new();
    for chi in specials.members() {
        let short = drop_position(chi, j)?;
        if short.is_empty() {
            members.push(short);
            continue;
        }
        for i in 1..=short.len() {
            for k in 0..m {
                let base_val = short.symbol_at(i)? - 1;
                members.push(short.with_symbol(i, ((base_val + k) % m) + 1)?);
            }
        }
    }
    QuestionSet::new(m, specials.n() - 1, members)
}

/// The positional set 𝒳^(j): every symbol `q ∈ 1..=m` inserted at position
/// `j` into every member of ℛ^(j).
pub fn position_set(specials: &QuestionSet, j: usize) -> Result<QuestionSet> {
    let reduced = reduced_set(specials, j)?;
    let m = specials.m();
    let mut members = Vec::new();
    for r in reduced.members() {
        for q in 1..=m {
            members.push(insert_position(r, j, q)?);
        }
    }
    QuestionSet::new(m, specials.n(), members)
}

/// The closed-form size of 𝒟 for `n ≥ 2`:
/// `1 + (m−1)·n + ½(m−1)²·n(n−1)`.
pub fn base_set_size(m: u8, n: usize) -> usize {
    let m1 = (m - 1) as usize;
    1 + m1 * n + m1 * m1 * n * (n - 1) / 2
}

/// Draws `count` special questions uniformly over `{1..m}ⁿ`, rejecting draws
/// whose fraction of z symbols (symbol 3) falls below `min_z_fraction`.
/// Duplicates are allowed in the draw and removed by the set construction.
pub fn random_specials<R: Rng>(
    m: u8,
    n: usize,
    count: usize,
    min_z_fraction: f64,
    rng: &mut R,
) -> Result<QuestionSet> {
    if m < 3 && min_z_fraction > 0.0 {
        return Err(Error::InvalidQuestion {
            question: format!("m={m}"),
            reason: "z symbol (3) requires alphabet size at least 3",
        });
    }
    let mut members = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while members.len() < count {
        attempts += 1;
        if attempts > 10_000 * count.max(1) {
            return Err(Error::NoConvergence {
                routine: "random_specials rejection sampling",
                iterations: attempts,
            });
        }
        let symbols: Vec<u8> = (0..n).map(|_| rng.random_range(1..=m)).collect();
        let q = Question::from_symbols(&symbols)?;
        if (q.z_count() as f64) < min_z_fraction * n as f64 {
            continue;
        }
        members.push(q);
    }
    QuestionSet::new(m, n, members)
}

/// Serialized form of a generated question file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuestionFile {
    pub m: u8,
    pub n: usize,
    pub specials: Vec<Question>,
    pub questions: Vec<Question>,
}

impl QuestionFile {
    /// Bundles a special set with its expansion.
    pub fn build(specials: &QuestionSet) -> Result<QuestionFile> {
        let questions = build_question_set(specials)?;
        Ok(QuestionFile {
            m: specials.m(),
            n: specials.n(),
            specials: specials.members().to_vec(),
            questions: questions.members().to_vec(),
        })
    }
}
