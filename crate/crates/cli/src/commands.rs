//! Subcommand implementations. Each returns whether its gates passed; the
//! caller maps that to the process exit code. All report files land in the
//! output directory with fixed names so reruns are diffable.

use std::fs;
use std::path::Path;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use bellforge_core::prepare::{
    prep_distance_report, random_families, robust_prob_oracle, RobustProbOutcome, VectorFamily,
};
use bellforge_core::questions::{base_set_size, QuestionFile};
use bellforge_core::selftest::self_test_report;
use bellforge_core::verifier::{
    cell_rng, estimate_from_trials, full_audit, generate_trials, write_trials_csv,
};
use bellforge_core::{Error, Question, Result};

use crate::config::RunConfig;

/// Writes a report file with a trailing newline.
fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut body = text.to_string();
    if !body.ends_with('\n') {
        body.push('\n');
    }
    fs::write(dir.join(name), body)?;
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

/// Cardinality accounting attached to the generated question file.
#[derive(Serialize)]
struct Cardinality {
    specials: usize,
    questions: usize,
    /// Exact size of one special's expansion: `1 + (m−1)n + ½(m−1)²n(n−1)`.
    per_special_bound: usize,
    /// Union bound `|𝒮| · per_special_bound` on the full set.
    union_bound: usize,
    within_bound: bool,
    duplicates_dropped: usize,
}

#[derive(Serialize)]
struct QuestionsJson {
    #[serde(flatten)]
    file: QuestionFile,
    cardinality: Cardinality,
}

/// `gen-questions`: draw or validate 𝒮, expand it, and write the question
/// files plus a JSON with the cardinality check.
pub fn gen_questions(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let (specials, dropped) = cfg.resolve_specials()?;
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} duplicate special question(s)");
    }
    let file = QuestionFile::build(&specials)?;
    let questions = bellforge_core::questions::build_question_set(&specials)?;

    write_text(out, "specials.txt", &specials.to_digit_lines())?;
    write_text(out, "questions.txt", &questions.to_digit_lines())?;

    let per_special_bound = base_set_size(cfg.m, cfg.n);
    let cardinality = Cardinality {
        specials: specials.len(),
        questions: questions.len(),
        per_special_bound,
        union_bound: per_special_bound * specials.len(),
        within_bound: questions.len() <= per_special_bound * specials.len(),
        duplicates_dropped: dropped,
    };
    let pass = cardinality.within_bound;
    let report = QuestionsJson { file, cardinality };
    write_text(
        out,
        "questions.json",
        &serde_json::to_string_pretty(&report)?,
    )?;

    println!(
        "gen-questions: {} question(s) from {} special(s), union bound {} -> {}",
        questions.len(),
        specials.len(),
        per_special_bound * specials.len(),
        verdict(pass)
    );
    Ok(pass)
}

/// `audit`: exact Bell audit, plus a sampled audit with Hoeffding radii when
/// trials are requested. The gate applies to the exact ε.
pub fn audit(
    cfg: &RunConfig,
    out: &Path,
    gate: Option<f64>,
    trials: Option<usize>,
    alpha: Option<f64>,
) -> Result<bool> {
    let (specials, _) = cfg.resolve_specials()?;
    let s = cfg.load_strategy()?;
    let gate = gate.unwrap_or(cfg.tolerance);

    let exact = full_audit(&s, &specials)?;
    write_text(out, "audit.json", &exact.to_json()?)?;
    let pass = exact.epsilon <= gate;
    println!(
        "audit: epsilon {:.3e} vs gate {:.3e} ({} correlators) -> {}",
        exact.epsilon,
        gate,
        exact.correlator_count,
        verdict(pass)
    );

    let trials = trials.unwrap_or(cfg.trials_per_cell);
    if trials > 0 {
        let alpha = alpha.unwrap_or(cfg.alpha);
        let records = generate_trials(&s, &specials, trials, cfg.seed)?;
        write_text(out, "trials.csv", &write_trials_csv(&records))?;
        let sampled = estimate_from_trials(&records, &specials, alpha)?;
        write_text(out, "audit_sampled.json", &sampled.to_json()?)?;
        println!(
            "audit: sampled epsilon {:.3e} from {} trials/cell at alpha {alpha}",
            sampled.epsilon, trials
        );
    }
    Ok(pass)
}

/// `selftest`: relation residuals and extraction-isometry distances for
/// every special question, including the V_B fingerprint equality check
/// (a fingerprint mismatch is an error, not a gate failure).
pub fn selftest(cfg: &RunConfig, out: &Path, gate: Option<f64>) -> Result<bool> {
    let (specials, _) = cfg.resolve_specials()?;
    let s = cfg.load_strategy()?;
    let gate = gate.unwrap_or(cfg.tolerance);

    let report = self_test_report(&s, &specials)?;
    write_text(out, "selftest.json", &report.to_json()?)?;

    let worst_obs = report
        .observable_distances
        .values()
        .fold(0.0f64, |a, d| a.max(*d));
    let worst_prod = report
        .product_distances
        .values()
        .fold(0.0f64, |a, d| a.max(*d));
    let worst = report
        .eta
        .max(report.state_distance)
        .max(worst_obs)
        .max(worst_prod);
    let pass = worst <= gate;
    println!(
        "selftest: eta {:.3e}, state {:.3e}, observables {:.3e}, products {:.3e} \
         vs gate {:.3e} -> {}",
        report.eta,
        report.state_distance,
        worst_obs,
        worst_prod,
        gate,
        verdict(pass)
    );
    println!("selftest: V_B fingerprint {}", report.vb_fingerprint);
    Ok(pass)
}

/// `prepare`: per-outcome preparation distances for one special question.
/// The gate bounds the exceedance probability and defaults to the tail
/// bound `4·threshold`.
pub fn prepare(
    cfg: &RunConfig,
    out: &Path,
    chi: &str,
    gate: Option<f64>,
    threshold: Option<f64>,
) -> Result<bool> {
    let (specials, _) = cfg.resolve_specials()?;
    let chi = Question::parse(chi)?;
    if !specials.contains(&chi) {
        return Err(Error::InvalidQuestion {
            question: chi.to_string(),
            reason: "not in the special set",
        });
    }
    let s = cfg.load_strategy()?;

    let report = prep_distance_report(&s, &chi, threshold)?;
    write_text(out, "prepare.json", &report.to_json()?)?;

    let bound = gate.unwrap_or(4.0 * report.threshold);
    let pass = report.exceed_probability <= bound;
    println!(
        "prepare[{chi}]: exceedance {:.3e} vs bound {:.3e} (threshold {:.3e}, \
         beta weights {:.6}/{:.6}) -> {}",
        report.exceed_probability,
        bound,
        report.threshold,
        report.beta0_trace,
        report.beta1_trace,
        verdict(pass)
    );
    Ok(pass)
}

/// Summary of one oracle sweep.
#[derive(Serialize)]
struct OracleReport {
    families: usize,
    c: f64,
    violations: usize,
    /// Smallest `bound − exceed_fraction` seen (how close any instance came).
    worst_margin: f64,
    /// δ = 0 sanity case: everything within threshold.
    exact_case: RobustProbOutcome,
    /// A single pair at exactly ‖u−v‖ = δ.
    boundary_case: RobustProbOutcome,
}

/// `oracle`: sweeps the trace-distance tail bound over random synthetic
/// vector families with the hypothesis saturated exactly.
pub fn oracle(cfg: &RunConfig, out: &Path, trials: Option<usize>, c: Option<f64>) -> Result<bool> {
    let count = trials.unwrap_or(1000);
    let c = c.unwrap_or(2.0 / 3.0);

    let outcomes: Vec<RobustProbOutcome> = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = cell_rng(cfg.seed, b"oracle", i);
            let (families, delta) = random_families(&mut rng);
            robust_prob_oracle(&families, delta, c)
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = outcomes
        .iter()
        .filter(|o| !o.hypothesis_holds || o.exceed_fraction > o.bound + 1e-12)
        .count();
    let worst_margin = outcomes
        .iter()
        .map(|o| o.bound - o.exceed_fraction)
        .fold(f64::INFINITY, f64::min);

    let amps = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
    let exact_case = robust_prob_oracle(
        &[VectorFamily {
            weight: 1.0,
            pairs: vec![(amps.clone(), amps)],
        }],
        0.0,
        c,
    )?;
    let delta = 0.2;
    let cos = 1.0 - delta * delta / 2.0;
    let boundary_case = robust_prob_oracle(
        &[VectorFamily {
            weight: 1.0,
            pairs: vec![(
                vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
                vec![C64::new(cos, 0.0), C64::new((1.0 - cos * cos).sqrt(), 0.0)],
            )],
        }],
        delta,
        c,
    )?;

    let pass = violations == 0
        && exact_case.exceed_fraction == 0.0
        && boundary_case.exceed_fraction <= boundary_case.bound;
    let report = OracleReport {
        families: count,
        c,
        violations,
        worst_margin,
        exact_case,
        boundary_case,
    };
    write_text(out, "oracle.json", &serde_json::to_string_pretty(&report)?)?;
    println!(
        "oracle: {count} families at c = {c:.4}, {violations} violation(s), \
         worst margin {worst_margin:.3e} -> {}",
        verdict(pass)
    );
    Ok(pass)
}
