//! End-to-end tests of the `bellforge` binary: exit-code contract, file
//! emission, determinism (including thread-count independence), and the
//! structured rejection of malformed inputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use num_complex::Complex64 as C64;

use bellforge_core::linalg::kron;
use bellforge_core::prepare::PrepReport;
use bellforge_core::quantum::outcomes_from_index;
use bellforge_core::selftest::SelfTestReport;
use bellforge_core::strategy::{honest_strategy, MatrixPayload};
use bellforge_core::verifier::AuditReport;
use bellforge_core::{Operator, Question};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_bellforge")
}

/// Fresh scratch directory under the target-specific temp root.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bellforge-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn gen_questions_is_deterministic_and_within_bound() {
    let dir = scratch("genq");
    let cfg = write_config(
        &dir,
        r#"{"n": 3, "seed": 7, "specials": {"count": 1, "min_z_fraction": 0.34}}"#,
    );
    for sub in ["a", "b"] {
        let out = run(
            &[
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.join(sub).to_str().unwrap(),
                "gen-questions",
            ],
            &[],
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    for name in ["specials.txt", "questions.txt", "questions.json"] {
        assert_eq!(
            fs::read(dir.join("a").join(name)).unwrap(),
            fs::read(dir.join("b").join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
    let questions = read(&dir.join("a"), "questions.txt");
    let lines = questions.lines().filter(|l| !l.is_empty()).count();
    assert!(
        lines <= 61,
        "single-special expansion has {lines} > 61 lines"
    );
    assert_eq!(
        read(&dir.join("a"), "specials.txt").trim().lines().count(),
        1
    );
}

#[test]
fn duplicate_specials_are_dropped_with_a_warning() {
    let dir = scratch("dups");
    let cfg = write_config(&dir, r#"{"n": 2, "specials": ["13", "13", "31"]}"#);
    let out = run(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "gen-questions",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("duplicate"),
        "no duplicate warning in: {}",
        stderr_of(&out)
    );
    assert_eq!(read(&dir, "specials.txt").trim().lines().count(), 2);
}

#[test]
fn honest_audit_passes_and_noisy_audit_fails_the_gate() {
    let dir = scratch("audit");
    let cfg = write_config(&dir, r#"{"n": 2, "specials": ["13"]}"#);
    let out = run(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "audit",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report = AuditReport::from_json(&read(&dir, "audit.json")).unwrap();
    assert!(report.epsilon <= 1e-9);

    let noisy = write_config(
        &dir,
        r#"{"n": 2, "specials": ["13"],
            "noise": {"kind": "depolarizing", "p": 0.05}}"#,
    );
    let out = run(
        &[
            "--config",
            noisy.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "audit",
            "--gate",
            "0.01",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
}

#[test]
fn sampled_audit_replays_byte_identically_across_thread_counts() {
    let dir = scratch("replay");
    let cfg = write_config(&dir, r#"{"n": 2, "seed": 11, "specials": ["13"]}"#);
    for (sub, threads) in [("a", "1"), ("b", "4")] {
        let out = run(
            &[
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                dir.join(sub).to_str().unwrap(),
                "audit",
                "--trials",
                "200",
            ],
            &[("BELLFORGE_THREADS", threads)],
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    for name in ["trials.csv", "audit_sampled.json", "audit.json"] {
        assert_eq!(
            fs::read(dir.join("a").join(name)).unwrap(),
            fs::read(dir.join("b").join(name)).unwrap(),
            "{name} depends on the thread count"
        );
    }
}

#[test]
fn selftest_reports_one_fingerprint_across_specials() {
    let dir = scratch("selftest");
    let cfg = write_config(&dir, r#"{"n": 2, "specials": ["13", "31"]}"#);
    let out = run(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "selftest",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report = SelfTestReport::from_json(&read(&dir, "selftest.json")).unwrap();
    assert!(report.eta <= 1e-9);
    assert!(report.state_distance <= 1e-9);
    assert_eq!(report.eta_table.len(), 2);
    assert_eq!(report.vb_fingerprint.len(), 64);
}

#[test]
fn prepare_gates_follow_the_strategy() {
    let dir = scratch("prepare");
    let cfg = write_config(&dir, r#"{"n": 2, "specials": ["13"]}"#);
    let base = [
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "prepare",
    ];

    let out = run(&[&base[..], &["--chi", "13"]].concat(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report = PrepReport::from_json(&read(&dir, "prepare.json")).unwrap();
    assert_eq!(report.exceed_probability, 0.0);
    assert!((report.beta0_trace - 1.0).abs() <= 1e-9);

    // The conjugated strategy still passes, with the branch weights swapped.
    let conj = write_config(
        &dir,
        r#"{"n": 2, "specials": ["13"], "strategy": "conjugated"}"#,
    );
    let out = run(
        &[
            "--config",
            conj.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "prepare",
            "--chi",
            "13",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report = PrepReport::from_json(&read(&dir, "prepare.json")).unwrap();
    assert!(report.beta0_trace.abs() <= 1e-9);
    assert!((report.beta1_trace - 1.0).abs() <= 1e-9);

    // Threshold 0 on a noisy strategy: every outcome exceeds.
    let noisy = write_config(
        &dir,
        r#"{"n": 2, "specials": ["13"],
            "noise": {"kind": "depolarizing", "p": 0.05}}"#,
    );
    let out = run(
        &[
            "--config",
            noisy.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "prepare",
            "--chi",
            "13",
            "--threshold",
            "0",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
    let report = PrepReport::from_json(&read(&dir, "prepare.json")).unwrap();
    assert!(report.exceed_probability > 0.0);

    // A question outside 𝒮 is a usage error, not a gate failure.
    let out = run(&[&base[..], &["--chi", "55"]].concat(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("special set"));
}

#[test]
fn oracle_sweep_passes_and_replays() {
    let dir = scratch("oracle");
    for sub in ["a", "b"] {
        let out = run(
            &[
                "--seed",
                "3",
                "--out",
                dir.join(sub).to_str().unwrap(),
                "oracle",
                "--trials",
                "150",
            ],
            &[],
        );
        assert!(out.status.success(), "{}", stderr_of(&out));
    }
    assert_eq!(
        fs::read(dir.join("a").join("oracle.json")).unwrap(),
        fs::read(dir.join("b").join("oracle.json")).unwrap()
    );
    let text = read(&dir.join("a"), "oracle.json");
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["violations"], 0);
    assert_eq!(json["families"], 150);
}

/// Builds an explicit strategy file equivalent to the honest `n = 2`
/// strategy but with the Γ (Bell-projector) families left out.
fn gamma_less_strategy_json() -> String {
    let single = honest_strategy(1).unwrap();
    let q1 = |digit: u8| Question::from_symbols(&[digit]).unwrap();
    let alice_obs: Vec<Operator> = (1..=5)
        .map(|d| single.alice_observable(&q1(d), 1).unwrap().op)
        .collect();
    let bob_obs: Vec<Operator> = (1..=6)
        .map(|y| single.bob_observable(y, 1).unwrap().op)
        .collect();
    let proj = |obs: &Operator, sign: f64| {
        Operator::identity(2)
            .add_scaled(C64::new(sign, 0.0), obs)
            .unwrap()
            .scaled(C64::new(0.5, 0.0))
    };
    let joint_family = |o1: &Operator, o2: &Operator| -> Vec<serde_json::Value> {
        (0..4)
            .map(|k| {
                let a = outcomes_from_index(k, 2);
                let p = kron(&proj(o1, a[0].sign()), &proj(o2, a[1].sign()));
                serde_json::to_value(MatrixPayload::encode(p.mat())).unwrap()
            })
            .collect()
    };

    let mut alice = serde_json::Map::new();
    for d1 in 1..=5u8 {
        for d2 in 1..=5u8 {
            alice.insert(
                format!("{d1}{d2}"),
                joint_family(&alice_obs[d1 as usize - 1], &alice_obs[d2 as usize - 1]).into(),
            );
        }
    }
    let mut bob = serde_json::Map::new();
    for y in 1..=6u8 {
        bob.insert(
            y.to_string(),
            joint_family(&bob_obs[y as usize - 1], &bob_obs[y as usize - 1]).into(),
        );
    }

    // |Φ⁺⟩⊗|Φ⁺⟩ over the concatenated layout (A₁, A₂, B₁, B₂).
    let mut psi = Array2::zeros((16, 1));
    for a1 in 0..2usize {
        for a2 in 0..2usize {
            psi[(a1 * 8 + a2 * 4 + a1 * 2 + a2, 0)] = C64::new(0.5, 0.0);
        }
    }

    serde_json::to_string(&serde_json::json!({
        "n": 2,
        "a_dims": [2, 2],
        "b_dims": [2, 2],
        "psi": MatrixPayload::encode(&psi),
        "alice": alice,
        "bob": bob,
    }))
    .unwrap()
}

#[test]
fn malformed_and_incomplete_strategy_files_are_rejected() {
    let dir = scratch("badfiles");

    let garbage = dir.join("garbage.json");
    fs::write(&garbage, "{ not json").unwrap();
    let cfg = write_config(
        &dir,
        &format!(
            r#"{{"n": 2, "specials": ["13"], "strategy": {{"file": {:?}}}}}"#,
            garbage.to_str().unwrap()
        ),
    );
    let out = run(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "audit",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).starts_with("error:"));

    // A complete honest strategy file, except the Γ families are missing:
    // the audit needs them for the conjugation cells and must say so.
    let gammaless = dir.join("gammaless.json");
    fs::write(&gammaless, gamma_less_strategy_json()).unwrap();
    let cfg = write_config(
        &dir,
        &format!(
            r#"{{"n": 2, "specials": ["13"], "strategy": {{"file": {:?}}}}}"#,
            gammaless.to_str().unwrap()
        ),
    );
    let out = run(
        &[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "audit",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("gamma"),
        "error does not name the missing family: {}",
        stderr_of(&out)
    );
}
