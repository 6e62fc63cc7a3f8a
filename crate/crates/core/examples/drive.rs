// End-to-end drive: honest strategy → exact audit → sampled trials → CSV →
// statistical audit, exercising the full library pipeline built so far.
use bellforge_core::questions::QuestionSet;
use bellforge_core::strategy::{depolarize, honest_strategy, NoiseSpec};
use bellforge_core::verifier;
use bellforge_core::Question;

fn main() {
    let n = 2;
    let sp = QuestionSet::new(3, n, vec![Question::parse("33").unwrap()]).unwrap();
    let s = honest_strategy(n).unwrap();
    let exact = verifier::full_audit(&s, &sp).unwrap();
    println!(
        "honest epsilon = {:.3e}, correlators = {}",
        exact.epsilon, exact.correlator_count
    );
    assert!(exact.epsilon <= 1e-9);

    let noisy = depolarize(&s, NoiseSpec::depolarizing(0.05)).unwrap();
    let nrep = verifier::full_audit(&noisy, &sp).unwrap();
    println!("depolarized(0.05) epsilon = {:.6}", nrep.epsilon);

    let trials = verifier::generate_trials(&s, &sp, 2000, 42).unwrap();
    let csv = verifier::write_trials_csv(&trials);
    let back = verifier::read_trials_csv(&csv).unwrap();
    assert_eq!(back.len(), trials.len());
    let est = verifier::estimate_from_trials(&back, &sp, 0.01).unwrap();
    println!(
        "sampled epsilon = {:.4} over {} trials",
        est.epsilon,
        trials.len()
    );
    println!("audit JSON bytes: {}", exact.to_json().unwrap().len());
    println!("drive OK");
}
