//! Acceptance criteria 1 to 11 at full sample sizes. Prints one PASS/FAIL
//! line per criterion. Runs without the libtest harness so the lines are
//! never captured.
//!
//! Criteria that fail are reported but do not fail the test target, so the
//! rest of the workspace suite still runs; set `ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a test failure. Errors inside a criterion (as opposed to a
//! tolerance miss) always fail.

use std::fs;
use std::process::Command;
use std::time::Instant;

use levywave_cli::criteria::{CriterionOutcome, Harness, Profile, CRITERIA};
use levywave_core::LevyTriplet;

const SEED: u64 = 20_240_601;

fn check_summary(dir: &std::path::Path, threads: usize) -> String {
    let output = Command::new(env!("CARGO_BIN_EXE_levywave"))
        .args(["check", "--profile", "quick", "--seed", &SEED.to_string()])
        .args(["--threads", &threads.to_string(), "--force", "--out"])
        .arg(dir)
        .output()
        .expect("binary runs");
    let status = output.status;
    // criterion failures give exit code 1; anything else is a harness problem
    assert!(matches!(status.code(), Some(0) | Some(1)), "{status:?}");
    fs::read_to_string(dir.join("summary.json")).expect("summary written")
}

/// Two `check` runs at 1 thread and two at 8, compared byte for byte.
fn determinism() -> CriterionOutcome {
    let root = tempfile::tempdir().unwrap();
    let mut summaries = Vec::new();
    for (i, threads) in [1, 1, 8, 8].into_iter().enumerate() {
        let dir = root.path().join(format!("run{i}"));
        summaries.push(check_summary(&dir, threads));
    }
    let same = summaries.windows(2).all(|w| w[0] == w[1]);
    CriterionOutcome {
        id: 11,
        name: "determinism".into(),
        pass: same,
        detail: format!(
            "check summaries {} across 2 runs at 1 thread and 2 at 8 threads",
            if same { "identical" } else { "differ" }
        ),
        metrics: Default::default(),
    }
}

fn main() {
    let model = LevyTriplet::brownian(0.0, 1.0).unwrap();
    let harness = Harness::new(Profile::Full, SEED, &model);
    let mut outcomes = Vec::new();
    for (id, _) in CRITERIA {
        let start = Instant::now();
        let outcome = if id == 11 {
            determinism()
        } else {
            harness.run(id)
        };
        println!("{outcome}  [{:.1}s]", start.elapsed().as_secs_f64());
        outcomes.push(outcome);
    }
    let passed = outcomes.iter().filter(|o| o.pass).count();
    println!("acceptance: {passed} of {} criteria pass", outcomes.len());
    let errors: Vec<_> = outcomes
        .iter()
        .filter(|o| o.detail.starts_with("error"))
        .collect();
    if !errors.is_empty() {
        eprintln!("criteria raised errors: {errors:?}");
        std::process::exit(1);
    }
    if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") && passed != outcomes.len() {
        eprintln!("strict mode: some criteria failed");
        std::process::exit(1);
    }
}
