//! Acceptance suite: every structural claim the crate is built around, each
//! pinned to its tolerance. One test per criterion; each prints a single
//! pass/fail line (visible with `--nocapture`).

use afmech_core::verify::{self, CheckResult};

const SEED: u64 = 0xAF_2026;

fn report(result: CheckResult) {
    println!(
        "{} {} | required: {}; observed: {} ({:.2}s)",
        if result.pass { "PASS" } else { "FAIL" },
        result.id,
        result.requirement,
        result.observed,
        result.runtime_s
    );
    assert!(result.pass, "{}: {}", result.id, result.observed);
}

#[test]
fn criterion_01_metric_bridge() {
    report(verify::criterion_01_metric_bridge(SEED));
}

#[test]
fn criterion_02_variance_identity() {
    report(verify::criterion_02_variance_identity(SEED));
}

#[test]
fn criterion_03_el_order_admissible() {
    report(verify::criterion_03_el_order_admissible(SEED));
}

#[test]
fn criterion_04_counterexample() {
    report(verify::criterion_04_counterexample(SEED));
}

#[test]
fn criterion_05_energy_zero() {
    report(verify::criterion_05_energy_zero(SEED));
}

#[test]
fn criterion_06_energy_conservation() {
    report(verify::criterion_06_energy_conservation(SEED));
}

#[test]
fn criterion_07_gradient_fd() {
    report(verify::criterion_07_gradient_fd(SEED));
}

#[test]
fn criterion_08_kernel_dims() {
    report(verify::criterion_08_kernel_dims(SEED));
}

#[test]
fn criterion_09_jacobi_speed() {
    report(verify::criterion_09_jacobi_speed(SEED));
}

#[test]
fn criterion_10_objective_ascent() {
    report(verify::criterion_10_objective_ascent(SEED));
}

#[test]
fn criterion_11_end_to_end() {
    report(verify::criterion_11_end_to_end(SEED));
}

/// The named CLI suites must all be well-formed and runnable.
#[test]
fn suites_are_consistent() {
    for name in verify::SUITE_NAMES {
        assert!(verify::suite_checks(name).is_some(), "missing suite {name}");
    }
    assert!(verify::suite_checks("nonsense").is_none());
}
