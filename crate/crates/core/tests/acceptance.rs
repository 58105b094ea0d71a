//! The acceptance suite as an integration test target: one test per
//! criterion, each printing its single pass/fail line (visible with
//! `cargo test --test acceptance -- --nocapture`, and automatically on
//! failure) and asserting the criterion passed. Tolerances and seeds are
//! pinned inside `mjp_core::acceptance`.

use mjp_core::acceptance::{self, CriterionReport};

fn assert_criterion(report: CriterionReport) {
    println!("{}", report.line());
    assert!(
        report.passed,
        "{}\n{}",
        report.line(),
        report.details.join("\n")
    );
}

#[test]
fn criterion_1_mobility_oracle() {
    assert_criterion(acceptance::criterion_1_mobility_oracle());
}

#[test]
fn criterion_2_homogeneous_frequency_independence() {
    assert_criterion(acceptance::criterion_2_homogeneous_frequency_independence());
}

#[test]
fn criterion_3_reversible_symmetry_and_equivalence() {
    assert_criterion(acceptance::criterion_3_reversible_symmetry_and_equivalence());
}

#[test]
fn criterion_4_three_way_triangulation() {
    assert_criterion(acceptance::criterion_4_three_way_triangulation());
}

#[test]
fn criterion_5_martingale_suite() {
    assert_criterion(acceptance::criterion_5_martingale_suite());
}

#[test]
fn criterion_6_oscillatory_steady_state() {
    assert_criterion(acceptance::criterion_6_oscillatory_steady_state());
}

#[test]
fn criterion_7_velocity_cross_check() {
    assert_criterion(acceptance::criterion_7_velocity_cross_check());
}

#[test]
fn criterion_8_condition_checkers() {
    assert_criterion(acceptance::criterion_8_condition_checkers());
}

#[test]
fn criterion_9_truncation_stability() {
    assert_criterion(acceptance::criterion_9_truncation_stability());
}
