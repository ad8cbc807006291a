//! Acceptance suite: every release criterion as one test with a pass line.
//!
//! Run with `cargo test -p ltv-stability --test acceptance -- --nocapture`
//! to see the per-criterion lines.

mod common;

use std::time::Instant;

use ltv_stability::certify::{
    self, build_profile, lambda_bound, profile_extent, schedule_to_trajectory,
    switched_condition, xi_profile,
};
use ltv_stability::linalg::op_norm;
use ltv_stability::lyapunov::{constants_spectral, solve_lyapunov};
use ltv_stability::simulate::{self, PerturbationModel};
use ltv_stability::spectral::shift_matrix;
use ltv_stability::variation;
use nalgebra::DVector;
use rand::prelude::*;

use common::{
    certified_corpus, paper_system, random_hurwitz, random_piecewise, random_two_mode, rng,
};

fn pass(line: &str) {
    println!("[PASS] {line}");
}

/// Criterion 1: the periodic example reproduces its published constants and
/// criterion sides at desk scale.
#[test]
fn criterion_1_golden_example_reproduction() {
    let start = Instant::now();
    let (traj, pert) = paper_system();
    let kappa = 1.0;
    let lambda = 0.238;
    let period = traj.period().unwrap();
    let grid_step = period / 512.0;

    let constants = constants_spectral(&traj, kappa, grid_step).unwrap();
    assert!((constants.c1 - 0.2381).abs() <= 1e-3, "c1 = {}", constants.c1);
    assert!((constants.c2 - 0.5).abs() <= 1e-3, "c2 = {}", constants.c2);

    let int_phi = certify::excess_integral(&traj, kappa, 0.0, period).unwrap();
    assert!((int_phi - 2.2).abs() <= 1e-3, "int_phi = {int_phi}");

    let int_gamma = certify::gamma_integral(&pert, 0.0, period).unwrap();
    assert!((int_gamma - 0.8).abs() <= 1e-3, "int_gamma = {int_gamma}");

    let tv_tilde = variation::tv_shifted(&traj, kappa, 0.0, period).unwrap();
    assert!((tv_tilde.total - 2.2).abs() <= 1e-3, "tv_tilde = {}", tv_tilde.total);

    let lhs = constants.c1 * int_phi
        + constants.c2 * int_gamma
        + constants.c2 * constants.c2 * tv_tilde.total;
    let rhs = lambda * period;
    assert!((lhs - 1.4738).abs() <= 1e-3, "lhs = {lhs}");
    assert!((rhs - 1.4954).abs() <= 1e-3, "rhs = {rhs}");
    assert!(lambda < lambda_bound(&constants));

    let cert =
        certify::certify(&traj, &pert, kappa, &constants, Some(lambda), None, None).unwrap();
    assert!(cert.feasible);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
    pass(&format!(
        "criterion 1: golden reproduction (c1 {:.4}, c2 {:.4}, lhs {:.4} vs rhs {:.4}, feasible, {:.1?})",
        constants.c1, constants.c2, lhs, rhs, elapsed
    ));
}

/// Criterion 2: Lyapunov residuals on 500 random Hurwitz matrices and the
/// exact scalar closed form.
#[test]
fn criterion_2_lyapunov_correctness() {
    let mut rng = rng(0xC2);
    let mut worst_rel = 0.0_f64;
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let a = random_hurwitz(&mut rng, n);
        let sol = solve_lyapunov(&a).unwrap();
        let p_norm = op_norm(&sol.p);
        let rel = sol.residual_norm / (1.0 + p_norm);
        assert!(rel <= 1e-8, "residual {rel} at n = {n}");
        worst_rel = worst_rel.max(rel);
    }
    for _ in 0..100 {
        let a = -rng.random_range(0.01..20.0);
        let sol = solve_lyapunov(&nalgebra::DMatrix::from_element(1, 1, a)).unwrap();
        let exact = -1.0 / (2.0 * a);
        assert!((sol.p[(0, 0)] - exact).abs() <= 1e-12 * exact.abs());
    }
    pass(&format!(
        "criterion 2: 500 Lyapunov solves within residual tolerance (worst {worst_rel:.2e}), scalar closed form exact"
    ));
}

/// Criterion 3: quadrature-plus-jump totals sit just above the depth-14
/// dyadic partition lower bound, never below it.
#[test]
fn criterion_3_variation_oracle_equivalence() {
    let mut rng = rng(0xC3);
    let mut worst_gap = 0.0_f64;
    for case in 0..100 {
        let traj = random_piecewise(&mut rng);
        let t_end = traj.period().unwrap();
        let tv = variation::tv_matrix(&traj, 0.0, t_end).unwrap();
        let oracle = variation::tv_partition_lower_bound(&traj, 0.0, t_end, 14).unwrap();
        assert!(
            tv.total >= oracle,
            "case {case}: quadrature {:.12} below the partition bound {:.12}",
            tv.total,
            oracle
        );
        let gap = tv.total - oracle;
        assert!(
            gap <= 1e-3 * (1.0 + tv.total),
            "case {case}: gap {gap} too wide for total {}",
            tv.total
        );
        worst_gap = worst_gap.max(gap / (1.0 + tv.total));
    }
    pass(&format!(
        "criterion 3: 100 random paths within 1e-3 of the dyadic oracle (worst relative gap {worst_gap:.2e})"
    ));
}

/// Criterion 4: the stabilized variation never exceeds the matrix plus
/// excess variations on the random corpus.
#[test]
fn criterion_4_split_bound_property() {
    let mut rng = rng(0xC4);
    let mut worst_slack = f64::INFINITY;
    for case in 0..100 {
        let traj = random_piecewise(&mut rng);
        let kappa = rng.random_range(0.3..2.0);
        let t_end = traj.period().unwrap();
        let (holds, slack) = variation::check_split_bound(&traj, kappa, 0.0, t_end).unwrap();
        assert!(holds, "case {case}: slack {slack}");
        assert!(slack >= -1e-9, "case {case}: slack {slack}");
        worst_slack = worst_slack.min(slack);
    }
    pass(&format!(
        "criterion 4: split bound holds on 100 random paths (smallest slack {worst_slack:.3e})"
    ));
}

/// Criterion 5: the budget slack stays inside `[-1e-9, rho + 1e-9]` for
/// every certified instance, on a grid ten times finer than the
/// certification grid.
#[test]
fn criterion_5_xi_sandwich() {
    for sys in certified_corpus() {
        let grid_step = sys.traj.period().unwrap_or(sys.traj.domain_end()) / 512.0;
        let constants = constants_spectral(&sys.traj, sys.kappa, grid_step).unwrap();
        let cert = certify::certify(
            &sys.traj,
            &sys.pert,
            sys.kappa,
            &constants,
            sys.lambda,
            None,
            None,
        )
        .unwrap();
        assert!(cert.feasible, "{} should certify", sys.name);
        let (t_end, cells) = profile_extent(&sys.traj, None);
        let fine =
            build_profile(&sys.traj, &sys.pert, sys.kappa, &constants, t_end, cells * 10)
                .unwrap();
        let xi = xi_profile(&fine, cert.params.lambda, cert.params.rho)
            .unwrap_or_else(|e| panic!("{}: {e}", sys.name));
        for &(t, v) in &xi {
            assert!(v >= -1e-9, "{}: xi({t}) = {v}", sys.name);
            assert!(v <= cert.params.rho + 1e-9, "{}: xi({t}) = {v}", sys.name);
        }
    }
    pass("criterion 5: budget slack within [0, rho] for every certified instance on a 10x finer grid");
}

/// Criterion 6: for every certified instance the Lyapunov function is
/// non-increasing across jumps and decays at the certified rate; the
/// periodic example satisfies its ISS envelope over ten periods with
/// strictly positive margin.
#[test]
fn criterion_6_monitor_soundness() {
    for sys in certified_corpus() {
        let grid_step = sys.traj.period().unwrap_or(sys.traj.domain_end()) / 512.0;
        let constants = constants_spectral(&sys.traj, sys.kappa, grid_step).unwrap();
        let cert = certify::certify(
            &sys.traj,
            &sys.pert,
            sys.kappa,
            &constants,
            sys.lambda,
            None,
            None,
        )
        .unwrap();
        assert!(cert.feasible, "{} should certify", sys.name);
        let horizon = 2.0 * sys.traj.period().unwrap_or(sys.traj.domain_end());
        let x0 = DVector::from_element(sys.traj.dim(), 1.0);
        let kinks =
            simulate::kink_breakpoints(&sys.traj, sys.kappa, 0.0, horizon).unwrap();
        let trace =
            simulate::integrate(&sys.traj, &sys.pert, &x0, 0.0, horizon, 0.01, &kinks)
                .unwrap();
        let report = simulate::monitor_w(&trace, &sys.traj, &sys.pert, &cert.params).unwrap();
        assert!(
            report.ok(),
            "{}: monitor violation {:?}",
            sys.name,
            report.violation
        );
    }

    // the periodic example over ten periods against its ISS envelope
    let (traj, pert) = paper_system();
    let grid_step = traj.period().unwrap() / 512.0;
    let constants = constants_spectral(&traj, 1.0, grid_step).unwrap();
    let cert =
        certify::certify(&traj, &pert, 1.0, &constants, Some(0.238), None, None).unwrap();
    let iss = cert.iss.unwrap();
    let horizon = 10.0 * traj.period().unwrap();
    let x0 = DVector::from_element(2, 1.0);
    let kinks = simulate::kink_breakpoints(&traj, 1.0, 0.0, horizon).unwrap();
    let trace = simulate::integrate(&traj, &pert, &x0, 0.0, horizon, 0.01, &kinks).unwrap();
    let report = simulate::verify_iss(&trace, &iss, &pert).unwrap();
    assert!(report.ok);
    assert!(report.min_margin > 0.0, "margin {}", report.min_margin);
    pass(&format!(
        "criterion 6: monitors clean on all certified instances; ten-period envelope margin {:.3e}",
        report.min_margin
    ));
}

/// Criterion 7: the Lyapunov solution is Lipschitz in the stabilized path
/// with constant `2 c2²`, on 200 random time pairs per corpus system.
#[test]
fn criterion_7_lipschitz_bound() {
    let mut rng = rng(0xC7);
    for sys in certified_corpus() {
        let span = 2.0 * sys.traj.period().unwrap_or(sys.traj.domain_end());
        let grid_step = sys.traj.period().unwrap_or(sys.traj.domain_end()) / 512.0;
        let constants = constants_spectral(&sys.traj, sys.kappa, grid_step).unwrap();
        for pair in 0..200 {
            let t_a = rng.random_range(0.0..span);
            let t_b = rng.random_range(0.0..span);
            let atil_a = shift_matrix(&sys.traj.value_at(t_a).unwrap(), sys.kappa).unwrap();
            let atil_b = shift_matrix(&sys.traj.value_at(t_b).unwrap(), sys.kappa).unwrap();
            let p_a = solve_lyapunov(&atil_a).unwrap().p;
            let p_b = solve_lyapunov(&atil_b).unwrap().p;
            let (holds, slack) = ltv_stability::lyapunov::p_difference_check(
                &p_a,
                &p_b,
                &atil_a,
                &atil_b,
                constants.c2,
            );
            assert!(holds, "{} pair {pair}: slack {slack}", sys.name);
        }
    }
    pass("criterion 7: Lipschitz bound holds on 200 random time pairs per corpus system");
}

/// Criterion 8: the activation/switch-count bound dominates the general
/// criterion on 50 random two-mode schedules, and an unstable-heavy
/// schedule is reported infeasible.
#[test]
fn criterion_8_switched_specialization() {
    let mut rng = rng(0xC8);
    for case in 0..50 {
        let (modes, schedule, kappa_s, kappa_u) = random_two_mode(&mut rng);
        let traj = schedule_to_trajectory(&modes, &schedule, false).unwrap();
        let grid_step = schedule.end / 256.0;
        let constants = constants_spectral(&traj, kappa_s, grid_step).unwrap();
        let general = certify::lhs(
            &traj,
            &PerturbationModel::zero(),
            kappa_s,
            &constants,
            0.0,
            schedule.end,
        )
        .unwrap();
        let check = switched_condition(
            &modes,
            &schedule,
            kappa_s,
            kappa_u,
            &constants,
            lambda_bound(&constants) / 2.0,
            1.0,
            0.0,
            schedule.end,
        )
        .unwrap();
        assert!(
            check.lhs >= general - 1e-9,
            "case {case}: switched {} below general {general}",
            check.lhs
        );
    }

    // an unstable-heavy schedule: active 90% of the period, infeasible for
    // any admissible slope
    let modes = vec![
        nalgebra::DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0]),
        nalgebra::DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 0.5]),
    ];
    let schedule = certify::Schedule::new(vec![(0.0, 1), (9.0, 0)], 10.0).unwrap();
    let traj = schedule_to_trajectory(&modes, &schedule, true).unwrap();
    let constants = constants_spectral(&traj, 1.0, 10.0 / 512.0).unwrap();
    let check = switched_condition(
        &modes,
        &schedule,
        1.0,
        0.6,
        &constants,
        lambda_bound(&constants) * 0.99,
        0.5,
        0.0,
        10.0,
    )
    .unwrap();
    assert!(!check.holds, "unstable-heavy schedule must fail the budget");
    let cert = certify::certify(
        &traj,
        &PerturbationModel::zero(),
        1.0,
        &constants,
        None,
        None,
        None,
    )
    .unwrap();
    assert!(!cert.feasible, "unstable-heavy schedule must be infeasible");
    assert!(cert.min_rho.is_infinite());
    pass("criterion 8: switched bound dominates on 50 random schedules; unstable-heavy schedule infeasible");
}

/// Criterion 9: the integrator shows fourth-order error reduction on the
/// rotation problem across three step halvings.
#[test]
fn criterion_9_integrator_order() {
    let traj = MatrixTrajectoryRotation::build();
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let exact = DVector::from_vec(vec![-1.0, 0.0]);
    let mut errors = Vec::new();
    let mut h = 0.05;
    for _ in 0..4 {
        let trace =
            simulate::integrate(&traj, &PerturbationModel::zero(), &x0, 0.0, 1.0, h, &[])
                .unwrap();
        errors.push((&trace.samples.last().unwrap().x - &exact).norm());
        h /= 2.0;
    }
    let mut ratios = Vec::new();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio >= 15.0, "ratio {ratio}, errors {errors:?}");
        ratios.push(ratio);
    }
    pass(&format!("criterion 9: step halving shrinks the terminal error by {ratios:.1?}"));
}

struct MatrixTrajectoryRotation;

impl MatrixTrajectoryRotation {
    fn build() -> ltv_stability::MatrixTrajectory {
        let m = nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[0.0, std::f64::consts::PI, -std::f64::consts::PI, 0.0],
        );
        ltv_stability::MatrixTrajectory::constant(&m, 2.0, false)
    }
}
