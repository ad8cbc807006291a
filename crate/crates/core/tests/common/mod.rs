//! Shared corpus for the acceptance suite: the bundled examples, a few
//! hand-built certified systems, and seeded random generators.

use ltv_stability::certify::Schedule;
use ltv_stability::expr::{self, Expr};
use ltv_stability::presets;
use ltv_stability::simulate::PerturbationModel;
use ltv_stability::trajectory::{MatrixTrajectory, Segment};
use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct CorpusSystem {
    pub name: &'static str,
    pub traj: MatrixTrajectory,
    pub pert: PerturbationModel,
    pub kappa: f64,
    /// Slope to certify with; scanned when absent.
    pub lambda: Option<f64>,
}

/// The running two-dimensional periodic example with its perturbation.
pub fn paper_system() -> (MatrixTrajectory, PerturbationModel) {
    let cfg = presets::load("paper-sec5").unwrap().unwrap();
    (cfg.build_trajectory().unwrap(), cfg.build_perturbation().unwrap())
}

/// Systems that must come out feasible; all have `delta = 0`.
pub fn certified_corpus() -> Vec<CorpusSystem> {
    let mut out = Vec::new();

    let (traj, pert) = paper_system();
    out.push(CorpusSystem { name: "paper-sec5", traj, pert, kappa: 1.0, lambda: Some(0.238) });

    let damped = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0]);
    out.push(CorpusSystem {
        name: "constant-damped-rotation",
        traj: MatrixTrajectory::constant(&damped, 4.0, true),
        pert: PerturbationModel::zero(),
        kappa: 0.9,
        lambda: None,
    });

    let contraction = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
    out.push(CorpusSystem {
        name: "gamma-fed-contraction",
        traj: MatrixTrajectory::constant(&contraction, 4.0, true),
        pert: PerturbationModel::new(
            expr::parse("0.1").unwrap(),
            expr::parse("0").unwrap(),
            Some(vec![
                expr::parse_with_state("0.1*x1", 2).unwrap(),
                expr::parse_with_state("0.1*x2", 2).unwrap(),
            ]),
        ),
        kappa: 0.9,
        lambda: None,
    });

    let cfg = presets::load("switched-demo").unwrap().unwrap();
    out.push(CorpusSystem {
        name: "switched-demo",
        traj: cfg.build_trajectory().unwrap(),
        pert: PerturbationModel::zero(),
        kappa: 1.5,
        lambda: None,
    });

    let entries = vec![
        expr::parse("-2 + 0.3*sin(t)").unwrap(),
        expr::parse("1").unwrap(),
        expr::parse("-1").unwrap(),
        expr::parse("-2 + 0.3*cos(t)").unwrap(),
    ];
    let seg = Segment::new(0.0, 2.0 * std::f64::consts::PI, entries);
    out.push(CorpusSystem {
        name: "smooth-stable-periodic",
        traj: MatrixTrajectory::new(2, vec![seg], Some(2.0 * std::f64::consts::PI)).unwrap(),
        pert: PerturbationModel::zero(),
        kappa: 1.0,
        lambda: None,
    });

    out
}

fn random_entry(rng: &mut ChaCha8Rng) -> Expr {
    // c0 + c1 sin(w t + p) + c2 t: smooth, bounded derivative
    let c0 = rng.random_range(-1.5..1.5);
    let c1 = rng.random_range(-1.0..1.0);
    let w = rng.random_range(0.3..2.0);
    let p = rng.random_range(0.0..6.28);
    let c2 = rng.random_range(-0.3..0.3);
    let sin_arg = Expr::Add(
        Box::new(Expr::Mul(Box::new(Expr::Const(w)), Box::new(Expr::Time))),
        Box::new(Expr::Const(p)),
    );
    Expr::Add(
        Box::new(Expr::Add(
            Box::new(Expr::Const(c0)),
            Box::new(Expr::Mul(Box::new(Expr::Const(c1)), Box::new(Expr::Sin(Box::new(sin_arg))))),
        )),
        Box::new(Expr::Mul(Box::new(Expr::Const(c2)), Box::new(Expr::Time))),
    )
}

/// Random periodic piecewise-smooth path: 1..=3 segments (so at most two
/// interior jumps plus the wrap), dimension 1..=3, trigonometric entries.
pub fn random_piecewise(rng: &mut ChaCha8Rng) -> MatrixTrajectory {
    let dim = rng.random_range(1..=3);
    let n_segments = rng.random_range(1..=3);
    let period: f64 = rng.random_range(2.0..8.0);
    let mut bounds = vec![0.0];
    for _ in 0..n_segments - 1 {
        bounds.push(rng.random_range(0.2..period - 0.2));
    }
    bounds.push(period);
    bounds.sort_by(f64::total_cmp);
    bounds.dedup_by(|a, b| (*a - *b).abs() < 0.1);
    let mut segments = Vec::new();
    for w in bounds.windows(2) {
        let entries = (0..dim * dim).map(|_| random_entry(rng)).collect();
        segments.push(Segment::new(w[0], w[1], entries));
    }
    MatrixTrajectory::new(dim, segments, Some(period)).unwrap()
}

/// Random two-mode system in the `a I + skew` family (pairwise distances
/// survive diagonal clipping there) plus an alternating schedule. Returns
/// the modes, the schedule, and the (kappa_s, kappa_u) classification.
pub fn random_two_mode(rng: &mut ChaCha8Rng) -> (Vec<DMatrix<f64>>, Schedule, f64, f64) {
    let kappa_s = rng.random_range(0.5..1.5);
    let a_stable = -kappa_s - rng.random_range(0.0..1.5);
    let a_unstable: f64 = rng.random_range(-kappa_s + 0.05..0.8);
    let s0 = rng.random_range(-2.0..2.0);
    let s1 = rng.random_range(-2.0..2.0);
    let kappa_u = a_unstable.max(0.05) + 0.1;
    let modes = vec![
        DMatrix::from_row_slice(2, 2, &[a_stable, s0, -s0, a_stable]),
        DMatrix::from_row_slice(2, 2, &[a_unstable, s1, -s1, a_unstable]),
    ];
    let end: f64 = rng.random_range(4.0..12.0);
    let n_intervals = rng.random_range(2..=6);
    let mut starts = vec![0.0];
    for _ in 1..n_intervals {
        starts.push(rng.random_range(0.3..end - 0.3));
    }
    starts.sort_by(f64::total_cmp);
    starts.dedup_by(|a, b| (*a - *b).abs() < 0.15);
    let intervals: Vec<(f64, usize)> =
        starts.iter().enumerate().map(|(k, &s)| (s, k % 2)).collect();
    let schedule = Schedule::new(intervals, end).unwrap();
    (modes, schedule, kappa_s, kappa_u)
}

/// Random Hurwitz matrix: random entries shifted left of the imaginary
/// axis by a random margin.
pub fn random_hurwitz(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let alpha = ltv_stability::spectral::abscissa(&m).unwrap();
    let margin = rng.random_range(0.1..2.0);
    for i in 0..n {
        m[(i, i)] -= alpha + margin;
    }
    m
}
