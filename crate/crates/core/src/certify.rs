//! The affine-budget stability criterion and its certificate.
//!
//! Over every window `(t_a, t_b]` the combined measure
//!
//! ```text
//! c1 * (excess mass) + c2 * (gamma mass) + c2^2 * (stabilized variation)
//! ```
//!
//! must stay below `lambda * (t_b - t_a) + rho` with `lambda < c1 / (2 c2)`.
//! The window supremum is computed from a cumulative profile: grid cells
//! carry certified mass bounds, jumps enter as point masses, and a running
//! minimum over the drifted cumulative curve yields the smallest feasible
//! offset `rho`. Feasibility plus the offset produce explicit ISS constants.
//!
//! For periodic systems the profile spans two periods: any window excess
//! decomposes into whole periods (non-positive once the per-period mass
//! respects the slope) plus a remainder inside two consecutive periods.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::ExprError;
use crate::linalg::op_norm;
use crate::lyapunov::{ConstantsBundle, LyapunovError};
use crate::quad::adaptive_simpson_md;
use crate::simulate::PerturbationModel;
use crate::spectral::{self, shift_matrix, SpectralError};
use crate::trajectory::{MatrixTrajectory, TrajectoryError};
use crate::variation::{self, VariationError};

/// Per-cell quadrature tolerance for profile masses.
const CELL_TOL: f64 = 1e-10;

/// Minimum Simpson depth for cell quadratures; cells are already far below
/// any structural oscillation scale.
const CELL_MIN_DEPTH: u32 = 2;

/// Target number of grid cells per period (or per horizon).
pub const GRID_CELLS_PER_PERIOD: usize = 512;

/// Number of candidate slopes evaluated when the slope is left free.
const LAMBDA_SCAN_POINTS: usize = 64;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("slope lambda = {lambda} must be strictly below c1/(2 c2) = {bound}")]
    InvalidLambda { lambda: f64, bound: f64 },
    #[error("epsilon = {epsilon} must lie in (0, {upper})")]
    InvalidEpsilon { epsilon: f64, upper: f64 },
    #[error("offset rho must be non-negative, got {rho}")]
    InvalidRho { rho: f64 },
    #[error("perturbation envelope is negative at t = {t}: {value}")]
    NegativeEnvelope { t: f64, value: f64 },
    #[error("budget curve dips {xi:.3e} below zero at t = {t}; the certificate does not cover this window")]
    XiViolation { t: f64, xi: f64 },
    #[error("mode {index} has abscissa {abscissa}, above the unstable classification bound {kappa_u}")]
    ModeUnclassifiable { index: usize, abscissa: f64, kappa_u: f64 },
    #[error("schedule must contain at least one mode interval")]
    EmptySchedule,
    #[error(transparent)]
    Variation(#[from] VariationError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Every scalar entering the criterion and the proof of the ISS bound.
#[derive(Debug, Clone)]
pub struct CertificateParams {
    pub kappa: f64,
    pub lambda: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub constants: ConstantsBundle,
}

impl CertificateParams {
    /// Validates the structural constraints on the slope and epsilon.
    pub fn new(
        kappa: f64,
        lambda: f64,
        rho: f64,
        epsilon: f64,
        constants: ConstantsBundle,
    ) -> Result<Self, CertifyError> {
        let bound = lambda_bound(&constants);
        if !(lambda < bound) {
            return Err(CertifyError::InvalidLambda { lambda, bound });
        }
        if rho < 0.0 {
            return Err(CertifyError::InvalidRho { rho });
        }
        let upper = constants.c1 / constants.c2 - 2.0 * lambda;
        if !(epsilon > 0.0 && epsilon < upper) {
            return Err(CertifyError::InvalidEpsilon { epsilon, upper });
        }
        Ok(CertificateParams { kappa, lambda, rho, epsilon, constants })
    }

    /// Midpoint of the admissible epsilon interval, the default trade-off
    /// between decay rate and disturbance gain.
    pub fn default_epsilon(constants: &ConstantsBundle, lambda: f64) -> f64 {
        (constants.c1 / constants.c2 - 2.0 * lambda) / 2.0
    }
}

/// Decay/gain constants of the ISS estimate.
#[derive(Debug, Clone, Copy)]
pub struct IssConstants {
    pub a: f64,
    pub b: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

/// The window achieving the largest budget excess, with both sides of the
/// criterion evaluated on it.
#[derive(Debug, Clone, Copy)]
pub struct WorstWindow {
    pub t_a: f64,
    pub t_b: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of a certification run.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub feasible: bool,
    /// Window the profile was evaluated on; for periodic systems the
    /// criterion then extends to all of `t >= 0`.
    pub horizon: (f64, f64),
    pub periodic: bool,
    pub params: CertificateParams,
    /// Smallest offset covering every window of the profile; infinite when
    /// the slope is infeasible.
    pub min_rho: f64,
    pub worst_window: Option<WorstWindow>,
    pub iss: Option<IssConstants>,
}

/// Strict upper bound on admissible slopes.
pub fn lambda_bound(constants: &ConstantsBundle) -> f64 {
    constants.c1 / (2.0 * constants.c2)
}

/// ISS constants from the certificate parameters.
///
/// The disturbance gain follows from the norm sandwich: from
/// `W(t) <= exp(-a (t-t0)) W(t0) + (b/a) max delta^2` and
/// `|x| <= sqrt(W / c1)`, the gain on `max delta` is `sqrt(b / (a c1))` —
/// the `1/sqrt(c1)` factor is what makes the envelope hold at the forced
/// steady state of, e.g, `x' = -x + d`.
pub fn iss_constants(params: &CertificateParams) -> IssConstants {
    let c1 = params.constants.c1;
    let c2 = params.constants.c2;
    let a = 1.0 / c2 - (2.0 * params.lambda + params.epsilon) / c1;
    let b = c2 * c2 / params.epsilon * (2.0 * params.rho / c1).exp();
    IssConstants {
        a,
        b,
        k1: (c2 / c1).sqrt() * (params.rho / c1).exp(),
        k2: a / 2.0,
        k3: (b / (a * c1)).sqrt(),
    }
}

/// Cumulative budget masses on a grid: `h_left[i]` is the mass of
/// `(0, times[i])`, `h_right[i]` of `(0, times[i]]` (jump at `times[i]`
/// included), and `cell_mass[i]` the continuous mass of
/// `(times[i], times[i+1])`.
#[derive(Debug, Clone)]
pub struct CumulativeProfile {
    pub times: Vec<f64>,
    pub h_left: Vec<f64>,
    pub h_right: Vec<f64>,
    pub cell_mass: Vec<f64>,
    pub kappa: f64,
    pub c1: f64,
    pub c2: f64,
    /// `(period, mass per period)` when the path repeats.
    pub period_mass: Option<(f64, f64)>,
}

/// Build the cumulative budget profile over `[0, t_end]` with at least
/// `min_cells` cells plus every structural breakpoint (segment boundaries,
/// jumps, excess kinks).
pub fn build_profile(
    traj: &MatrixTrajectory,
    pert: &PerturbationModel,
    kappa: f64,
    constants: &ConstantsBundle,
    t_end: f64,
    min_cells: usize,
) -> Result<CumulativeProfile, CertifyError> {
    assert!(t_end > 0.0);
    let kinks = variation::excess_kinks(traj, kappa, 0.0, t_end)?;
    let pieces = traj.smooth_pieces(0.0, t_end);

    let mut times: Vec<f64> = Vec::with_capacity(min_cells + 16);
    for k in 0..=min_cells {
        times.push(t_end * k as f64 / min_cells as f64);
    }
    for p in &pieces {
        times.push(p.start);
        times.push(p.end);
    }
    times.extend(kinks.iter().copied());
    if let Some(p) = traj.period() {
        let mut m = p;
        while m < t_end {
            times.push(m);
            m += p;
        }
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    // drop uniform grid points that collide with a structural time at
    // floating-point resolution
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end.max(1.0));
    debug_assert!(times[0] == 0.0 && *times.last().unwrap() == t_end);

    build_profile_on_times(traj, pert, kappa, constants, &times)
}

/// Build the cumulative budget profile on an explicit sorted time grid
/// (ascending, strictly increasing). Cells may span excess kinks; their
/// masses are assembled from the kink-split subintervals.
pub fn build_profile_on_times(
    traj: &MatrixTrajectory,
    pert: &PerturbationModel,
    kappa: f64,
    constants: &ConstantsBundle,
    times: &[f64],
) -> Result<CumulativeProfile, CertifyError> {
    assert!(times.len() >= 2);
    let t_start = times[0];
    let t_end = *times.last().unwrap();
    let c1 = constants.c1;
    let c2 = constants.c2;

    let kinks = variation::excess_kinks(traj, kappa, t_start, t_end)?;
    let pieces = traj.smooth_pieces(t_start, t_end);
    // refined (piece x kink) intervals covering [t_start, t_end]
    let mut refined: Vec<(crate::trajectory::SmoothPiece, f64, f64)> = Vec::new();
    for piece in &pieces {
        let mut cuts = vec![piece.start];
        cuts.extend(kinks.iter().copied().filter(|&k| k > piece.start && k < piece.end));
        cuts.push(piece.end);
        for w in cuts.windows(2) {
            refined.push((*piece, w[0], w[1]));
        }
    }

    let n_cells = times.len() - 1;
    let mut cell_mass = vec![0.0; n_cells];
    for (i, mass) in cell_mass.iter_mut().enumerate() {
        let (lo, hi) = (times[i], times[i + 1]);
        let mut m = 0.0;
        for (piece, rlo, rhi) in &refined {
            let a = lo.max(*rlo);
            let b = hi.min(*rhi);
            if b <= a {
                continue;
            }
            let excess =
                variation::quad_excess_md(traj, kappa, piece, a, b, CELL_TOL, CELL_MIN_DEPTH)?;
            let shifted = variation::quad_shifted_density_md(
                traj,
                kappa,
                piece,
                a,
                b,
                *rlo,
                *rhi,
                CELL_TOL,
                CELL_MIN_DEPTH,
            )?;
            m += c1 * excess + c2 * c2 * shifted;
        }
        m += c2 * quad_gamma(pert, lo, hi)?;
        *mass = m;
    }

    let jump_times = traj.jump_set(t_start, t_end)?;
    let mut jump_mass = vec![0.0; times.len()];
    for tj in &jump_times {
        let idx = times
            .iter()
            .position(|t| t == tj)
            .expect("jump times are grid points");
        let right = shift_matrix(&traj.value_at(*tj)?, kappa)?;
        let left = shift_matrix(&traj.left_limit(*tj)?, kappa)?;
        jump_mass[idx] = c2 * c2 * op_norm(&(right - left));
    }

    let mut h_left = vec![0.0; times.len()];
    let mut h_right = vec![0.0; times.len()];
    h_right[0] = jump_mass[0]; // zero: no jump is attributed to the start
    for i in 1..times.len() {
        h_left[i] = h_right[i - 1] + cell_mass[i - 1];
        h_right[i] = h_left[i] + jump_mass[i];
    }

    let period_mass = traj.period().and_then(|p| {
        if t_start != 0.0 {
            return None;
        }
        times
            .iter()
            .position(|&t| t == p)
            .map(|idx| (p, h_right[idx]))
    });

    Ok(CumulativeProfile {
        times: times.to_vec(),
        h_left,
        h_right,
        cell_mass,
        kappa,
        c1,
        c2,
        period_mass,
    })
}

fn quad_gamma(pert: &PerturbationModel, lo: f64, hi: f64) -> Result<f64, CertifyError> {
    let f = |t: f64| -> Result<f64, CertifyError> {
        let v = pert.gamma.eval(t)?;
        if v < 0.0 {
            return Err(CertifyError::NegativeEnvelope { t, value: v });
        }
        Ok(v)
    };
    let r = adaptive_simpson_md(&f, lo, hi, CELL_TOL, CELL_MIN_DEPTH)?;
    Ok(r.value)
}

/// Result of the offset scan for one slope.
#[derive(Debug, Clone, Copy)]
pub struct OffsetScan {
    /// Certified upper bound on the window excess; infinite if the slope
    /// cannot absorb a whole period.
    pub rho_star: f64,
    pub feasible: bool,
    pub worst: WorstWindow,
}

/// Smallest feasible offset for a slope, from the profile.
///
/// The scan walks the drifted cumulative curve `H(t) - lambda t` keeping a
/// running minimum over window starts (left limits at jumps included, since
/// a window opening just before a jump captures it) and bounds the
/// within-cell behaviour by the cell mass, so the result is an upper bound
/// on the true supremum rather than a grid maximum.
pub fn min_rho_scan(profile: &CumulativeProfile, lambda: f64) -> OffsetScan {
    let chi_l = |i: usize| profile.h_left[i] - lambda * profile.times[i];
    let chi_r = |i: usize| profile.h_right[i] - lambda * profile.times[i];

    let feasible = match profile.period_mass {
        Some((period, mass)) => mass <= lambda * period + 1e-9 * (1.0 + mass),
        None => true,
    };

    struct Tracker {
        run_min: f64,
        run_min_t: f64,
        best: f64,
        best_window: (f64, f64),
    }
    impl Tracker {
        fn consider(&mut self, value: f64, t: f64) {
            let excess = value - self.run_min;
            if excess > self.best {
                self.best = excess;
                self.best_window = (self.run_min_t, t);
            }
        }
        fn lower(&mut self, value: f64, t: f64) {
            if value < self.run_min {
                self.run_min = value;
                self.run_min_t = t;
            }
        }
    }
    let mut tr = Tracker {
        run_min: f64::INFINITY,
        run_min_t: profile.times[0],
        best: 0.0,
        best_window: (profile.times[0], profile.times[0]),
    };

    for i in 0..profile.times.len() {
        let t = profile.times[i];
        // window starts approaching t from below see the pre-jump value
        tr.lower(chi_l(i), t);
        tr.consider(chi_r(i), t);
        tr.lower(chi_r(i), t);
        if i + 1 < profile.times.len() {
            let t_next = profile.times[i + 1];
            let dt = t_next - t;
            let mass = profile.cell_mass[i];
            // certified bounds for the open cell (t, t_next)
            let cell_sup = (chi_r(i) + mass).min(chi_l(i + 1) + lambda * dt);
            let cell_inf = (chi_r(i) - lambda * dt).max(chi_l(i + 1) - mass);
            tr.consider(cell_sup, 0.5 * (t + t_next));
            // windows fully inside one cell gain at most the cell mass
            if mass > tr.best {
                tr.best = mass;
                tr.best_window = (t, t_next);
            }
            tr.lower(cell_inf, 0.5 * (t + t_next));
        }
    }
    let best = tr.best;
    let best_window = tr.best_window;

    let rho_star = if feasible { best.max(0.0) } else { f64::INFINITY };
    let (wa, wb) = best_window;
    let width = (wb - wa).max(0.0);
    let worst = WorstWindow {
        t_a: wa,
        t_b: wb,
        lhs: best.max(0.0) + lambda * width,
        rhs: lambda * width + rho_star,
    };
    OffsetScan { rho_star, feasible, worst }
}

/// Smallest feasible offset for a trajectory/perturbation pair at a given
/// slope. Periodic systems are scanned over two periods; aperiodic systems
/// over their defined horizon (or the given sub-horizon).
pub fn min_rho(
    traj: &MatrixTrajectory,
    pert: &PerturbationModel,
    kappa: f64,
    constants: &ConstantsBundle,
    lambda: f64,
    horizon: Option<f64>,
) -> Result<f64, CertifyError> {
    let bound = lambda_bound(constants);
    if !(lambda < bound) {
        return Err(CertifyError::InvalidLambda { lambda, bound });
    }
    let (t_end, cells) = profile_extent(traj, horizon);
    let profile = build_profile(traj, pert, kappa, constants, t_end, cells)?;
    Ok(min_rho_scan(&profile, lambda).rho_star)
}

/// Profile extent: two periods for periodic paths, the defined horizon
/// otherwise, with the cell budget scaled accordingly.
pub fn profile_extent(traj: &MatrixTrajectory, horizon: Option<f64>) -> (f64, usize) {
    match traj.period() {
        Some(p) => {
            let t_end = 2.0 * p;
            let t_end = horizon.map_or(t_end, |h| h.max(t_end));
            let cells = GRID_CELLS_PER_PERIOD as f64 * (t_end / p);
            (t_end, cells.ceil() as usize)
        }
        None => {
            let t_end = horizon.unwrap_or(traj.domain_end()).min(traj.domain_end());
            (t_end, GRID_CELLS_PER_PERIOD)
        }
    }
}

/// Criterion left-hand side over `(t_a, t_b]`: excess, gain, and stabilized
/// variation masses weighted by the constants. Computed by direct
/// quadrature, independent of any profile grid.
pub fn lhs(
    traj: &MatrixTrajectory,
    pert: &PerturbationModel,
    kappa: f64,
    constants: &ConstantsBundle,
    t_a: f64,
    t_b: f64,
) -> Result<f64, CertifyError> {
    assert!(t_a < t_b);
    let excess = excess_integral(traj, kappa, t_a, t_b)?;
    let gamma = quad_gamma_window(pert, t_a, t_b)?;
    let tilde = variation::tv_shifted(traj, kappa, t_a, t_b)?;
    Ok(constants.c1 * excess + constants.c2 * gamma + constants.c2 * constants.c2 * tilde.total)
}

/// `∫ φ dt` over `(t_a, t_b]`: the total excess mass of the window.
pub fn excess_integral(
    traj: &MatrixTrajectory,
    kappa: f64,
    t_a: f64,
    t_b: f64,
) -> Result<f64, CertifyError> {
    let mut excess = 0.0;
    let kinks = variation::excess_kinks(traj, kappa, t_a, t_b)?;
    for piece in traj.smooth_pieces(t_a, t_b) {
        let mut cuts = vec![piece.start];
        cuts.extend(kinks.iter().copied().filter(|&k| k > piece.start && k < piece.end));
        cuts.push(piece.end);
        for w in cuts.windows(2) {
            excess += variation::quad_excess_md(
                traj,
                kappa,
                &piece,
                w[0],
                w[1],
                crate::quad::DEFAULT_TOL,
                CELL_MIN_DEPTH,
            )?;
        }
    }
    Ok(excess)
}

/// `∫ gamma dt` over `[t_a, t_b]`.
pub fn gamma_integral(
    pert: &PerturbationModel,
    t_a: f64,
    t_b: f64,
) -> Result<f64, CertifyError> {
    quad_gamma_window(pert, t_a, t_b)
}

fn quad_gamma_window(pert: &PerturbationModel, t_a: f64, t_b: f64) -> Result<f64, CertifyError> {
    let f = |t: f64| -> Result<f64, CertifyError> {
        let v = pert.gamma.eval(t)?;
        if v < 0.0 {
            return Err(CertifyError::NegativeEnvelope { t, value: v });
        }
        Ok(v)
    };
    let r = adaptive_simpson_md(&f, t_a, t_b, crate::quad::DEFAULT_TOL, 5)?;
    Ok(r.value)
}

/// Full certification: fixes or scans the slope, finds the smallest offset,
/// and derives the ISS constants.
///
/// When `lambda` is free the scan evaluates candidates across the
/// admissible interval, keeps the feasible ones, maximizes the decay rate
/// `k2` (which favors the smallest feasible slope), and sharpens the
/// feasibility boundary by bisection.
pub fn certify(
    traj: &MatrixTrajectory,
    pert: &PerturbationModel,
    kappa: f64,
    constants: &ConstantsBundle,
    lambda: Option<f64>,
    rho: Option<f64>,
    horizon: Option<f64>,
) -> Result<Certificate, CertifyError> {
    let bound = lambda_bound(constants);
    if let Some(l) = lambda {
        if !(l < bound) {
            return Err(CertifyError::InvalidLambda { lambda: l, bound });
        }
    }
    if let Some(r) = rho {
        if r < 0.0 {
            return Err(CertifyError::InvalidRho { rho: r });
        }
    }
    let (t_end, cells) = profile_extent(traj, horizon);
    let profile = build_profile(traj, pert, kappa, constants, t_end, cells)?;

    let lambda_star = match lambda {
        Some(l) => l,
        None => scan_lambda(&profile, bound),
    };
    let scan = min_rho_scan(&profile, lambda_star);

    let feasible = match rho {
        Some(r) => scan.feasible && scan.rho_star <= r,
        None => scan.feasible,
    };
    let rho_used = match rho {
        Some(r) => r,
        None => {
            if scan.rho_star.is_finite() {
                scan.rho_star
            } else {
                0.0
            }
        }
    };
    let epsilon = CertificateParams::default_epsilon(constants, lambda_star);
    let params =
        CertificateParams::new(kappa, lambda_star, rho_used, epsilon, constants.clone())?;
    let iss = feasible.then(|| iss_constants(&params));
    Ok(Certificate {
        feasible,
        horizon: (0.0, t_end),
        periodic: traj.period().is_some(),
        params,
        min_rho: scan.rho_star,
        worst_window: Some(scan.worst),
        iss,
    })
}

/// Candidate-scan for the slope: feasibility first, then the decay rate.
fn scan_lambda(profile: &CumulativeProfile, bound: f64) -> f64 {
    let lo = bound * 1e-3;
    let hi = bound * (1.0 - 1e-6);
    let feasible_at = |l: f64| min_rho_scan(profile, l).feasible;
    let mut best: Option<f64> = None;
    let mut last_infeasible: Option<f64> = None;
    for k in 0..LAMBDA_SCAN_POINTS {
        let l = lo + (hi - lo) * k as f64 / (LAMBDA_SCAN_POINTS - 1) as f64;
        if feasible_at(l) {
            // k2 decreases with lambda, so the first feasible candidate
            // maximizes it
            best = Some(l);
            break;
        }
        last_infeasible = Some(l);
    }
    let Some(mut best) = best else {
        // infeasible everywhere: report the least-damaged slope
        return hi;
    };
    if let Some(mut lo_inf) = last_infeasible {
        for _ in 0..40 {
            let mid = 0.5 * (lo_inf + best);
            if feasible_at(mid) {
                best = mid;
            } else {
                lo_inf = mid;
            }
        }
    }
    best
}

/// Budget slack curve: the running minimum of the drifted cumulative curve
/// minus its current value, offset by `rho`. Stays within `[0, rho]` for
/// any window the certificate covers.
pub fn xi_profile(
    profile: &CumulativeProfile,
    lambda: f64,
    rho: f64,
) -> Result<Vec<(f64, f64)>, CertifyError> {
    let chi_l = |i: usize| profile.h_left[i] - lambda * profile.times[i];
    let chi_r = |i: usize| profile.h_right[i] - lambda * profile.times[i];
    let mut run_min = f64::INFINITY;
    let mut out = Vec::with_capacity(profile.times.len());
    for i in 0..profile.times.len() {
        run_min = run_min.min(chi_l(i));
        let xi = run_min - chi_r(i) + rho;
        if xi < -1e-9 {
            return Err(CertifyError::XiViolation { t: profile.times[i], xi });
        }
        out.push((profile.times[i], xi));
        run_min = run_min.min(chi_r(i));
        if i + 1 < profile.times.len() {
            let dt = profile.times[i + 1] - profile.times[i];
            let cell_inf = (chi_r(i) - lambda * dt).max(chi_l(i + 1) - profile.cell_mass[i]);
            run_min = run_min.min(cell_inf);
        }
    }
    Ok(out)
}

/// Budget slack at every grid time with both one-sided values:
/// `(xi_left, xi_right)` where the left value is the slack of windows
/// closing just before the time (pre-jump) and the right value includes the
/// jump. No violation check; callers judge with their own tolerances.
pub fn xi_profile_both_sides(
    profile: &CumulativeProfile,
    lambda: f64,
    rho: f64,
) -> Vec<(f64, f64)> {
    let chi_l = |i: usize| profile.h_left[i] - lambda * profile.times[i];
    let chi_r = |i: usize| profile.h_right[i] - lambda * profile.times[i];
    let mut run_min = f64::INFINITY;
    let mut out = Vec::with_capacity(profile.times.len());
    for i in 0..profile.times.len() {
        run_min = run_min.min(chi_l(i));
        let xi_left = run_min - chi_l(i) + rho;
        let xi_right = run_min - chi_r(i) + rho;
        out.push((xi_left, xi_right));
        run_min = run_min.min(chi_r(i));
        if i + 1 < profile.times.len() {
            let dt = profile.times[i + 1] - profile.times[i];
            let cell_inf = (chi_r(i) - lambda * dt).max(chi_l(i + 1) - profile.cell_mass[i]);
            run_min = run_min.min(cell_inf);
        }
    }
    out
}

/// A piecewise-constant mode schedule on `[0, end)`: `(start, mode)` pairs
/// with the first start at zero.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub intervals: Vec<(f64, usize)>,
    pub end: f64,
}

impl Schedule {
    pub fn new(intervals: Vec<(f64, usize)>, end: f64) -> Result<Self, CertifyError> {
        if intervals.is_empty() {
            return Err(CertifyError::EmptySchedule);
        }
        assert_eq!(intervals[0].0, 0.0, "schedule must start at 0");
        assert!(
            intervals.windows(2).all(|w| w[0].0 < w[1].0),
            "schedule starts must increase"
        );
        assert!(intervals.last().unwrap().0 < end);
        Ok(Schedule { intervals, end })
    }

    /// Active mode at time `t` in `[0, end)`.
    pub fn mode_at(&self, t: f64) -> usize {
        let mut mode = self.intervals[0].1;
        for &(start, m) in &self.intervals {
            if start <= t {
                mode = m;
            } else {
                break;
            }
        }
        mode
    }

    /// Switch times (interval starts after the first).
    pub fn switch_times(&self) -> impl Iterator<Item = (f64, usize, usize)> + '_ {
        self.intervals.windows(2).map(|w| (w[1].0, w[0].1, w[1].1))
    }
}

/// Build the matrix trajectory realized by a schedule over constant modes.
pub fn schedule_to_trajectory(
    modes: &[DMatrix<f64>],
    schedule: &Schedule,
    periodic: bool,
) -> Result<MatrixTrajectory, CertifyError> {
    let dim = modes[0].nrows();
    let mut segments = Vec::with_capacity(schedule.intervals.len());
    for (k, &(start, mode)) in schedule.intervals.iter().enumerate() {
        let end = schedule
            .intervals
            .get(k + 1)
            .map_or(schedule.end, |&(s, _)| s);
        segments.push(crate::trajectory::Segment::constant(start, end, &modes[mode]));
    }
    Ok(MatrixTrajectory::new(dim, segments, periodic.then_some(schedule.end))?)
}

/// Evaluation of the switched-system sufficient condition.
#[derive(Debug, Clone, Copy)]
pub struct SwitchedCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub unstable_activation: f64,
    pub switch_count: usize,
    pub max_mode_distance: f64,
}

/// Activation-time / switch-count sufficient condition for schedules over
/// constant modes: modes are classified as stable (`abscissa <= -kappa_s`)
/// or unstable (`abscissa <= kappa_u`), and
///
/// ```text
/// c1 (kappa_s + kappa_u) |unstable time| + #switches * c2^2 * k
/// ```
///
/// with `k` the largest pairwise mode distance must stay under the affine
/// budget over `[t_a, t_b]`. This dominates the general criterion for mode
/// families whose stabilization does not widen pairwise gaps.
#[allow(clippy::too_many_arguments)]
pub fn switched_condition(
    modes: &[DMatrix<f64>],
    schedule: &Schedule,
    kappa_s: f64,
    kappa_u: f64,
    constants: &ConstantsBundle,
    lambda: f64,
    rho: f64,
    t_a: f64,
    t_b: f64,
) -> Result<SwitchedCheck, CertifyError> {
    assert!(t_a < t_b && t_b <= schedule.end);
    let mut unstable = vec![false; modes.len()];
    for (index, m) in modes.iter().enumerate() {
        let alpha = spectral::abscissa(m)?;
        if alpha <= -kappa_s {
            unstable[index] = false;
        } else if alpha <= kappa_u {
            unstable[index] = true;
        } else {
            return Err(CertifyError::ModeUnclassifiable { index, abscissa: alpha, kappa_u });
        }
    }
    let mut k_max = 0.0_f64;
    for i in 0..modes.len() {
        for j in i + 1..modes.len() {
            k_max = k_max.max(op_norm(&(&modes[i] - &modes[j])));
        }
    }
    // activation time of unstable modes within [t_a, t_b]
    let mut activation = 0.0;
    for (k, &(start, mode)) in schedule.intervals.iter().enumerate() {
        let end = schedule
            .intervals
            .get(k + 1)
            .map_or(schedule.end, |&(s, _)| s);
        if unstable[mode] {
            activation += (end.min(t_b) - start.max(t_a)).max(0.0);
        }
    }
    // switches within the closed window [t_a, t_b]
    let mut switch_count = 0;
    for (t, from, to) in schedule.switch_times() {
        if t_a <= t && t <= t_b && from != to {
            let diff = op_norm(&(&modes[from] - &modes[to]));
            if diff > 1e-12 * (1.0 + op_norm(&modes[from])) {
                switch_count += 1;
            }
        }
    }
    let c1 = constants.c1;
    let c2 = constants.c2;
    let lhs = c1 * (kappa_s + kappa_u) * activation + switch_count as f64 * c2 * c2 * k_max;
    let rhs = lambda * (t_b - t_a) + rho;
    Ok(SwitchedCheck {
        holds: lhs <= rhs,
        lhs,
        rhs,
        unstable_activation: activation,
        switch_count,
        max_mode_distance: k_max,
    })
}
