//! Total variation of the matrix path, its clipped excess, and the
//! stabilized path over half-open windows `(t_a, t_b]`.
//!
//! Each variation splits into an absolutely continuous part (quadrature of a
//! derivative density over smooth pieces) and a jump part (sum of jump
//! magnitudes attributed to the window). The matrix density uses the exact
//! symbolic entry derivatives. The excess density differentiates the
//! abscissa by central finite differences — eigenvalue derivative formulas
//! for possibly defective matrices are not worth the fragility — with ramp
//! kinks located by bisection and inserted as quadrature breakpoints.
//!
//! A dyadic partition supremum (`tv_partition_lower_bound`) serves as an
//! independent lower-bound oracle for tests.

use thiserror::Error;

use crate::linalg::op_norm;
use crate::quad::{adaptive_simpson, QuadResult, DEFAULT_TOL};
use crate::spectral::{self, shift_matrix, SpectralError};
use crate::trajectory::{MatrixTrajectory, SmoothPiece, TrajectoryError};

/// Bisection tolerance (in time) for locating ramp kinks.
const KINK_TOL: f64 = 1e-10;

/// Scan resolution per smooth piece when hunting for kink sign changes.
const KINK_SCAN_POINTS: usize = 256;

/// Base step for finite-difference derivatives of the excess.
const FD_STEP: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },
    #[error("kink localization failed to reach tolerance {tol} after {iterations} bisections")]
    KinkLocalization { tol: f64, iterations: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Continuous/jump split of a total variation over a window.
#[derive(Debug, Clone, Copy)]
pub struct VariationBreakdown {
    pub continuous_part: f64,
    pub jump_part: f64,
    pub total: f64,
    pub window: (f64, f64),
}

impl VariationBreakdown {
    fn new(continuous_part: f64, jump_part: f64, window: (f64, f64)) -> Self {
        VariationBreakdown {
            continuous_part,
            jump_part,
            total: continuous_part + jump_part,
            window,
        }
    }
}

fn check_window(traj: &MatrixTrajectory, t_a: f64, t_b: f64) {
    assert!(0.0 <= t_a && t_a < t_b, "need 0 <= t_a < t_b");
    if traj.period().is_none() {
        assert!(
            t_b <= traj.domain_end(),
            "window end {t_b} beyond the defined horizon {}",
            traj.domain_end()
        );
    }
}

fn accept(r: QuadResult, tol: f64) -> Result<f64, VariationError> {
    if r.converged {
        Ok(r.value)
    } else {
        Err(VariationError::QuadratureNotConverged { achieved: r.error_estimate, requested: tol })
    }
}

/// Total variation of the matrix path over `(t_a, t_b]`.
pub fn tv_matrix(
    traj: &MatrixTrajectory,
    t_a: f64,
    t_b: f64,
) -> Result<VariationBreakdown, VariationError> {
    check_window(traj, t_a, t_b);
    let mut continuous = 0.0;
    for piece in traj.smooth_pieces(t_a, t_b) {
        continuous += quad_matrix_density(traj, &piece, piece.start, piece.end, DEFAULT_TOL)?;
    }
    let mut jump = 0.0;
    for t in traj.jump_set(t_a, t_b)? {
        if let Some(diff) = traj.jump_at(t)? {
            jump += op_norm(&diff);
        }
    }
    Ok(VariationBreakdown::new(continuous, jump, (t_a, t_b)))
}

/// Total variation of the ramp-clipped excess over `(t_a, t_b]`.
pub fn tv_excess(
    traj: &MatrixTrajectory,
    kappa: f64,
    t_a: f64,
    t_b: f64,
) -> Result<VariationBreakdown, VariationError> {
    check_window(traj, t_a, t_b);
    let mut continuous = 0.0;
    for (piece, lo, hi) in refined_intervals(traj, kappa, t_a, t_b)? {
        continuous += quad_excess_density(traj, kappa, &piece, lo, hi, DEFAULT_TOL)?;
    }
    let mut jump = 0.0;
    for t in traj.jump_set(t_a, t_b)? {
        let right = spectral::unstable_excess(&traj.value_at(t)?, kappa)?;
        let left = spectral::unstable_excess(&traj.left_limit(t)?, kappa)?;
        jump += (right - left).abs();
    }
    Ok(VariationBreakdown::new(continuous, jump, (t_a, t_b)))
}

/// Total variation of the stabilized path over `(t_a, t_b]`.
pub fn tv_shifted(
    traj: &MatrixTrajectory,
    kappa: f64,
    t_a: f64,
    t_b: f64,
) -> Result<VariationBreakdown, VariationError> {
    check_window(traj, t_a, t_b);
    let mut continuous = 0.0;
    for (piece, lo, hi) in refined_intervals(traj, kappa, t_a, t_b)? {
        continuous += quad_shifted_density(traj, kappa, &piece, lo, hi, DEFAULT_TOL)?;
    }
    let mut jump = 0.0;
    for t in traj.jump_set(t_a, t_b)? {
        let right = shift_matrix(&traj.value_at(t)?, kappa)?;
        let left = shift_matrix(&traj.left_limit(t)?, kappa)?;
        jump += op_norm(&(right - left));
    }
    Ok(VariationBreakdown::new(continuous, jump, (t_a, t_b)))
}

/// Lower bound on the total variation from a dyadic partition of the given
/// depth. Refinement is monotone non-decreasing; this is the test oracle for
/// the quadrature route.
pub fn tv_partition_lower_bound(
    traj: &MatrixTrajectory,
    t_a: f64,
    t_b: f64,
    depth: u32,
) -> Result<f64, VariationError> {
    assert!(depth >= 1);
    check_window(traj, t_a, t_b);
    let steps = 1u64 << depth;
    let mut sum = 0.0;
    let mut prev = traj.value_at(t_a)?;
    for k in 1..=steps {
        let t = t_a + (t_b - t_a) * k as f64 / steps as f64;
        let cur = traj.value_at(t)?;
        sum += op_norm(&(&cur - &prev));
        prev = cur;
    }
    Ok(sum)
}

/// Same dyadic partition sum for the stabilized path.
pub fn tv_shifted_partition_lower_bound(
    traj: &MatrixTrajectory,
    kappa: f64,
    t_a: f64,
    t_b: f64,
    depth: u32,
) -> Result<f64, VariationError> {
    assert!(depth >= 1);
    check_window(traj, t_a, t_b);
    let steps = 1u64 << depth;
    let mut sum = 0.0;
    let mut prev = shift_matrix(&traj.value_at(t_a)?, kappa)?;
    for k in 1..=steps {
        let t = t_a + (t_b - t_a) * k as f64 / steps as f64;
        let cur = shift_matrix(&traj.value_at(t)?, kappa)?;
        sum += op_norm(&(&cur - &prev));
        prev = cur;
    }
    Ok(sum)
}

/// Verify that the stabilized variation is bounded by the sum of the matrix
/// and excess variations; returns the check and the slack.
pub fn check_split_bound(
    traj: &MatrixTrajectory,
    kappa: f64,
    t_a: f64,
    t_b: f64,
) -> Result<(bool, f64), VariationError> {
    let tilde = tv_shifted(traj, kappa, t_a, t_b)?;
    let raw = tv_matrix(traj, t_a, t_b)?;
    let excess = tv_excess(traj, kappa, t_a, t_b)?;
    let slack = raw.total + excess.total - tilde.total;
    Ok((slack >= -1e-9, slack))
}

/// Times in `(t_a, t_b)` where the clipped excess switches between zero and
/// active, located by sign-change bisection of the abscissa margin on each
/// smooth piece. Tangential touches without a sign change are not kinks.
pub fn excess_kinks(
    traj: &MatrixTrajectory,
    kappa: f64,
    t_a: f64,
    t_b: f64,
) -> Result<Vec<f64>, VariationError> {
    let mut kinks = Vec::new();
    for piece in traj.smooth_pieces(t_a, t_b) {
        let margin = |t: f64| -> Result<f64, VariationError> {
            let a = traj.eval_in_piece(&piece, t)?;
            Ok(spectral::abscissa(&a)? + kappa)
        };
        let mut prev_t = piece.start;
        let mut prev_v = margin(prev_t)?;
        for k in 1..=KINK_SCAN_POINTS {
            let t = piece.start
                + (piece.end - piece.start) * k as f64 / KINK_SCAN_POINTS as f64;
            let v = margin(t)?;
            if prev_v == 0.0 {
                // grid point exactly on the kink
                kinks.push(prev_t);
            } else if prev_v * v < 0.0 {
                kinks.push(bisect_root(&margin, prev_t, t, prev_v)?);
            }
            prev_t = t;
            prev_v = v;
        }
    }
    kinks.retain(|&t| t > t_a && t < t_b);
    kinks.sort_by(f64::total_cmp);
    kinks.dedup_by(|a, b| (*a - *b).abs() <= KINK_TOL);
    Ok(kinks)
}

fn bisect_root(
    f: &impl Fn(f64) -> Result<f64, VariationError>,
    mut lo: f64,
    mut hi: f64,
    f_lo: f64,
) -> Result<f64, VariationError> {
    let mut sign_lo = f_lo.signum();
    for _ in 0..200 {
        if hi - lo <= KINK_TOL {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
            let _ = &mut sign_lo;
        }
    }
    Err(VariationError::KinkLocalization { tol: KINK_TOL, iterations: 200 })
}

/// Smooth pieces of the window further split at excess kinks; yields
/// `(piece, lo, hi)` subintervals.
fn refined_intervals(
    traj: &MatrixTrajectory,
    kappa: f64,
    t_a: f64,
    t_b: f64,
) -> Result<Vec<(SmoothPiece, f64, f64)>, VariationError> {
    let kinks = excess_kinks(traj, kappa, t_a, t_b)?;
    let mut out = Vec::new();
    for piece in traj.smooth_pieces(t_a, t_b) {
        let mut cuts = vec![piece.start];
        cuts.extend(kinks.iter().copied().filter(|&k| k > piece.start && k < piece.end));
        cuts.push(piece.end);
        for w in cuts.windows(2) {
            if w[1] > w[0] {
                out.push((piece, w[0], w[1]));
            }
        }
    }
    Ok(out)
}

/// Excess value at a point of a piece.
pub(crate) fn excess_at(
    traj: &MatrixTrajectory,
    kappa: f64,
    piece: &SmoothPiece,
    t: f64,
) -> Result<f64, VariationError> {
    let a = traj.eval_in_piece(piece, t)?;
    Ok(spectral::unstable_excess(&a, kappa)?)
}

/// Finite-difference derivative of the excess at `t`, stepping only inside
/// `(lo, hi)`: central where the interval allows, one-sided at endpoints.
pub(crate) fn excess_derivative(
    traj: &MatrixTrajectory,
    kappa: f64,
    piece: &SmoothPiece,
    t: f64,
    lo: f64,
    hi: f64,
) -> Result<f64, VariationError> {
    let width = hi - lo;
    if width < 4.0 * KINK_TOL {
        return Ok(0.0);
    }
    // clamped central stencil: both sample points stay inside [lo, hi], so
    // the quotient never crosses a kink and is one-sided at the interval
    // ends. The stencil endpoints vary continuously with t (no scheme
    // switch for the quadrature to chase) and the step never shrinks below
    // min(FD_STEP, width/2), which keeps eigensolver noise bounded.
    let phi = |t: f64| excess_at(traj, kappa, piece, t);
    let h = FD_STEP.min(width / 2.0);
    let upper = (t + h).min(hi);
    let lower = (t - h).max(lo);
    Ok((phi(upper)? - phi(lower)?) / (upper - lower))
}

/// `∫ φ dt` over `[lo, hi]` inside one piece (the criterion's excess
/// mass), with an explicit minimum Simpson depth.
pub(crate) fn quad_excess_md(
    traj: &MatrixTrajectory,
    kappa: f64,
    piece: &SmoothPiece,
    lo: f64,
    hi: f64,
    tol: f64,
    min_depth: u32,
) -> Result<f64, VariationError> {
    let f = |t: f64| excess_at(traj, kappa, piece, t);
    accept(crate::quad::adaptive_simpson_md(&f, lo, hi, tol, min_depth)?, tol)
}

/// As [`quad_shifted_density`] with an explicit minimum Simpson depth and
/// separate stencil bounds: integration runs over `[lo, hi]` (one grid
/// cell) while the excess difference quotient may roam the enclosing
/// kink-free interval `[fd_lo, fd_hi]`, keeping the integrand identical
/// across adjacent cells.
#[allow(clippy::too_many_arguments)]
pub(crate) fn quad_shifted_density_md(
    traj: &MatrixTrajectory,
    kappa: f64,
    piece: &SmoothPiece,
    lo: f64,
    hi: f64,
    fd_lo: f64,
    fd_hi: f64,
    tol: f64,
    min_depth: u32,
) -> Result<f64, VariationError> {
    let f = |t: f64| -> Result<f64, VariationError> {
        let mut da = traj.derivative_in_piece(piece, t)?;
        let dphi = excess_derivative(traj, kappa, piece, t, fd_lo, fd_hi)?;
        for i in 0..da.nrows() {
            da[(i, i)] -= dphi;
        }
        Ok(op_norm(&da))
    };
    accept(crate::quad::adaptive_simpson_md(&f, lo, hi, tol, min_depth)?, tol)
}

/// `∫ |dφ/dt| dt` over `[lo, hi]` inside one piece.
pub(crate) fn quad_excess_density(
    traj: &MatrixTrajectory,
    kappa: f64,
    piece: &SmoothPiece,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, VariationError> {
    let f = |t: f64| -> Result<f64, VariationError> {
        Ok(excess_derivative(traj, kappa, piece, t, lo, hi)?.abs())
    };
    accept(adaptive_simpson(&f, lo, hi, tol)?, tol)
}

/// `∫ ‖dA/dt‖ dt` over `[lo, hi]` inside one piece (exact symbolic density).
pub(crate) fn quad_matrix_density(
    traj: &MatrixTrajectory,
    piece: &SmoothPiece,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, VariationError> {
    let f = |t: f64| -> Result<f64, VariationError> {
        Ok(op_norm(&traj.derivative_in_piece(piece, t)?))
    };
    accept(adaptive_simpson(&f, lo, hi, tol)?, tol)
}

/// `∫ ‖d(shifted)/dt‖ dt` over `[lo, hi]` inside one piece: symbolic matrix
/// density combined with the finite-difference excess density.
pub(crate) fn quad_shifted_density(
    traj: &MatrixTrajectory,
    kappa: f64,
    piece: &SmoothPiece,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, VariationError> {
    let f = |t: f64| -> Result<f64, VariationError> {
        let mut da = traj.derivative_in_piece(piece, t)?;
        let dphi = excess_derivative(traj, kappa, piece, t, lo, hi)?;
        for i in 0..da.nrows() {
            da[(i, i)] -= dphi;
        }
        Ok(op_norm(&da))
    };
    accept(adaptive_simpson(&f, lo, hi, tol)?, tol)
}
