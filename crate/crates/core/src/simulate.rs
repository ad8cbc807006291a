//! Jump-aware numerical integration and runtime Lyapunov monitoring.
//!
//! The solutions of `x' = A(t)x + g(t,x)` are continuous even where `A`
//! jumps, so the integrator carries the state through every breakpoint and
//! only restarts the local dynamics. Steps are split at segment boundaries,
//! jumps, and excess kinks; within a sub-interval the classic fourth-order
//! one-step scheme is used with the segment's own closed form (the right
//! endpoint evaluates the left limit).
//!
//! The monitors recompute the certificate's Lyapunov data along a trace:
//! `V = xᵀP(t)x`, the budget slack `xi`, the weight `U = exp(2 xi / c1)`,
//! and `W = U V`, checking the flow decay rate, non-increase across jumps,
//! the norm sandwich, and the final ISS envelope.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::certify::{self, CertificateParams, CertifyError, IssConstants};
use crate::expr::{Expr, ExprError};
use crate::lyapunov::{solve_lyapunov, LyapunovError};
use crate::spectral::{shift_matrix, SpectralError};
use crate::trajectory::{golden_max, MatrixTrajectory, TrajectoryError};
use crate::variation::{self, VariationError};

/// State-norm guard; integration aborts beyond this.
const BLOWUP_LIMIT: f64 = 1e12;

/// Relative slack on the flow decay rate check (quadrature and
/// finite-difference noise allowance).
const FLOW_TOL: f64 = 0.05;

/// Relative slack on the jump and sandwich checks.
const JUMP_TOL: f64 = 1e-9;

/// Below this the Lyapunov function is considered numerically zero and the
/// relative decay checks are skipped.
const W_FLOOR: f64 = 1e-280;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("initial state has dimension {got}, the system needs {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("state norm {norm:.3e} exceeded the blow-up guard at t = {t}")]
    BlowUp { t: f64, norm: f64 },
    #[error("perturbation exceeds its envelope at t = {t}: |g| = {norm_g:.6e} > {bound:.6e}")]
    EnvelopeViolated { t: f64, norm_g: f64, bound: f64 },
    #[error("perturbation envelope is negative at t = {t}: {value}")]
    NegativeEnvelope { t: f64, value: f64 },
    #[error("invalid integration window [{t0}, {tf}] or step {step}")]
    BadWindow { t0: f64, tf: f64, step: f64 },
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Variation(#[from] VariationError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Perturbation description: envelope functions and, optionally, an
/// explicit realization to simulate.
#[derive(Debug, Clone)]
pub struct PerturbationModel {
    /// State-proportional envelope `gamma(t) >= 0`.
    pub gamma: Expr,
    /// Persistent envelope `delta(t) >= 0`.
    pub delta: Expr,
    /// Explicit map `g(t, x)`, one expression per state component over
    /// `t, x1..xn`. When absent, simulations run the nominal system.
    pub g_explicit: Option<Vec<Expr>>,
}

impl PerturbationModel {
    pub fn new(gamma: Expr, delta: Expr, g_explicit: Option<Vec<Expr>>) -> Self {
        PerturbationModel { gamma, delta, g_explicit }
    }

    /// No perturbation at all.
    pub fn zero() -> Self {
        PerturbationModel {
            gamma: Expr::Const(0.0),
            delta: Expr::Const(0.0),
            g_explicit: None,
        }
    }

    pub fn gamma_at(&self, t: f64) -> Result<f64, SimError> {
        let v = self.gamma.eval(t)?;
        if v < 0.0 {
            return Err(SimError::NegativeEnvelope { t, value: v });
        }
        Ok(v)
    }

    pub fn delta_at(&self, t: f64) -> Result<f64, SimError> {
        let v = self.delta.eval(t)?;
        if v < 0.0 {
            return Err(SimError::NegativeEnvelope { t, value: v });
        }
        Ok(v)
    }

    fn g_at(&self, t: f64, x: &DVector<f64>) -> Result<Option<DVector<f64>>, SimError> {
        match &self.g_explicit {
            None => Ok(None),
            Some(entries) => {
                let state: Vec<f64> = x.iter().copied().collect();
                let mut g = DVector::zeros(entries.len());
                for (i, e) in entries.iter().enumerate() {
                    g[i] = e.eval_with_state(t, &state)?;
                }
                Ok(Some(g))
            }
        }
    }
}

/// One integration sample.
#[derive(Debug, Clone)]
pub struct TraceSample {
    pub t: f64,
    pub x: DVector<f64>,
    pub norm_x: f64,
}

/// Time-stamped solution trace. `nominal` marks runs where no explicit
/// perturbation was available and `g = 0` was integrated (the envelope-only
/// differential inclusion is out of scope).
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub samples: Vec<TraceSample>,
    pub nominal: bool,
    pub step: f64,
    pub t0: f64,
    pub tf: f64,
    /// Jump times of the matrix path inside `(t0, tf]`.
    pub jump_times: Vec<f64>,
}

/// Integrate the system over `[t0, tf]` with nominal step `step`,
/// splitting at segment boundaries, jumps, and the given extra breakpoints
/// (typically excess kinks). The envelope bound on `g` is checked at every
/// accepted step.
pub fn integrate(
    traj: &MatrixTrajectory,
    pert: &PerturbationModel,
    x0: &DVector<f64>,
    t0: f64,
    tf: f64,
    step: f64,
    extra_breakpoints: &[f64],
) -> Result<SimulationTrace, SimError> {
    if !(step > 0.0) || !(tf > t0) || t0 < 0.0 {
        return Err(SimError::BadWindow { t0, tf, step });
    }
    if x0.len() != traj.dim() {
        return Err(SimError::Dimension { expected: traj.dim(), got: x0.len() });
    }
    let pieces = traj.smooth_pieces(t0, tf);
    let jump_times = traj.jump_set(t0, tf)?;

    let mut samples = Vec::new();
    let mut x = x0.clone();
    samples.push(TraceSample { t: t0, x: x.clone(), norm_x: x.norm() });
    check_envelope(pert, t0, &x)?;

    for piece in &pieces {
        // split the piece at requested interior breakpoints
        let mut cuts = vec![piece.start];
        cuts.extend(
            extra_breakpoints
                .iter()
                .copied()
                .filter(|&b| b > piece.start && b < piece.end),
        );
        cuts.push(piece.end);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let n_steps = (((hi - lo) / step).ceil() as usize).max(1);
            let h = (hi - lo) / n_steps as f64;
            for k in 0..n_steps {
                let t = lo + h * k as f64;
                let t_next = if k + 1 == n_steps { hi } else { lo + h * (k + 1) as f64 };
                let h_eff = t_next - t;
                x = rk4_step(traj, piece, pert, t, h_eff, &x)?;
                let norm_x = x.norm();
                if norm_x > BLOWUP_LIMIT {
                    return Err(SimError::BlowUp { t: t_next, norm: norm_x });
                }
                check_envelope(pert, t_next, &x)?;
                samples.push(TraceSample { t: t_next, x: x.clone(), norm_x });
            }
        }
    }
    Ok(SimulationTrace {
        samples,
        nominal: pert.g_explicit.is_none(),
        step,
        t0,
        tf,
        jump_times,
    })
}

fn check_envelope(
    pert: &PerturbationModel,
    t: f64,
    x: &DVector<f64>,
) -> Result<(), SimError> {
    if let Some(g) = pert.g_at(t, x)? {
        let bound = pert.gamma_at(t)? * x.norm() + pert.delta_at(t)?;
        let norm_g = g.norm();
        if norm_g > bound * (1.0 + JUMP_TOL) + f64::MIN_POSITIVE {
            return Err(SimError::EnvelopeViolated { t, norm_g, bound });
        }
    }
    Ok(())
}

fn rk4_step(
    traj: &MatrixTrajectory,
    piece: &crate::trajectory::SmoothPiece,
    pert: &PerturbationModel,
    t: f64,
    h: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>, SimError> {
    let f = |t: f64, x: &DVector<f64>| -> Result<DVector<f64>, SimError> {
        let a = traj.eval_in_piece(piece, t)?;
        let mut dx = &a * x;
        if let Some(g) = pert.g_at(t, x)? {
            dx += g;
        }
        Ok(dx)
    };
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)))?;
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)))?;
    let k4 = f(t + h, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Monitor data at one sample (right-continuous values).
#[derive(Debug, Clone, Copy)]
pub struct MonitorSample {
    pub t: f64,
    pub v: f64,
    pub u: f64,
    pub w: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum ViolationKind {
    /// `W` decayed slower than the certified rate between samples.
    FlowDecay { got: f64, allowed: f64 },
    /// `W` increased across a jump.
    JumpIncrease { before: f64, after: f64 },
    /// `W` fell below `c1 |x|^2`.
    SandwichLower { w: f64, bound: f64 },
    /// `W` exceeded `c2 exp(2 rho / c1) |x|^2`.
    SandwichUpper { w: f64, bound: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct MonitorViolation {
    pub t: f64,
    pub index: usize,
    pub kind: ViolationKind,
}

/// Per-sample Lyapunov data plus the first violated check, if any.
#[derive(Debug, Clone)]
pub struct MonitorReport {
    pub samples: Vec<MonitorSample>,
    pub violation: Option<MonitorViolation>,
    pub iss: IssConstants,
}

impl MonitorReport {
    pub fn ok(&self) -> bool {
        self.violation.is_none()
    }
}

/// Recompute the certificate's Lyapunov function along a trace and check
/// the flow decay, jump non-increase, and norm sandwich.
pub fn monitor_w(
    trace: &SimulationTrace,
    traj: &MatrixTrajectory,
    pert: &PerturbationModel,
    params: &CertificateParams,
) -> Result<MonitorReport, SimError> {
    let c1 = params.constants.c1;
    let c2 = params.constants.c2;
    let rho = params.rho;
    let iss = certify::iss_constants(params);
    let times: Vec<f64> = trace.samples.iter().map(|s| s.t).collect();
    let profile = certify::build_profile_on_times(traj, pert, params.kappa, &params.constants, &times)?;
    let xi = certify::xi_profile_both_sides(&profile, params.lambda, rho);

    let is_jump: Vec<bool> = times
        .iter()
        .map(|t| trace.jump_times.iter().any(|tj| tj == t))
        .collect();

    let mut samples = Vec::with_capacity(times.len());
    let mut violation: Option<MonitorViolation> = None;
    let mut w_prev = 0.0_f64;
    let record = |viol: &mut Option<MonitorViolation>, t, index, kind| {
        if viol.is_none() {
            *viol = Some(MonitorViolation { t, index, kind });
        }
    };

    let upper_factor = c2 * (2.0 * rho / c1).exp();
    for (i, sample) in trace.samples.iter().enumerate() {
        let t = sample.t;
        let atil = shift_matrix(&traj.value_at(t)?, params.kappa)?;
        let p = solve_lyapunov(&atil)?.p;
        let v = quadratic_form(&p, &sample.x);
        let u = (2.0 * xi[i].1 / c1).exp();
        let w = u * v;
        let n2 = sample.norm_x * sample.norm_x;

        if w < c1 * n2 * (1.0 - JUMP_TOL) - f64::MIN_POSITIVE {
            record(&mut violation, t, i, ViolationKind::SandwichLower { w, bound: c1 * n2 });
        }
        if w > upper_factor * n2 * (1.0 + JUMP_TOL) + f64::MIN_POSITIVE {
            record(
                &mut violation,
                t,
                i,
                ViolationKind::SandwichUpper { w, bound: upper_factor * n2 },
            );
        }

        // value just before a jump, via the left limit of the path and the
        // pre-jump budget slack
        let w_left = if i > 0 && is_jump[i] {
            let atil_left = shift_matrix(&traj.left_limit(t)?, params.kappa)?;
            let p_left = solve_lyapunov(&atil_left)?.p;
            let v_left = quadratic_form(&p_left, &sample.x);
            let u_left = (2.0 * xi[i].0 / c1).exp();
            Some(u_left * v_left)
        } else {
            None
        };

        if i > 0 {
            let h = t - times[i - 1];
            let w_end_of_flow = w_left.unwrap_or(w);
            // max delta over the step for the disturbance feed-in term
            let d0 = pert.delta_at(times[i - 1])?;
            let d1 = pert.delta_at(t)?;
            let dm = pert.delta_at(0.5 * (times[i - 1] + t))?;
            let dmax = d0.max(d1).max(dm);
            let decay = (-iss.a * (1.0 - FLOW_TOL) * h).exp();
            let allowed = w_prev * decay
                + (iss.b / iss.a) * (1.0 - decay) * dmax * dmax * (1.0 + FLOW_TOL)
                + W_FLOOR;
            if w_prev > W_FLOOR && w_end_of_flow > allowed {
                record(
                    &mut violation,
                    t,
                    i,
                    ViolationKind::FlowDecay { got: w_end_of_flow, allowed },
                );
            }
            if let Some(wl) = w_left {
                if w > wl * (1.0 + JUMP_TOL) + f64::MIN_POSITIVE {
                    record(
                        &mut violation,
                        t,
                        i,
                        ViolationKind::JumpIncrease { before: wl, after: w },
                    );
                }
            }
        }
        samples.push(MonitorSample { t, v, u, w, xi: xi[i].1 });
        w_prev = w;
    }
    Ok(MonitorReport { samples, violation, iss })
}

fn quadratic_form(p: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (x.transpose() * p * x)[(0, 0)]
}

/// ISS envelope check along a trace.
#[derive(Debug, Clone)]
pub struct IssReport {
    /// Envelope values per sample.
    pub envelope: Vec<f64>,
    /// Smallest `envelope - |x|` over the trace (pre-tolerance).
    pub min_margin: f64,
    pub min_margin_t: f64,
    pub ok: bool,
    /// First sample where the state escaped the tolerated envelope.
    pub first_violation: Option<(f64, f64, f64)>,
}

/// Verify `|x(t)| <= k1 exp(-k2 (t - t0)) |x0| + k3 max delta` along the
/// trace. The running max of `delta` refines each sample interval by
/// golden-section search.
pub fn verify_iss(
    trace: &SimulationTrace,
    iss: &IssConstants,
    pert: &PerturbationModel,
) -> Result<IssReport, SimError> {
    let x0_norm = trace.samples[0].norm_x;
    let t0 = trace.t0;
    let mut delta_max = pert.delta_at(t0)?;
    let mut envelope = Vec::with_capacity(trace.samples.len());
    let mut min_margin = f64::INFINITY;
    let mut min_margin_t = t0;
    let mut first_violation = None;
    let mut prev_t = t0;
    for sample in &trace.samples {
        if sample.t > prev_t {
            let refined = golden_max(
                &|t: f64| pert.delta_at(t),
                prev_t,
                sample.t,
                24,
            )?;
            delta_max = delta_max.max(refined);
        }
        let env = iss.k1 * (-iss.k2 * (sample.t - t0)).exp() * x0_norm + iss.k3 * delta_max;
        let margin = env - sample.norm_x;
        if margin < min_margin {
            min_margin = margin;
            min_margin_t = sample.t;
        }
        if sample.norm_x > env * (1.0 + 1e-6) && first_violation.is_none() {
            first_violation = Some((sample.t, sample.norm_x, env));
        }
        envelope.push(env);
        prev_t = sample.t;
    }
    Ok(IssReport {
        envelope,
        min_margin,
        min_margin_t,
        ok: first_violation.is_none(),
        first_violation,
    })
}

/// Excess kink times, re-exported here because simulations split their
/// steps at them.
pub fn kink_breakpoints(
    traj: &MatrixTrajectory,
    kappa: f64,
    t0: f64,
    tf: f64,
) -> Result<Vec<f64>, SimError> {
    Ok(variation::excess_kinks(traj, kappa, t0, tf)?)
}
