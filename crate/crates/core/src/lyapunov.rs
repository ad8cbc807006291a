//! Lyapunov solutions along the stabilized path and certificate constants.
//!
//! For each time the stabilized matrix is Hurwitz, so `AᵀP + PA + I = 0` has
//! a unique symmetric positive-definite solution. The solve assembles the
//! n(n+1)/2 symmetric unknowns into one dense linear system — simple, exact
//! to check by residual substitution, and well suited to the moderate
//! dimensions this artifact targets.
//!
//! Two routes produce the sandwich constants `c1 <= zᵀP(t)z / |z|² <= c2`:
//! the closed-form route from the uniform bounds (`constants_formula`, which
//! needs the decay envelope factor from `estimate_c`), and the spectral
//! route that bounds the eigenvalues of `P(t)` directly over a grid
//! (`constants_spectral`, the tighter default).

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::{op_norm, symmetric_eig_range};
use crate::spectral::{self, ramp, shift_matrix, SpectralError};
use crate::trajectory::{MatrixTrajectory, TrajectoryError};

/// Relative safety margin applied to grid extrema of the `P(t)` spectrum.
const SPECTRAL_MARGIN: f64 = 1e-6;

/// Multiplicative safety margin on the decay envelope factor.
const C_MARGIN: f64 = 1.05;

/// Residual acceptance threshold for a Lyapunov solve.
const RESIDUAL_TOL: f64 = 1e-8;

/// Condition-estimate threshold above which the assembled system is
/// reported ill-conditioned.
const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("matrix is not Hurwitz (abscissa {abscissa}); the Lyapunov equation has no positive solution")]
    NonHurwitz { abscissa: f64 },
    #[error("assembled Lyapunov system is ill-conditioned (condition estimate {cond_estimate:.3e})")]
    IllConditioned { cond_estimate: f64 },
    #[error("assembled Lyapunov system is singular")]
    Singular,
    #[error("Lyapunov residual {residual:.3e} exceeds tolerance for solution of norm {p_norm:.3e}")]
    ResidualTooLarge { residual: f64, p_norm: f64 },
    #[error("Lyapunov solution is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("matrix exponential overflow: scaling for norm {norm:.3e} exceeds the budget")]
    ExpmOverflow { norm: f64 },
    #[error("beta = {beta} must lie strictly inside (0, kappa = {kappa})")]
    InvalidBeta { beta: f64, kappa: f64 },
    #[error("decay envelope factor c = {c} must be at least 1")]
    InvalidC { c: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Solution of `AᵀP + PA + I = 0` with its substitution residual.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    pub p: DMatrix<f64>,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantsMode {
    Formula,
    Spectral,
}

impl ConstantsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstantsMode::Formula => "formula",
            ConstantsMode::Spectral => "spectral",
        }
    }
}

/// The sandwich constants entering the criterion, plus the decay parameters
/// they were derived from.
#[derive(Debug, Clone)]
pub struct ConstantsBundle {
    pub c1: f64,
    pub c2: f64,
    /// Decay envelope factor; only known on the formula route.
    pub c: Option<f64>,
    pub beta: f64,
    pub mode: ConstantsMode,
}

/// Matrix exponential by scaling and squaring with diagonal Padé
/// approximants (orders 3/5/7/9/13 selected by the 1-norm).
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LyapunovError> {
    const THETA: [(usize, f64); 5] = [
        (3, 1.495_585_217_958_292e-2),
        (5, 2.539_398_330_063_23e-1),
        (7, 9.504_178_996_162_932e-1),
        (9, 2.097_847_961_257_068e0),
        (13, 5.371_920_351_148_152e0),
    ];
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm of a non-square matrix");
    if n == 0 {
        return Ok(m.clone());
    }
    let norm1 = one_norm(m);
    if !norm1.is_finite() {
        return Err(LyapunovError::ExpmOverflow { norm: norm1 });
    }
    let mut order = 13;
    let mut scaling = 0u32;
    for &(ord, theta) in &THETA {
        if norm1 <= theta {
            order = ord;
            break;
        }
    }
    if norm1 > THETA[4].1 {
        scaling = (norm1 / THETA[4].1).log2().ceil().max(0.0) as u32;
        if scaling > 60 {
            return Err(LyapunovError::ExpmOverflow { norm: norm1 });
        }
    }
    let a = m / 2f64.powi(scaling as i32);
    let (u, v) = pade_uv(&a, order);
    let denom = &v - &u;
    let numer = &v + &u;
    let mut x = denom
        .lu()
        .solve(&numer)
        .ok_or(LyapunovError::Singular)?;
    for _ in 0..scaling {
        x = &x * &x;
    }
    Ok(x)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..m.ncols() {
        let mut s = 0.0;
        for i in 0..m.nrows() {
            s += m[(i, j)].abs();
        }
        best = best.max(s);
    }
    best
}

/// Numerator/denominator split of the diagonal Padé approximant:
/// `U` collects odd powers, `V` even powers.
fn pade_uv(a: &DMatrix<f64>, order: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eye = DMatrix::identity(n, n);
    let a2 = a * a;
    match order {
        3 => {
            let b = [120.0, 60.0, 12.0, 1.0];
            let u = a * (&a2 * b[3] + &eye * b[1]);
            let v = &a2 * b[2] + &eye * b[0];
            (u, v)
        }
        5 => {
            let b = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
            let a4 = &a2 * &a2;
            let u = a * (&a4 * b[5] + &a2 * b[3] + &eye * b[1]);
            let v = &a4 * b[4] + &a2 * b[2] + &eye * b[0];
            (u, v)
        }
        7 => {
            let b = [17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1_512.0, 56.0, 1.0];
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let u = a * (&a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1]);
            let v = &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];
            (u, v)
        }
        9 => {
            let b = [
                17_643_225_600.0,
                8_821_612_800.0,
                2_075_673_600.0,
                302_702_400.0,
                30_270_240.0,
                2_162_160.0,
                110_880.0,
                3_960.0,
                90.0,
                1.0,
            ];
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let a8 = &a6 * &a2;
            let u = a * (&a8 * b[9] + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1]);
            let v = &a8 * b[8] + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];
            (u, v)
        }
        13 => {
            let b = [
                64_764_752_532_480_000.0,
                32_382_376_266_240_000.0,
                7_771_770_303_897_600.0,
                1_187_353_796_428_800.0,
                129_060_195_264_000.0,
                10_559_470_521_600.0,
                670_442_572_800.0,
                33_522_128_640.0,
                1_323_241_920.0,
                40_840_800.0,
                960_960.0,
                16_380.0,
                182.0,
                1.0,
            ];
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            let u_high = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
            let u = a * (u_high + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &eye * b[1]);
            let v_high = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
            let v = v_high + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &eye * b[0];
            (u, v)
        }
        _ => unreachable!("unsupported Padé order"),
    }
}

fn vech_index(n: usize, i: usize, j: usize) -> usize {
    // index of unknown P[i][j] with i <= j in the packed upper triangle
    debug_assert!(i <= j && j < n);
    i * (2 * n - i + 1) / 2 + (j - i)
}

/// Solve `AᵀP + PA + I = 0` for symmetric positive-definite `P`, assembling
/// the packed symmetric unknowns into a dense linear system.
pub fn solve_lyapunov(atil: &DMatrix<f64>) -> Result<LyapunovSolution, LyapunovError> {
    let n = atil.nrows();
    assert_eq!(n, atil.ncols(), "Lyapunov solve of a non-square matrix");
    let alpha = spectral::abscissa(atil)?;
    if alpha >= 0.0 {
        return Err(LyapunovError::NonHurwitz { abscissa: alpha });
    }
    let m = n * (n + 1) / 2;
    let mut sys = DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for i in 0..n {
        for j in i..n {
            let row = vech_index(n, i, j);
            // (AᵀP + PA)[i][j] = Σ_k A[k][i] P[k][j] + P[i][k] A[k][j]
            for k in 0..n {
                let col = vech_index(n, k.min(j), k.max(j));
                sys[(row, col)] += atil[(k, i)];
                let col = vech_index(n, i.min(k), i.max(k));
                sys[(row, col)] += atil[(k, j)];
            }
            rhs[row] = if i == j { -1.0 } else { 0.0 };
        }
    }
    let lu = sys.lu();
    let diag = lu.u().diagonal();
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0_f64);
    for &d in diag.iter() {
        dmin = dmin.min(d.abs());
        dmax = dmax.max(d.abs());
    }
    if dmin == 0.0 {
        return Err(LyapunovError::Singular);
    }
    let cond_estimate = dmax / dmin;
    if cond_estimate > COND_LIMIT {
        return Err(LyapunovError::IllConditioned { cond_estimate });
    }
    let sol = lu.solve(&rhs).ok_or(LyapunovError::Singular)?;
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = sol[vech_index(n, i, j)];
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    let residual = op_norm(&(atil.transpose() * &p + &p * atil + DMatrix::identity(n, n)));
    let p_norm = op_norm(&p);
    if residual > RESIDUAL_TOL * (1.0 + p_norm) {
        return Err(LyapunovError::ResidualTooLarge { residual, p_norm });
    }
    let (min_eig, _) = symmetric_eig_range(&p);
    if min_eig <= 0.0 {
        return Err(LyapunovError::NotPositiveDefinite { min_eig });
    }
    Ok(LyapunovSolution { p, residual_norm: residual })
}

/// Closed-form constants from the uniform bounds: `c1` from the norm and
/// excess bounds, `c2` from the decay envelope.
pub fn constants_formula(
    l_bound: f64,
    alpha_max: f64,
    kappa: f64,
    beta: f64,
    c: f64,
) -> Result<ConstantsBundle, LyapunovError> {
    if !(beta > 0.0 && beta < kappa) {
        return Err(LyapunovError::InvalidBeta { beta, kappa });
    }
    if c < 1.0 {
        return Err(LyapunovError::InvalidC { c });
    }
    let c1 = 1.0 / (2.0 * (l_bound + ramp(alpha_max + kappa)));
    let c2 = c * c / (2.0 * beta);
    Ok(ConstantsBundle { c1, c2, c: Some(c), beta, mode: ConstantsMode::Formula })
}

/// Grid sample times for a segment, including both endpoints (the right
/// endpoint evaluates the segment's closed form, i.e. the left limit of the
/// path there).
fn segment_grid(seg_start: f64, seg_end: f64, grid_step: f64, min_points: usize) -> Vec<f64> {
    let len = seg_end - seg_start;
    let n = ((len / grid_step).ceil() as usize).max(min_points);
    (0..=n).map(|k| seg_start + len * k as f64 / n as f64).collect()
}

/// Decay envelope factor: the smallest `c` with
/// `norm(exp(s * shifted(t))) <= c * exp(-beta m)` over the sampled grid,
/// inflated by a 5% safety margin. Non-decreasing in `beta`.
pub fn estimate_c(
    traj: &MatrixTrajectory,
    kappa: f64,
    beta: f64,
    s_max: f64,
    grid_step: f64,
) -> Result<f64, LyapunovError> {
    if !(beta > 0.0 && beta < kappa) {
        return Err(LyapunovError::InvalidBeta { beta, kappa });
    }
    assert!(s_max > 0.0);
    let dim = traj.dim();
    let mut samples: Vec<(usize, f64)> = Vec::new();
    for (idx, seg) in traj.segments().iter().enumerate() {
        for t in segment_grid(seg.t_start, seg.t_end, grid_step, 16) {
            samples.push((idx, t));
        }
    }
    const S_POINTS: usize = 512;
    let ds = s_max / S_POINTS as f64;
    let per_t: Result<Vec<f64>, LyapunovError> = samples
        .par_iter()
        .map(|&(idx, t)| {
            let seg = &traj.segments()[idx];
            let mut a = DMatrix::zeros(dim, dim);
            for r in 0..dim {
                for c in 0..dim {
                    a[(r, c)] = seg.entries()[r * dim + c]
                        .eval(t)
                        .map_err(TrajectoryError::from)?;
                }
            }
            let atil = shift_matrix(&a, kappa)?;
            let step = expm(&(&atil * ds))?;
            let mut cur = DMatrix::identity(dim, dim);
            let mut best = 1.0_f64; // s = 0 contributes exactly 1
            for k in 1..=S_POINTS {
                cur = &cur * &step;
                let s = ds * k as f64;
                best = best.max(op_norm(&cur) * (beta * s).exp());
            }
            Ok(best)
        })
        .collect();
    let best = per_t?.into_iter().fold(1.0_f64, f64::max);
    Ok(best * C_MARGIN)
}

/// Spectral constants: extremal eigenvalues of `P(t)` over a grid that
/// includes every segment endpoint (left limits), deflated/inflated by a
/// small relative margin to cover the continuum between samples.
pub fn constants_spectral(
    traj: &MatrixTrajectory,
    kappa: f64,
    grid_step: f64,
) -> Result<ConstantsBundle, LyapunovError> {
    assert!(grid_step > 0.0);
    let dim = traj.dim();
    let mut samples: Vec<(usize, f64)> = Vec::new();
    for (idx, seg) in traj.segments().iter().enumerate() {
        for t in segment_grid(seg.t_start, seg.t_end, grid_step, 64) {
            samples.push((idx, t));
        }
    }
    let ranges: Result<Vec<(f64, f64)>, LyapunovError> = samples
        .par_iter()
        .map(|&(idx, t)| {
            let seg = &traj.segments()[idx];
            let mut a = DMatrix::zeros(dim, dim);
            for r in 0..dim {
                for c in 0..dim {
                    a[(r, c)] = seg.entries()[r * dim + c]
                        .eval(t)
                        .map_err(TrajectoryError::from)?;
                }
            }
            let atil = shift_matrix(&a, kappa)?;
            let sol = solve_lyapunov(&atil)?;
            Ok(symmetric_eig_range(&sol.p))
        })
        .collect();
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::NEG_INFINITY;
    for (lo, hi) in ranges? {
        c1 = c1.min(lo);
        c2 = c2.max(hi);
    }
    Ok(ConstantsBundle {
        c1: c1 * (1.0 - SPECTRAL_MARGIN),
        c2: c2 * (1.0 + SPECTRAL_MARGIN),
        c: None,
        beta: kappa / 2.0,
        mode: ConstantsMode::Spectral,
    })
}

/// Check the Lipschitz bound `norm(P_b - P_a) <= 2 c2² norm(shifted_b -
/// shifted_a)`; returns whether it holds and the slack (RHS minus LHS).
pub fn p_difference_check(
    p_a: &DMatrix<f64>,
    p_b: &DMatrix<f64>,
    atil_a: &DMatrix<f64>,
    atil_b: &DMatrix<f64>,
    c2: f64,
) -> (bool, f64) {
    let lhs = op_norm(&(p_b - p_a));
    let rhs = 2.0 * c2 * c2 * op_norm(&(atil_b - atil_a));
    let slack = rhs - lhs;
    (slack >= -1e-12 * (1.0 + rhs), slack)
}
