//! Adaptive Simpson quadrature.
//!
//! The integrands here are cheap closed-form evaluations, so plain recursive
//! Simpson with an absolute tolerance is the right tool. Discontinuous
//! derivatives (ramp kinks, `abs`) are expected; callers pre-split intervals
//! at known breakpoints and the recursion resolves whatever remains.

/// Absolute tolerance used per integration interval.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Maximum recursion depth before giving up on an interval.
pub const MAX_DEPTH: u32 = 30;

/// Minimum recursion depth before an interval may be accepted. Guards
/// against aliasing when the integrand oscillates in phase with the first
/// few dyadic sample grids (trigonometric integrands over whole periods).
const MIN_DEPTH: u32 = 5;

/// Result of an adaptive quadrature: best estimate plus the achieved
/// tolerance bound. `converged` is false when the accumulated error
/// estimate ended up above the requested tolerance (some subintervals hit
/// the depth cap while still carrying significant residual).
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
}

/// Integrate `f` over `[a, b]` with adaptive Simpson to absolute tolerance
/// `tol`. Errors from the integrand abort the quadrature.
pub fn adaptive_simpson<F, E>(f: &F, a: f64, b: f64, tol: f64) -> Result<QuadResult, E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    adaptive_simpson_md(f, a, b, tol, MIN_DEPTH)
}

/// As [`adaptive_simpson`] with an explicit minimum refinement depth.
/// Callers integrating over cells already far below any oscillation scale
/// can afford a shallower floor.
pub fn adaptive_simpson_md<F, E>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    min_depth: u32,
) -> Result<QuadResult, E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    if a == b {
        return Ok(QuadResult { value: 0.0, error_estimate: 0.0, converged: true });
    }
    let m = 0.5 * (a + b);
    let fa = f(a)?;
    let fm = f(m)?;
    let fb = f(b)?;
    let whole = simpson(a, b, fa, fm, fb);
    let mut acc = Accumulator { value: 0.0, error: 0.0 };
    recurse(f, a, b, fa, fm, fb, whole, tol, 0, min_depth, &mut acc)?;
    Ok(QuadResult { value: acc.value, error_estimate: acc.error, converged: acc.error <= tol })
}

struct Accumulator {
    value: f64,
    error: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F, E>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    min_depth: u32,
    acc: &mut Accumulator,
) -> Result<(), E>
where
    F: Fn(f64) -> Result<f64, E>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    // accept also when the interval degenerated to floating-point resolution
    let degenerate = m <= a || m >= b;
    if (delta.abs() <= 15.0 * tol && depth >= min_depth) || degenerate || depth >= MAX_DEPTH {
        acc.value += left + right + delta / 15.0;
        acc.error += delta.abs() / 15.0;
        return Ok(());
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, min_depth, acc)?;
    recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, min_depth, acc)
}
