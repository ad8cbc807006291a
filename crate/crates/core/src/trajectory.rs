//! Piecewise-smooth matrix paths with jumps.
//!
//! A path is a contiguous list of half-open segments `[t_start, t_end)` whose
//! entries are closed-form expressions of time, optionally repeated
//! periodically. The half-open convention makes the path right continuous
//! with left limits by construction; the jump set is derived from segment
//! boundaries where the value and the left limit differ.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{Expr, ExprError};
use crate::linalg::op_norm;
use crate::spectral::{self, SpectralError};

/// Default relative tolerance for deciding whether a segment boundary is a
/// genuine jump; absorbs floating-point noise at boundaries where adjacent
/// expressions agree analytically.
pub const JUMP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("time {t} outside the defined horizon [0, {horizon})")]
    OutOfDomain { t: f64, horizon: f64 },
    #[error("time {t} is a segment boundary; derivatives are defined only in segment interiors")]
    AtBoundary { t: f64 },
    #[error("segment {index}: {source}")]
    Entry { index: usize, source: ExprError },
    #[error("segment {index}: entry ({row},{col}) fails to evaluate at t = {t}: {source}")]
    EntryDomain { index: usize, row: usize, col: usize, t: f64, source: ExprError },
    #[error("segment {index}: matrix entries must depend on t only")]
    StateSymbolInMatrix { index: usize },
    #[error("segment {index}: expected {expected} entries for dimension {dim}, found {found}")]
    EntryCount { index: usize, dim: usize, expected: usize, found: usize },
    #[error("segment {index}: t_start {t_start} must be strictly below t_end {t_end}")]
    EmptySegment { index: usize, t_start: f64, t_end: f64 },
    #[error("segment {index}: starts at {found}, expected {expected} (segments must tile [0, T) contiguously)")]
    NotContiguous { index: usize, expected: f64, found: f64 },
    #[error("period {period} does not equal the end of the last segment {t_end}")]
    PeriodMismatch { period: f64, t_end: f64 },
    #[error("a trajectory needs at least one segment")]
    NoSegments,
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error(transparent)]
    Eval(#[from] ExprError),
}

/// One smooth piece of the path: an `n x n` grid of expressions valid on
/// `[t_start, t_end)`. Symbolic entry derivatives are precomputed.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    entries: Vec<Expr>,
    d_entries: Vec<Expr>,
}

impl Segment {
    /// Row-major `entries` of length `n*n`.
    pub fn new(t_start: f64, t_end: f64, entries: Vec<Expr>) -> Self {
        let d_entries = entries.iter().map(Expr::differentiate).collect();
        Segment { t_start, t_end, entries, d_entries }
    }

    /// Segment holding a constant matrix.
    pub fn constant(t_start: f64, t_end: f64, m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                entries.push(Expr::Const(m[(r, c)]));
            }
        }
        Segment::new(t_start, t_end, entries)
    }

    pub fn entries(&self) -> &[Expr] {
        &self.entries
    }

    fn eval(&self, dim: usize, t: f64) -> Result<DMatrix<f64>, ExprError> {
        let mut m = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = self.entries[r * dim + c].eval(t)?;
            }
        }
        Ok(m)
    }

    fn eval_derivative(&self, dim: usize, t: f64) -> Result<DMatrix<f64>, ExprError> {
        let mut m = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                m[(r, c)] = self.d_entries[r * dim + c].eval(t)?;
            }
        }
        Ok(m)
    }
}

/// A maximal smooth piece of a window, carrying the owning segment and the
/// shift that maps global time back into the segment's own coordinates
/// (non-zero only for periodic repetition).
#[derive(Debug, Clone, Copy)]
pub struct SmoothPiece {
    pub start: f64,
    pub end: f64,
    pub segment: usize,
    pub local_shift: f64,
}

/// Regularity summary: uniform bounds plus structural diagnostics.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    /// Upper bound on the operator norm of the path over the horizon.
    pub l_bound: f64,
    /// Upper bound on the spectral abscissa over the horizon.
    pub alpha_max: f64,
    /// Number of jumps per period (periodic) or over the horizon.
    pub jump_count_per_window: usize,
    /// Set when the sampled total variation of the abscissa keeps growing
    /// under grid refinement, hinting that the abscissa is not absolutely
    /// continuous on some segment.
    pub assumption24_suspect: bool,
    /// Horizon over which the bounds were taken.
    pub horizon: f64,
    pub periodic: bool,
}

/// Piecewise-smooth, right-continuous matrix path with explicit jump times
/// and optional period. Immutable after construction; all queries are pure.
#[derive(Debug, Clone)]
pub struct MatrixTrajectory {
    dim: usize,
    segments: Vec<Segment>,
    period: Option<f64>,
    jump_tolerance: f64,
}

impl MatrixTrajectory {
    pub fn new(
        dim: usize,
        segments: Vec<Segment>,
        period: Option<f64>,
    ) -> Result<Self, TrajectoryError> {
        if dim == 0 {
            return Err(TrajectoryError::ZeroDimension);
        }
        if segments.is_empty() {
            return Err(TrajectoryError::NoSegments);
        }
        let mut expected_start = 0.0;
        for (index, seg) in segments.iter().enumerate() {
            if !(seg.t_start < seg.t_end) {
                return Err(TrajectoryError::EmptySegment {
                    index,
                    t_start: seg.t_start,
                    t_end: seg.t_end,
                });
            }
            if seg.t_start != expected_start {
                return Err(TrajectoryError::NotContiguous {
                    index,
                    expected: expected_start,
                    found: seg.t_start,
                });
            }
            expected_start = seg.t_end;
            if seg.entries.len() != dim * dim {
                return Err(TrajectoryError::EntryCount {
                    index,
                    dim,
                    expected: dim * dim,
                    found: seg.entries.len(),
                });
            }
            if seg.entries.iter().any(Expr::contains_state) {
                return Err(TrajectoryError::StateSymbolInMatrix { index });
            }
            // sampled domain check, including the right endpoint which left
            // limits evaluate
            let samples = 32;
            for k in 0..=samples {
                let t = seg.t_start + (seg.t_end - seg.t_start) * k as f64 / samples as f64;
                for r in 0..dim {
                    for c in 0..dim {
                        if let Err(source) = seg.entries[r * dim + c].eval(t) {
                            return Err(TrajectoryError::EntryDomain {
                                index,
                                row: r,
                                col: c,
                                t,
                                source,
                            });
                        }
                    }
                }
            }
        }
        if let Some(p) = period {
            let t_end = segments.last().unwrap().t_end;
            if p != t_end {
                return Err(TrajectoryError::PeriodMismatch { period: p, t_end });
            }
        }
        Ok(MatrixTrajectory { dim, segments, period, jump_tolerance: JUMP_TOLERANCE })
    }

    /// Constant path on `[0, horizon)`.
    pub fn constant(m: &DMatrix<f64>, horizon: f64, periodic: bool) -> Self {
        let seg = Segment::constant(0.0, horizon, m);
        MatrixTrajectory::new(m.nrows(), vec![seg], periodic.then_some(horizon))
            .expect("constant trajectory is always well-formed")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// End of the base definition window; with a period set this equals the
    /// period and the path extends to all of `t >= 0`.
    pub fn domain_end(&self) -> f64 {
        self.segments.last().unwrap().t_end
    }

    /// Map `t` into the base window. Periodic wrap uses the exact
    /// floating-point remainder so equal representatives evaluate through
    /// the identical expression path.
    fn wrap(&self, t: f64) -> Result<f64, TrajectoryError> {
        let horizon = self.domain_end();
        if t < 0.0 {
            return Err(TrajectoryError::OutOfDomain { t, horizon });
        }
        match self.period {
            Some(p) => Ok(if t < p { t } else { t % p }),
            None => {
                if t < horizon {
                    Ok(t)
                } else {
                    Err(TrajectoryError::OutOfDomain { t, horizon })
                }
            }
        }
    }

    fn segment_index(&self, tm: f64) -> usize {
        // segments tile [0, T); linear scan is fine for the handful of
        // segments a config defines
        for (i, seg) in self.segments.iter().enumerate() {
            if tm < seg.t_end {
                return i;
            }
        }
        self.segments.len() - 1
    }

    /// Right-continuous value at `t` (periodic wrap-around when a period is
    /// set).
    pub fn value_at(&self, t: f64) -> Result<DMatrix<f64>, TrajectoryError> {
        let tm = self.wrap(t)?;
        let seg = &self.segments[self.segment_index(tm)];
        Ok(seg.eval(self.dim, tm)?)
    }

    /// Left limit at `t > 0`, evaluated through the segment that ends (or
    /// continues) at `t`.
    pub fn left_limit(&self, t: f64) -> Result<DMatrix<f64>, TrajectoryError> {
        let horizon = self.domain_end();
        if t <= 0.0 {
            return Err(TrajectoryError::OutOfDomain { t, horizon });
        }
        let tm = match self.period {
            Some(p) => {
                let r = if t <= p { t } else { t % p };
                if r == 0.0 {
                    p
                } else {
                    r
                }
            }
            None => {
                if t > horizon {
                    return Err(TrajectoryError::OutOfDomain { t, horizon });
                }
                t
            }
        };
        // the segment whose half-open interval has tm as interior point or
        // right endpoint
        let idx = self
            .segments
            .iter()
            .position(|s| s.t_start < tm && tm <= s.t_end)
            .expect("tm lies in (0, T]");
        Ok(self.segments[idx].eval(self.dim, tm)?)
    }

    /// Jump magnitude at `t`, or `None` when the path is continuous there
    /// (difference below the relative jump tolerance).
    pub fn jump_at(&self, t: f64) -> Result<Option<DMatrix<f64>>, TrajectoryError> {
        let value = self.value_at(t)?;
        let left = self.left_limit(t)?;
        let diff = &value - &left;
        let scale = 1.0 + op_norm(&value);
        if op_norm(&diff) > self.jump_tolerance * scale {
            Ok(Some(diff))
        } else {
            Ok(None)
        }
    }

    /// Candidate discontinuity times in `(t_a, t_b]`: segment boundaries and
    /// their periodic repetitions.
    fn boundary_candidates(&self, t_a: f64, t_b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let base: Vec<f64> = self.segments.iter().map(|s| s.t_end).collect();
        match self.period {
            Some(p) => {
                let mut k = (t_a / p).floor().max(0.0);
                loop {
                    let offset = k * p;
                    if offset > t_b {
                        break;
                    }
                    for &b in &base {
                        let cand = offset + b;
                        if cand > t_a && cand <= t_b {
                            out.push(cand);
                        }
                    }
                    k += 1.0;
                }
            }
            None => {
                // the final boundary is the end of the domain where no right
                // value exists, so only interior boundaries can jump
                for &b in base.iter().take(base.len() - 1) {
                    if b > t_a && b <= t_b {
                        out.push(b);
                    }
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Ordered jump times in the window `(t_a, t_b]`.
    ///
    /// Attributing jumps to half-open windows keeps the variation additive
    /// over adjacent windows.
    pub fn jump_set(&self, t_a: f64, t_b: f64) -> Result<Vec<f64>, TrajectoryError> {
        assert!(0.0 <= t_a && t_a < t_b, "need 0 <= t_a < t_b");
        let mut jumps = Vec::new();
        for cand in self.boundary_candidates(t_a, t_b) {
            if self.jump_at(cand)?.is_some() {
                jumps.push(cand);
            }
        }
        Ok(jumps)
    }

    /// Entrywise symbolic derivative at a point strictly inside a segment.
    pub fn derivative_at(&self, t: f64) -> Result<DMatrix<f64>, TrajectoryError> {
        let tm = self.wrap(t)?;
        let idx = self.segment_index(tm);
        let seg = &self.segments[idx];
        if tm == seg.t_start || tm == seg.t_end {
            return Err(TrajectoryError::AtBoundary { t });
        }
        Ok(seg.eval_derivative(self.dim, tm)?)
    }

    /// Decompose the window `[t_a, t_b]` into maximal smooth pieces split at
    /// every (possibly repeated) segment boundary.
    pub fn smooth_pieces(&self, t_a: f64, t_b: f64) -> Vec<SmoothPiece> {
        assert!(t_a < t_b);
        let mut cuts = vec![t_a];
        cuts.extend(self.boundary_candidates(t_a, t_b).into_iter().filter(|&c| c < t_b));
        cuts.push(t_b);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut pieces = Vec::with_capacity(cuts.len() - 1);
        for w in cuts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mid = 0.5 * (lo + hi);
            let (segment, shift) = match self.period {
                Some(p) => {
                    let k = (mid / p).floor();
                    (self.segment_index(mid - k * p), k * p)
                }
                None => (self.segment_index(mid), 0.0),
            };
            pieces.push(SmoothPiece { start: lo, end: hi, segment, local_shift: shift });
        }
        pieces
    }

    /// Evaluate inside a smooth piece; at the right endpoint this yields the
    /// left limit, at the left endpoint the right value of that segment.
    pub fn eval_in_piece(&self, piece: &SmoothPiece, t: f64) -> Result<DMatrix<f64>, TrajectoryError> {
        let seg = &self.segments[piece.segment];
        let local = (t - piece.local_shift).clamp(seg.t_start, seg.t_end);
        Ok(seg.eval(self.dim, local)?)
    }

    /// Entry derivative inside a smooth piece (endpoints evaluate the
    /// one-sided closed form).
    pub fn derivative_in_piece(
        &self,
        piece: &SmoothPiece,
        t: f64,
    ) -> Result<DMatrix<f64>, TrajectoryError> {
        let seg = &self.segments[piece.segment];
        let local = (t - piece.local_shift).clamp(seg.t_start, seg.t_end);
        Ok(seg.eval_derivative(self.dim, local)?)
    }

    /// Regularity check: uniform bounds via dense sampling plus local
    /// golden-section refinement, and a grid-refinement probe for absolute
    /// continuity of the abscissa.
    pub fn check_regularity(&self, grid_step: f64) -> Result<RegularityReport, SpectralError> {
        assert!(grid_step > 0.0, "grid_step must be positive");
        let horizon = self.domain_end();
        let mut l_bound = f64::NEG_INFINITY;
        let mut alpha_max = f64::NEG_INFINITY;
        let mut suspect = false;

        for seg in &self.segments {
            let len = seg.t_end - seg.t_start;
            let n = ((len / grid_step).ceil() as usize).clamp(32, 1_000_000);
            let ts: Vec<f64> =
                (0..=n).map(|k| seg.t_start + len * k as f64 / n as f64).collect();

            let norm_of = |t: f64| -> Result<f64, SpectralError> {
                let m = seg.eval(self.dim, t).map_err(TrajectoryError::from)?;
                Ok(op_norm(&m))
            };
            let alpha_of = |t: f64| -> Result<f64, SpectralError> {
                let m = seg.eval(self.dim, t).map_err(TrajectoryError::from)?;
                spectral::abscissa(&m)
            };

            l_bound = l_bound.max(refined_max(&ts, &norm_of)?);
            alpha_max = alpha_max.max(refined_max(&ts, &alpha_of)?);

            // absolute-continuity probe: partition sums of the abscissa at
            // step h and h/2; a > 10% change under refinement means the
            // variation has not converged
            let tv_coarse = partition_sum(&ts, &alpha_of)?;
            let ts_fine: Vec<f64> =
                (0..=2 * n).map(|k| seg.t_start + len * k as f64 / (2 * n) as f64).collect();
            let tv_fine = partition_sum(&ts_fine, &alpha_of)?;
            let scale = tv_coarse.abs().max(1e-9);
            if (tv_fine - tv_coarse).abs() > 0.1 * scale && tv_fine > 1e-6 {
                suspect = true;
            }
        }

        let jump_count = self
            .jump_set(0.0, horizon)
            .map_err(SpectralError::from)?
            .len();

        Ok(RegularityReport {
            l_bound: l_bound + 1e-9 * (1.0 + l_bound.abs()),
            alpha_max: alpha_max + 1e-9 * (1.0 + alpha_max.abs()),
            jump_count_per_window: jump_count,
            assumption24_suspect: suspect,
            horizon,
            periodic: self.period.is_some(),
        })
    }
}

/// Max of `f` over the sample grid, refined by golden-section search in the
/// bracket around the best sample.
fn refined_max<E>(ts: &[f64], f: &impl Fn(f64) -> Result<f64, E>) -> Result<f64, E> {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for (i, &t) in ts.iter().enumerate() {
        let v = f(t)?;
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    let lo = ts[best_idx.saturating_sub(1)];
    let hi = ts[(best_idx + 1).min(ts.len() - 1)];
    if hi > lo {
        best = best.max(golden_max(f, lo, hi, 60)?);
    }
    Ok(best)
}

/// Golden-section maximization of a scalar function on `[a, b]`.
pub(crate) fn golden_max<E>(
    f: &impl Fn(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    iters: usize,
) -> Result<f64, E> {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    Ok(fc.max(fd).max(f(a)?).max(f(b)?))
}

fn partition_sum<E>(ts: &[f64], f: &impl Fn(f64) -> Result<f64, E>) -> Result<f64, E> {
    let mut sum = 0.0;
    let mut prev = f(ts[0])?;
    for &t in &ts[1..] {
        let cur = f(t)?;
        sum += (cur - prev).abs();
        prev = cur;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use std::f64::consts::PI;

    /// The running two-dimensional periodic example: period 2π, one smooth
    /// segment, an upward jump of 2.2 on the diagonal at the wrap.
    pub(crate) fn periodic_example() -> MatrixTrajectory {
        let entries = vec![
            parse("1.1*cos(t/2) - 1").unwrap(),
            parse("1").unwrap(),
            parse("-1").unwrap(),
            parse("1.1*cos(t/2) - 1").unwrap(),
        ];
        let seg = Segment::new(0.0, 2.0 * PI, entries);
        MatrixTrajectory::new(2, vec![seg], Some(2.0 * PI)).unwrap()
    }

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn value_at_start() {
        let traj = periodic_example();
        let got = traj.value_at(0.0).unwrap();
        assert!((&got - &m2(0.1, 1.0, -1.0, 0.1)).amax() < 1e-12);
    }

    #[test]
    fn value_wraps_at_period() {
        let traj = periodic_example();
        let a0 = traj.value_at(0.0).unwrap();
        let a1 = traj.value_at(2.0 * PI).unwrap();
        assert_eq!(a0, a1);
    }

    #[test]
    fn constant_path_everywhere() {
        let m = m2(1.0, 2.0, 3.0, 4.0);
        let traj = MatrixTrajectory::constant(&m, 5.0, true);
        for t in [0.0, 1.3, 4.999, 12.5] {
            assert_eq!(traj.value_at(t).unwrap(), m);
        }
    }

    #[test]
    fn left_limit_at_period() {
        let traj = periodic_example();
        let got = traj.left_limit(2.0 * PI).unwrap();
        assert!((&got - &m2(-2.1, 1.0, -1.0, -2.1)).amax() < 1e-12);
    }

    #[test]
    fn left_limit_interior_matches_value() {
        let traj = periodic_example();
        let t = 1.234;
        assert!((&traj.left_limit(t).unwrap() - &traj.value_at(t).unwrap()).amax() < 1e-15);
    }

    #[test]
    fn left_limit_piecewise_constant() {
        let s0 = Segment::new(0.0, 1.0, vec![parse("0").unwrap()]);
        let s1 = Segment::new(1.0, 2.0, vec![parse("5").unwrap()]);
        let traj = MatrixTrajectory::new(1, vec![s0, s1], None).unwrap();
        assert_eq!(traj.left_limit(1.0).unwrap()[(0, 0)], 0.0);
        assert_eq!(traj.value_at(1.0).unwrap()[(0, 0)], 5.0);
    }

    #[test]
    fn jump_set_of_example() {
        let traj = periodic_example();
        let jumps = traj.jump_set(0.0, 2.0 * PI).unwrap();
        assert_eq!(jumps, vec![2.0 * PI]);
    }

    #[test]
    fn jump_set_constant_empty() {
        let traj = MatrixTrajectory::constant(&m2(1.0, 0.0, 0.0, 1.0), 4.0, true);
        assert!(traj.jump_set(0.0, 12.0).unwrap().is_empty());
    }

    #[test]
    fn matching_boundary_is_not_a_jump() {
        // three segments, the first boundary continuous (t and 1 agree at 1),
        // the second a genuine jump
        let s0 = Segment::new(0.0, 1.0, vec![parse("t").unwrap()]);
        let s1 = Segment::new(1.0, 2.0, vec![parse("1").unwrap()]);
        let s2 = Segment::new(2.0, 3.0, vec![parse("4").unwrap()]);
        let traj = MatrixTrajectory::new(1, vec![s0, s1, s2], None).unwrap();
        assert_eq!(traj.jump_set(0.0, 2.9).unwrap(), vec![2.0]);
    }

    #[test]
    fn jump_set_additivity() {
        let traj = periodic_example();
        let (a, b, c) = (0.5, 2.0 * PI, 4.0 * PI - 0.1);
        let mut split = traj.jump_set(a, b).unwrap();
        split.extend(traj.jump_set(b, c).unwrap());
        assert_eq!(split, traj.jump_set(a, c).unwrap());
    }

    #[test]
    fn derivative_at_interior() {
        let traj = periodic_example();
        let t = PI / 2.0;
        let d = traj.derivative_at(t).unwrap();
        let expect = -0.55 * (t / 2.0).sin();
        assert!((d[(0, 0)] - expect).abs() < 1e-12);
        assert!((d[(1, 1)] - expect).abs() < 1e-12);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let traj = MatrixTrajectory::constant(&m2(1.0, 2.0, -1.0, 0.5), 2.0, false);
        assert_eq!(traj.derivative_at(0.7).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn derivative_of_linear_entry() {
        let seg = Segment::new(0.0, 2.0, vec![parse("2*t").unwrap()]);
        let traj = MatrixTrajectory::new(1, vec![seg], None).unwrap();
        assert_eq!(traj.derivative_at(1.3).unwrap()[(0, 0)], 2.0);
    }

    #[test]
    fn derivative_errors_at_boundary() {
        let traj = periodic_example();
        assert!(matches!(
            traj.derivative_at(0.0),
            Err(TrajectoryError::AtBoundary { .. })
        ));
    }

    #[test]
    fn out_of_domain_without_period() {
        let traj = MatrixTrajectory::constant(&m2(1.0, 0.0, 0.0, 1.0), 2.0, false);
        assert!(matches!(
            traj.value_at(2.0),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
        assert!(matches!(
            traj.value_at(-0.1),
            Err(TrajectoryError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn right_continuity_at_boundaries() {
        let traj = periodic_example();
        let at = traj.value_at(2.0 * PI).unwrap();
        for k in 1..=6 {
            let h = 10f64.powi(-k);
            let near = traj.value_at(2.0 * PI + h).unwrap();
            assert!(op_norm(&(&near - &at)) < 1.0 * h + 1e-9);
        }
    }

    #[test]
    fn regularity_bounds_of_example() {
        let traj = periodic_example();
        let report = traj.check_regularity(2.0 * PI / 512.0).unwrap();
        assert!((report.alpha_max - 0.1).abs() < 1e-6, "alpha_max {}", report.alpha_max);
        // norm of the family is sqrt(a(t)^2 + 1) maximized at a = -2.1
        assert!((report.l_bound - 5.41_f64.sqrt()).abs() < 1e-4, "l {}", report.l_bound);
        assert_eq!(report.jump_count_per_window, 1);
        assert!(!report.assumption24_suspect);
    }

    #[test]
    fn regularity_flags_oscillatory_abscissa() {
        // companion-style path whose abscissa |u sin(1/u)| (u = t + 1e-4) has
        // unbounded variation near the left end
        let mu = "(t + 0.0001)^2 * sin(1/(t + 0.0001))^2";
        let entries = vec![
            parse("0").unwrap(),
            parse("1").unwrap(),
            parse(mu).unwrap(),
            parse("0").unwrap(),
        ];
        let seg = Segment::new(0.0, 1.0, entries);
        let traj = MatrixTrajectory::new(2, vec![seg], None).unwrap();
        let report = traj.check_regularity(1.0 / 512.0).unwrap();
        assert!(report.assumption24_suspect);
    }

    #[test]
    fn construction_rejects_gaps() {
        let s0 = Segment::new(0.0, 1.0, vec![parse("0").unwrap()]);
        let s1 = Segment::new(1.5, 2.0, vec![parse("1").unwrap()]);
        assert!(matches!(
            MatrixTrajectory::new(1, vec![s0, s1], None),
            Err(TrajectoryError::NotContiguous { index: 1, .. })
        ));
    }

    #[test]
    fn construction_rejects_domain_errors() {
        // 1/(t - 0.5) blows up inside the segment
        let seg = Segment::new(0.0, 1.0, vec![parse("1/(t - 0.5)").unwrap()]);
        assert!(matches!(
            MatrixTrajectory::new(1, vec![seg], None),
            Err(TrajectoryError::EntryDomain { .. })
        ));
    }

    #[test]
    fn construction_rejects_state_symbols() {
        let e = crate::expr::parse_with_state("x1 + t", 2).unwrap();
        let seg = Segment::new(0.0, 1.0, vec![e, parse("0").unwrap(), parse("0").unwrap(), parse("0").unwrap()]);
        assert!(matches!(
            MatrixTrajectory::new(2, vec![seg], None),
            Err(TrajectoryError::StateSymbolInMatrix { index: 0 })
        ));
    }

    #[test]
    fn value_at_period_shift_is_bit_exact() {
        let traj = periodic_example();
        // 0.5 + 2π is exactly representable as the sum of both values
        let t = 0.5;
        let shifted = t + 2.0 * PI;
        assert_eq!(traj.value_at(t).unwrap(), traj.value_at(shifted).unwrap());
    }
}
