//! Spectral abscissa, ramp clipping, and the stabilized matrix path.
//!
//! The abscissa is the largest real part over the eigenvalues of a real
//! matrix; the eigenvalues come from a dense nonsymmetric solve (balancing,
//! Hessenberg reduction, then Francis double-shift QR with deflation). Only
//! eigenvalues are needed, never vectors, so the classic compact routine is
//! used rather than a full Schur factorization.
//!
//! Clipping the abscissa excess above `-kappa` with the ramp and subtracting
//! it from the diagonal produces the stabilized path, which is uniformly
//! `kappa`-Hurwitz by construction and is the path along which Lyapunov
//! solutions are taken.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::trajectory::{MatrixTrajectory, TrajectoryError};

/// Relative deflation tolerance for subdiagonal entries in the QR iteration.
const DEFLATION_TOL: f64 = 1e-14;

/// Total QR sweep budget is `MAX_SWEEPS_PER_DIM * n`.
const MAX_SWEEPS_PER_DIM: usize = 100;

/// Values of the ramp-clipped excess below this are treated as exact zero,
/// so floating-point flicker around the kink cannot leak into variation
/// estimates.
pub const EXCESS_ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    /// The QR iteration hit the sweep cap; `best_estimate` is the abscissa
    /// over the eigenvalues that did converge plus the current diagonal of
    /// the unconverged block.
    #[error("eigenvalue iteration did not converge after {sweeps} sweeps; best abscissa estimate {best_estimate}")]
    NonConvergence { sweeps: usize, best_estimate: f64 },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

/// Spectral abscissa: the maximum real part over the eigenvalues of `m`.
pub fn abscissa(m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    let eigs = eigenvalues(m)?;
    Ok(eigs.iter().fold(f64::NEG_INFINITY, |acc, &(re, _)| acc.max(re)))
}

/// Eigenvalues of a real square matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>, SpectralError> {
    assert_eq!(m.nrows(), m.ncols(), "eigenvalues of a non-square matrix");
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![(m[(0, 0)], 0.0)]);
    }
    let mut h = m.clone();
    balance(&mut h);
    hessenberg(&mut h);
    francis_qr(&mut h, MAX_SWEEPS_PER_DIM * n)
}

/// The ramp `max(s, 0)`.
pub fn ramp(s: f64) -> f64 {
    s.max(0.0)
}

/// Ramp-clipped excess of the abscissa above `-kappa`; zero exactly when the
/// frozen-time dynamics is at least `kappa`-stable.
pub fn unstable_excess(m: &DMatrix<f64>, kappa: f64) -> Result<f64, SpectralError> {
    debug_assert!(kappa > 0.0);
    let value = ramp(abscissa(m)? + kappa);
    // snap near-kink flicker to exact zero
    Ok(if value < EXCESS_ZERO_TOL { 0.0 } else { value })
}

/// A matrix path stabilized by subtracting the ramp-clipped excess from the
/// diagonal. Pointwise: `shifted(t) = A(t) - excess(A(t)) * I`.
#[derive(Debug, Clone)]
pub struct ShiftedTrajectory<'a> {
    pub base: &'a MatrixTrajectory,
    pub kappa: f64,
}

impl<'a> ShiftedTrajectory<'a> {
    pub fn new(base: &'a MatrixTrajectory, kappa: f64) -> Self {
        assert!(kappa > 0.0, "kappa must be positive");
        ShiftedTrajectory { base, kappa }
    }

    /// Right-continuous value of the stabilized path at `t`.
    pub fn value_at(&self, t: f64) -> Result<DMatrix<f64>, SpectralError> {
        let a = self.base.value_at(t)?;
        shift_matrix(&a, self.kappa)
    }

    /// Left limit of the stabilized path at `t`.
    pub fn left_limit(&self, t: f64) -> Result<DMatrix<f64>, SpectralError> {
        let a = self.base.left_limit(t)?;
        shift_matrix(&a, self.kappa)
    }
}

/// Stabilize a single matrix: subtract its excess from the diagonal.
pub fn shift_matrix(a: &DMatrix<f64>, kappa: f64) -> Result<DMatrix<f64>, SpectralError> {
    let phi = unstable_excess(a, kappa)?;
    let mut out = a.clone();
    for i in 0..out.nrows() {
        out[(i, i)] -= phi;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// dense nonsymmetric eigensolver: balance + Hessenberg + Francis QR
// ---------------------------------------------------------------------------

/// Diagonal similarity scaling by powers of two so that row and column norms
/// match; exact in floating point and improves eigenvalue accuracy for badly
/// scaled inputs.
fn balance(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    let radix = 2.0_f64;
    let sqrdx = radix * radix;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / radix;
                let mut f = 1.0;
                let s = c + r;
                let mut c_scaled = c;
                while c_scaled < g {
                    f *= radix;
                    c_scaled *= sqrdx;
                }
                g = r * radix;
                while c_scaled > g {
                    f /= radix;
                    c_scaled /= sqrdx;
                }
                if (c_scaled + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Reduce to upper Hessenberg form by stabilized elementary eliminations.
fn hessenberg(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for m in 1..n - 1 {
        // pivot: largest magnitude in column m-1 below the subdiagonal
        let mut x = 0.0_f64;
        let mut piv = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                piv = j;
            }
        }
        if piv != m {
            for j in m - 1..n {
                a.swap((piv, j), (m, j));
            }
            for j in 0..n {
                a.swap((j, piv), (j, m));
            }
        }
        if x != 0.0 {
            for i in m + 1..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        let v = a[(m, j)];
                        a[(i, j)] -= y * v;
                    }
                    for j in 0..n {
                        let v = a[(j, i)];
                        a[(j, m)] += y * v;
                    }
                }
            }
        }
    }
    // zero out the stored multipliers below the subdiagonal
    for i in 2..n {
        for j in 0..i - 1 {
            a[(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, eigenvalues only.
fn francis_qr(
    h: &mut DMatrix<f64>,
    sweep_budget: usize,
) -> Result<Vec<(f64, f64)>, SpectralError> {
    let n = h.nrows();
    let mut eigs: Vec<(f64, f64)> = Vec::with_capacity(n);
    let anorm: f64 = {
        let mut s = 0.0;
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                s += h[(i, j)].abs();
            }
        }
        s.max(f64::MIN_POSITIVE)
    };
    let mut total_sweeps = 0usize;
    let mut nn = n; // active block is rows/cols 0..nn
    let mut t_shift = 0.0;
    while nn > 0 {
        let mut its = 0;
        loop {
            // find small subdiagonal: l is the start of the trailing
            // irreducible block
            let mut l = nn - 1;
            while l > 0 {
                let s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if h[(l, l - 1)].abs() <= DEFLATION_TOL * s {
                    h[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let x = h[(nn - 1, nn - 1)];
            if l == nn - 1 {
                // one real eigenvalue deflated
                eigs.push((x + t_shift, 0.0));
                nn -= 1;
                break;
            }
            let y = h[(nn - 2, nn - 2)];
            let w = h[(nn - 1, nn - 2)] * h[(nn - 2, nn - 1)];
            if l == nn - 2 {
                // 2x2 block deflated
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                let x_sh = x + t_shift;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    eigs.push((x_sh + z, 0.0));
                    eigs.push((if z != 0.0 { x_sh - w / z } else { x_sh + z }, 0.0));
                } else {
                    eigs.push((x_sh + p, z));
                    eigs.push((x_sh + p, -z));
                }
                nn -= 2;
                break;
            }
            if total_sweeps >= sweep_budget {
                // best estimate: converged eigenvalues plus the diagonal of
                // whatever is left
                let mut best = eigs.iter().fold(f64::NEG_INFINITY, |a, &(re, _)| a.max(re));
                for i in 0..nn {
                    best = best.max(h[(i, i)] + t_shift);
                }
                return Err(SpectralError::NonConvergence {
                    sweeps: total_sweeps,
                    best_estimate: best,
                });
            }
            // exceptional shift every 10 stalled iterations
            let (mut p, mut q, mut r);
            let mut x = x;
            let mut y = y;
            let mut w = w;
            if its == 10 || its == 20 {
                t_shift += x;
                for i in 0..nn {
                    h[(i, i)] -= x;
                }
                let s = h[(nn - 1, nn - 2)].abs() + h[(nn - 2, nn - 3)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            total_sweeps += 1;
            // look for two consecutive small subdiagonals to start the sweep;
            // the block always has size >= 3 here so nn - 3 >= l
            let mut m = nn - 3;
            let mut z;
            loop {
                z = h[(m, m)];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                let scale = p.abs() + q.abs() + r.abs();
                p /= scale;
                q /= scale;
                r /= scale;
                if m == l {
                    break;
                }
                let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                if u <= DEFLATION_TOL * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..nn {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }
            // double QR step on rows l..nn
            for k in m..nn - 1 {
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if k != nn - 2 { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                } else {
                    h[(k, k - 1)] = -s * x;
                }
                p += s;
                let px = p / s;
                let py = q / s;
                let pz = r / s;
                q /= p;
                r /= p;
                for j in k..nn {
                    p = h[(k, j)] + q * h[(k + 1, j)];
                    if k != nn - 2 {
                        p += r * h[(k + 2, j)];
                        h[(k + 2, j)] -= p * pz;
                    }
                    h[(k + 1, j)] -= p * py;
                    h[(k, j)] -= p * px;
                }
                let mmin = if nn < k + 4 { nn - 1 } else { k + 3 };
                for i in l..=mmin {
                    p = px * h[(i, k)] + py * h[(i, k + 1)];
                    if k != nn - 2 {
                        p += pz * h[(i, k + 2)];
                        h[(i, k + 2)] -= p * r;
                    }
                    h[(i, k + 1)] -= p * q;
                    h[(i, k)] -= p;
                }
            }
        }
    }
    Ok(eigs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn abscissa_of_pure_rotation() {
        assert!(abscissa(&m2(0.0, 1.0, -1.0, 0.0)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn abscissa_of_example_at_zero() {
        assert!((abscissa(&m2(0.1, 1.0, -1.0, 0.1)).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn abscissa_of_damped_rotation() {
        // characteristic polynomial (λ+1)² + 1 = 0, roots -1 ± i
        assert!((abscissa(&m2(-1.0, 1.0, -1.0, -1.0)).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ramp_values() {
        assert_eq!(ramp(-3.0), 0.0);
        assert_eq!(ramp(0.0), 0.0);
        assert_eq!(ramp(1.1), 1.1);
    }

    #[test]
    fn excess_of_example_at_zero() {
        let a = m2(0.1, 1.0, -1.0, 0.1);
        assert!((unstable_excess(&a, 1.0).unwrap() - 1.1).abs() < 1e-12);
    }

    #[test]
    fn excess_clamps_for_stable_matrix() {
        let a = m2(-2.0, 0.0, 0.0, -2.0);
        assert_eq!(unstable_excess(&a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn excess_direct_arithmetic() {
        let a = m2(0.1, 0.0, 0.0, -5.0);
        assert!((unstable_excess(&a, 0.5).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn shift_leaves_sufficiently_stable_matrix_unchanged() {
        let a = m2(-3.0, 1.0, 0.0, -2.0);
        let shifted = shift_matrix(&a, 1.0).unwrap();
        assert_eq!(shifted, a);
    }

    #[test]
    fn shift_stabilizes_unstable_matrix() {
        let a = m2(0.1, 1.0, -1.0, 0.1);
        let shifted = shift_matrix(&a, 1.0).unwrap();
        let expect = m2(-1.0, 1.0, -1.0, -1.0);
        assert!((&shifted - &expect).amax() < 1e-12);
        assert!(abscissa(&shifted).unwrap() <= -1.0 + 1e-9);
    }

    #[test]
    fn eigenvalues_of_companion_matrix() {
        // companion matrix of λ⁴ - 10λ³ + 35λ² - 50λ + 24 = (λ-1)(λ-2)(λ-3)(λ-4)
        let mut c = DMatrix::zeros(4, 4);
        c[(0, 0)] = 10.0;
        c[(0, 1)] = -35.0;
        c[(0, 2)] = 50.0;
        c[(0, 3)] = -24.0;
        for i in 1..4 {
            c[(i, i - 1)] = 1.0;
        }
        let mut eigs: Vec<f64> = eigenvalues(&c).unwrap().iter().map(|&(re, _)| re).collect();
        eigs.sort_by(f64::total_cmp);
        for (got, want) in eigs.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert!((got - want).abs() < 1e-8, "got {got}, want {want}");
        }
        assert!((abscissa(&c).unwrap() - 4.0).abs() < 1e-8);
    }

    // closed-form oracle for the maximum real part of the roots of the
    // characteristic polynomial, n <= 3
    fn charpoly_abscissa_oracle(m: &DMatrix<f64>) -> f64 {
        match m.nrows() {
            1 => m[(0, 0)],
            2 => {
                let tr = m[(0, 0)] + m[(1, 1)];
                let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
                let disc = tr * tr / 4.0 - det;
                if disc >= 0.0 {
                    tr / 2.0 + disc.sqrt()
                } else {
                    tr / 2.0
                }
            }
            3 => {
                // λ³ + aλ² + bλ + c via Cardano / trigonometric roots
                let a = -(m[(0, 0)] + m[(1, 1)] + m[(2, 2)]);
                let b = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
                    + m[(0, 0)] * m[(2, 2)]
                    - m[(0, 2)] * m[(2, 0)]
                    + m[(1, 1)] * m[(2, 2)]
                    - m[(1, 2)] * m[(2, 1)];
                let det = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                    - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                    + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
                let c = -det;
                let p = b - a * a / 3.0;
                let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
                let shift = -a / 3.0;
                let disc = q * q / 4.0 + p * p * p / 27.0;
                if disc > 0.0 {
                    let u = (-q / 2.0 + disc.sqrt()).cbrt();
                    let v = (-q / 2.0 - disc.sqrt()).cbrt();
                    let real_root = u + v + shift;
                    let pair_re = -(u + v) / 2.0 + shift;
                    real_root.max(pair_re)
                } else {
                    let r = (-p / 3.0_f64).sqrt();
                    if r == 0.0 {
                        return shift;
                    }
                    let phi = (3.0 * q / (2.0 * p) / r).clamp(-1.0, 1.0).acos();
                    let mut best = f64::NEG_INFINITY;
                    for k in 0..3 {
                        let root = 2.0 * r
                            * ((phi - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos()
                            + shift;
                        best = best.max(root);
                    }
                    best
                }
            }
            _ => unreachable!(),
        }
    }

    proptest! {
        #[test]
        fn shift_equivariance(entries in proptest::collection::vec(-3.0f64..3.0, 9), sigma in -2.0f64..2.0) {
            let m = DMatrix::from_row_slice(3, 3, &entries);
            let mut shifted = m.clone();
            for i in 0..3 { shifted[(i, i)] -= sigma; }
            let a1 = abscissa(&m).unwrap();
            let a2 = abscissa(&shifted).unwrap();
            prop_assert!((a1 - sigma - a2).abs() < 1e-8, "{a1} - {sigma} vs {a2}");
        }

        #[test]
        fn matches_charpoly_oracle(entries in proptest::collection::vec(-3.0f64..3.0, 9), n in 1usize..=3) {
            let m = DMatrix::from_row_slice(3, 3, &entries).view((0, 0), (n, n)).into_owned();
            let got = abscissa(&m).unwrap();
            let want = charpoly_abscissa_oracle(&m);
            prop_assert!((got - want).abs() < 1e-8, "got {got}, oracle {want} for {m}");
        }

        #[test]
        fn excess_monotone_in_kappa(entries in proptest::collection::vec(-3.0f64..3.0, 4), k1 in 0.1f64..2.0, dk in 0.0f64..2.0) {
            let m = DMatrix::from_row_slice(2, 2, &entries);
            let lo = unstable_excess(&m, k1).unwrap();
            let hi = unstable_excess(&m, k1 + dk).unwrap();
            prop_assert!(lo <= hi + 1e-15);
        }
    }
}
