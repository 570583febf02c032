//! Spectral quantities of the interior block and the network's limits.
//!
//! For a stochastic trust matrix in stubborn form, everything about the
//! long run is governed by the interior block `Q`:
//!
//! * its Perron root `lambda = rho(Q) < 1` (strict whenever `Q` is
//!   irreducible with at least one deficient row) sets the convergence
//!   rate and the supermartingale contraction factor `1 - alpha(1 - lambda)`;
//! * the consensus gain `v = (I - Q)^{-1} r` is the column through which
//!   the stubborn opinion reaches everyone: `T^n -> [[1, 0], [v, 0]]`.
//!
//! [`spectral_radius`] runs a *shifted* power iteration on `Qᵀ`. The
//! shift matters: bare power iteration fails to settle on matrices with
//! several peripheral eigenvalues (a directed 2-cycle has eigenvalues
//! `±1` and oscillates forever). Replacing `Q` by `(Q + sigma I) / (1 + sigma)`
//! maps eigenvalues `mu` to `(mu + sigma) / (1 + sigma)`, which for
//! `sigma > 0` makes the Perron root the unique eigenvalue of maximal
//! modulus while preserving eigenvectors, so the iteration converges
//! geometrically and the root is recovered by undoing the affine map.

use serde::Serialize;

use crate::matrix::Matrix;
use crate::network::{partition_stubborn, stubborn_influence_exists, TrustMatrix};
use crate::{Error, Result};

/// Default residual tolerance for the eigenvalue iteration.
pub const DEFAULT_EIG_TOL: f64 = 1e-12;

/// Default residual tolerance for linear solves.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-9;

/// Default entry-wise tolerance for matrix-power limits.
pub const DEFAULT_LIMIT_TOL: f64 = 1e-9;

/// Hard ceiling on iterations for any spectral loop.
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Spectral shift used by the power iteration; any positive value
/// separates the Perron root from other peripheral eigenvalues.
const SHIFT: f64 = 0.5;

/// Perron root and normalized left eigenvector of a non-negative matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerronData {
    /// Spectral radius `rho(A)`.
    pub radius: f64,
    /// Left eigenvector `psi` with `psi A = radius * psi`, normalized to
    /// sum 1. Strictly positive when `A` is irreducible.
    pub left_vector: Vec<f64>,
    /// Power-iteration steps taken.
    pub iterations: usize,
    /// Final residual `max_j |(psi A)_j - radius * psi_j|`.
    pub residual: f64,
}

/// The non-trivial part of the limit `T^n -> [[1, 0], [gain, 0]]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitMatrix {
    /// Column of consensus gains, one per ordinary agent. Entry `i` is
    /// the weight the limiting opinion of ordinary agent `i` puts on the
    /// stubborn agent's initial opinion; all entries are 1 exactly when
    /// the whole network inherits that opinion.
    pub gain_column: Vec<f64>,
    /// Total number of agents `K`.
    pub size: usize,
}

/// Computes the spectral radius and left Perron vector of a non-negative
/// square matrix by shifted power iteration.
///
/// Preconditions: entries non-negative (validated trust blocks satisfy
/// this). For reliable convergence the matrix should be irreducible with
/// spectral radius below 1 — the intended inputs are interior blocks of
/// stubborn-form networks. The iteration stops once the eigen-residual
/// drops to `tol`; it gives up with [`Error::NoConvergence`] after
/// `max_iter` steps.
///
/// The empty matrix has spectral radius 0 by convention and returns an
/// empty eigenvector.
pub fn spectral_radius(a: &Matrix, tol: f64, max_iter: usize) -> Result<PerronData> {
    let m = a.size();
    if m == 0 {
        return Ok(PerronData {
            radius: 0.0,
            left_vector: Vec::new(),
            iterations: 0,
            residual: 0.0,
        });
    }

    // Uniform start: strictly positive, hence never orthogonal to the
    // Perron direction. The shift keeps every iterate strictly positive.
    let mut psi = vec![1.0 / m as f64; m];

    for iterations in 0.. {
        // w = psi Q, the left action of the *unshifted* matrix.
        let w = a.transpose_matvec(&psi);
        // Since psi sums to 1, psi Q summed gives the Rayleigh-like
        // estimate of the Perron root directly.
        let radius: f64 = w.iter().sum();
        let residual = w
            .iter()
            .zip(&psi)
            .map(|(&wj, &pj)| (wj - radius * pj).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(PerronData {
                radius,
                left_vector: psi,
                iterations,
                residual,
            });
        }

        // Geometric convergence at rate ~ (mu_2 + sigma) / (lambda + sigma);
        // budget generously for roots near 1 but never past max_iter.
        let radius_shifted = (radius + SHIFT) / (1.0 + SHIFT);
        let budget = iteration_budget(m, radius_shifted, max_iter);
        if iterations >= budget {
            return Err(Error::NoConvergence {
                iterations,
                residual,
            });
        }

        // Shifted update: psi <- normalize(psi (Q + sigma I)) keeps the
        // Perron direction dominant and the iterate positive.
        let mut next: Vec<f64> = w
            .iter()
            .zip(&psi)
            .map(|(&wj, &pj)| wj + SHIFT * pj)
            .collect();
        let norm: f64 = next.iter().sum();
        // norm = radius + sigma >= sigma > 0, so this never divides by 0.
        for v in next.iter_mut() {
            *v /= norm;
        }
        psi = next;
    }
    unreachable!("loop exits via return");
}

/// Iteration allowance scaled to how close the (shifted) root sits to 1.
fn iteration_budget(m: usize, shifted_radius: f64, max_iter: usize) -> usize {
    let base = 200 * m.max(1);
    if shifted_radius >= 1.0 {
        return max_iter;
    }
    let scale = (1.0 / (1.0 - shifted_radius)).ceil() as usize;
    (base.saturating_mul(scale)).min(max_iter)
}

/// Solves `(I - Q) v = r` for the consensus gain column.
///
/// Requires some entry of `r` to be strictly positive — otherwise the
/// stubborn agent has no channel into the network and no such limit
/// exists — and `rho(Q) < 1` so that `I - Q` is invertible. Solved by
/// Gaussian elimination with partial pivoting, then checked: the
/// residual `max_i |((I - Q)v - r)_i|` must not exceed `tol`.
pub fn consensus_gain(
    p: &crate::network::StubbornPartition,
    tol: f64,
) -> Result<LimitMatrix> {
    let r = p.stubborn_trust();
    if !stubborn_influence_exists(p) {
        return Err(Error::HypothesisViolated(
            "no ordinary agent trusts the stubborn agent (r = 0), so the stubborn \
             opinion cannot spread"
                .into(),
        ));
    }
    let q = p.interior();
    let m = q.size();

    // Assemble I - Q and solve against r.
    let mut a = Matrix::identity(m);
    for i in 0..m {
        for j in 0..m {
            a.set(i, j, a.get(i, j) - q.get(i, j));
        }
    }
    let v = solve(&mut a, r.to_vec())?;

    // Residual check against the original operator.
    let mut residual = 0.0f64;
    for i in 0..m {
        let mut lhs = v[i];
        for j in 0..m {
            lhs -= q.get(i, j) * v[j];
        }
        residual = residual.max((lhs - r[i]).abs());
    }
    if residual > tol {
        return Err(Error::ResidualTooLarge {
            residual,
            tolerance: tol,
        });
    }

    Ok(LimitMatrix {
        gain_column: v,
        size: m + 1,
    })
}

/// In-place Gaussian elimination with partial pivoting. Consumes the
/// matrix and right-hand side; callers re-verify via residuals.
fn solve(a: &mut Matrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.size();
    for col in 0..n {
        // Pick the largest pivot in this column at or below the diagonal.
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                a.get(i, col)
                    .abs()
                    .partial_cmp(&a.get(j, col).abs())
                    .expect("pivot entries are finite")
            })
            .expect("column range is non-empty");
        let pivot = a.get(pivot_row, col);
        if pivot.abs() < f64::MIN_POSITIVE {
            return Err(Error::SingularSystem { step: col });
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = a.get(col, j);
                a.set(col, j, a.get(pivot_row, j));
                a.set(pivot_row, j, tmp);
            }
            b.swap(col, pivot_row);
        }
        for i in col + 1..n {
            let factor = a.get(i, col) / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a.get(i, j) - factor * a.get(col, j);
                a.set(i, j, v);
            }
            b[i] -= factor * b[col];
        }
    }
    // Back substitution.
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a.get(i, j) * x[j];
        }
        x[i] = acc / a.get(i, i);
    }
    Ok(x)
}

/// Accumulates the truncated Neumann sum `v_n = sum_{k=0}^{n-1} Q^k r`
/// via the recurrence `v <- r + Q v`, never forming a matrix power.
///
/// `v_n` is exactly the opinion profile the ordinary agents hold after
/// `n` DeGroot steps from all-zeros when the stubborn opinion is 1, and
/// it climbs monotonically to the consensus gain column.
///
/// Panics if `n` is 0 (an empty sum has no sensible return here) or if
/// `r` and `q` disagree in size.
pub fn neumann_partial_sum(q: &Matrix, r: &[f64], n: usize) -> Vec<f64> {
    assert!(n >= 1, "partial sum needs at least one term");
    assert_eq!(r.len(), q.size(), "r must match Q in size");
    let mut v = r.to_vec();
    for _ in 1..n {
        let qv = q.matvec(&v);
        for (vi, (ri, qvi)) in v.iter_mut().zip(r.iter().zip(&qv)) {
            *vi = ri + qvi;
        }
    }
    v
}

/// Computes `lim T^n` by repeated squaring-free multiplication and
/// verifies the limit has the expected absorbing shape.
///
/// The iteration stops when successive powers agree entry-wise within
/// `tol` *and* the interior block has decayed below `tol` (both are
/// needed: near `rho(Q) = 1` successive powers can agree long before the
/// interior has died out). The result is reported as the gain column;
/// the rest of the limit is structurally `[[1, 0], [gain, 0]]`.
pub fn limit_power(t: &TrustMatrix, tol: f64, max_iter: usize) -> Result<LimitMatrix> {
    let p = partition_stubborn(t)?;
    if !stubborn_influence_exists(&p) {
        return Err(Error::HypothesisViolated(
            "no ordinary agent trusts the stubborn agent (r = 0), so T^n has no \
             absorbing limit"
                .into(),
        ));
    }
    let k = t.size();
    let mut power = t.weights().clone();
    for iterations in 1..=max_iter {
        let next = power.mul(t.weights());
        let diff = next.max_abs_diff(&power);
        let interior_mass = (1..k)
            .map(|i| next.row(i)[1..].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        power = next;
        if diff <= tol && interior_mass <= tol {
            // The first row of any power of a stubborn-form matrix is
            // exactly (1, 0, ..., 0); anything else means the input was
            // not truly in stubborn form.
            let row0 = power.row(0);
            if (row0[0] - 1.0).abs() > tol || row0[1..].iter().any(|v| v.abs() > tol) {
                return Err(Error::NotStubbornForm);
            }
            let gain_column = (1..k).map(|i| power.get(i, 0)).collect();
            return Ok(LimitMatrix {
                gain_column,
                size: k,
            });
        }
        if iterations == max_iter {
            return Err(Error::NoConvergence {
                iterations,
                residual: diff.max(interior_mass),
            });
        }
    }
    unreachable!("loop exits via return");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::TrustMatrix;
    use approx::assert_abs_diff_eq;

    fn two_agent_interior() -> Matrix {
        Matrix::from_rows(&[vec![0.0, 0.5], vec![1.0, 0.0]]).unwrap()
    }

    #[test]
    fn radius_of_scalar_block() {
        let q = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let p = spectral_radius(&q, DEFAULT_EIG_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_abs_diff_eq!(p.radius, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.left_vector[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn radius_of_zero_and_empty_blocks() {
        let z = spectral_radius(&Matrix::zero(1), DEFAULT_EIG_TOL, 1000).unwrap();
        assert_eq!(z.radius, 0.0);

        let e = spectral_radius(&Matrix::zero(0), DEFAULT_EIG_TOL, 1000).unwrap();
        assert_eq!(e.radius, 0.0);
        assert!(e.left_vector.is_empty());
    }

    #[test]
    fn radius_of_asymmetric_cycle() {
        // Q = [[0, 0.5], [1, 0]] has characteristic polynomial
        // mu^2 - 0.5, so rho = sqrt(1/2). The left Perron vector solves
        // psi_2 = 0.5 psi_1 / rho; normalized it is
        // (2 - sqrt(2), sqrt(2) - 1).
        let p = spectral_radius(&two_agent_interior(), DEFAULT_EIG_TOL, DEFAULT_MAX_ITER)
            .unwrap();
        assert_abs_diff_eq!(p.radius, 0.5f64.sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(p.left_vector[0], 2.0 - 2.0f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(p.left_vector[1], 2.0f64.sqrt() - 1.0, epsilon = 1e-9);
        assert!(p.residual <= DEFAULT_EIG_TOL);
    }

    #[test]
    fn shift_handles_periodic_matrices() {
        // A plain power iteration oscillates on the symmetric 2-cycle
        // (eigenvalues +1 and -1 scaled); the shift must break the tie.
        let q = Matrix::from_rows(&[vec![0.0, 0.9], vec![0.9, 0.0]]).unwrap();
        let p = spectral_radius(&q, DEFAULT_EIG_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_abs_diff_eq!(p.radius, 0.9, epsilon = 1e-10);
        assert_abs_diff_eq!(p.left_vector[0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn perron_vector_is_positive_and_normalized() {
        let q = Matrix::from_rows(&[
            vec![0.1, 0.6, 0.0],
            vec![0.2, 0.0, 0.7],
            vec![0.5, 0.3, 0.1],
        ])
        .unwrap();
        let p = spectral_radius(&q, DEFAULT_EIG_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(p.left_vector.iter().all(|&v| v > 0.0));
        assert_abs_diff_eq!(p.left_vector.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(p.radius < 1.0);
    }

    #[test]
    fn gain_of_two_agent_chain() {
        // r = (0.5, 0), Q = [[0, 0.5], [1, 0]]:
        // (I - Q)^{-1} = [[2, 1], [2, 2]], so v = (1, 1) — full adoption.
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let p = crate::network::partition_stubborn(&t).unwrap();
        let lim = consensus_gain(&p, DEFAULT_SOLVE_TOL).unwrap();
        assert_abs_diff_eq!(lim.gain_column[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lim.gain_column[1], 1.0, epsilon = 1e-12);
        assert_eq!(lim.size, 3);
    }

    #[test]
    fn gain_requires_stubborn_influence() {
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let p = crate::network::partition_stubborn(&t).unwrap();
        assert!(matches!(
            consensus_gain(&p, DEFAULT_SOLVE_TOL).unwrap_err(),
            Error::HypothesisViolated(_)
        ));
    }

    #[test]
    fn neumann_sum_accumulates_correctly() {
        // Same (r, Q); the sum r + Qr + Q²r has, term by term,
        // r = (0.5, 0), Qr = (0, 0.5), Q²r = (0.25, 0):
        // v_3 = (0.75, 0.5). One more term adds Q³r = (0, 0.25).
        let q = two_agent_interior();
        let r = [0.5, 0.0];
        assert_eq!(neumann_partial_sum(&q, &r, 1), vec![0.5, 0.0]);
        let v3 = neumann_partial_sum(&q, &r, 3);
        assert_abs_diff_eq!(v3[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(v3[1], 0.5, epsilon = 1e-15);
        let v4 = neumann_partial_sum(&q, &r, 4);
        assert_abs_diff_eq!(v4[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(v4[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn neumann_sum_approaches_gain() {
        let q = two_agent_interior();
        let r = [0.5, 0.0];
        let v = neumann_partial_sum(&q, &r, 200);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn limit_power_matches_gain_solve() {
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let lim = limit_power(&t, DEFAULT_LIMIT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert_abs_diff_eq!(lim.gain_column[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(lim.gain_column[1], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn limit_power_rejects_identity() {
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert!(matches!(
            limit_power(&t, DEFAULT_LIMIT_TOL, DEFAULT_MAX_ITER).unwrap_err(),
            Error::HypothesisViolated(_)
        ));
    }

    #[test]
    fn solve_rejects_singular_systems() {
        let mut a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            solve(&mut a, vec![1.0, 2.0]).unwrap_err(),
            Error::SingularSystem { .. }
        ));
    }
}
