//! Trust networks, the stubborn-agent partition, and opinion states.
//!
//! A trust matrix `T` is row-oriented: `t[i][j]` is the trust agent `i`
//! places on agent `j`, rows are non-negative and sum to at most one.
//! Agent `0` is the stubborn agent, so a matrix in *stubborn form* has
//! first row `(1, 0, ..., 0)` and decomposes as
//!
//! ```text
//!     T = | 1   0 |
//!         | r   Q |
//! ```
//!
//! where `r` holds each ordinary agent's trust in the stubborn one and
//! `Q` the trust among ordinary agents. All long-run behaviour of the
//! dynamics is a property of `(r, Q)`, which [`partition_stubborn`]
//! extracts and [`StubbornPartition`] carries around.

use serde::Serialize;

use crate::matrix::Matrix;
use crate::{Error, Result};

/// Default tolerance when checking row sums against 1.
pub const DEFAULT_ROW_TOL: f64 = 1e-9;

/// Opinion values may overshoot `[0, 1]` by at most this much before we
/// call it a bug rather than roundoff.
pub const OPINION_SLACK: f64 = 1e-12;

/// How a validated trust matrix relates to row-stochasticity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StochasticityClass {
    /// Every row sums to 1 (within tolerance).
    Stochastic,
    /// Every row sums to at most 1, at least one row strictly less.
    SubStochastic,
    /// Every row sums to strictly less than 1.
    StrictlySubStochastic,
}

/// A validated trust matrix.
///
/// Construction via [`TrustMatrix::validate`] guarantees non-negative
/// finite entries and row sums at most one; rows that sum to one within
/// the tolerance are snapped to sum exactly one so that downstream
/// stochastic-matrix arithmetic is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustMatrix {
    weights: Matrix,
    class: StochasticityClass,
    row_tol: f64,
}

impl TrustMatrix {
    /// Validates a weight matrix with the default row tolerance.
    pub fn new(weights: Matrix) -> Result<Self> {
        Self::validate(weights, DEFAULT_ROW_TOL)
    }

    /// Validates nested rows with the default row tolerance.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::validate(Matrix::from_rows(rows)?, DEFAULT_ROW_TOL)
    }

    /// Checks entries and row sums, classifies the matrix, and snaps
    /// near-stochastic rows so they sum to one.
    ///
    /// A row with sum in `[1 - row_tol, 1 + row_tol]` is renormalized
    /// (scaled by the reciprocal of its sum, preserving proportions)
    /// and any residual rounding defect is folded into its largest
    /// entry, so the recomputed sum is 1.0 whenever that is
    /// representable. A row summing to more than `1 + row_tol` is
    /// rejected.
    pub fn validate(mut weights: Matrix, row_tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        let n = weights.size();
        for i in 0..n {
            for j in 0..n {
                let v = weights.get(i, j);
                if !v.is_finite() {
                    return Err(Error::NonFiniteEntry { row: i, col: j });
                }
                if v < 0.0 {
                    return Err(Error::NegativeEntry {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }

        let mut all_one = true;
        let mut all_below = true;
        for i in 0..n {
            let sum: f64 = weights.row(i).iter().sum();
            if sum > 1.0 + row_tol {
                return Err(Error::RowSumExceedsOne { row: i, sum });
            }
            if (sum - 1.0).abs() <= row_tol {
                snap_row_to_one(&mut weights, i);
                all_below = false;
            } else {
                all_one = false;
            }
        }

        let class = if all_one {
            StochasticityClass::Stochastic
        } else if all_below {
            StochasticityClass::StrictlySubStochastic
        } else {
            StochasticityClass::SubStochastic
        };

        Ok(TrustMatrix {
            weights,
            class,
            row_tol,
        })
    }

    /// Number of agents `K`.
    pub fn size(&self) -> usize {
        self.weights.size()
    }

    /// The validated weight matrix.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn classification(&self) -> StochasticityClass {
        self.class
    }

    /// The tolerance this matrix was validated with.
    pub fn row_tol(&self) -> f64 {
        self.row_tol
    }

    /// Whether the first row is exactly `(1, 0, ..., 0)` after snapping,
    /// i.e. agent 0 trusts only itself.
    pub fn is_stubborn_form(&self) -> bool {
        let row = self.weights.row(0);
        row[0] == 1.0 && row[1..].iter().all(|&v| v == 0.0)
    }
}

/// Renormalizes row `i` to sum to 1: scales by the reciprocal of the
/// current sum, then folds the residual rounding defect into the
/// largest entry until the recomputed sum lands on 1.0 or the defect
/// falls below representable resolution.
///
/// Scaling is skipped when the defect is already at the scale of
/// summation round-off, which makes the function idempotent: a row that
/// was snapped once is not perturbed by being validated again.
fn snap_row_to_one(weights: &mut Matrix, i: usize) {
    let n = weights.size();
    let sum: f64 = weights.row(i).iter().sum();
    if (sum - 1.0).abs() > f64::EPSILON * (n as f64 + 4.0) {
        let scale = 1.0 / sum;
        for j in 0..n {
            let v = weights.get(i, j);
            if v > 0.0 {
                weights.set(i, j, v * scale);
            }
        }
    }
    for _ in 0..8 {
        let sum: f64 = weights.row(i).iter().sum();
        let defect = 1.0 - sum;
        if defect == 0.0 {
            return;
        }
        let (jmax, vmax) = weights
            .row(i)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| {
                if v > acc.1 {
                    (j, v)
                } else {
                    acc
                }
            });
        let adjusted = vmax + defect;
        if adjusted == vmax {
            return;
        }
        weights.set(i, jmax, adjusted);
        // Keep the fold only if it strictly shrank the defect; reverting
        // at the first non-improvement leaves a fixed point, so a second
        // validation pass cannot move the row again.
        let new_sum: f64 = weights.row(i).iter().sum();
        if (1.0 - new_sum).abs() >= defect.abs() {
            weights.set(i, jmax, vmax);
            return;
        }
    }
}

/// The `(r, Q)` blocks of a stochastic trust matrix in stubborn form.
#[derive(Debug, Clone, PartialEq)]
pub struct StubbornPartition {
    stubborn_trust: Vec<f64>,
    interior: Matrix,
}

impl StubbornPartition {
    /// Trust each ordinary agent places on the stubborn agent
    /// (the column vector `r`, length `K - 1`).
    pub fn stubborn_trust(&self) -> &[f64] {
        &self.stubborn_trust
    }

    /// Trust among ordinary agents (the `(K-1) x (K-1)` block `Q`).
    pub fn interior(&self) -> &Matrix {
        &self.interior
    }

    /// Number of ordinary agents `K - 1`.
    pub fn ordinary_count(&self) -> usize {
        self.stubborn_trust.len()
    }

    /// Rebuilds the full `K x K` trust matrix from the blocks.
    pub fn reassemble(&self) -> TrustMatrix {
        let m = self.ordinary_count();
        let mut t = Matrix::zero(m + 1);
        t.set(0, 0, 1.0);
        for i in 0..m {
            t.set(i + 1, 0, self.stubborn_trust[i]);
            for j in 0..m {
                t.set(i + 1, j + 1, self.interior.get(i, j));
            }
        }
        TrustMatrix::new(t).expect("blocks of a validated matrix reassemble cleanly")
    }
}

/// Splits a stochastic, stubborn-form trust matrix into its `(r, Q)` blocks.
///
/// Fails with [`Error::RowSumNotOne`] if any row is not stochastic and
/// with [`Error::NotStubbornForm`] if agent 0 trusts anyone else.
pub fn partition_stubborn(t: &TrustMatrix) -> Result<StubbornPartition> {
    if t.classification() != StochasticityClass::Stochastic {
        let sums = t.weights().row_sums();
        let (row, sum) = sums
            .iter()
            .enumerate()
            .find(|(_, &s)| (s - 1.0).abs() > t.row_tol())
            .map(|(i, &s)| (i, s))
            .unwrap_or((0, sums[0]));
        return Err(Error::RowSumNotOne { row, sum });
    }
    if !t.is_stubborn_form() {
        return Err(Error::NotStubbornForm);
    }
    let k = t.size();
    let m = k - 1;
    let mut stubborn_trust = Vec::with_capacity(m);
    let mut interior = Matrix::zero(m);
    for i in 0..m {
        stubborn_trust.push(t.weights().get(i + 1, 0));
        for j in 0..m {
            interior.set(i, j, t.weights().get(i + 1, j + 1));
        }
    }
    Ok(StubbornPartition {
        stubborn_trust,
        interior,
    })
}

/// Whether at least one ordinary agent trusts the stubborn agent directly.
///
/// This is the hypothesis under which the stubborn agent's opinion
/// reaches the whole (irreducible) network.
pub fn stubborn_influence_exists(p: &StubbornPartition) -> bool {
    p.stubborn_trust().iter().any(|&v| v > 0.0)
}

/// Whether the directed graph of positive entries is strongly connected.
///
/// Edge orientation does not matter for this check (a digraph is
/// strongly connected iff its reverse is). Single-vertex and empty
/// matrices count as irreducible: the interior block of a two-agent
/// network is `1 x 1` and the theory treats it as irreducible whatever
/// its weight.
pub fn is_irreducible(a: &Matrix) -> bool {
    let n = a.size();
    if n <= 1 {
        return true;
    }
    strongly_connected_component_count(a) == 1
}

/// Tarjan's algorithm, iterative to keep large graphs off the call stack.
fn strongly_connected_component_count(a: &Matrix) -> usize {
    const UNVISITED: usize = usize::MAX;
    let n = a.size();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components = 0usize;

    // Each frame is (vertex, next column to examine).
    let mut call_stack: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call_stack.push((root, 0));
        while let Some(&mut (v, ref mut next_j)) = call_stack.last_mut() {
            if *next_j == 0 {
                index[v] = next_index;
                lowlink[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let mut descended = false;
            while *next_j < n {
                let w = *next_j;
                *next_j += 1;
                if a.get(v, w) <= 0.0 || w == v {
                    continue;
                }
                if index[w] == UNVISITED {
                    call_stack.push((w, 0));
                    descended = true;
                    break;
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            }
            if descended {
                continue;
            }
            // v is finished: close its component if it is a root.
            if lowlink[v] == index[v] {
                components += 1;
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    if w == v {
                        break;
                    }
                }
            }
            call_stack.pop();
            if let Some(&mut (parent, _)) = call_stack.last_mut() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
        }
    }
    components
}

/// A vector of opinions, one per agent, each in `[0, 1]`.
///
/// Construction tolerates floating-point overshoot up to
/// [`OPINION_SLACK`] and snaps it back into range; anything further out
/// is rejected, because a genuinely out-of-range opinion means the
/// update rule is broken, not that rounding happened.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpinionState {
    values: Vec<f64>,
}

impl OpinionState {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        for v in values.iter_mut() {
            if !v.is_finite() || *v < -OPINION_SLACK || *v > 1.0 + OPINION_SLACK {
                return Err(Error::OutOfRange {
                    name: "opinion",
                    value: *v,
                    range: "[0, 1]",
                });
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(OpinionState { values })
    }

    /// Builds a state from the stubborn agent's opinion and the ordinary
    /// agents' opinions.
    pub fn from_parts(stubborn: f64, ordinary: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(ordinary.len() + 1);
        values.push(stubborn);
        values.extend_from_slice(ordinary);
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The stubborn agent's opinion.
    pub fn stubborn(&self) -> f64 {
        self.values[0]
    }

    /// Opinions of the ordinary agents (everyone but agent 0).
    pub fn ordinary(&self) -> &[f64] {
        &self.values[1..]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute per-agent difference against another state.
    pub fn max_abs_diff(&self, other: &OpinionState) -> f64 {
        assert_eq!(self.len(), other.len(), "state lengths must match");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stubborn_3x3() -> TrustMatrix {
        TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn validates_and_classifies_stochastic() {
        let t = stubborn_3x3();
        assert_eq!(t.classification(), StochasticityClass::Stochastic);
        assert!(t.is_stubborn_form());
    }

    #[test]
    fn classifies_substochastic_variants() {
        let sub = TrustMatrix::from_rows(&[vec![0.5, 0.5], vec![0.3, 0.3]]).unwrap();
        assert_eq!(sub.classification(), StochasticityClass::SubStochastic);

        let strict = TrustMatrix::from_rows(&[vec![0.4, 0.5], vec![0.3, 0.3]]).unwrap();
        assert_eq!(
            strict.classification(),
            StochasticityClass::StrictlySubStochastic
        );
    }

    #[test]
    fn rejects_negative_entries() {
        let err = TrustMatrix::from_rows(&[vec![1.0, -0.1], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(
            err,
            Error::NegativeEntry { row: 0, col: 1, .. }
        ));
    }

    #[test]
    fn rejects_row_sums_above_one() {
        let err = TrustMatrix::from_rows(&[vec![0.7, 0.7], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::RowSumExceedsOne { row: 0, .. }));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let err =
            TrustMatrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteEntry { row: 0, col: 0 }));
    }

    #[test]
    fn snaps_near_stochastic_rows_exactly_to_one() {
        // Row sums to 1 - 2e-10, inside the default tolerance.
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.5 - 2e-10, 0.5],
        ])
        .unwrap();
        assert_eq!(t.classification(), StochasticityClass::Stochastic);
        let sum: f64 = t.weights().row(1).iter().sum();
        assert_eq!(sum, 1.0, "snapping must make the row sum exactly 1");
    }

    #[test]
    fn partition_extracts_blocks() {
        let p = partition_stubborn(&stubborn_3x3()).unwrap();
        assert_eq!(p.stubborn_trust(), &[0.5, 0.0]);
        assert_eq!(p.interior().to_rows(), vec![vec![0.0, 0.5], vec![1.0, 0.0]]);
        assert!(stubborn_influence_exists(&p));
    }

    #[test]
    fn partition_rejects_non_stubborn_form() {
        let t = TrustMatrix::from_rows(&[
            vec![0.9, 0.1, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            partition_stubborn(&t).unwrap_err(),
            Error::NotStubbornForm
        ));
    }

    #[test]
    fn partition_rejects_substochastic_rows() {
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.4],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            partition_stubborn(&t).unwrap_err(),
            Error::RowSumNotOne { row: 1, .. }
        ));
    }

    #[test]
    fn reassemble_restores_original() {
        let t = stubborn_3x3();
        let p = partition_stubborn(&t).unwrap();
        assert_eq!(p.reassemble().weights(), t.weights());
    }

    #[test]
    fn no_influence_when_r_is_zero() {
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let p = partition_stubborn(&t).unwrap();
        assert!(!stubborn_influence_exists(&p));
    }

    #[test]
    fn irreducibility_basic_cases() {
        // Directed 2-cycle: irreducible.
        let cycle = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(is_irreducible(&cycle));

        // One-way edge: reducible.
        let oneway = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(!is_irreducible(&oneway));

        // Diagonal: reducible for size >= 2.
        let diag = Matrix::identity(3);
        assert!(!is_irreducible(&diag));

        // Size 1 and 0 are irreducible by convention.
        assert!(is_irreducible(&Matrix::zero(1)));
        assert!(is_irreducible(&Matrix::zero(0)));
    }

    #[test]
    fn irreducibility_three_cycle_and_broken_cycle() {
        let three = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(is_irreducible(&three));

        let broken = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(!is_irreducible(&broken));
    }

    #[test]
    fn self_loops_do_not_create_connectivity() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(!is_irreducible(&m));
    }

    #[test]
    fn opinion_state_validates_range() {
        assert!(OpinionState::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(OpinionState::new(vec![-0.1]).is_err());
        assert!(OpinionState::new(vec![1.1]).is_err());
        assert!(OpinionState::new(vec![f64::NAN]).is_err());
        assert!(OpinionState::new(vec![]).is_err());
    }

    #[test]
    fn opinion_state_snaps_roundoff() {
        let s = OpinionState::new(vec![1.0 + 1e-13, -1e-13]).unwrap();
        assert_eq!(s.values(), &[1.0, 0.0]);
    }

    #[test]
    fn opinion_state_parts() {
        let s = OpinionState::from_parts(0.0, &[0.25, 0.75]).unwrap();
        assert_eq!(s.stubborn(), 0.0);
        assert_eq!(s.ordinary(), &[0.25, 0.75]);
        assert_eq!(s.len(), 3);
    }
}
