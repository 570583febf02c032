//! Verification instruments for the convergence structure of the
//! random-actions model.
//!
//! The stochastic dynamics herd toward the stubborn opinion because the
//! weighted opinion `S[n] = psi . Y[n]` — with `psi` the left Perron
//! vector of the interior block `Q` — is a strict supermartingale:
//!
//! ```text
//!     E[S[n+1] | Y[n]]   = (1 - alpha(1 - lambda)) S[n]
//!     Var(dS[n+1] | Y[n]) = alpha^2 lambda^2 sum_k psi_k^2 Y_k (1 - Y_k)
//! ```
//!
//! This module computes both sides of each identity three independent
//! ways: the closed form, exhaustive enumeration over all action
//! vectors (exact, feasible for small networks), and Monte Carlo
//! restarts from a fixed state (statistical, any size). It also provides
//! the structural checks the proofs lean on: decay of the polarization
//! statistic `E[(Y_k(1-Y_k))^2]`, vanishing middle mass, the influence
//! layers growing out of the stubborn agent, and the row-sum contraction
//! that forces `rho(Q) < 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{ra_step, sample_actions, RaConfig, Trajectory};
use crate::ensemble::EnsembleSummary;
use crate::exec;
use crate::matrix::Matrix;
use crate::network::{OpinionState, StubbornPartition, TrustMatrix};
use crate::rng::trial_seed;
use crate::{Error, Result};

/// Largest ordinary-agent count for which exhaustive enumeration over
/// all `2^(K-1)` action vectors is considered cheap.
pub const ENUMERATION_LIMIT: usize = 12;

/// Samples per scheduling chunk in the Monte Carlo verifiers.
const SAMPLE_CHUNK: usize = 4096;

/// The weighted-opinion path `S[n]` of one trajectory and its increments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleSeries {
    /// `S[n] = psi . Y[n]` for each recorded state.
    pub values: Vec<f64>,
    /// `S[n] - S[n-1]` for consecutive recorded states.
    pub differences: Vec<f64>,
}

/// Projects a trajectory onto the Perron weights.
///
/// With `psi` positive and summing to 1, every value lies in `[0, 1]`
/// and every increment in `[-1, 1]`.
pub fn martingale_series(traj: &Trajectory, psi: &[f64]) -> Result<MartingaleSeries> {
    let first = traj.states.first().ok_or(Error::Empty)?;
    if psi.len() + 1 != first.len() {
        return Err(Error::DimensionMismatch {
            expected: first.len() - 1,
            actual: psi.len(),
        });
    }
    let values: Vec<f64> = traj
        .states
        .iter()
        .map(|s| dot(psi, s.ordinary()))
        .collect();
    let differences = values.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(MartingaleSeries {
        values,
        differences,
    })
}

/// The one-step contraction factor `c = 1 - alpha(1 - lambda)` of the
/// conditional mean.
///
/// Requires `alpha` in `(0, 1)` and `lambda` in `[0, 1)`, which make
/// `c` itself lie strictly inside `(0, 1)` — each step shrinks the
/// expected weighted opinion.
pub fn conditional_mean_factor(alpha: f64, lambda: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::OutOfRange {
            name: "alpha",
            value: alpha,
            range: "(0, 1)",
        });
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::OutOfRange {
            name: "lambda",
            value: lambda,
            range: "[0, 1)",
        });
    }
    let c = 1.0 - alpha * (1.0 - lambda);
    debug_assert!(c > 0.0 && c < 1.0);
    Ok(c)
}

/// Closed form of the conditional variance of the one-step increment:
/// `alpha^2 lambda^2 sum_k psi_k^2 y_k (1 - y_k)`.
pub fn conditional_variance_analytic(y: &[f64], psi: &[f64], alpha: f64, lambda: f64) -> f64 {
    assert_eq!(y.len(), psi.len(), "y and psi must have equal length");
    let spread: f64 = y
        .iter()
        .zip(psi)
        .map(|(&yk, &pk)| pk * pk * yk * (1.0 - yk))
        .sum();
    alpha * alpha * lambda * lambda * spread
}

/// Exact conditional mean and variance of `S[n+1]` given the ordinary
/// state `y`, by exhaustive enumeration of all `2^m` action vectors.
///
/// Every outcome is evaluated through the genuine update rule (build
/// `Y' = (1-alpha) y + alpha Q b`, project onto `psi`), weighted by its
/// Bernoulli probability, and reduced with compensated summation — this
/// is the independent oracle the closed forms are checked against, so it
/// deliberately shares no algebra with them.
///
/// Panics if there are more than [`ENUMERATION_LIMIT`] ordinary agents.
pub fn enumerate_conditional_moments(
    p: &StubbornPartition,
    alpha: f64,
    y: &[f64],
    psi: &[f64],
) -> (f64, f64) {
    let m = p.ordinary_count();
    assert_eq!(y.len(), m, "state must match the network");
    assert_eq!(psi.len(), m, "psi must match the network");
    assert!(
        m <= ENUMERATION_LIMIT,
        "enumeration over 2^{m} action vectors is beyond the supported size"
    );
    let q = p.interior();

    let outcomes: Vec<(f64, f64)> = (0_u64..(1 << m))
        .map(|mask| {
            let mut prob = 1.0;
            for (k, &yk) in y.iter().enumerate() {
                prob *= if mask >> k & 1 == 1 { yk } else { 1.0 - yk };
            }
            let mut s_next = 0.0;
            for i in 0..m {
                let observed: f64 = (0..m)
                    .filter(|&j| mask >> j & 1 == 1)
                    .map(|j| q.get(i, j))
                    .sum();
                s_next += psi[i] * ((1.0 - alpha) * y[i] + alpha * observed);
            }
            (prob, s_next)
        })
        .collect();

    let mean = compensated_sum(outcomes.iter().map(|&(p, s)| p * s));
    let variance = compensated_sum(
        outcomes
            .iter()
            .map(|&(p, s)| p * (s - mean) * (s - mean)),
    );
    (mean, variance)
}

/// Neumaier's compensated summation; keeps enumeration sums exact to
/// the last borrowed bit even with thousands of terms.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Monte Carlo check of one conditional moment against its closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    /// Closed-form value being tested.
    pub analytic: f64,
    /// Sampled estimate.
    pub empirical: f64,
    /// Standard error of the estimate.
    pub standard_error: f64,
    /// `(empirical - analytic) / standard_error`; 0 when both the error
    /// and the deviation vanish (degenerate states).
    pub z_score: f64,
    pub samples: usize,
}

/// Verifies the conditional-mean identity by branching `samples`
/// independent one-step transitions out of the fixed ordinary state `y`
/// and comparing the sampled mean of `S[n+1]` with `c * (psi . y)`.
pub fn verify_conditional_mean(
    config: &RaConfig,
    y: &[f64],
    psi: &[f64],
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<MomentCheck> {
    let c = conditional_mean_factor(config.alpha(), lambda)?;
    let start = branching_start(config, y, psi)?;
    let analytic = c * dot(psi, y);

    let moments = one_step_moments(config, &start, psi, false, samples, seed)?;
    let empirical = moments.mean;
    let se = (moments.sample_variance() / moments.count_f()).sqrt();
    Ok(MomentCheck {
        analytic,
        empirical,
        standard_error: se,
        z_score: z_score(empirical - analytic, se),
        samples,
    })
}

/// Verifies the conditional-variance identity the same way, comparing
/// the sample variance of the increment `dS` against the closed form.
///
/// The standard error uses the asymptotic variance of a sample variance,
/// `(m4 - m2^2) / n`, with the fourth central moment taken from the same
/// sample.
pub fn verify_conditional_variance(
    config: &RaConfig,
    y: &[f64],
    psi: &[f64],
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<MomentCheck> {
    // Validates alpha and lambda even though c itself is not needed.
    conditional_mean_factor(config.alpha(), lambda)?;
    let start = branching_start(config, y, psi)?;
    let analytic = conditional_variance_analytic(y, psi, config.alpha(), lambda);

    let moments = one_step_moments(config, &start, psi, true, samples, seed)?;
    let empirical = moments.sample_variance();
    let n = moments.count_f();
    let m2 = moments.m2 / n;
    let m4 = moments.m4 / n;
    let se = ((m4 - m2 * m2).max(0.0) / n).sqrt();
    Ok(MomentCheck {
        analytic,
        empirical,
        standard_error: se,
        z_score: z_score(empirical - analytic, se),
        samples,
    })
}

fn branching_start(config: &RaConfig, y: &[f64], psi: &[f64]) -> Result<OpinionState> {
    if y.len() != config.size() - 1 {
        return Err(Error::DimensionMismatch {
            expected: config.size() - 1,
            actual: y.len(),
        });
    }
    if psi.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: psi.len(),
        });
    }
    OpinionState::from_parts(0.0, y)
}

/// Running central moments up to order four (Welford / Chan updates).
///
/// Chosen over raw power sums for two reasons: identical samples yield
/// an *exactly* zero variance (degenerate states must report 0, not
/// rounding dust), and merging per-chunk moments in fixed order keeps
/// the whole reduction deterministic under parallelism.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let n = self.count as f64;
        let delta = v - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * (n - 1.0);
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    fn merge(self, other: Moments) -> Moments {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        Moments {
            count: self.count + other.count,
            mean: self.mean + delta * nb / n,
            m2,
            m3,
            m4,
        }
    }

    fn count_f(self) -> f64 {
        self.count as f64
    }

    fn sample_variance(self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count_f() - 1.0)
        }
    }
}

/// Draws `samples` one-step transitions from `start` and accumulates
/// moments of `S'` (or of the increment `S' - S` when `of_increment`),
/// chunked and merged deterministically.
fn one_step_moments(
    config: &RaConfig,
    start: &OpinionState,
    psi: &[f64],
    of_increment: bool,
    samples: usize,
    seed: u64,
) -> Result<Moments> {
    if samples < 2 {
        return Err(Error::OutOfRange {
            name: "samples",
            value: samples as f64,
            range: "at least 2",
        });
    }
    let s0 = dot(psi, start.ordinary());
    let chunks = samples.div_ceil(SAMPLE_CHUNK);
    let per_chunk = exec::map_chunks(chunks, true, |c| {
        let lo = c * SAMPLE_CHUNK;
        let hi = ((c + 1) * SAMPLE_CHUNK).min(samples);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, c as u64));
        let mut moments = Moments::default();
        for _ in lo..hi {
            let actions = sample_actions(start, &mut rng);
            let next = ra_step(config, start, &actions);
            let s1 = dot(psi, next.ordinary());
            moments.push(if of_increment { s1 - s0 } else { s1 });
        }
        moments
    });
    Ok(per_chunk.into_iter().fold(Moments::default(), Moments::merge))
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// Per-time empirical mean of `(x_k (1 - x_k))^2` for agent `k` (global
/// index; the stubborn agent 0 gives all zeros) across trajectories.
///
/// This is the polarization statistic whose decay to 0 forces every
/// agent toward an extreme opinion.
pub fn polarization_series(trials: &[Trajectory], k: usize) -> Vec<f64> {
    let times = common_times(trials);
    (0..times)
        .map(|t| {
            let sum: f64 = trials
                .iter()
                .map(|tr| {
                    let x = tr.states[t].values()[k];
                    let p = x * (1.0 - x);
                    p * p
                })
                .sum();
            sum / trials.len() as f64
        })
        .collect()
}

/// Fraction of trials in which agent `k` (global index) sits strictly
/// between `eps` and `1 - eps` at step `n`.
pub fn middle_mass(trials: &[Trajectory], k: usize, n: usize, eps: f64) -> f64 {
    assert!(eps > 0.0 && eps < 0.5, "eps must lie in (0, 0.5)");
    let hits = trials
        .iter()
        .filter(|tr| {
            let x = state_at(tr, n).values()[k];
            x > eps && x < 1.0 - eps
        })
        .count();
    hits as f64 / trials.len() as f64
}

/// Empirical `P(X_k[n] > eps)` for every ordinary agent; entry `k`
/// refers to global agent `k + 1`. Under herding to the stubborn
/// opinion 0 these tails vanish.
pub fn herding_probability(trials: &[Trajectory], n: usize, eps: f64) -> Vec<f64> {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    tail_fractions(trials, n, |x| x > eps)
}

/// Empirical `P(X_k[n] < 1 - eps)` for every ordinary agent — the
/// companion upper tail. Under herding to 0 these approach 1; they are
/// reported alongside [`herding_probability`] so both candidate
/// readings of the convergence statement are visible in the data.
pub fn upper_herding_probability(trials: &[Trajectory], n: usize, eps: f64) -> Vec<f64> {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
    tail_fractions(trials, n, |x| x < 1.0 - eps)
}

fn tail_fractions(trials: &[Trajectory], n: usize, hit: impl Fn(f64) -> bool) -> Vec<f64> {
    assert!(!trials.is_empty(), "need at least one trajectory");
    let agents = trials[0].states[0].len();
    (1..agents)
        .map(|k| {
            let hits = trials
                .iter()
                .filter(|tr| hit(state_at(tr, n).values()[k]))
                .count();
            hits as f64 / trials.len() as f64
        })
        .collect()
}

fn state_at(tr: &Trajectory, n: usize) -> &OpinionState {
    let pos = tr
        .times
        .binary_search(&n)
        .unwrap_or_else(|_| panic!("step {n} was not recorded in this trajectory"));
    &tr.states[pos]
}

fn common_times(trials: &[Trajectory]) -> usize {
    assert!(!trials.is_empty(), "need at least one trajectory");
    let len = trials[0].states.len();
    assert!(
        trials.iter().all(|t| t.states.len() == len),
        "trajectories must share their recording schedule"
    );
    len
}

/// Influence layers: `layers[0]` holds the ordinary agents trusting the
/// stubborn agent directly, `layers[p]` those first reached through
/// layer `p - 1`. Indices are internal (0-based; ordinary agents are
/// `1..K`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerDecomposition {
    layers: Vec<Vec<usize>>,
}

impl LayerDecomposition {
    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    /// Index of the deepest layer.
    pub fn depth(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }

    /// Layer index of an agent, if it was reached.
    pub fn layer_of(&self, agent: usize) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(&agent))
    }
}

/// Peels the network into layers by breadth-first search from the
/// stubborn agent along trust edges (an edge `i -> j` exists when `i`
/// trusts `j`, so the search walks edges backwards from trusted to
/// trusting).
///
/// When the interior is irreducible and someone trusts the stubborn
/// agent, the layers cover every ordinary agent; otherwise the
/// unreached agents are reported in [`Error::IncompleteCoverage`].
pub fn layer_decomposition(t: &TrustMatrix) -> Result<LayerDecomposition> {
    if !t.is_stubborn_form() {
        return Err(Error::NotStubbornForm);
    }
    let k = t.size();
    let w = t.weights();
    let mut assigned = vec![false; k];
    assigned[0] = true;

    let mut layers: Vec<Vec<usize>> = Vec::new();
    let mut frontier: Vec<usize> = (1..k).filter(|&i| w.get(i, 0) > 0.0).collect();
    while !frontier.is_empty() {
        for &i in &frontier {
            assigned[i] = true;
        }
        layers.push(frontier.clone());
        let mut next: Vec<usize> = (1..k)
            .filter(|&i| !assigned[i] && frontier.iter().any(|&j| w.get(i, j) > 0.0))
            .collect();
        next.sort_unstable();
        frontier = next;
    }

    let uncovered: Vec<usize> = (1..k).filter(|&i| !assigned[i]).collect();
    if !uncovered.is_empty() {
        return Err(Error::IncompleteCoverage(uncovered));
    }
    Ok(LayerDecomposition { layers })
}

/// Row-sum behaviour of matrix powers `A, A^2, ..., A^M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    /// Largest row sum of each power, index `p - 1` for power `p`.
    pub max_row_sums: Vec<f64>,
    /// First power at which *every* row sum is strictly below 1.
    pub first_strict_power: usize,
}

/// Strictness/monotonicity tolerance for row-sum comparisons.
const CONTRACTION_TOL: f64 = 1e-12;

/// Checks the row-sum contraction that drives `rho(A) < 1`: for an
/// irreducible sub-stochastic `A` with at least one deficient row, row
/// sums of `A^p` never increase with `p`, and by power `M = size` every
/// row sum is strictly below 1.
///
/// Violations (including hypothesis violations such as a stochastic
/// input, which keeps all row sums at 1 forever) surface as
/// [`Error::ContractionViolated`] naming the offending power and row.
pub fn row_sum_contraction(a: &Matrix, m: usize) -> Result<ContractionReport> {
    if m < 1 {
        return Err(Error::OutOfRange {
            name: "power",
            value: m as f64,
            range: "at least 1",
        });
    }
    let size = a.size();
    let mut power = a.clone();
    // Row sums of A^0 = I are all 1.
    let mut previous = vec![1.0; size];
    let mut max_row_sums = Vec::with_capacity(m);
    let mut first_strict_power = None;

    for p in 1..=m {
        let sums = power.row_sums();
        for (row, (&sum, &prev)) in sums.iter().zip(&previous).enumerate() {
            if sum > prev + CONTRACTION_TOL {
                return Err(Error::ContractionViolated { power: p, row, sum });
            }
        }
        max_row_sums.push(sums.iter().copied().fold(0.0, f64::max));
        if first_strict_power.is_none() && sums.iter().all(|&s| s < 1.0 - CONTRACTION_TOL) {
            first_strict_power = Some(p);
        }
        if p == m {
            if let Some((row, &sum)) = sums
                .iter()
                .enumerate()
                .find(|(_, &s)| s >= 1.0 - CONTRACTION_TOL)
            {
                return Err(Error::ContractionViolated { power: p, row, sum });
            }
        } else {
            previous = sums;
            power = power.mul(a);
        }
    }
    Ok(ContractionReport {
        max_row_sums,
        first_strict_power: first_strict_power.expect("strictness was verified at power M"),
    })
}

/// One row of the neighbour-propagation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationRow {
    pub time: usize,
    /// `P(X_j > eps)` for the trusted neighbour `j`.
    pub neighbor_tail: f64,
    /// Middle mass of the trusting agent `i`.
    pub middle: f64,
    /// `P(X_i > eps)` for the trusting agent `i`.
    pub tail: f64,
}

/// Herding propagation from a trusted neighbour to a trusting agent.
///
/// The underlying result is asymptotic — once agent `j` has herded and
/// agent `i` has left the middle band, agent `i` must herd too — so this
/// is reported as a time-indexed table for inspection rather than a
/// pass/fail verdict. `settled_from` marks the first recorded time from
/// which `P(X_i > eps)` stays at or below `delta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagationReport {
    pub trusting_agent: usize,
    pub trusted_agent: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub rows: Vec<PropagationRow>,
    pub settled_from: Option<usize>,
}

/// Builds the propagation table for a pair `(i, j)` with `t_ij > 0`
/// (agent `i` trusts agent `j`; both are internal indices).
pub fn neighbor_propagation_check(
    trials: &[Trajectory],
    trust: &TrustMatrix,
    i: usize,
    j: usize,
    eps: f64,
    delta: f64,
) -> Result<PropagationReport> {
    if trust.weights().get(i, j) <= 0.0 {
        return Err(Error::HypothesisViolated(format!(
            "agent {i} places no trust in agent {j}, so herding cannot propagate \
             along this edge"
        )));
    }
    let positions = common_times(trials);
    let n_trials = trials.len() as f64;
    let rows: Vec<PropagationRow> = (0..positions)
        .map(|t| {
            let mut neighbor_tail = 0.0;
            let mut middle = 0.0;
            let mut tail = 0.0;
            for tr in trials {
                let xj = tr.states[t].values()[j];
                let xi = tr.states[t].values()[i];
                if xj > eps {
                    neighbor_tail += 1.0;
                }
                if xi > eps && xi < 1.0 - eps {
                    middle += 1.0;
                }
                if xi > eps {
                    tail += 1.0;
                }
            }
            PropagationRow {
                time: trials[0].times[t],
                neighbor_tail: neighbor_tail / n_trials,
                middle: middle / n_trials,
                tail: tail / n_trials,
            }
        })
        .collect();

    let mut settled_from = None;
    for row in rows.iter().rev() {
        if row.tail <= delta {
            settled_from = Some(row.time);
        } else {
            break;
        }
    }
    Ok(PropagationReport {
        trusting_agent: i,
        trusted_agent: j,
        epsilon: eps,
        delta,
        rows,
        settled_from,
    })
}

/// Exact moments of the weighted opinion `S[n] = psi . Y[n]`, one entry
/// per step from 0 through the configured horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactMoments {
    /// `E[S[n]]`.
    pub mean: Vec<f64>,
    /// `Var(S[n])`.
    pub variance: Vec<f64>,
}

/// Propagates the exact mean and covariance of the opinion vector
/// through the random-actions dynamics, with no sampling involved.
///
/// Conditioned on `X[n]`, actions are independent Bernoulli draws, so
/// both moments obey closed linear recursions. With `m = E[X]`,
/// `C = Cov(X)`, and `a` the step size:
///
/// ```text
///     m' = ((1-a) I + a T) m
///     C' = (1-a)^2 C + a(1-a)(T C + (T C)^T) + a^2 T G T^T
/// ```
///
/// where `G` equals `C` off the diagonal and `m_k (1 - m_k)` on it —
/// the second moment of the actions minus `m m^T`, first-order on the
/// diagonal because `A_k^2 = A_k`. Propagating the covariance rather
/// than the raw second moment keeps a deterministic start at variance
/// exactly 0 instead of the cancellation noise of `E[S^2] - E[S]^2`.
///
/// The returned series are exact up to floating-point rounding, so they
/// give the reference curve — and the true standard error — for any
/// ensemble estimate of `S[n]`, including late times where almost no
/// trial still fires an action and sample variances collapse below the
/// truth.
pub fn exact_weighted_moments(config: &RaConfig, psi: &[f64]) -> Result<ExactMoments> {
    let t = config.trust().weights();
    let k = t.size();
    if psi.len() + 1 != k {
        return Err(Error::DimensionMismatch {
            expected: k - 1,
            actual: psi.len(),
        });
    }
    let alpha = config.alpha();
    let mut psi_full = vec![0.0; k];
    psi_full[1..].copy_from_slice(psi);

    let mut m: Vec<f64> = config.initial().values().to_vec();
    let mut cov = Matrix::zero(k);

    let steps = config.horizon() + 1;
    let mut mean = Vec::with_capacity(steps);
    let mut variance = Vec::with_capacity(steps);
    for _ in 0..steps {
        mean.push(dot(&psi_full, &m));
        variance.push(dot(&psi_full, &cov.matvec(&psi_full)).max(0.0));

        let mut actions = cov.clone();
        for (i, &mi) in m.iter().enumerate() {
            actions.set(i, i, mi * (1.0 - mi));
        }
        let tc = t.mul(&cov);
        let sandwich = t.mul(&actions).mul(&t.transpose());
        let mut next = Matrix::zero(k);
        for i in 0..k {
            for j in 0..k {
                let v = (1.0 - alpha) * (1.0 - alpha) * cov.get(i, j)
                    + alpha * (1.0 - alpha) * (tc.get(i, j) + tc.get(j, i))
                    + alpha * alpha * sandwich.get(i, j);
                next.set(i, j, v);
            }
        }
        // Keep the covariance symmetric against rounding drift.
        for i in 0..k {
            for j in 0..i {
                let v = 0.5 * (next.get(i, j) + next.get(j, i));
                next.set(i, j, v);
                next.set(j, i, v);
            }
        }
        cov = next;
        m = m
            .iter()
            .zip(t.matvec(&m))
            .map(|(&mi, ti)| (1.0 - alpha) * mi + alpha * ti)
            .collect();
    }
    Ok(ExactMoments { mean, variance })
}

/// Comparison of the ensemble mean of `S[n]` against the exact
/// geometric decay `c^n S[0]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanDecayReport {
    pub times: Vec<usize>,
    pub empirical: Vec<f64>,
    pub predicted: Vec<f64>,
    pub standard_error: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
}

/// Checks the total-expectation consequence of the conditional mean
/// identity: `E[S[n]] = c^n S[0]` exactly, so the ensemble mean must
/// track the geometric curve within statistical error at every
/// recorded time.
///
/// The summary must have been reduced with Perron weights attached, and
/// `config` must be the configuration the ensemble ran under. Standard
/// errors come from the exact moment recursion rather than the sample
/// variance: at late times the distribution of `S[n]` is dominated by
/// rare action firings, so a finite sample that happens to contain none
/// underestimates its own spread by orders of magnitude and would turn
/// a vanishing absolute deviation into an astronomical z-score.
pub fn verify_mean_decay(
    config: &RaConfig,
    summary: &EnsembleSummary,
    c: f64,
) -> Result<MeanDecayReport> {
    let stats = summary.weighted().ok_or_else(|| {
        Error::HypothesisViolated(
            "ensemble was reduced without Perron weights, so S[n] statistics are \
             unavailable"
                .into(),
        )
    })?;
    let exact = exact_weighted_moments(config, &stats.psi)?;
    let times = summary.times().to_vec();
    let s0 = stats.mean[0];
    let n = summary.trials() as f64;
    let mut empirical = Vec::with_capacity(times.len());
    let mut predicted = Vec::with_capacity(times.len());
    let mut standard_error = Vec::with_capacity(times.len());
    let mut z_scores = Vec::with_capacity(times.len());
    for (idx, &step) in times.iter().enumerate() {
        let pred = c.powi(step as i32) * s0;
        let se = (exact.variance[step] / n).sqrt();
        let z = z_score(stats.mean[idx] - pred, se);
        empirical.push(stats.mean[idx]);
        predicted.push(pred);
        standard_error.push(se);
        z_scores.push(z);
    }
    let max_abs_z = z_scores.iter().fold(0.0_f64, |acc, &z| acc.max(z.abs()));
    Ok(MeanDecayReport {
        times,
        empirical,
        predicted,
        standard_error,
        z_scores,
        max_abs_z,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ra_run, run_trials, RaConfig};
    use crate::network::{partition_stubborn, TrustMatrix};
    use crate::spectral::{spectral_radius, DEFAULT_MAX_ITER};
    use approx::assert_abs_diff_eq;

    fn chain() -> TrustMatrix {
        TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    fn two_agent(alpha: f64) -> RaConfig {
        let trust = TrustMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let initial = OpinionState::from_parts(0.0, &[0.5]).unwrap();
        RaConfig::new(alpha, trust, initial, 1).unwrap()
    }

    #[test]
    fn martingale_of_zero_trajectory_is_zero() {
        let trust = chain();
        let initial = OpinionState::from_parts(0.0, &[0.0, 0.0]).unwrap();
        let config = RaConfig::new(0.5, trust, initial, 10).unwrap();
        let traj = ra_run(&config, 1);
        let series = martingale_series(&traj, &[0.6, 0.4]).unwrap();
        assert!(series.values.iter().all(|&s| s == 0.0));
        assert!(series.differences.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn martingale_with_scalar_psi_is_the_opinion_itself() {
        let config = two_agent(0.5);
        let traj = ra_run(&config, 3);
        let series = martingale_series(&traj, &[1.0]).unwrap();
        for (s, state) in series.values.iter().zip(&traj.states) {
            assert_eq!(*s, state.values()[1]);
        }
    }

    #[test]
    fn martingale_normalization_gives_one_at_all_ones() {
        let trust = chain();
        let initial = OpinionState::from_parts(0.0, &[1.0, 1.0]).unwrap();
        let config = RaConfig::new(0.5, trust, initial, 0).unwrap();
        let traj = ra_run(&config, 1);
        let psi = [0.5857864376269049, 0.4142135623730951];
        let series = martingale_series(&traj, &psi).unwrap();
        assert_abs_diff_eq!(series.values[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn martingale_rejects_wrong_psi_length() {
        let config = two_agent(0.5);
        let traj = ra_run(&config, 3);
        assert!(matches!(
            martingale_series(&traj, &[0.5, 0.5]).unwrap_err(),
            Error::DimensionMismatch { expected: 1, actual: 2 }
        ));
    }

    #[test]
    fn mean_factor_examples() {
        assert_eq!(conditional_mean_factor(0.5, 0.5).unwrap(), 0.75);
        assert_abs_diff_eq!(
            conditional_mean_factor(0.5, 0.5_f64.sqrt()).unwrap(),
            0.8535533905932737,
            epsilon = 1e-16
        );
        assert!(conditional_mean_factor(0.5, 1.0).is_err());
        assert!(conditional_mean_factor(0.0, 0.5).is_err());
        assert!(conditional_mean_factor(1.0, 0.5).is_err());
    }

    #[test]
    fn variance_analytic_examples() {
        // Degenerate states carry no randomness.
        assert_eq!(conditional_variance_analytic(&[0.0, 1.0], &[0.5, 0.5], 0.5, 0.7), 0.0);
        // K=2: 0.25 * 0.25 * 1 * 0.25.
        assert_eq!(conditional_variance_analytic(&[0.5], &[1.0], 0.5, 0.5), 0.015625);
        // K=3 with the chain's Perron data.
        let psi = [0.5857864376269049, 0.4142135623730951];
        let v = conditional_variance_analytic(&[0.5, 0.5], &psi, 0.5, 0.5_f64.sqrt());
        assert_abs_diff_eq!(v, 0.125 * (psi[0] * psi[0] + psi[1] * psi[1]) * 0.25, epsilon = 1e-16);
    }

    #[test]
    fn enumeration_matches_closed_forms_on_chain() {
        let trust = chain();
        let p = partition_stubborn(&trust).unwrap();
        let perron = spectral_radius(p.interior(), 1e-14, DEFAULT_MAX_ITER).unwrap();
        let alpha = 0.5;
        let y = [0.3, 0.8];
        let s0 = dot(&perron.left_vector, &y);

        let (mean, var) = enumerate_conditional_moments(&p, alpha, &y, &perron.left_vector);
        let c = conditional_mean_factor(alpha, perron.radius).unwrap();
        assert_abs_diff_eq!(mean, c * s0, epsilon = 1e-13);
        let analytic_var =
            conditional_variance_analytic(&y, &perron.left_vector, alpha, perron.radius);
        assert_abs_diff_eq!(var, analytic_var, epsilon = 1e-13);
    }

    #[test]
    fn exact_mean_follows_the_geometric_curve() {
        // The recursion E[X'] = ((1-a)I + aT) E[X] must reproduce the
        // spectral shortcut E[S[n]] = c^n S[0] when psi is the Perron
        // vector — two routes to the same number.
        let trust = chain();
        let p = partition_stubborn(&trust).unwrap();
        let perron = spectral_radius(p.interior(), 1e-14, DEFAULT_MAX_ITER).unwrap();
        let alpha = 0.5;
        let c = conditional_mean_factor(alpha, perron.radius).unwrap();
        let initial = OpinionState::from_parts(0.0, &[0.3, 0.8]).unwrap();
        let s0 = dot(&perron.left_vector, initial.ordinary());
        let config = RaConfig::new(alpha, trust, initial.clone(), 60).unwrap();
        let exact = exact_weighted_moments(&config, &perron.left_vector).unwrap();
        for (n, &mean) in exact.mean.iter().enumerate() {
            assert_abs_diff_eq!(mean, c.powi(n as i32) * s0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_variance_after_one_step_is_the_conditional_variance() {
        // A deterministic start makes Var(S[1]) exactly the conditional
        // variance of the first increment.
        let trust = chain();
        let p = partition_stubborn(&trust).unwrap();
        let perron = spectral_radius(p.interior(), 1e-14, DEFAULT_MAX_ITER).unwrap();
        let alpha = 0.5;
        let y = [0.3, 0.8];
        let initial = OpinionState::from_parts(0.0, &y).unwrap();
        let config = RaConfig::new(alpha, trust, initial, 1).unwrap();
        let exact = exact_weighted_moments(&config, &perron.left_vector).unwrap();
        assert_eq!(exact.variance[0], 0.0);
        let analytic =
            conditional_variance_analytic(&y, &perron.left_vector, alpha, perron.radius);
        assert_abs_diff_eq!(exact.variance[1], analytic, epsilon = 1e-15);
    }

    #[test]
    fn exact_moments_match_a_hand_rolled_scalar_recursion() {
        // K=2 with alpha = 1/2 collapses to X' = X/2 + A/4, A ~ Bern(X),
        // so m' = 3m/4 and Var' = Var/2 + m(1-m)/16. Every coefficient
        // is dyadic, so the matrix recursion must land on the same
        // floats exactly.
        let config = two_agent(0.5);
        let config = RaConfig::new(
            0.5,
            config.trust().clone(),
            config.initial().clone(),
            20,
        )
        .unwrap();
        let exact = exact_weighted_moments(&config, &[1.0]).unwrap();
        let mut m = 0.5_f64;
        let mut var = 0.0_f64;
        for n in 0..=20 {
            assert_eq!(exact.mean[n], m, "mean at step {n}");
            assert_eq!(exact.variance[n], var, "variance at step {n}");
            var = 0.5 * var + (m * (1.0 - m)) / 16.0;
            m *= 0.75;
        }
    }

    #[test]
    fn exact_moments_reject_wrong_psi_length() {
        let config = two_agent(0.5);
        assert!(matches!(
            exact_weighted_moments(&config, &[0.5, 0.5]).unwrap_err(),
            Error::DimensionMismatch { expected: 1, actual: 2 }
        ));
    }

    #[test]
    fn mean_decay_z_scores_stay_small_on_the_chain() {
        let trust = chain();
        let p = partition_stubborn(&trust).unwrap();
        let perron = spectral_radius(p.interior(), 1e-14, DEFAULT_MAX_ITER).unwrap();
        let alpha = 0.5;
        let c = conditional_mean_factor(alpha, perron.radius).unwrap();
        let initial = OpinionState::from_parts(0.0, &[0.3, 0.8]).unwrap();
        let config = RaConfig::new(alpha, trust, initial, 40).unwrap();
        let options = crate::ensemble::EnsembleOptions::default()
            .with_psi(perron.left_vector.clone());
        let summary = crate::ensemble::run_ensemble(&config, 4000, 17, &options).unwrap();
        let report = verify_mean_decay(&config, &summary, c).unwrap();
        assert_eq!(report.z_scores[0], 0.0);
        assert!(
            report.max_abs_z <= 4.0,
            "max |z| = {} should be statistical noise",
            report.max_abs_z
        );
    }

    #[test]
    fn verify_mean_zero_state_reports_zero_z() {
        let config = two_agent(0.5);
        let report = verify_conditional_mean(&config, &[0.0], &[1.0], 0.5, 100, 1).unwrap();
        assert_eq!(report.analytic, 0.0);
        assert_eq!(report.empirical, 0.0);
        assert_eq!(report.z_score, 0.0);
    }

    #[test]
    fn verify_mean_degenerate_all_ones_is_exact() {
        // y = (1): the single action is surely 1, so S' = 0.5*1 + 0.5*0.5
        // = 0.75 in every sample; the empirical mean is exact and the
        // z-score 0.
        let trust = TrustMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let initial = OpinionState::from_parts(0.0, &[1.0]).unwrap();
        let config = RaConfig::new(0.5, trust, initial, 1).unwrap();
        let report = verify_conditional_mean(&config, &[1.0], &[1.0], 0.5, 1000, 9).unwrap();
        assert_eq!(report.empirical, 0.75);
        assert_eq!(report.analytic, 0.75);
        assert_eq!(report.standard_error, 0.0);
        assert_eq!(report.z_score, 0.0);
    }

    #[test]
    fn verify_variance_degenerate_state_is_exactly_zero() {
        let trust = chain();
        let initial = OpinionState::from_parts(0.0, &[0.0, 0.0]).unwrap();
        let config = RaConfig::new(0.5, trust, initial, 1).unwrap();
        let psi = [0.5857864376269049, 0.4142135623730951];
        let report =
            verify_conditional_variance(&config, &[1.0, 1.0], &psi, 0.5_f64.sqrt(), 5000, 4)
                .unwrap();
        assert_eq!(report.empirical, 0.0, "identical samples must give exactly 0");
        assert_eq!(report.analytic, 0.0);
        assert_eq!(report.z_score, 0.0);
    }

    #[test]
    fn verify_mean_and_variance_statistically_on_chain() {
        let trust = chain();
        let p = partition_stubborn(&trust).unwrap();
        let perron = spectral_radius(p.interior(), 1e-14, DEFAULT_MAX_ITER).unwrap();
        let initial = OpinionState::from_parts(0.0, &[0.3, 0.8]).unwrap();
        let config = RaConfig::new(0.5, trust, initial, 1).unwrap();

        let mean_check = verify_conditional_mean(
            &config,
            &[0.3, 0.8],
            &perron.left_vector,
            perron.radius,
            100_000,
            42,
        )
        .unwrap();
        assert!(
            mean_check.z_score.abs() <= 4.0,
            "mean z = {}",
            mean_check.z_score
        );

        let var_check = verify_conditional_variance(
            &config,
            &[0.3, 0.8],
            &perron.left_vector,
            perron.radius,
            100_000,
            43,
        )
        .unwrap();
        assert!(
            var_check.z_score.abs() <= 4.0,
            "variance z = {}",
            var_check.z_score
        );
    }

    #[test]
    fn moments_merge_matches_sequential_push() {
        let values: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
        let mut whole = Moments::default();
        for &v in &values {
            whole.push(v);
        }
        let mut left = Moments::default();
        let mut right = Moments::default();
        for &v in &values[..300] {
            left.push(v);
        }
        for &v in &values[300..] {
            right.push(v);
        }
        let merged = left.merge(right);
        assert_eq!(merged.count, whole.count);
        assert_abs_diff_eq!(merged.mean, whole.mean, epsilon = 1e-13);
        assert_abs_diff_eq!(merged.m2, whole.m2, epsilon = 1e-9);
        assert_abs_diff_eq!(merged.m4, whole.m4, epsilon = 1e-9);
    }

    #[test]
    fn polarization_of_constant_half_is_one_sixteenth() {
        let trust = chain();
        let initial = OpinionState::from_parts(0.0, &[0.5, 0.5]).unwrap();
        let config = RaConfig::new(0.5, trust, initial, 0).unwrap();
        let trials = run_trials(&config, 10, 5);
        let series = polarization_series(&trials, 1);
        assert_eq!(series, vec![0.0625]);
        // The stubborn agent's polarization is identically zero.
        assert_eq!(polarization_series(&trials, 0), vec![0.0]);
    }

    #[test]
    fn middle_mass_examples() {
        let trust = chain();
        let zero = OpinionState::from_parts(0.0, &[0.0, 0.0]).unwrap();
        let config = RaConfig::new(0.5, trust.clone(), zero, 3).unwrap();
        let trials = run_trials(&config, 8, 2);
        assert_eq!(middle_mass(&trials, 1, 3, 0.05), 0.0);

        let half = OpinionState::from_parts(0.0, &[0.5, 0.5]).unwrap();
        let config = RaConfig::new(0.5, trust, half, 0).unwrap();
        let trials = run_trials(&config, 8, 2);
        assert_eq!(middle_mass(&trials, 1, 0, 0.1), 1.0);
    }

    #[test]
    fn herding_probability_examples() {
        let trust = chain();
        let zero = OpinionState::from_parts(0.0, &[0.0, 0.0]).unwrap();
        let config = RaConfig::new(0.5, trust.clone(), zero, 2).unwrap();
        let trials = run_trials(&config, 5, 1);
        assert_eq!(herding_probability(&trials, 2, 0.05), vec![0.0, 0.0]);
        assert_eq!(upper_herding_probability(&trials, 2, 0.05), vec![1.0, 1.0]);

        let half = OpinionState::from_parts(0.0, &[0.5, 0.5]).unwrap();
        let config = RaConfig::new(0.5, trust, half, 0).unwrap();
        let trials = run_trials(&config, 5, 1);
        assert_eq!(herding_probability(&trials, 0, 0.1), vec![1.0, 1.0]);
    }

    #[test]
    fn layers_of_the_chain() {
        let layers = layer_decomposition(&chain()).unwrap();
        assert_eq!(layers.layers(), &[vec![1], vec![2]]);
        assert_eq!(layers.depth(), 1);
        assert_eq!(layers.layer_of(2), Some(1));
    }

    #[test]
    fn layers_report_unreachable_agents() {
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(
            layer_decomposition(&t).unwrap_err(),
            Error::IncompleteCoverage(vec![1, 2])
        );
    }

    #[test]
    fn star_collapses_to_single_layer() {
        let t = TrustMatrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.25, 0.25],
            vec![0.5, 0.25, 0.0, 0.25],
            vec![0.5, 0.25, 0.25, 0.0],
        ])
        .unwrap();
        let layers = layer_decomposition(&t).unwrap();
        assert_eq!(layers.layers(), &[vec![1, 2, 3]]);
        assert_eq!(layers.depth(), 0);
    }

    #[test]
    fn contraction_of_scalar_matrix() {
        let a = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let report = row_sum_contraction(&a, 1).unwrap();
        assert_eq!(report.max_row_sums, vec![0.5]);
        assert_eq!(report.first_strict_power, 1);
    }

    #[test]
    fn contraction_of_two_cycle_with_one_deficient_row() {
        // A = [[0, 0.5], [1, 0]]: row sums (0.5, 1); A^2 = diag(0.5, 0.5).
        let a = Matrix::from_rows(&[vec![0.0, 0.5], vec![1.0, 0.0]]).unwrap();
        let report = row_sum_contraction(&a, 2).unwrap();
        assert_eq!(report.max_row_sums, vec![1.0, 0.5]);
        assert_eq!(report.first_strict_power, 2);
    }

    #[test]
    fn contraction_rejects_stochastic_input() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            row_sum_contraction(&a, 2).unwrap_err(),
            Error::ContractionViolated { power: 2, .. }
        ));
    }

    #[test]
    fn propagation_requires_the_edge() {
        let trust = chain();
        let zero = OpinionState::from_parts(0.0, &[0.0, 0.0]).unwrap();
        let config = RaConfig::new(0.5, trust.clone(), zero, 2).unwrap();
        let trials = run_trials(&config, 4, 3);
        // In the chain, agent 2 places no trust in the stubborn agent.
        assert!(matches!(
            neighbor_propagation_check(&trials, &trust, 2, 0, 0.05, 0.05).unwrap_err(),
            Error::HypothesisViolated(_)
        ));
    }

    #[test]
    fn propagation_on_all_zero_ensemble_settles_immediately() {
        let trust = chain();
        let zero = OpinionState::from_parts(0.0, &[0.0, 0.0]).unwrap();
        let config = RaConfig::new(0.5, trust.clone(), zero, 4).unwrap();
        let trials = run_trials(&config, 4, 3);
        let report = neighbor_propagation_check(&trials, &trust, 2, 1, 0.05, 0.05).unwrap();
        assert_eq!(report.settled_from, Some(0));
        assert!(report.rows.iter().all(|r| r.tail == 0.0 && r.middle == 0.0));
    }
}
