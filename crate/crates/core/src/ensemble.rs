//! Monte Carlo ensembles of random-actions runs, reduced to per-time
//! statistics.
//!
//! [`run_ensemble`] executes many independent trials and aggregates them
//! into an [`EnsembleSummary`] without retaining the trajectories, so
//! trial counts are bounded by time, not memory. The reduction is
//! deterministic: trials are processed in fixed chunks, each chunk folds
//! its own accumulator sequentially, and chunk accumulators are merged
//! in index order — floating-point results are therefore bit-identical
//! whatever the thread count, and [`run_ensemble_sequential`] produces
//! exactly the same summary as the parallel path.

use serde::Serialize;

use crate::dynamics::{ra_visit, RaConfig};
use crate::exec;
use crate::network::OpinionState;
use crate::rng::trial_seed;
use crate::{Error, Result};

/// Default event threshold for tail and middle-mass statistics.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// What to track while reducing an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    /// Thresholds for tail and middle-mass estimates; each must lie in
    /// `(0, 0.5)` so the "middle" band is non-degenerate.
    pub epsilons: Vec<f64>,
    /// Perron weights of the interior block; when given, the weighted
    /// opinion `S[n] = psi . Y[n]` and its increments are tracked too.
    pub psi: Option<Vec<f64>>,
    /// Record every `stride`-th step (plus the final one). 1 keeps all.
    pub stride: usize,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            epsilons: vec![DEFAULT_EPSILON],
            psi: None,
            stride: 1,
        }
    }
}

impl EnsembleOptions {
    pub fn with_psi(mut self, psi: Vec<f64>) -> Self {
        self.psi = Some(psi);
        self
    }

    pub fn with_epsilons(mut self, epsilons: Vec<f64>) -> Self {
        self.epsilons = epsilons;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

/// Moments of the weighted opinion `S[n] = psi . Y[n]` across trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedOpinionStats {
    /// The weight vector the statistics were computed with.
    pub psi: Vec<f64>,
    /// Mean of `S` at each recorded time.
    pub mean: Vec<f64>,
    /// Sample variance of `S` at each recorded time (0 when trials = 1).
    pub variance: Vec<f64>,
    /// Mean increment of `S` between consecutive recorded times
    /// (one entry fewer than `mean`).
    pub diff_mean: Vec<f64>,
    /// Sample variance of those increments.
    pub diff_variance: Vec<f64>,
}

/// Per-agent, per-time statistics over an ensemble of trials.
///
/// Indexing convention: `times[t]` is the step a row refers to, agents
/// are `0..agents` with agent 0 stubborn, and threshold-dependent
/// statistics carry one slice per tracked epsilon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    trials: usize,
    agents: usize,
    times: Vec<usize>,
    epsilons: Vec<f64>,
    base_seed: u64,
    /// `mean[t][k]`: average opinion of agent `k` at `times[t]`.
    mean: Vec<Vec<f64>>,
    /// `polarization[t][k]`: average of `(x(1-x))^2`.
    polarization: Vec<Vec<f64>>,
    /// `tail_above[e][t][k]`: fraction of trials with `x > eps`.
    tail_above: Vec<Vec<Vec<f64>>>,
    /// `tail_below_upper[e][t][k]`: fraction with `x < 1 - eps`.
    tail_below_upper: Vec<Vec<Vec<f64>>>,
    /// `middle[e][t][k]`: fraction with `eps < x < 1 - eps`.
    middle: Vec<Vec<Vec<f64>>>,
    weighted: Option<WeightedOpinionStats>,
}

impl EnsembleSummary {
    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Number of agents, including the stubborn one.
    pub fn agents(&self) -> usize {
        self.agents
    }

    /// Recorded time steps, in increasing order.
    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Statistics of `S[n]`, present when the options carried `psi`.
    pub fn weighted(&self) -> Option<&WeightedOpinionStats> {
        self.weighted.as_ref()
    }

    fn time_index(&self, n: usize) -> Result<usize> {
        self.times.binary_search(&n).map_err(|_| Error::OutOfRange {
            name: "time step",
            value: n as f64,
            range: "the recorded steps of this ensemble",
        })
    }

    fn eps_index(&self, eps: f64) -> Result<usize> {
        self.epsilons
            .iter()
            .position(|&e| (e - eps).abs() <= 1e-15)
            .ok_or(Error::EpsilonNotTracked(eps))
    }

    /// Mean opinion of agent `k` at step `n`.
    pub fn mean_at(&self, n: usize, k: usize) -> Result<f64> {
        Ok(self.mean[self.time_index(n)?][k])
    }

    /// Mean opinion of agent `k` at every recorded step.
    pub fn mean_series(&self, k: usize) -> Vec<f64> {
        self.mean.iter().map(|row| row[k]).collect()
    }

    /// Average of `(x(1-x))^2` for agent `k` at every recorded step.
    pub fn polarization_series(&self, k: usize) -> Vec<f64> {
        self.polarization.iter().map(|row| row[k]).collect()
    }

    /// Fraction of trials with agent `k` strictly between `eps` and
    /// `1 - eps` at step `n`.
    pub fn middle_mass_at(&self, n: usize, k: usize, eps: f64) -> Result<f64> {
        Ok(self.middle[self.eps_index(eps)?][self.time_index(n)?][k])
    }

    /// Fraction of trials with agent `k` above `eps` at step `n` — the
    /// probability the agent has *not* herded to the stubborn opinion.
    pub fn tail_above_at(&self, n: usize, k: usize, eps: f64) -> Result<f64> {
        Ok(self.tail_above[self.eps_index(eps)?][self.time_index(n)?][k])
    }

    /// Fraction of trials with agent `k` below `1 - eps` at step `n`
    /// (the complementary tail; near 1 under herding to 0).
    pub fn tail_below_upper_at(&self, n: usize, k: usize, eps: f64) -> Result<f64> {
        Ok(self.tail_below_upper[self.eps_index(eps)?][self.time_index(n)?][k])
    }

    /// Fraction of trials with agent `k` within `eps` of the stubborn
    /// opinion 0 at step `n`: the herded fraction, complement of
    /// [`tail_above_at`](Self::tail_above_at).
    pub fn herded_fraction_at(&self, n: usize, k: usize, eps: f64) -> Result<f64> {
        Ok(1.0 - self.tail_above_at(n, k, eps)?)
    }
}

/// The recorded steps for a horizon under a stride: every multiple of
/// `stride`, plus the final step.
fn recorded_times(horizon: usize, stride: usize) -> Vec<usize> {
    let mut times: Vec<usize> = (0..=horizon).step_by(stride).collect();
    if *times.last().expect("range is non-empty") != horizon {
        times.push(horizon);
    }
    times
}

/// Position of step `n` in `recorded_times(horizon, stride)`, if recorded.
fn record_position(n: usize, horizon: usize, stride: usize, count: usize) -> Option<usize> {
    if n.is_multiple_of(stride) {
        Some(n / stride)
    } else if n == horizon {
        Some(count - 1)
    } else {
        None
    }
}

/// Running sums for one chunk of trials. Event counts are integers, so
/// only the `f64` sums care about accumulation order — and that order
/// is fixed by construction.
struct Accumulator {
    sum: Vec<Vec<f64>>,
    polar: Vec<Vec<f64>>,
    above: Vec<Vec<Vec<u64>>>,
    below_upper: Vec<Vec<Vec<u64>>>,
    middle: Vec<Vec<Vec<u64>>>,
    s_sum: Vec<f64>,
    s_sq: Vec<f64>,
    ds_sum: Vec<f64>,
    ds_sq: Vec<f64>,
}

impl Accumulator {
    fn new(times: usize, agents: usize, epsilons: usize, weighted: bool) -> Self {
        let cells = || vec![vec![0.0; agents]; times];
        let counts = || vec![vec![vec![0_u64; agents]; times]; epsilons];
        let series = |len| if weighted { vec![0.0; len] } else { Vec::new() };
        Accumulator {
            sum: cells(),
            polar: cells(),
            above: counts(),
            below_upper: counts(),
            middle: counts(),
            s_sum: series(times),
            s_sq: series(times),
            ds_sum: series(times.saturating_sub(1)),
            ds_sq: series(times.saturating_sub(1)),
        }
    }

    fn record_state(&mut self, t: usize, state: &OpinionState, epsilons: &[f64]) {
        for (k, &x) in state.values().iter().enumerate() {
            self.sum[t][k] += x;
            let p = x * (1.0 - x);
            self.polar[t][k] += p * p;
            for (e, &eps) in epsilons.iter().enumerate() {
                if x > eps {
                    self.above[e][t][k] += 1;
                }
                if x < 1.0 - eps {
                    self.below_upper[e][t][k] += 1;
                }
                if x > eps && x < 1.0 - eps {
                    self.middle[e][t][k] += 1;
                }
            }
        }
    }

    fn record_weighted(&mut self, t: usize, s: f64, prev_s: Option<f64>) {
        self.s_sum[t] += s;
        self.s_sq[t] += s * s;
        if let Some(prev) = prev_s {
            let ds = s - prev;
            self.ds_sum[t - 1] += ds;
            self.ds_sq[t - 1] += ds * ds;
        }
    }

    fn merge(&mut self, other: Accumulator) {
        fn add2(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (va, vb) in ra.iter_mut().zip(rb) {
                    *va += vb;
                }
            }
        }
        fn add3(a: &mut [Vec<Vec<u64>>], b: &[Vec<Vec<u64>>]) {
            for (ea, eb) in a.iter_mut().zip(b) {
                for (ra, rb) in ea.iter_mut().zip(eb) {
                    for (va, vb) in ra.iter_mut().zip(rb) {
                        *va += vb;
                    }
                }
            }
        }
        fn add1(a: &mut [f64], b: &[f64]) {
            for (va, vb) in a.iter_mut().zip(b) {
                *va += vb;
            }
        }
        add2(&mut self.sum, &other.sum);
        add2(&mut self.polar, &other.polar);
        add3(&mut self.above, &other.above);
        add3(&mut self.below_upper, &other.below_upper);
        add3(&mut self.middle, &other.middle);
        add1(&mut self.s_sum, &other.s_sum);
        add1(&mut self.s_sq, &other.s_sq);
        add1(&mut self.ds_sum, &other.ds_sum);
        add1(&mut self.ds_sq, &other.ds_sq);
    }
}

fn validate_options(config: &RaConfig, trials: usize, options: &EnsembleOptions) -> Result<()> {
    if trials < 1 {
        return Err(Error::OutOfRange {
            name: "trials",
            value: trials as f64,
            range: "at least 1",
        });
    }
    if options.stride < 1 {
        return Err(Error::OutOfRange {
            name: "stride",
            value: options.stride as f64,
            range: "at least 1",
        });
    }
    for &eps in &options.epsilons {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::OutOfRange {
                name: "epsilon",
                value: eps,
                range: "(0, 0.5)",
            });
        }
    }
    if let Some(psi) = &options.psi {
        if psi.len() != config.size() - 1 {
            return Err(Error::DimensionMismatch {
                expected: config.size() - 1,
                actual: psi.len(),
            });
        }
    }
    Ok(())
}

fn run_ensemble_impl(
    config: &RaConfig,
    trials: usize,
    base_seed: u64,
    options: &EnsembleOptions,
    parallel: bool,
) -> Result<EnsembleSummary> {
    validate_options(config, trials, options)?;
    let times = recorded_times(config.horizon(), options.stride);
    let t_count = times.len();
    let agents = config.size();
    let eps = options.epsilons.clone();
    let psi = options.psi.clone();
    let stride = options.stride;
    let horizon = config.horizon();

    let chunks = exec::chunk_count(trials);
    let per_chunk = exec::map_chunks(chunks, parallel, |c| {
        let mut acc = Accumulator::new(t_count, agents, eps.len(), psi.is_some());
        for trial in exec::chunk_range(c, trials) {
            let mut prev_s: Option<f64> = None;
            ra_visit(config, trial_seed(base_seed, trial as u64), |step, state, _| {
                let Some(t) = record_position(step, horizon, stride, t_count) else {
                    return;
                };
                acc.record_state(t, state, &eps);
                if let Some(psi) = &psi {
                    let s: f64 = psi
                        .iter()
                        .zip(state.ordinary())
                        .map(|(&w, &y)| w * y)
                        .sum();
                    acc.record_weighted(t, s, prev_s);
                    prev_s = Some(s);
                }
            });
        }
        acc
    });

    let mut total = Accumulator::new(t_count, agents, eps.len(), psi.is_some());
    for acc in per_chunk {
        total.merge(acc);
    }
    Ok(finalize(total, trials, agents, times, eps, psi, base_seed))
}

fn finalize(
    acc: Accumulator,
    trials: usize,
    agents: usize,
    times: Vec<usize>,
    epsilons: Vec<f64>,
    psi: Option<Vec<f64>>,
    base_seed: u64,
) -> EnsembleSummary {
    let n = trials as f64;
    let cell_mean =
        |cells: &[Vec<f64>]| -> Vec<Vec<f64>> {
            cells
                .iter()
                .map(|row| row.iter().map(|&v| v / n).collect())
                .collect()
        };
    let count_frac = |counts: &[Vec<Vec<u64>>]| -> Vec<Vec<Vec<f64>>> {
        counts
            .iter()
            .map(|e| {
                e.iter()
                    .map(|row| row.iter().map(|&c| c as f64 / n).collect())
                    .collect()
            })
            .collect()
    };
    // Sample variance from raw sums; single-trial ensembles report 0.
    let variance = |sum: &[f64], sq: &[f64]| -> Vec<f64> {
        sum.iter()
            .zip(sq)
            .map(|(&s, &ss)| {
                if trials < 2 {
                    0.0
                } else {
                    let mean = s / n;
                    ((ss - n * mean * mean) / (n - 1.0)).max(0.0)
                }
            })
            .collect()
    };

    let weighted = psi.map(|psi| WeightedOpinionStats {
        mean: acc.s_sum.iter().map(|&s| s / n).collect(),
        variance: variance(&acc.s_sum, &acc.s_sq),
        diff_mean: acc.ds_sum.iter().map(|&s| s / n).collect(),
        diff_variance: variance(&acc.ds_sum, &acc.ds_sq),
        psi,
    });

    EnsembleSummary {
        trials,
        agents,
        times,
        epsilons,
        base_seed,
        mean: cell_mean(&acc.sum),
        polarization: cell_mean(&acc.polar),
        tail_above: count_frac(&acc.above),
        tail_below_upper: count_frac(&acc.below_upper),
        middle: count_frac(&acc.middle),
        weighted,
    }
}

/// Reduces `trials` independent runs (seeded per trial from `base_seed`)
/// to an [`EnsembleSummary`], in parallel when the `parallel` feature is
/// enabled.
pub fn run_ensemble(
    config: &RaConfig,
    trials: usize,
    base_seed: u64,
    options: &EnsembleOptions,
) -> Result<EnsembleSummary> {
    run_ensemble_impl(config, trials, base_seed, options, true)
}

/// Identical to [`run_ensemble`] but always single-threaded; exists so
/// callers (and benchmarks) can compare the two paths. The outputs are
/// bit-identical by construction.
pub fn run_ensemble_sequential(
    config: &RaConfig,
    trials: usize,
    base_seed: u64,
    options: &EnsembleOptions,
) -> Result<EnsembleSummary> {
    run_ensemble_impl(config, trials, base_seed, options, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ra_run, run_trials};
    use crate::network::{OpinionState, TrustMatrix};
    use approx::assert_abs_diff_eq;

    fn two_agent_config(y0: f64, horizon: usize) -> RaConfig {
        let trust = TrustMatrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let initial = OpinionState::from_parts(0.0, &[y0]).unwrap();
        RaConfig::new(0.5, trust, initial, horizon).unwrap()
    }

    #[test]
    fn rejects_zero_trials_and_bad_epsilon() {
        let config = two_agent_config(0.5, 5);
        let err = run_ensemble(&config, 0, 1, &EnsembleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { name: "trials", .. }));

        let opts = EnsembleOptions::default().with_epsilons(vec![0.7]);
        let err = run_ensemble(&config, 10, 1, &opts).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { name: "epsilon", .. }));
    }

    #[test]
    fn single_trial_summary_equals_trajectory_statistics() {
        let config = two_agent_config(0.5, 20);
        let summary = run_ensemble(&config, 1, 99, &EnsembleOptions::default()).unwrap();
        let traj = ra_run(&config, crate::rng::trial_seed(99, 0));
        for (t, state) in traj.states.iter().enumerate() {
            assert_eq!(summary.mean_at(t, 1).unwrap(), state.values()[1]);
        }
    }

    #[test]
    fn all_zero_start_is_fully_herded() {
        let config = two_agent_config(0.0, 10);
        let summary = run_ensemble(&config, 50, 7, &EnsembleOptions::default()).unwrap();
        for &n in summary.times() {
            assert_eq!(summary.herded_fraction_at(n, 1, DEFAULT_EPSILON).unwrap(), 1.0);
            assert_eq!(summary.middle_mass_at(n, 1, DEFAULT_EPSILON).unwrap(), 0.0);
            assert_eq!(summary.mean_at(n, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn mean_decays_geometrically_for_two_agents() {
        // K=2: lambda = 0.5, c = 1 - 0.5(1 - 0.5) = 0.75, and
        // E[Y[n]] = 0.5 * 0.75^n exactly. With 10^4 trials the empirical
        // mean must sit within 3 standard errors everywhere.
        let config = two_agent_config(0.5, 30);
        let opts = EnsembleOptions::default().with_psi(vec![1.0]);
        let summary = run_ensemble(&config, 10_000, 2024, &opts).unwrap();
        let stats = summary.weighted().unwrap();
        for (t, &n) in summary.times().iter().enumerate() {
            let predicted = 0.5 * 0.75_f64.powi(n as i32);
            let se = (stats.variance[t] / summary.trials() as f64).sqrt();
            let slack = 3.0 * se + 1e-12;
            assert!(
                (stats.mean[t] - predicted).abs() <= slack,
                "step {n}: mean {} vs predicted {predicted} (se {se})",
                stats.mean[t]
            );
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let config = two_agent_config(0.5, 25);
        let opts = EnsembleOptions::default()
            .with_psi(vec![1.0])
            .with_epsilons(vec![0.05, 0.1]);
        let par = run_ensemble(&config, 333, 5, &opts).unwrap();
        let seq = run_ensemble_sequential(&config, 333, 5, &opts).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn summary_matches_retained_trajectories() {
        // The streaming reduction must agree exactly with statistics
        // recomputed from full trajectories of the same seeds.
        let config = two_agent_config(0.6, 15);
        let trials = 64;
        let summary = run_ensemble(&config, trials, 11, &EnsembleOptions::default()).unwrap();
        let trajectories = run_trials(&config, trials, 11);
        for n in [0, 7, 15] {
            let xs: Vec<f64> = trajectories
                .iter()
                .map(|tr| tr.states[n].values()[1])
                .collect();
            let mean: f64 = xs.iter().sum::<f64>() / trials as f64;
            let middle = xs
                .iter()
                .filter(|&&x| x > DEFAULT_EPSILON && x < 1.0 - DEFAULT_EPSILON)
                .count() as f64
                / trials as f64;
            assert_abs_diff_eq!(summary.mean_at(n, 1).unwrap(), mean, epsilon = 1e-12);
            assert_abs_diff_eq!(
                summary.middle_mass_at(n, 1, DEFAULT_EPSILON).unwrap(),
                middle,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn stride_records_final_step() {
        let config = two_agent_config(0.5, 10);
        let opts = EnsembleOptions::default().with_stride(4);
        let summary = run_ensemble(&config, 5, 3, &opts).unwrap();
        assert_eq!(summary.times(), &[0, 4, 8, 10]);

        // Strided statistics equal the full-resolution ones at the
        // steps both record.
        let full = run_ensemble(&config, 5, 3, &EnsembleOptions::default()).unwrap();
        for &n in summary.times() {
            assert_eq!(summary.mean_at(n, 1).unwrap(), full.mean_at(n, 1).unwrap());
        }
    }

    #[test]
    fn tail_estimates_partition_consistently() {
        let config = two_agent_config(0.5, 12);
        let summary = run_ensemble(&config, 200, 17, &EnsembleOptions::default()).unwrap();
        for &n in summary.times() {
            for k in 0..summary.agents() {
                let above = summary.tail_above_at(n, k, DEFAULT_EPSILON).unwrap();
                let middle = summary.middle_mass_at(n, k, DEFAULT_EPSILON).unwrap();
                let below_upper = summary.tail_below_upper_at(n, k, DEFAULT_EPSILON).unwrap();
                // P(X > eps) <= P(eps < X < 1-eps) + P(X >= 1-eps)
                assert!(above <= middle + (1.0 - below_upper) + 1e-12);
            }
        }
    }

    #[test]
    fn untracked_epsilon_is_reported() {
        let config = two_agent_config(0.5, 5);
        let summary = run_ensemble(&config, 5, 1, &EnsembleOptions::default()).unwrap();
        assert!(matches!(
            summary.middle_mass_at(0, 1, 0.2).unwrap_err(),
            Error::EpsilonNotTracked(_)
        ));
    }
}
