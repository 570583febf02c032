//! The two update rules: deterministic averaging and random actions.
//!
//! Both dynamics keep agent 0 pinned. The deterministic rule is plain
//! DeGroot averaging `x[n+1] = T x[n]`; since row 0 of `T` is
//! `(1, 0, ..., 0)` the pin is automatic, but the step re-imposes it
//! exactly to keep the stubborn opinion free of accumulated roundoff.
//!
//! The random-actions rule replaces each neighbour's opinion with a
//! binary *action* drawn from it:
//!
//! ```text
//!     A_k[n] ~ Bernoulli(X_k[n])          (A_0 fixed at its opinion's value)
//!     X[n+1] = (1 - alpha) X[n] + alpha T A[n]
//! ```
//!
//! so agents see noisy quantized signals and damp them with memory
//! `1 - alpha`. The stubborn agent is studied at opinion 0, hence its
//! action is the constant 0 and is recorded without consuming
//! randomness — trajectories with different trust matrices but the same
//! seed stay comparable.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::exec;
use crate::network::{partition_stubborn, OpinionState, TrustMatrix};
use crate::rng::trial_seed;
use crate::{Error, Result};

/// Default step-to-step tolerance for declaring the DeGroot iteration
/// settled.
pub const DEFAULT_CONV_TOL: f64 = 1e-12;

/// Default iteration ceiling for the DeGroot run.
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

/// Which update rule produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    Degroot,
    RandomActions,
}

/// A fully specified random-actions experiment.
#[derive(Debug, Clone)]
pub struct RaConfig {
    alpha: f64,
    trust: TrustMatrix,
    initial: OpinionState,
    horizon: usize,
    record_actions: bool,
}

impl RaConfig {
    /// Validates an experiment description.
    ///
    /// Requires `alpha` strictly inside `(0, 1)`, a stochastic trust
    /// matrix in stubborn form, an initial state of matching length, and
    /// the stubborn agent starting (hence staying) at opinion 0.
    pub fn new(
        alpha: f64,
        trust: TrustMatrix,
        initial: OpinionState,
        horizon: usize,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::OutOfRange {
                name: "alpha",
                value: alpha,
                range: "(0, 1)",
            });
        }
        // Partitioning validates both stochasticity and stubborn form.
        partition_stubborn(&trust)?;
        if initial.len() != trust.size() {
            return Err(Error::DimensionMismatch {
                expected: trust.size(),
                actual: initial.len(),
            });
        }
        if initial.stubborn() != 0.0 {
            return Err(Error::OutOfRange {
                name: "initial stubborn opinion",
                value: initial.stubborn(),
                range: "exactly 0",
            });
        }
        Ok(RaConfig {
            alpha,
            trust,
            initial,
            horizon,
            record_actions: false,
        })
    }

    /// Also keep the sampled action vectors in the trajectory.
    pub fn with_recorded_actions(mut self) -> Self {
        self.record_actions = true;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn trust(&self) -> &TrustMatrix {
        &self.trust
    }

    pub fn initial(&self) -> &OpinionState {
        &self.initial
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn record_actions(&self) -> bool {
        self.record_actions
    }

    /// Number of agents.
    pub fn size(&self) -> usize {
        self.trust.size()
    }
}

/// One realized path of either dynamic, state at every recorded step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Time indices of the recorded states, always starting at 0.
    pub times: Vec<usize>,
    /// Recorded opinion states, parallel to `times`.
    pub states: Vec<OpinionState>,
    /// Sampled action vectors when recording was requested:
    /// `actions[n]` drives the transition from `times[n]` to the next
    /// step, so it has one entry fewer than `states`.
    pub actions: Option<Vec<Vec<u8>>>,
    /// Seed the path was generated from (0 for deterministic runs).
    pub seed: u64,
    pub model: ModelTag,
}

impl Trajectory {
    /// Number of recorded states.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The last recorded state.
    pub fn last(&self) -> &OpinionState {
        self.states.last().expect("trajectories are never empty")
    }
}

/// One step of deterministic averaging: `x' = T x` with agent 0 pinned.
pub fn degroot_step(trust: &TrustMatrix, state: &OpinionState) -> OpinionState {
    assert_eq!(
        state.len(),
        trust.size(),
        "state length must match the network"
    );
    let mut next = trust.weights().matvec(state.values());
    next[0] = state.stubborn();
    OpinionState::new(next).expect("averaging of in-range opinions stays in range")
}

/// Runs deterministic averaging until consecutive states differ by at
/// most `tol` in the max norm, recording every step.
///
/// Returns [`Error::IterationStalled`] with the final state attached if
/// `max_steps` passes without settling (as happens when the network has
/// structure that keeps oscillating, e.g. a periodic interior with no
/// stubborn influence).
pub fn degroot_run(
    trust: &TrustMatrix,
    initial: OpinionState,
    tol: f64,
    max_steps: usize,
) -> Result<Trajectory> {
    assert_eq!(
        initial.len(),
        trust.size(),
        "state length must match the network"
    );
    let mut states = vec![initial];
    for step in 1..=max_steps {
        let next = degroot_step(trust, states.last().expect("non-empty"));
        let delta = next.max_abs_diff(states.last().expect("non-empty"));
        states.push(next);
        if delta <= tol {
            return Ok(Trajectory {
                times: (0..=step).collect(),
                states,
                actions: None,
                seed: 0,
                model: ModelTag::Degroot,
            });
        }
    }
    let last_state = states.pop().expect("non-empty");
    let delta = last_state.max_abs_diff(states.last().expect("non-empty"));
    Err(Error::IterationStalled {
        iterations: max_steps,
        delta,
        last_state: Box::new(last_state),
    })
}

/// Samples one action per agent: `a_k ~ Bernoulli(x_k)` for ordinary
/// agents, while the stubborn agent's action is fixed at 0 and consumes
/// no randomness.
///
/// Each draw compares one uniform variate in `[0, 1)` against the
/// opinion, so opinions 0 and 1 yield their action surely.
pub fn sample_actions<R: Rng>(state: &OpinionState, rng: &mut R) -> Vec<u8> {
    let mut actions = Vec::with_capacity(state.len());
    actions.push(0);
    for &x in state.ordinary() {
        let u: f64 = rng.random();
        actions.push(u8::from(u < x));
    }
    actions
}

/// One random-actions step from `state` under the sampled `actions`.
pub fn ra_step(config: &RaConfig, state: &OpinionState, actions: &[u8]) -> OpinionState {
    let k = config.size();
    assert_eq!(state.len(), k, "state length must match the network");
    assert_eq!(actions.len(), k, "one action per agent");
    assert_eq!(actions[0], 0, "the stubborn agent's action is always 0");

    let alpha = config.alpha;
    let weights = config.trust.weights();
    let mut next = Vec::with_capacity(k);
    next.push(state.stubborn());
    for i in 1..k {
        let row = weights.row(i);
        let observed: f64 = row
            .iter()
            .zip(actions)
            .filter(|(_, &a)| a == 1)
            .map(|(&w, _)| w)
            .sum();
        next.push((1.0 - alpha) * state.values()[i] + alpha * observed);
    }
    OpinionState::new(next).expect("a convex combination of in-range values stays in range")
}

/// Visits every state of one random-actions path in order, without
/// storing the whole trajectory. The callback receives `(step, state,
/// actions_into_this_state)`; actions are `None` at step 0.
pub(crate) fn ra_visit<F>(config: &RaConfig, seed: u64, mut visit: F)
where
    F: FnMut(usize, &OpinionState, Option<&[u8]>),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = config.initial.clone();
    visit(0, &state, None);
    for step in 1..=config.horizon {
        let actions = sample_actions(&state, &mut rng);
        state = ra_step(config, &state, &actions);
        visit(step, &state, Some(&actions));
    }
}

/// Runs one random-actions path from the given seed, recording every step.
pub fn ra_run(config: &RaConfig, seed: u64) -> Trajectory {
    let mut states = Vec::with_capacity(config.horizon + 1);
    let mut actions: Option<Vec<Vec<u8>>> = config.record_actions.then(Vec::new);
    ra_visit(config, seed, |_, state, acts| {
        states.push(state.clone());
        if let (Some(store), Some(a)) = (actions.as_mut(), acts) {
            store.push(a.to_vec());
        }
    });
    Trajectory {
        times: (0..=config.horizon).collect(),
        states,
        actions,
        seed,
        model: ModelTag::RandomActions,
    }
}

/// Runs `trials` independent paths with per-trial seeds derived from
/// `base_seed`, in parallel when the `parallel` feature is enabled.
///
/// Trial `i` is seeded with [`trial_seed`]`(base_seed, i)`, so the
/// result is a pure function of its arguments: thread count, chunking,
/// and feature selection cannot change a single bit of it.
pub fn run_trials(config: &RaConfig, trials: usize, base_seed: u64) -> Vec<Trajectory> {
    let chunks = exec::chunk_count(trials);
    let per_chunk = exec::map_chunks(chunks, true, |c| {
        exec::chunk_range(c, trials)
            .map(|i| ra_run(config, trial_seed(base_seed, i as u64)))
            .collect::<Vec<_>>()
    });
    per_chunk.into_iter().flatten().collect()
}
