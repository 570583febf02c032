//! Experiment configuration: the JSON document given via `--config`,
//! plus the command-line overrides layered on top of it.
//!
//! Everything that affects an experiment's output lives here (or is
//! derived deterministically from it), because the run manifest embeds
//! the resolved config and must be enough to reproduce the run.

use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Version stamp written into every JSON artifact and the CSV header
/// comments.
pub const FORMAT_VERSION: u32 = 1;

fn default_format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Deterministic averaging: x[n+1] = T x[n].
    Degroot,
    /// Random actions: agents broadcast Bernoulli(x) actions.
    Ra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkFormat {
    /// Text lines "i j w": agent i trusts agent j with weight w (1-based).
    EdgeList,
    /// JSON object {"K": n, "rows": [[...], ...]}.
    MatrixJson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Ring,
    Star,
    Complete,
    RandomIrreducible,
}

/// How many ordinary agents trust the stubborn agent in generated
/// networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StubbornEdgeMode {
    /// Exactly one trusting agent: the weakest hypothesis under which
    /// the consensus limit still holds.
    ExactlyOne,
    /// One or more trusting agents, chosen at random.
    #[default]
    AtLeastOne,
}

impl From<StubbornEdgeMode> for opdyn_core::generate::StubbornEdges {
    fn from(mode: StubbornEdgeMode) -> Self {
        match mode {
            StubbornEdgeMode::ExactlyOne => opdyn_core::generate::StubbornEdges::ExactlyOne,
            StubbornEdgeMode::AtLeastOne => opdyn_core::generate::StubbornEdges::AtLeastOne,
        }
    }
}

/// Recipe for a synthetic network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Total number of agents including the stubborn one.
    pub size: usize,
    /// Trust mass placed on the stubborn agent along selected edges.
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stubborn_edges: StubbornEdgeMode,
    /// Permit star networks whose interior is not irreducible.
    #[serde(default)]
    pub allow_reducible: bool,
}

/// Where the trust matrix comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSource {
    File {
        path: PathBuf,
        /// Inferred from the extension when omitted (.json → matrix-json).
        #[serde(default)]
        format: Option<NetworkFormat>,
        /// Agent count for edge lists whose highest index understates K.
        #[serde(default)]
        size: Option<usize>,
    },
    Generator(GeneratorSpec),
}

/// Starting opinions. `Explicit` covers all K agents in external order
/// (agent 1 = stubborn first); the other variants cover the ordinary
/// agents and take the stubborn value from `stubborn_value`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Explicit { values: Vec<f64> },
    Constant { value: f64 },
    UniformRandom { seed: u64 },
}

/// Numerical tolerances, all defaulted to the library's values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Row sums within this of 1 are renormalized on load.
    pub row: f64,
    /// DeGroot convergence: stop when the step moves less than this.
    pub convergence: f64,
    /// Power-iteration residual target.
    pub eigen: f64,
    /// Residual bound for the consensus-gain linear solve.
    pub solve: f64,
    /// Convergence tolerance for the matrix-power limit.
    pub limit: f64,
    /// Iteration cap shared by the iterative routines.
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            row: opdyn_core::network::DEFAULT_ROW_TOL,
            convergence: opdyn_core::dynamics::DEFAULT_CONV_TOL,
            eigen: opdyn_core::spectral::DEFAULT_EIG_TOL,
            solve: opdyn_core::spectral::DEFAULT_SOLVE_TOL,
            limit: opdyn_core::spectral::DEFAULT_LIMIT_TOL,
            max_iterations: opdyn_core::spectral::DEFAULT_MAX_ITER,
        }
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![opdyn_core::ensemble::DEFAULT_EPSILON]
}

fn default_stride() -> usize {
    1
}

fn default_trajectory_trials() -> usize {
    1
}

/// The complete experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub model: ModelKind,
    pub network: NetworkSource,
    /// Self-weight of the random-actions update; required for `ra`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub initial: InitialSpec,
    /// Stubborn agent's opinion when `initial` covers only ordinary
    /// agents. Must be 0 for the `ra` model.
    #[serde(default)]
    pub stubborn_value: f64,
    /// Number of steps to simulate; required for `ra` (DeGroot runs to
    /// convergence instead).
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Number of independent trials; required for `ra`.
    #[serde(default)]
    pub trials: Option<usize>,
    /// Thresholds for herding / middle-mass statistics.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Record every `record_stride`-th step (the horizon is always
    /// recorded).
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// How many leading trials get a full per-step trajectory CSV.
    #[serde(default = "default_trajectory_trials")]
    pub trajectory_trials: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub base_seed: u64,
    /// Default output directory; `--out` overrides.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub horizon: Option<usize>,
    pub alpha: Option<f64>,
    pub epsilons: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.base_seed = seed;
        }
        if let Some(trials) = o.trials {
            self.trials = Some(trials);
        }
        if let Some(horizon) = o.horizon {
            self.horizon = Some(horizon);
        }
        if let Some(alpha) = o.alpha {
            self.alpha = Some(alpha);
        }
        if !o.epsilons.is_empty() {
            self.epsilons = o.epsilons.clone();
        }
        if let Some(out) = &o.out {
            self.output_dir = Some(out.clone());
        }
    }

    /// Checks the cross-field requirements that serde cannot express.
    /// Range checks on individual values are left to the library, which
    /// rejects them with precise errors.
    pub fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::Config(format!(
                "unsupported format_version {} (this build reads {})",
                self.format_version, FORMAT_VERSION
            )));
        }
        if self.model == ModelKind::Ra {
            if self.alpha.is_none() {
                return Err(CliError::Config("the ra model requires `alpha`".into()));
            }
            if self.horizon.is_none() {
                return Err(CliError::Config("the ra model requires `horizon`".into()));
            }
            match self.trials {
                None => return Err(CliError::Config("the ra model requires `trials`".into())),
                Some(0) => return Err(CliError::Config("`trials` must be at least 1".into())),
                Some(_) => {}
            }
            if self.stubborn_value != 0.0 {
                return Err(CliError::Config(
                    "the ra model requires the stubborn opinion to be 0".into(),
                ));
            }
        }
        if self.record_stride == 0 {
            return Err(CliError::Config("`record_stride` must be at least 1".into()));
        }
        if let Some(trials) = self.trials {
            if self.trajectory_trials > trials {
                return Err(CliError::Config(format!(
                    "`trajectory_trials` ({}) exceeds `trials` ({})",
                    self.trajectory_trials, trials
                )));
            }
        }
        Ok(())
    }

    /// The output directory, after overrides; errors when neither the
    /// config nor `--out` named one.
    pub fn output_dir(&self) -> Result<&PathBuf> {
        self.output_dir
            .as_ref()
            .ok_or_else(|| CliError::Config("no output directory: set `output_dir` or pass --out".into()))
    }
}

/// Loads and structurally validates a config file.
pub fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.clone(), e))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::json(path.clone(), e))?;
    Ok(cfg)
}
