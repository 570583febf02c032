//! Experiment orchestration: resolve the network and initial state,
//! run the requested model, and emit the four artifacts (trajectory
//! CSVs, ensemble CSV, analysis JSON, manifest JSON).
//!
//! All computation happens before the first byte is written, and the
//! writer removes everything it wrote if a write fails, so an output
//! directory never holds a partial run. Nothing time- or
//! machine-dependent goes into an artifact: rerunning a config with the
//! same seed reproduces every file byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use opdyn_core::analysis::{
    conditional_mean_factor, enumerate_conditional_moments, layer_decomposition,
    verify_conditional_mean, verify_conditional_variance, verify_mean_decay,
    LayerDecomposition, MeanDecayReport, MomentCheck, ENUMERATION_LIMIT,
};
use opdyn_core::dynamics::{degroot_run, ra_run, RaConfig, Trajectory};
use opdyn_core::ensemble::{run_ensemble, EnsembleOptions, EnsembleSummary};
use opdyn_core::network::{
    is_irreducible, partition_stubborn, stubborn_influence_exists, OpinionState,
    StochasticityClass, TrustMatrix,
};
use opdyn_core::rng::trial_seed;
use opdyn_core::spectral::{consensus_gain, spectral_radius, LimitMatrix, PerronData};

use crate::config::{
    ExperimentConfig, GeneratorKind, GeneratorSpec, InitialSpec, ModelKind, NetworkSource,
    FORMAT_VERSION,
};
use crate::error::{CliError, Result};
use crate::formats::{load_network, require_stochastic};

// ---------------------------------------------------------------------
// Network and initial-state resolution

/// Builds the network a [`GeneratorSpec`] describes.
pub fn generate_network(spec: &GeneratorSpec) -> Result<TrustMatrix> {
    let t = match spec.kind {
        GeneratorKind::Ring => opdyn_core::generate::ring(spec.size, spec.beta)?,
        GeneratorKind::Star => {
            opdyn_core::generate::star(spec.size, spec.beta, spec.allow_reducible)?
        }
        GeneratorKind::Complete => opdyn_core::generate::complete(spec.size, spec.beta)?,
        GeneratorKind::RandomIrreducible => opdyn_core::generate::random_irreducible(
            spec.size,
            spec.beta,
            spec.seed,
            spec.stubborn_edges.into(),
        )?,
    };
    Ok(t)
}

/// Resolves a [`NetworkSource`] to a validated, row-stochastic matrix.
pub fn resolve_network(source: &NetworkSource, row_tol: f64) -> Result<TrustMatrix> {
    let t = match source {
        NetworkSource::File { path, format, size } => load_network(path, *format, *size, row_tol)?,
        NetworkSource::Generator(spec) => generate_network(spec)?,
    };
    require_stochastic(&t)?;
    Ok(t)
}

/// Materializes the initial opinions for a network of `k` agents.
pub fn build_initial(cfg: &ExperimentConfig, k: usize) -> Result<OpinionState> {
    match &cfg.initial {
        InitialSpec::Explicit { values } => {
            if values.len() != k {
                return Err(CliError::Config(format!(
                    "explicit initial opinions have {} entries but the network has {} agents",
                    values.len(),
                    k
                )));
            }
            Ok(OpinionState::new(values.clone())?)
        }
        InitialSpec::Constant { value } => {
            Ok(OpinionState::from_parts(cfg.stubborn_value, &vec![*value; k - 1])?)
        }
        InitialSpec::UniformRandom { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let ordinary: Vec<f64> = (0..k - 1).map(|_| rng.random::<f64>()).collect();
            Ok(OpinionState::from_parts(cfg.stubborn_value, &ordinary)?)
        }
    }
}

// ---------------------------------------------------------------------
// Shared analysis of a resolved network

/// Spectral and structural facts about a network, computed once and
/// reused by every command that needs them.
pub struct NetworkAnalysis {
    pub trust: TrustMatrix,
    pub perron: PerronData,
    /// Absent when no ordinary agent trusts the stubborn one.
    pub gain: Option<LimitMatrix>,
    /// Absent when the trust graph leaves some agent unreachable.
    pub layers: Option<LayerDecomposition>,
}

pub fn analyze_network(
    trust: TrustMatrix,
    eig_tol: f64,
    solve_tol: f64,
    max_iter: usize,
) -> Result<NetworkAnalysis> {
    let partition = partition_stubborn(&trust)?;
    let perron = spectral_radius(partition.interior(), eig_tol, max_iter)?;
    let gain = match consensus_gain(&partition, solve_tol) {
        Ok(g) => Some(g),
        Err(opdyn_core::Error::HypothesisViolated(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let layers = match layer_decomposition(&trust) {
        Ok(l) => Some(l),
        Err(opdyn_core::Error::IncompleteCoverage(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(NetworkAnalysis {
        trust,
        perron,
        gain,
        layers,
    })
}

// ---------------------------------------------------------------------
// JSON document shapes

/// Structural facts as reported by `validate` and embedded in analysis
/// documents.
#[derive(Serialize)]
pub struct NetworkReport {
    pub size: usize,
    pub classification: StochasticityClass,
    pub stubborn_form: bool,
    /// Present only for stochastic matrices in stubborn form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interior_irreducible: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stubborn_influence: Option<bool>,
    pub row_sums: Vec<f64>,
}

pub fn network_report(t: &TrustMatrix) -> NetworkReport {
    let stochastic = t.classification() == StochasticityClass::Stochastic;
    let stubborn = t.is_stubborn_form();
    let partition = (stochastic && stubborn)
        .then(|| partition_stubborn(t).expect("stochastic stubborn-form matrices partition"));
    NetworkReport {
        size: t.size(),
        classification: t.classification(),
        stubborn_form: stubborn,
        interior_irreducible: partition.as_ref().map(|p| is_irreducible(p.interior())),
        stubborn_influence: partition.as_ref().map(stubborn_influence_exists),
        row_sums: t.weights().row_sums(),
    }
}

#[derive(Serialize)]
struct SpectralSection {
    /// Interior spectral radius λ.
    lambda: f64,
    /// Left Perron weights; `psi[j]` belongs to external agent `j + 2`.
    psi: Vec<f64>,
    iterations: usize,
    residual: f64,
}

#[derive(Serialize)]
struct DegrootSection {
    /// Steps until the motion fell below the convergence tolerance.
    steps: usize,
    /// Final ordinary opinions, external agents 2..=K.
    limit: Vec<f64>,
    /// Gain-predicted limit, when the gain exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_error: Option<f64>,
}

#[derive(Serialize)]
struct ThresholdStats {
    epsilon: f64,
    /// P(x > ε) per agent (external 1..=K) at the horizon.
    herd_prob: Vec<f64>,
    /// P(x < 1 − ε) per agent at the horizon.
    upper_herd_prob: Vec<f64>,
    /// P(ε < x < 1 − ε) per agent at the horizon.
    middle_mass: Vec<f64>,
}

#[derive(Serialize)]
struct EnsembleSection {
    trials: usize,
    horizon: usize,
    /// Mean opinion per agent (external 1..=K) at the horizon.
    final_mean: Vec<f64>,
    /// Mean of (x(1−x))² per agent at the horizon.
    final_polarization: Vec<f64>,
    thresholds: Vec<ThresholdStats>,
}

#[derive(Serialize)]
struct VerificationSection {
    /// Ensemble mean of S[n] against c^n · S[0].
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_decay: Option<MeanDecayReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditional_mean: Option<MomentCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    conditional_variance: Option<MomentCheck>,
}

#[derive(Serialize)]
struct AnalysisDocument {
    format_version: u32,
    model: ModelKind,
    network: NetworkReport,
    spectral: SpectralSection,
    /// c = 1 − α(1 − λ); absent for the deterministic model.
    #[serde(skip_serializing_if = "Option::is_none")]
    contraction_factor: Option<f64>,
    /// Consensus gain per ordinary agent (external 2..=K).
    #[serde(skip_serializing_if = "Option::is_none")]
    gain: Option<Vec<f64>>,
    /// Trust-distance layers, external 1-based agent indices.
    #[serde(skip_serializing_if = "Option::is_none")]
    layers: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    degroot: Option<DegrootSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble: Option<EnsembleSection>,
    verification: VerificationSection,
    /// Largest |z| across the verification reports, when any ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_z: Option<f64>,
}

#[derive(Serialize)]
struct ResolvedMatrix {
    #[serde(rename = "K")]
    k: usize,
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SeedDerivation {
    base_seed: u64,
    /// Trial `i` is seeded with a SplitMix64 finalizer applied to
    /// `base_seed + (i + 1) · weyl`; the verification samplers use the
    /// indices listed here, disjoint from every trial index.
    scheme: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification_seed_indices: Option<[u64; 2]>,
}

#[derive(Serialize)]
struct ManifestDocument {
    format_version: u32,
    package_version: &'static str,
    config: ExperimentConfig,
    /// The network actually used, in full precision; together with the
    /// config this reproduces the run even if referenced files change.
    network_resolved: ResolvedMatrix,
    /// The materialized initial opinions, external agent order.
    initial_resolved: Vec<f64>,
    seeds: SeedDerivation,
    artifacts: Vec<String>,
}

/// A verification document, as produced by the `verify` subcommand.
#[derive(Serialize)]
pub struct VerificationDocument {
    format_version: u32,
    network: NetworkReport,
    alpha: f64,
    /// The fixed ordinary state being branched from (external 2..=K).
    state: Vec<f64>,
    lambda: f64,
    psi: Vec<f64>,
    contraction_factor: f64,
    samples: usize,
    seed: u64,
    /// Exhaustive check over all 2^(K−1) action profiles, when K−1 is
    /// small enough to enumerate.
    #[serde(skip_serializing_if = "Option::is_none")]
    enumeration: Option<EnumerationCheck>,
    conditional_mean: MomentCheck,
    conditional_variance: MomentCheck,
    pub max_abs_z: f64,
}

#[derive(Serialize)]
pub struct EnumerationCheck {
    mean: f64,
    mean_closed_form: f64,
    mean_abs_error: f64,
    variance: f64,
    variance_closed_form: f64,
    variance_abs_error: f64,
}

// ---------------------------------------------------------------------
// CSV rendering

fn trajectory_csv(traj: &Trajectory, stride: usize) -> String {
    let mut out = format!("# format_version {FORMAT_VERSION}\n");
    let k = traj.states[0].len();
    out.push('n');
    for agent in 1..=k {
        write!(out, ",agent_{agent}").expect("string writes cannot fail");
    }
    out.push('\n');
    let last = traj.times.len() - 1;
    for (idx, (&n, state)) in traj.times.iter().zip(&traj.states).enumerate() {
        if idx % stride != 0 && idx != last {
            continue;
        }
        write!(out, "{n}").expect("string writes cannot fail");
        for &v in state.values() {
            write!(out, ",{v}").expect("string writes cannot fail");
        }
        out.push('\n');
    }
    out
}

fn ensemble_csv(summary: &EnsembleSummary) -> String {
    let mut out = format!("# format_version {FORMAT_VERSION}\n");
    out.push_str("n,k,mean");
    for &eps in summary.epsilons() {
        write!(out, ",middle_mass@{eps},herd_prob@{eps},upper_herd_prob@{eps}")
            .expect("string writes cannot fail");
    }
    out.push('\n');
    for &n in summary.times() {
        for k in 0..summary.agents() {
            let mean = summary.mean_at(n, k).expect("recorded time");
            write!(out, "{n},{},{mean}", k + 1).expect("string writes cannot fail");
            for &eps in summary.epsilons() {
                let middle = summary.middle_mass_at(n, k, eps).expect("tracked eps");
                let herd = summary.tail_above_at(n, k, eps).expect("tracked eps");
                let upper = summary.tail_below_upper_at(n, k, eps).expect("tracked eps");
                write!(out, ",{middle},{herd},{upper}").expect("string writes cannot fail");
            }
            out.push('\n');
        }
    }
    out
}

// ---------------------------------------------------------------------
// Artifact writing

/// Writes artifacts into a directory, tracking them so a failed run
/// leaves nothing behind.
struct ArtifactSink {
    dir: PathBuf,
    written: Vec<PathBuf>,
    names: Vec<String>,
}

impl ArtifactSink {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(ArtifactSink {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            names: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        let outcome = std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e));
        match outcome {
            Ok(()) => {
                self.written.push(path);
                self.names.push(name.to_string());
                Ok(())
            }
            Err(e) => {
                self.discard();
                Err(e)
            }
        }
    }

    fn discard(&mut self) {
        for path in self.written.drain(..) {
            let _ = std::fs::remove_file(path);
        }
        self.names.clear();
    }
}

fn to_json(doc: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("artifact documents serialize");
    text.push('\n');
    text
}

/// External (1-based) rendering of a layer decomposition.
fn external_layers(layers: &LayerDecomposition) -> Vec<Vec<usize>> {
    layers
        .layers()
        .iter()
        .map(|layer| layer.iter().map(|&i| i + 1).collect())
        .collect()
}

// ---------------------------------------------------------------------
// The experiment itself

/// What a finished run reports back to the caller.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub artifacts: Vec<String>,
    /// Largest |z| across verifications, when any ran.
    pub max_abs_z: Option<f64>,
}

/// Runs a checked config end to end and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.check()?;
    let out_dir = cfg.output_dir()?.clone();
    let tol = &cfg.tolerances;
    let trust = resolve_network(&cfg.network, tol.row)?;
    let analysis = analyze_network(trust, tol.eigen, tol.solve, tol.max_iterations)?;
    let initial = build_initial(cfg, analysis.trust.size())?;

    match cfg.model {
        ModelKind::Degroot => run_degroot(cfg, &analysis, initial, &out_dir),
        ModelKind::Ra => run_ra(cfg, &analysis, initial, &out_dir),
    }
}

fn spectral_section(analysis: &NetworkAnalysis) -> SpectralSection {
    SpectralSection {
        lambda: analysis.perron.radius,
        psi: analysis.perron.left_vector.clone(),
        iterations: analysis.perron.iterations,
        residual: analysis.perron.residual,
    }
}

fn manifest(
    cfg: &ExperimentConfig,
    analysis: &NetworkAnalysis,
    initial: &OpinionState,
    verification_indices: Option<[u64; 2]>,
    artifacts: Vec<String>,
) -> ManifestDocument {
    ManifestDocument {
        format_version: FORMAT_VERSION,
        package_version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        network_resolved: ResolvedMatrix {
            k: analysis.trust.size(),
            rows: analysis.trust.weights().to_rows(),
        },
        initial_resolved: initial.values().to_vec(),
        seeds: SeedDerivation {
            base_seed: cfg.base_seed,
            scheme: "splitmix64(base_seed + (index + 1) * 0x9E3779B97F4A7C15)",
            verification_seed_indices: verification_indices,
        },
        artifacts,
    }
}

fn run_degroot(
    cfg: &ExperimentConfig,
    analysis: &NetworkAnalysis,
    initial: OpinionState,
    out_dir: &Path,
) -> Result<RunOutcome> {
    let tol = &cfg.tolerances;
    let traj = degroot_run(&analysis.trust, initial.clone(), tol.convergence, tol.max_iterations)?;
    let last = traj.last();

    let limit: Vec<f64> = last.ordinary().to_vec();
    let predicted: Option<Vec<f64>> = analysis.gain.as_ref().map(|g| {
        g.gain_column
            .iter()
            .map(|&gi| gi * initial.stubborn())
            .collect()
    });
    let max_abs_error = predicted.as_ref().map(|p| {
        p.iter()
            .zip(&limit)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });

    let doc = AnalysisDocument {
        format_version: FORMAT_VERSION,
        model: ModelKind::Degroot,
        network: network_report(&analysis.trust),
        spectral: spectral_section(analysis),
        contraction_factor: None,
        gain: analysis.gain.as_ref().map(|g| g.gain_column.clone()),
        layers: analysis.layers.as_ref().map(external_layers),
        degroot: Some(DegrootSection {
            steps: traj.times.len() - 1,
            limit,
            predicted,
            max_abs_error,
        }),
        ensemble: None,
        verification: VerificationSection {
            mean_decay: None,
            conditional_mean: None,
            conditional_variance: None,
        },
        max_abs_z: None,
    };

    let mut sink = ArtifactSink::create(out_dir)?;
    sink.write("trajectory.csv", &trajectory_csv(&traj, cfg.record_stride))?;
    sink.write("analysis.json", &to_json(&doc))?;
    let names_so_far: Vec<String> = {
        let mut names = sink.names.clone();
        names.push("manifest.json".to_string());
        names
    };
    sink.write(
        "manifest.json",
        &to_json(&manifest(cfg, analysis, &initial, None, names_so_far)),
    )?;
    Ok(RunOutcome {
        dir: out_dir.to_path_buf(),
        artifacts: std::mem::take(&mut sink.names),
        max_abs_z: None,
    })
}

fn run_ra(
    cfg: &ExperimentConfig,
    analysis: &NetworkAnalysis,
    initial: OpinionState,
    out_dir: &Path,
) -> Result<RunOutcome> {
    let alpha = cfg.alpha.expect("checked");
    let horizon = cfg.horizon.expect("checked");
    let trials = cfg.trials.expect("checked");

    let ra = RaConfig::new(alpha, analysis.trust.clone(), initial.clone(), horizon)?;
    let options = EnsembleOptions::default()
        .with_epsilons(cfg.epsilons.clone())
        .with_psi(analysis.perron.left_vector.clone())
        .with_stride(cfg.record_stride);
    let summary = run_ensemble(&ra, trials, cfg.base_seed, &options)?;

    let c = conditional_mean_factor(alpha, analysis.perron.radius)?;
    let mean_decay = verify_mean_decay(&ra, &summary, c)?;

    // One-step conditional checks branch from the initial state, on
    // seed indices disjoint from every trial's.
    let y = initial.ordinary().to_vec();
    let psi = &analysis.perron.left_vector;
    let lambda = analysis.perron.radius;
    let (cond_mean, cond_var) = if trials >= 2 {
        let mean = verify_conditional_mean(
            &ra,
            &y,
            psi,
            lambda,
            trials,
            trial_seed(cfg.base_seed, trials as u64),
        )?;
        let var = verify_conditional_variance(
            &ra,
            &y,
            psi,
            lambda,
            trials,
            trial_seed(cfg.base_seed, trials as u64 + 1),
        )?;
        (Some(mean), Some(var))
    } else {
        (None, None)
    };

    let max_abs_z = {
        let mut z = mean_decay.max_abs_z;
        if let Some(m) = &cond_mean {
            z = z.max(m.z_score.abs());
        }
        if let Some(v) = &cond_var {
            z = z.max(v.z_score.abs());
        }
        z
    };

    let agents = summary.agents();
    let final_mean: Vec<f64> = (0..agents)
        .map(|k| summary.mean_at(horizon, k).expect("horizon recorded"))
        .collect();
    let final_polarization: Vec<f64> = (0..agents)
        .map(|k| {
            *summary
                .polarization_series(k)
                .last()
                .expect("at least one recorded time")
        })
        .collect();
    let thresholds: Vec<ThresholdStats> = summary
        .epsilons()
        .iter()
        .map(|&eps| ThresholdStats {
            epsilon: eps,
            herd_prob: (0..agents)
                .map(|k| summary.tail_above_at(horizon, k, eps).expect("tracked"))
                .collect(),
            upper_herd_prob: (0..agents)
                .map(|k| summary.tail_below_upper_at(horizon, k, eps).expect("tracked"))
                .collect(),
            middle_mass: (0..agents)
                .map(|k| summary.middle_mass_at(horizon, k, eps).expect("tracked"))
                .collect(),
        })
        .collect();

    let doc = AnalysisDocument {
        format_version: FORMAT_VERSION,
        model: ModelKind::Ra,
        network: network_report(&analysis.trust),
        spectral: spectral_section(analysis),
        contraction_factor: Some(c),
        gain: analysis.gain.as_ref().map(|g| g.gain_column.clone()),
        layers: analysis.layers.as_ref().map(external_layers),
        degroot: None,
        ensemble: Some(EnsembleSection {
            trials,
            horizon,
            final_mean,
            final_polarization,
            thresholds,
        }),
        verification: VerificationSection {
            mean_decay: Some(mean_decay),
            conditional_mean: cond_mean,
            conditional_variance: cond_var,
        },
        max_abs_z: Some(max_abs_z),
    };

    let mut sink = ArtifactSink::create(out_dir)?;
    for trial in 0..cfg.trajectory_trials {
        let traj = ra_run(&ra, trial_seed(cfg.base_seed, trial as u64));
        sink.write(
            &format!("trajectory_{trial:04}.csv"),
            &trajectory_csv(&traj, cfg.record_stride),
        )?;
    }
    sink.write("ensemble.csv", &ensemble_csv(&summary))?;
    sink.write("analysis.json", &to_json(&doc))?;
    let names_so_far: Vec<String> = {
        let mut names = sink.names.clone();
        names.push("manifest.json".to_string());
        names
    };
    sink.write(
        "manifest.json",
        &to_json(&manifest(
            cfg,
            analysis,
            &initial,
            Some([trials as u64, trials as u64 + 1]),
            names_so_far,
        )),
    )?;
    Ok(RunOutcome {
        dir: out_dir.to_path_buf(),
        artifacts: std::mem::take(&mut sink.names),
        max_abs_z: Some(max_abs_z),
    })
}

// ---------------------------------------------------------------------
// Fixed-state verification (the `verify` subcommand)

/// Branches one-step transitions from a fixed ordinary state and checks
/// the conditional mean and variance of S against their closed forms,
/// by exhaustive enumeration when feasible and by Monte Carlo always.
pub fn run_verification(
    trust: TrustMatrix,
    alpha: f64,
    y: &[f64],
    samples: usize,
    seed: u64,
    eig_tol: f64,
    max_iter: usize,
) -> Result<VerificationDocument> {
    let report = network_report(&trust);
    let partition = partition_stubborn(&trust)?;
    let perron = spectral_radius(partition.interior(), eig_tol, max_iter)?;
    let lambda = perron.radius;
    let psi = perron.left_vector.clone();
    let c = conditional_mean_factor(alpha, lambda)?;

    let horizon = 1; // only single-step branching is needed
    let initial = OpinionState::from_parts(0.0, y)?;
    let ra = RaConfig::new(alpha, trust, initial, horizon)?;

    let enumeration = (y.len() <= ENUMERATION_LIMIT).then(|| {
        let (mean, variance) = enumerate_conditional_moments(&partition, alpha, y, &psi);
        let s0: f64 = psi.iter().zip(y).map(|(&w, &v)| w * v).sum();
        let mean_closed = c * s0;
        let var_closed =
            opdyn_core::analysis::conditional_variance_analytic(y, &psi, alpha, lambda);
        EnumerationCheck {
            mean,
            mean_closed_form: mean_closed,
            mean_abs_error: (mean - mean_closed).abs(),
            variance,
            variance_closed_form: var_closed,
            variance_abs_error: (variance - var_closed).abs(),
        }
    });

    let cond_mean = verify_conditional_mean(&ra, y, &psi, lambda, samples, trial_seed(seed, 0))?;
    let cond_var =
        verify_conditional_variance(&ra, y, &psi, lambda, samples, trial_seed(seed, 1))?;
    let max_abs_z = cond_mean.z_score.abs().max(cond_var.z_score.abs());

    Ok(VerificationDocument {
        format_version: FORMAT_VERSION,
        network: report,
        alpha,
        state: y.to_vec(),
        lambda,
        psi,
        contraction_factor: c,
        samples,
        seed,
        enumeration,
        conditional_mean: cond_mean,
        conditional_variance: cond_var,
        max_abs_z,
    })
}

/// The layer decomposition as a standalone JSON document.
#[derive(Serialize)]
pub struct LayersDocument {
    pub format_version: u32,
    /// External 1-based agent indices, nearest layer first.
    pub layers: Vec<Vec<usize>>,
    pub layer_count: usize,
}

pub fn layers_document(trust: &TrustMatrix) -> Result<LayersDocument> {
    let layers = layer_decomposition(trust)?;
    Ok(LayersDocument {
        format_version: FORMAT_VERSION,
        layers: external_layers(&layers),
        layer_count: layers.layers().len(),
    })
}

/// The validation report as a standalone JSON document.
#[derive(Serialize)]
pub struct ValidationDocument {
    pub format_version: u32,
    #[serde(flatten)]
    pub network: NetworkReport,
}

pub fn validation_document(trust: &TrustMatrix) -> ValidationDocument {
    ValidationDocument {
        format_version: FORMAT_VERSION,
        network: network_report(trust),
    }
}
