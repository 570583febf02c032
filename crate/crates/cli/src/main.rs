//! `opdyn` — run opinion-dynamics experiments from the command line.
//!
//! Subcommands: `validate` and `layers` inspect a network, `generate`
//! writes one, `degroot` and `ra` run experiments into an output
//! directory, `verify` checks the one-step conditional laws on a fixed
//! state, and `report` summarizes a finished run. Data goes to stdout
//! as JSON (or into the output directory); diagnostics go to stderr.
//!
//! Exit code 0 means everything requested ran. Statistical exceedances
//! are data, not failures, unless `--strict Z` puts a bound on |z|.

mod config;
mod error;
mod experiment;
mod formats;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opdyn_core::network::TrustMatrix;

use crate::config::{
    load_config, ExperimentConfig, GeneratorKind, GeneratorSpec, ModelKind, NetworkFormat,
    NetworkSource, Overrides, StubbornEdgeMode, Tolerances,
};
use crate::error::{CliError, Result};
use crate::experiment::{
    generate_network, layers_document, resolve_network, run_experiment, run_verification,
    validation_document,
};
use crate::formats::save_network;

#[derive(Parser)]
#[command(
    name = "opdyn",
    version,
    about = "Opinion dynamics on directed trust networks: deterministic averaging and random-actions ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Ways to point a command at a network.
#[derive(Args)]
struct NetworkArgs {
    /// Network file (edge list or matrix-json, by extension)
    #[arg(long, conflicts_with = "config")]
    network: Option<PathBuf>,

    /// Force the network file format
    #[arg(long, requires = "network")]
    format: Option<NetworkFormat>,

    /// Agent count, when the edge list's highest index understates it
    #[arg(long, requires = "network")]
    size: Option<usize>,

    /// Take the network from an experiment config instead
    #[arg(long)]
    config: Option<PathBuf>,
}

impl NetworkArgs {
    fn resolve(&self) -> Result<TrustMatrix> {
        if let Some(path) = &self.network {
            let source = NetworkSource::File {
                path: path.clone(),
                format: self.format,
                size: self.size,
            };
            return resolve_network(&source, Tolerances::default().row);
        }
        if let Some(config) = &self.config {
            let cfg = load_config(config)?;
            return resolve_network(&cfg.network, cfg.tolerances.row);
        }
        Err(CliError::Config(
            "pass --network FILE or --config FILE".into(),
        ))
    }
}

/// Config plus the overrides shared by the run commands.
#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,

    /// Override the config's base seed
    #[arg(long)]
    seed: Option<u64>,

    /// Override the number of trials
    #[arg(long)]
    trials: Option<usize>,

    /// Override the horizon
    #[arg(long)]
    horizon: Option<usize>,

    /// Override alpha
    #[arg(long)]
    alpha: Option<f64>,

    /// Override the tracked epsilon thresholds (repeatable)
    #[arg(long = "epsilon", value_name = "EPS")]
    epsilons: Vec<f64>,

    /// Output directory (overrides the config's output_dir)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Exit nonzero when any verification |z| exceeds this bound
    #[arg(long, value_name = "Z")]
    strict: Option<f64>,
}

impl RunArgs {
    fn load(&self, model: ModelKind) -> Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config)?;
        if cfg.model != model {
            return Err(CliError::Config(format!(
                "config declares model {:?} but the {:?} subcommand was invoked",
                cfg.model, model
            )));
        }
        cfg.apply_overrides(&Overrides {
            seed: self.seed,
            trials: self.trials,
            horizon: self.horizon,
            alpha: self.alpha,
            epsilons: self.epsilons.clone(),
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a network file and report its structure as JSON
    Validate {
        #[command(flatten)]
        network: NetworkArgs,
    },

    /// Generate a network and write it to a file or stdout
    Generate {
        /// Network family
        #[arg(long)]
        kind: GeneratorKind,

        /// Total number of agents, including the stubborn one
        #[arg(long)]
        size: usize,

        /// Trust mass placed on the stubborn agent along selected edges
        #[arg(long)]
        beta: f64,

        /// Seed for the random-irreducible family
        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// How many ordinary agents trust the stubborn agent
        #[arg(long, value_name = "MODE", default_value = "at-least-one")]
        edges: StubbornEdgeMode,

        /// Permit star networks whose interior is reducible
        #[arg(long)]
        allow_reducible: bool,

        /// Output file; stdout (edge list) when omitted
        #[arg(long)]
        out: Option<PathBuf>,

        /// Force the output format
        #[arg(long)]
        format: Option<NetworkFormat>,
    },

    /// Run the deterministic averaging model to convergence
    Degroot {
        #[command(flatten)]
        run: RunArgs,
    },

    /// Run a random-actions ensemble
    Ra {
        #[command(flatten)]
        run: RunArgs,
    },

    /// Check the one-step conditional mean/variance laws on a fixed state
    Verify {
        #[command(flatten)]
        network: NetworkArgs,

        /// Self-weight of the update (falls back to the config's alpha)
        #[arg(long)]
        alpha: Option<f64>,

        /// Ordinary agents' opinions, external order 2..=K
        #[arg(long, value_delimiter = ',', value_name = "Y2,Y3,...")]
        state: Vec<f64>,

        /// Monte Carlo branches
        #[arg(long, default_value_t = 100_000)]
        samples: usize,

        /// Seed for the verification sampler
        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Write verification.json here instead of stdout
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,

        /// Exit nonzero when |z| exceeds this bound
        #[arg(long, value_name = "Z")]
        strict: Option<f64>,
    },

    /// Print a network's trust-distance layers as JSON
    Layers {
        #[command(flatten)]
        network: NetworkArgs,
    },

    /// Summarize a finished run directory
    Report {
        /// The run's output directory
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn check_strict(max_abs_z: Option<f64>, strict: Option<f64>) -> Result<()> {
    if let (Some(z), Some(bound)) = (max_abs_z, strict) {
        if z > bound {
            return Err(CliError::StrictExceeded {
                max_abs_z: z,
                bound,
            });
        }
    }
    Ok(())
}

fn print_json(doc: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(doc).expect("documents serialize")
    );
}

fn run_model(run: &RunArgs, model: ModelKind) -> Result<()> {
    let cfg = run.load(model)?;
    let outcome = run_experiment(&cfg)?;
    match outcome.max_abs_z {
        Some(z) => println!(
            "wrote {} artifacts to {} (max |z| = {z})",
            outcome.artifacts.len(),
            outcome.dir.display()
        ),
        None => println!(
            "wrote {} artifacts to {}",
            outcome.artifacts.len(),
            outcome.dir.display()
        ),
    }
    check_strict(outcome.max_abs_z, run.strict)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate { network } => {
            let trust = resolve_validation_target(&network)?;
            print_json(&validation_document(&trust));
            Ok(())
        }

        Command::Generate {
            kind,
            size,
            beta,
            seed,
            edges,
            allow_reducible,
            out,
            format,
        } => {
            let spec = GeneratorSpec {
                kind,
                size,
                beta,
                seed,
                stubborn_edges: edges,
                allow_reducible,
            };
            let trust = generate_network(&spec)?;
            match out {
                Some(path) => save_network(&path, &trust, format),
                None => {
                    let text = match format {
                        Some(NetworkFormat::MatrixJson) => formats::write_matrix_json(&trust),
                        _ => formats::write_edge_list(&trust),
                    };
                    print!("{text}");
                    Ok(())
                }
            }
        }

        Command::Degroot { run } => run_model(&run, ModelKind::Degroot),
        Command::Ra { run } => run_model(&run, ModelKind::Ra),

        Command::Verify {
            network,
            alpha,
            state,
            samples,
            seed,
            out,
            strict,
        } => {
            let trust = network.resolve()?;
            let (alpha, state) = verify_inputs(&network, alpha, state, trust.size())?;
            let tol = Tolerances::default();
            let doc = run_verification(
                trust,
                alpha,
                &state,
                samples,
                seed,
                tol.eigen,
                tol.max_iterations,
            )?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                    let path = dir.join("verification.json");
                    let mut text =
                        serde_json::to_string_pretty(&doc).expect("documents serialize");
                    text.push('\n');
                    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
                    println!("wrote {}", path.display());
                }
                None => print_json(&doc),
            }
            check_strict(Some(doc.max_abs_z), strict)
        }

        Command::Layers { network } => {
            let trust = network.resolve()?;
            print_json(&layers_document(&trust)?);
            Ok(())
        }

        Command::Report { dir } => report(&dir),
    }
}

/// `validate` inspects rather than simulates, so it loads the file
/// without requiring stochasticity; generated networks are stochastic
/// by construction.
fn resolve_validation_target(args: &NetworkArgs) -> Result<TrustMatrix> {
    if let Some(path) = &args.network {
        return formats::load_network(path, args.format, args.size, Tolerances::default().row);
    }
    args.resolve()
}

/// Fills verify's alpha and state from flags or the config file.
fn verify_inputs(
    network: &NetworkArgs,
    alpha: Option<f64>,
    state: Vec<f64>,
    k: usize,
) -> Result<(f64, Vec<f64>)> {
    let cfg = match &network.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    let alpha = alpha
        .or_else(|| cfg.as_ref().and_then(|c| c.alpha))
        .ok_or_else(|| CliError::Config("pass --alpha or a config that sets alpha".into()))?;
    let state = if state.is_empty() {
        let cfg = cfg.as_ref().ok_or_else(|| {
            CliError::Config("pass --state or a config whose initial opinions to use".into())
        })?;
        experiment::build_initial(cfg, k)?.ordinary().to_vec()
    } else {
        state
    };
    Ok((alpha, state))
}

/// Prints the key numbers of a finished run.
fn report(dir: &Path) -> Result<()> {
    let read = |name: &str| -> Result<serde_json::Value> {
        let path = dir.join(name);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::json(&path, e))
    };
    let manifest = read("manifest.json")?;
    let analysis = read("analysis.json")?;

    println!("run directory: {}", dir.display());
    if let Some(model) = manifest["config"]["model"].as_str() {
        print!("model: {model}");
        if let Some(k) = manifest["network_resolved"]["K"].as_u64() {
            print!(", agents: {k}");
        }
        if let Some(trials) = manifest["config"]["trials"].as_u64() {
            print!(", trials: {trials}");
        }
        if let Some(horizon) = manifest["config"]["horizon"].as_u64() {
            print!(", horizon: {horizon}");
        }
        if let Some(seed) = manifest["seeds"]["base_seed"].as_u64() {
            print!(", base seed: {seed}");
        }
        println!();
    }
    if let Some(lambda) = analysis["spectral"]["lambda"].as_f64() {
        print!("interior spectral radius: {lambda}");
        if let Some(c) = analysis["contraction_factor"].as_f64() {
            print!(", contraction factor: {c}");
        }
        println!();
    }
    if let Some(gain) = analysis["gain"].as_array() {
        let values: Vec<f64> = gain.iter().filter_map(|v| v.as_f64()).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("consensus gain range: [{lo}, {hi}]");
    }
    if let Some(layers) = analysis["layers"].as_array() {
        println!("layers: {}", layers.len());
    }
    if let Some(z) = analysis["max_abs_z"].as_f64() {
        println!("max |z| across verifications: {z}");
    }
    if let Some(artifacts) = manifest["artifacts"].as_array() {
        let names: Vec<&str> = artifacts.iter().filter_map(|v| v.as_str()).collect();
        println!("artifacts: {}", names.join(", "));
    }
    Ok(())
}
