//! `mpdo`: experiment driver for the noisy circuit simulators.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpdo_core::circuit::{random_circuit, Circuit};
use mpdo_core::harness::{
    calibrate_noise, chi_sweep, counts_xent_report, kappa_sweep, mps_reference_fidelities, pt_analysis, qec_report,
    run, truncation_sweep, Backend, BackendSpec, CircuitSource, CountsHistogram, ExperimentConfig, KappaRule,
    OutputFormat, Report, DEFAULT_SHOTS,
};
use mpdo_core::noise::{NoiseModel, NoiseSpec};
use mpdo_core::qec::{EncodingCircuit, QecBackend, DEFAULT_CHI, DEFAULT_EPSILON_GRID, DEFAULT_KAPPA, DEFAULT_MEMORY_RATE};
use mpdo_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "mpdo", version, about = "Noisy 1D circuit simulation with matrix product density operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random brickwork circuit as JSON.
    GenerateCircuit {
        #[arg(long)]
        n_qubits: usize,
        #[arg(long)]
        depth: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one circuit on one backend.
    Run {
        #[arg(long)]
        circuit: PathBuf,
        /// exact-sv, exact-dm, mps or mpdo
        #[arg(long, value_parser = parse_backend)]
        backend: Backend,
        /// MODEL:RATE, or none
        #[arg(long, default_value = "none", value_parser = parse_noise)]
        noise: NoiseSpec,
        #[arg(long)]
        chi: Option<usize>,
        #[arg(long)]
        kappa: Option<usize>,
        /// Sampling seed for registers too large for a full distribution.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SHOTS)]
        shots: usize,
        /// Check against an oracle backend (n ≤ 6).
        #[arg(long)]
        verify: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Find the noise rate whose output fidelity to the noiseless state
    /// matches a target, given directly or as the MPS fidelity at --chi.
    Calibrate {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, value_parser = parse_model)]
        model: NoiseModel,
        #[arg(long, conflicts_with = "chi", required_unless_present = "chi")]
        target: Option<f64>,
        #[arg(long)]
        chi: Option<usize>,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[command(flatten)]
        output: Output,
    },
    /// MPDO fidelity to the exact density matrix over a (χ, κ) grid.
    Sweep {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, value_parser = parse_model)]
        model: NoiseModel,
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        chi: Vec<usize>,
        /// Explicit κ values (requires a single --chi); default κ = ratio·χ.
        #[arg(long, value_delimiter = ',')]
        kappa: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        kappa_ratio: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Cumulative output-probability distributions with reference curves.
    PtAnalysis {
        #[arg(long)]
        circuit: PathBuf,
        /// NAME[:CHI[:KAPPA]], repeatable or comma separated
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_backend_spec)]
        backend: Vec<BackendSpec>,
        #[arg(long, default_value = "none", value_parser = parse_model)]
        model: NoiseModel,
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Cross entropy between measured counts and a simulated distribution.
    CountsXent {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, value_parser = parse_backend)]
        backend: Backend,
        #[arg(long, default_value = "none", value_parser = parse_noise)]
        noise: NoiseSpec,
        #[arg(long)]
        chi: Option<usize>,
        #[arg(long)]
        kappa: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Encode, memory noise, decode and recover with the five-qubit code.
    Qec {
        /// Encoder JSON; defaults to the bundled circuit.
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        model: Vec<NoiseModel>,
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_MEMORY_RATE)]
        memory_rate: f64,
        #[arg(long, default_value_t = DEFAULT_CHI)]
        chi: usize,
        #[arg(long, default_value_t = DEFAULT_KAPPA)]
        kappa: usize,
        /// Skip the MPDO backend.
        #[arg(long)]
        exact_only: bool,
        #[command(flatten)]
        output: Output,
    },
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_backend_spec(s: &str) -> Result<BackendSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_noise(s: &str) -> Result<NoiseSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_model(s: &str) -> Result<NoiseModel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_circuit(path: &Path) -> Result<Circuit, Error> {
    CircuitSource::File { path: path.to_path_buf() }.load()
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report<R: Report>(report: &R, output: &Output) -> Result<(), Error> {
    emit(&report.render(output.format), output.out.as_deref())
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::GenerateCircuit {
            n_qubits,
            depth,
            seed,
            out,
        } => emit(&(random_circuit(n_qubits, depth, seed)?.to_json() + "\n"), out.as_deref()),
        Command::Run {
            circuit,
            backend,
            noise,
            chi,
            kappa,
            seed,
            shots,
            verify,
            output,
        } => {
            let mut cfg = ExperimentConfig::new(CircuitSource::File { path: circuit }, backend);
            cfg.noise = noise;
            cfg.chi = chi;
            cfg.kappa = kappa;
            cfg.seed = seed;
            cfg.shots = shots;
            cfg.verify = verify;
            cfg.format = output.format;
            cfg.output = output.out.clone();
            let result = run(&cfg)?;
            emit_report(&result, &output)?;
            match result.result.oracle {
                Some(o) if o.passed == Some(false) => {
                    eprintln!("verification below tolerance at truncated dims: fidelity {}", o.fidelity);
                }
                _ => {}
            }
            Ok(())
        }
        Command::Calibrate {
            circuit,
            model,
            target,
            chi,
            tol,
            output,
        } => {
            let c = load_circuit(&circuit)?;
            let target = match (target, chi) {
                (Some(t), _) => t,
                (None, Some(chi)) => mps_reference_fidelities(&c, &[chi])?[0].1,
                (None, None) => return Err(Error::Config("either --target or --chi is required".into())),
            };
            emit_report(&calibrate_noise(&c, model, target, tol)?, &output)
        }
        Command::Sweep {
            circuit,
            model,
            rates,
            chi,
            kappa,
            kappa_ratio,
            output,
        } => {
            let c = load_circuit(&circuit)?;
            let caps = if kappa.is_empty() {
                chi_sweep(&chi, KappaRule::Ratio(kappa_ratio))
            } else if chi.len() == 1 {
                kappa_sweep(chi[0], &kappa)
            } else {
                return Err(Error::Config("an explicit --kappa list needs exactly one --chi".into()));
            };
            emit_report(&truncation_sweep(&c, model, &rates, &caps)?, &output)
        }
        Command::PtAnalysis {
            circuit,
            backend,
            model,
            rates,
            output,
        } => {
            let c = load_circuit(&circuit)?;
            if model != NoiseModel::None && rates.is_empty() {
                return Err(Error::Config("--rates is required with a noise model".into()));
            }
            emit_report(&pt_analysis(&c, &backend, model, &rates)?, &output)
        }
        Command::CountsXent {
            counts,
            circuit,
            backend,
            noise,
            chi,
            kappa,
            output,
        } => {
            let text = std::fs::read_to_string(&counts).map_err(|e| Error::Io(format!("{}: {e}", counts.display())))?;
            let h = CountsHistogram::from_json(&text)?;
            let c = load_circuit(&circuit)?;
            let spec = BackendSpec::new(backend, chi, kappa);
            emit_report(&counts_xent_report(&c, &h, &spec, &noise)?, &output)
        }
        Command::Qec {
            encoder,
            model,
            epsilons,
            memory_rate,
            chi,
            kappa,
            exact_only,
            output,
        } => {
            let code = match encoder {
                Some(p) => EncodingCircuit::from_json(
                    &std::fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
                )?,
                None => EncodingCircuit::five_qubit(),
            };
            let models = if model.is_empty() { NoiseModel::ALL.to_vec() } else { model };
            let eps = if epsilons.is_empty() { DEFAULT_EPSILON_GRID.to_vec() } else { epsilons };
            let mut backends = vec![QecBackend::ExactDm];
            if !exact_only {
                backends.push(QecBackend::Mpdo { chi, kappa });
            }
            emit_report(&qec_report(&code, &models, &eps, memory_rate, &backends)?, &output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_NUMERICAL })
        }
    }
}
