use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use kzm::analysis::{fit_decay, maxent_pmf, moments_from_cumulants, FitWeighting};
use kzm::experiment::{read_records, run_sweep, BackendKind, ExperimentConfig};
use kzm::mitigation::calibrate_readout;
use kzm::model::QuenchSchedule;
use kzm::trotter::{build_quench_circuit, GateOp, TrotterPlan};
use kzm::{acceptance, oracle, Backend, Error, ErrorKind};

/// Directory prepended to relative output paths.
const OUTPUT_DIR_VAR: &str = "KZM_OUTPUT_DIR";
/// Largest chain the dense ODE oracle handles.
const MAX_ORACLE_QUBITS: usize = 10;

#[derive(Parser)]
#[command(name = "kzm", version, about = "Kibble-Zurek quench sweeps, fits and verification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides the config backend
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Statevector,
    Mps,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Unweighted,
    InverseVariance,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by --config
    Quench,
    /// Power-law decay fit of a result file
    Fit {
        /// JSONL result file
        input: PathBuf,
        /// Cumulant order (1, 2 or 3)
        #[arg(long, default_value_t = 1)]
        cumulant: usize,
        /// Fit window instead of [1, τ_f]
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "unweighted")]
        weighting: WeightingArg,
    },
    /// Maximum-entropy kink distribution from a result record's cumulants
    Maxent {
        /// JSONL result file
        input: PathBuf,
        /// Record index within the file
        #[arg(long)]
        index: Option<usize>,
    },
    /// Readout calibration report for the config's noise model
    Calibrate {
        /// Shots per prepared basis state
        #[arg(long, default_value_t = 10_000)]
        shots: usize,
        /// Randomize readout with per-shot flip masks
        #[arg(long)]
        twirled: bool,
    },
    /// Dense ODE oracle for one quench: exact kink statistics and the
    /// Trotter error of the circuit
    Oracle {
        #[arg(long)]
        n_qubits: usize,
        #[arg(long)]
        tau_q: f64,
        /// Trotter steps of the compared circuit
        #[arg(long, default_value_t = 100)]
        r: usize,
        #[arg(long, default_value_t = oracle::DEFAULT_ODE_STEPS)]
        ode_steps: usize,
    },
    /// Run the acceptance suite
    Verify {
        /// Also run the ungated κ₂/κ₃ variant of criterion 3
        #[arg(long)]
        long: bool,
        /// Run only these criteria
        #[arg(long)]
        criterion: Vec<String>,
    },
}

enum Failure {
    Kzm(Error),
    Criteria(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Kzm(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Kzm(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Kzm(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Kzm(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Resource => 3,
                ErrorKind::Numerical => 4,
            })
        }
        Err(Failure::Criteria(ids)) => {
            eprintln!("failed criteria: {}", ids.join(", "));
            ExitCode::from(4)
        }
    }
}

fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_VAR) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig, Error> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this subcommand needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(b) = g.backend {
        cfg.backend = match b {
            BackendArg::Statevector => BackendKind::Statevector,
            BackendArg::Mps => BackendKind::Mps,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `value` as pretty JSON to `--out`, or to stdout.
fn emit(g: &Global, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match &g.out {
        Some(p) => std::fs::write(resolve_output(p), text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if let Some(w) = g.workers.filter(|&w| w > 0) {
        // a second initialization only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    match cli.command {
        Command::Quench => {
            let cfg = load_config(g)?;
            let out = g
                .out
                .clone()
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("results.jsonl"));
            let manifest = run_sweep(&cfg, &resolve_output(&out))?;
            eprintln!(
                "{} points ({} failed) written to {}",
                manifest.n_points,
                manifest.n_failed,
                manifest.results.display()
            );
        }
        Command::Fit {
            input,
            cumulant,
            window,
            weighting,
        } => {
            let records = read_records(&input)?;
            let n = records
                .first()
                .map(|r| r.n_qubits)
                .ok_or_else(|| Error::Fit("result file has no records".into()))?;
            let points: Vec<_> = records.iter().filter_map(|r| r.sweep_point()).collect();
            let weighting = match weighting {
                WeightingArg::Unweighted => FitWeighting::Unweighted,
                WeightingArg::InverseVariance => FitWeighting::InverseVariance,
            };
            let fit = fit_decay(&points, cumulant, n, window.map(|w| [w[0], w[1]]), weighting)?;
            emit(
                g,
                &json!({
                    "cumulant": fit.cumulant,
                    "alpha": fit.alpha,
                    "stderr": fit.alpha_stderr,
                    "window": fit.window,
                    "points_used": fit.n_points,
                    "tau_f": fit.tau_f,
                    "tau_f_reached": fit.tau_f_reached,
                    "residual_rms": fit.residual_rms,
                }),
            )?;
        }
        Command::Maxent { input, index } => {
            let records = read_records(&input)?;
            let mut out = Vec::new();
            for r in records.iter().filter(|r| index.map_or(true, |i| r.index == i)) {
                let Some(c) = r.cumulants else { continue };
                let sol = maxent_pmf(moments_from_cumulants(&c), r.n_qubits)?;
                out.push(json!({
                    "index": r.index,
                    "tau_q": r.tau_q,
                    "N": sol.n_qubits,
                    "moments_in": sol.moments_in,
                    "lambda": sol.lambda,
                    "pmf": sol.pmf,
                }));
            }
            if out.is_empty() {
                return Err(Error::Config("no matching records with cumulants".into()).into());
            }
            emit(g, &serde_json::Value::Array(out))?;
        }
        Command::Calibrate { shots, twirled } => {
            let cfg = load_config(g)?;
            let noise = cfg.noise_model().readout_only();
            let seed = cfg.seed;
            let c = calibrate_readout(&cfg.backend(), cfg.n_qubits, shots, &noise, twirled, seed)?;
            let rates: Vec<[f64; 2]> = c.flip_rates().iter().map(|&(a, b)| [a, b]).collect();
            emit(
                g,
                &json!({
                    "n_qubits": cfg.n_qubits,
                    "shots_per_state": shots,
                    "twirled": twirled,
                    "flip_rates": rates,
                    "summary": c.summary(),
                    "poorly_conditioned": c.poorly_conditioned(),
                }),
            )?;
        }
        Command::Oracle {
            n_qubits,
            tau_q,
            r,
            ode_steps,
        } => {
            if !(2..=MAX_ORACLE_QUBITS).contains(&n_qubits) {
                return Err(Error::Config(format!("oracle handles 2 to {MAX_ORACLE_QUBITS} qubits")).into());
            }
            let schedule = QuenchSchedule::new(tau_q)?;
            let psi = oracle::quench_final_state(n_qubits, &schedule, ode_steps);
            let x_basis = oracle::gate_unitary(n_qubits, &GateOp::HadamardLayer) * &psi;
            let mut pmf = vec![0.0; n_qubits];
            for (i, a) in x_basis.iter().enumerate() {
                pmf[kzm::BitString::from_u64(n_qubits, i as u64).kink_count()] += a.norm_sqr();
            }
            let exact = kzm::analysis::exact_cumulants_from_pmf(&pmf, n_qubits)?;
            let circuit = build_quench_circuit(n_qubits, &schedule, &TrotterPlan::new(r, tau_q)?)?;
            let trotter = Backend::StateVector.exact_cumulants(&circuit)?;
            emit(
                g,
                &json!({
                    "n_qubits": n_qubits,
                    "tau_q": tau_q,
                    "ode_steps": ode_steps,
                    "kink_pmf": pmf,
                    "cumulants": [exact.kappa1, exact.kappa2, exact.kappa3],
                    "trotter": {
                        "r": r,
                        "cumulants": [trotter.kappa1, trotter.kappa2, trotter.kappa3],
                        "kappa1_error": trotter.kappa1 - exact.kappa1,
                    },
                }),
            )?;
        }
        Command::Verify { long, criterion } => {
            let reports = if criterion.is_empty() {
                acceptance::run_all(long)
            } else {
                criterion
                    .iter()
                    .map(|id| {
                        acceptance::run_criterion(id).ok_or_else(|| Error::Config(format!("unknown criterion {id}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            };
            let mut failed = Vec::new();
            for r in &reports {
                println!("{r}");
                if !r.passed {
                    failed.push(r.id.to_string());
                }
            }
            if let Some(p) = &g.out {
                std::fs::write(resolve_output(p), serde_json::to_string_pretty(&reports)? + "\n")?;
            }
            if !failed.is_empty() {
                return Err(Failure::Criteria(failed));
            }
        }
    }
    Ok(())
}
