//! Command-line front end: certify matrices, run OMP, evaluate recovery
//! conditions, run lemma suites and Monte Carlo experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error, 3 a verification
//! suite found violations or an experiment found counterexamples.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use omp_recovery::guarantees::{evaluate_guarantees, DeltaSource, NoiseSpec};
use omp_recovery::harness::{run_experiment, summary_to_json, ExperimentConfig};
use omp_recovery::io::{read_matrix_csv, read_vector_csv};
use omp_recovery::omp::{omp_run, StoppingRule};
use omp_recovery::oracle::{run_lemma_suite, Lemma};
use omp_recovery::sensing::{normalize_columns, rip_exact, SenseMatrix, DEFAULT_RIP_BUDGET};
use omp_recovery::{Error, SparseSignal};

const THREADS_ENV: &str = "OMP_SPARSE_THREADS";

const GRAMMAR: &str = "\
Usage:
  omp-recovery certify --matrix A.csv --order K [--budget N] [--normalize]
  omp-recovery solve --matrix A.csv --y y.csv --rule fixed:K|l2:B2|linf:Binf [--max-iterations N] [--normalize]
  omp-recovery check --delta D --k K --noise l2:B2|linf:Binf|gaussian:SIGMA --min-coeff X [--m M] [--delta-source exact|upper-bound]
  omp-recovery verify [--lemma 2.1|2.2|2.3|offsupport|all] [--samples N] [--seed S]
  omp-recovery experiment --config config.json [--out-dir DIR]
Environment: OMP_SPARSE_THREADS caps the worker threads.";

#[derive(Parser, Debug)]
#[command(
    name = "omp-recovery",
    version,
    about = "Sparse recovery with Orthogonal Matching Pursuit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the exact restricted isometry constant of a matrix.
    Certify {
        /// Matrix CSV (one row per line, unit-norm columns unless --normalize).
        #[arg(long)]
        matrix: PathBuf,
        /// Order K of the constant delta_K.
        #[arg(long)]
        order: usize,
        /// Maximum number of K-subsets to examine.
        #[arg(long, default_value_t = DEFAULT_RIP_BUDGET)]
        budget: u64,
        /// Rescale columns to unit norm instead of rejecting them.
        #[arg(long)]
        normalize: bool,
    },
    /// Run OMP on y = A x + z and print the trace.
    Solve {
        #[arg(long)]
        matrix: PathBuf,
        /// Measurement vector CSV (a single column).
        #[arg(long)]
        y: PathBuf,
        /// Stopping rule: fixed:K, l2:B2 or linf:Binf.
        #[arg(long)]
        rule: StoppingRule,
        /// Iteration cap, at most the number of rows (default: rows).
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        normalize: bool,
    },
    /// Evaluate the recovery conditions for given constants.
    Check {
        /// delta_{K+1}, exact or an upper bound.
        #[arg(long)]
        delta: f64,
        /// Sparsity K.
        #[arg(long)]
        k: usize,
        /// Noise model: l2:B2, linf:Binf or gaussian:SIGMA.
        #[arg(long, value_parser = parse_noise)]
        noise: NoiseSpec,
        /// Number of measurements (needed for Gaussian noise).
        #[arg(long, default_value_t = 1)]
        m: usize,
        /// Smallest nonzero coefficient magnitude of the signal.
        #[arg(long)]
        min_coeff: f64,
        /// Whether --delta is exact or an upper bound.
        #[arg(long, value_enum, default_value_t = SourceArg::Exact)]
        delta_source: SourceArg,
    },
    /// Run randomized lemma verification suites.
    Verify {
        /// 2.1, 2.2, 2.3, offsupport or all.
        #[arg(long, default_value = "all", value_parser = parse_lemmas)]
        lemma: LemmaSel,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Directory for trials.csv and summary.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Exact,
    UpperBound,
}

#[derive(Clone, Debug)]
struct LemmaSel(Vec<Lemma>);

fn parse_lemmas(s: &str) -> Result<LemmaSel, String> {
    if s == "all" {
        return Ok(LemmaSel(Lemma::ALL.to_vec()));
    }
    Lemma::parse(s)
        .map(|l| LemmaSel(vec![l]))
        .ok_or_else(|| format!("unknown lemma {s:?}; expected 2.1, 2.2, 2.3, offsupport or all"))
}

fn parse_noise(s: &str) -> Result<NoiseSpec, String> {
    let (kind, value) = s
        .split_once(':')
        .ok_or_else(|| format!("expected KIND:VALUE, got {s:?}"))?;
    let v: f64 = value
        .parse()
        .map_err(|_| format!("cannot parse {value:?} as a number"))?;
    let spec = match kind {
        "l2" => NoiseSpec::L2Ball { b2: v },
        "linf" => NoiseSpec::LinfCorrelation { binf: v },
        "gaussian" => NoiseSpec::Gaussian { sigma: v },
        _ => {
            return Err(format!(
                "unknown noise kind {kind:?}; expected l2, linf or gaussian"
            ))
        }
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn load_matrix(path: &Path, normalize: bool) -> Result<SenseMatrix, Error> {
    let raw = read_matrix_csv(path)?;
    if normalize {
        normalize_columns(raw)
    } else {
        SenseMatrix::from_unit_columns(raw)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Outcome of a successful command: whether it found a violation.
enum Status {
    Clean,
    Violations,
}

fn run(command: Command) -> Result<Status, Error> {
    match command {
        Command::Certify {
            matrix,
            order,
            budget,
            normalize,
        } => {
            let a = load_matrix(&matrix, normalize)?;
            print_json(&rip_exact(&a, order, budget)?)?;
        }
        Command::Solve {
            matrix,
            y,
            rule,
            max_iterations,
            normalize,
        } => {
            let a = load_matrix(&matrix, normalize)?;
            let y = read_vector_csv(&y)?;
            let trace = omp_run(&a, &y, rule, max_iterations.unwrap_or(a.m()))?;
            print_json(&trace)?;
        }
        Command::Check {
            delta,
            k,
            noise,
            m,
            min_coeff,
            delta_source,
        } => {
            if k == 0 {
                return Err(Error::InvalidArgument("--k must be at least 1".into()));
            }
            let source = match delta_source {
                SourceArg::Exact => DeltaSource::Exact,
                SourceArg::UpperBound => DeltaSource::UpperBound,
            };
            let signal = SparseSignal::new(k, (0..k).collect(), vec![min_coeff; k])?;
            print_json(&evaluate_guarantees(delta, source, &signal, &noise, m))?;
        }
        Command::Verify {
            lemma,
            samples,
            seed,
        } => {
            let summaries = lemma
                .0
                .iter()
                .map(|&l| run_lemma_suite(l, samples, seed))
                .collect::<Result<Vec<_>, _>>()?;
            print_json(&summaries)?;
            if summaries.iter().any(|s| s.violations > 0) {
                return Ok(Status::Violations);
            }
        }
        Command::Experiment { config, out_dir } => {
            let text = std::fs::read_to_string(&config).map_err(|source| Error::Io {
                path: config.clone(),
                source,
            })?;
            let cfg = ExperimentConfig::from_json(&text)?;
            let (summary, _) = run_experiment(&cfg, out_dir.as_deref())?;
            print!("{}", summary_to_json(&summary)?);
            if summary.counterexample_count > 0 {
                return Ok(Status::Violations);
            }
        }
    }
    Ok(Status::Clean)
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{GRAMMAR}");
            return ExitCode::from(1);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}\n\n{GRAMMAR}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Violations) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
