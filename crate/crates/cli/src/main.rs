use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dcadmm::bpd::{self, BpdParams, ExperimentConfig, ExperimentMetadata};
use dcadmm::dual::{self, Algorithm, CoupledProblem, IterationRecord, RunReport, SolverConfig, Termination};
use dcadmm::subproblem::InnerConfig;
use dcadmm::verify::{self, Fault};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_MAX_ITER: u8 = 2;

#[derive(Parser)]
#[command(name = "dcadmm", version, about = "Decentralized dual consensus ADMM solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file. Exit code 0: converged, 2: iteration limit, 1: error.
    Solve(SolveArgs),
    /// Run the basis pursuit denoising benchmark and write per-iteration CSVs.
    BenchBpd(BenchArgs),
    /// Run the built-in invariant checks on random data.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Aggregate,
    Decomposed,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Aggregate => Algorithm::Aggregate,
            AlgorithmArg::Decomposed => Algorithm::Decomposed,
        }
    }
}

#[derive(Args)]
struct InnerArgs {
    /// Inner solver fixed-point tolerance
    #[arg(long, default_value_t = 1e-8, value_parser = positive)]
    inner_tol: f64,
    /// Inner solver iteration budget per attempt
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    inner_max_iter: u64,
    /// Extra inner attempts (10x budget each) before a round fails
    #[arg(long, default_value_t = 2)]
    inner_retries: usize,
    /// Worker threads [default: all cores]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

impl InnerArgs {
    fn inner(&self) -> InnerConfig {
        InnerConfig {
            tol: self.inner_tol,
            max_iter: self.inner_max_iter as usize,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (JSON with graph, cone and agents)
    problem: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Aggregate)]
    algorithm: AlgorithmArg,
    /// Consensus penalty, must be positive
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    rho: f64,
    /// Splitting penalty of the decomposed variant, must be positive
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    sigma: f64,
    /// Round limit
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Relative tolerance on every optimality residual
    #[arg(long, default_value_t = 1e-6, value_parser = positive)]
    tol: f64,
    /// Output directory for iterates.csv and summary.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[command(flatten)]
    inner: InnerArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Number of instances (seeds 0..N)
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Algorithms to run, comma separated
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [AlgorithmArg::Aggregate, AlgorithmArg::Decomposed])]
    algorithms: Vec<AlgorithmArg>,
    /// Consensus penalty, must be positive
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    rho: f64,
    /// Splitting penalty of the decomposed variant, must be positive
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    sigma: f64,
    /// Rounds per run
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Output directory
    #[arg(long, default_value = "bpd-results")]
    out: PathBuf,
    /// Rows of the sensing matrix
    #[arg(long, default_value_t = 20)]
    p: usize,
    /// Columns of the sensing matrix
    #[arg(long, default_value_t = 120)]
    q: usize,
    /// Nonzeros of the planted signal
    #[arg(long, default_value_t = 20)]
    kappa: usize,
    /// Number of agents
    #[arg(long, default_value_t = 10)]
    agents: usize,
    /// Number of communication edges
    #[arg(long, default_value_t = 15)]
    edges: usize,
    /// Also write the run metadata JSON to this file [default: stdout only]
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[command(flatten)]
    inner: InnerArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FaultArg {
    None,
    PolarSignFlip,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of independent sweeps (seeds 0..N)
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seed_sweep: u64,
    #[arg(long, value_enum, default_value_t = FaultArg::None, hide = true)]
    inject_fault: FaultArg,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {s}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(args) => solve(args),
        Command::BenchBpd(args) => bench(args),
        Command::Verify(args) => verify_cmd(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

const ITERATE_HEADER: &str =
    "iter,objective,stationarity,coneMembership,complementarity,coupling,consensus,worstRatio,innerIterations";

fn iterate_line(r: &IterationRecord) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
        r.iter,
        r.objective,
        r.stationarity,
        r.cone_membership,
        r.complementarity,
        r.coupling,
        r.consensus,
        r.worst_ratio,
        r.inner_iterations
    )
}

fn write_iterates(path: &Path, log: &[IterationRecord]) -> Result<()> {
    let mut text = String::from(ITERATE_HEADER);
    text.push('\n');
    for r in log {
        text.push_str(&iterate_line(r));
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn summary_json(problem: &CoupledProblem, config: &SolverConfig, report: &RunReport) -> Result<serde_json::Value> {
    let (status, error) = match &report.termination {
        Termination::Converged => ("converged", None),
        Termination::MaxIter => ("max_iter", None),
        Termination::Failed(e) => ("failed", Some(e.to_string())),
    };
    let (_, w) = report.primal();
    let xs = report.xs();
    let objective = problem.objective_value(&xs)?;
    Ok(serde_json::json!({
        "status": status,
        "error": error,
        "iterations": report.iterations,
        "config": config,
        "objective": objective,
        "residuals": report.residuals,
        "worst_ratio": report.residuals.worst_ratio(),
        "x": xs.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>(),
        "y": report.states.iter().map(|s| s.y.as_slice().to_vec()).collect::<Vec<_>>(),
        "w": w.as_slice(),
    }))
}

fn solve(args: SolveArgs) -> Result<u8> {
    let problem = CoupledProblem::load(&args.problem)
        .with_context(|| format!("loading problem file {}", args.problem.display()))?;
    let config = SolverConfig {
        algorithm: args.algorithm.into(),
        rho: args.rho,
        sigma: args.sigma,
        max_iter: args.max_iter,
        tol: args.tol,
        inner: args.inner.inner(),
        inner_retries: args.inner.inner_retries,
        workers: args.inner.workers.map(|w| w as usize),
    };
    let report = dual::run(&problem, &config, |_| {})?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_iterates(&args.out.join("iterates.csv"), &report.log)?;
    let summary = summary_json(&problem, &config, &report)?;
    let path = args.out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    let last = report.log.last().expect("log holds the initial state");
    println!(
        "{}: {} rounds, objective {:.6e}, worst residual ratio {:.3e}",
        match report.termination {
            Termination::Converged => "converged",
            Termination::MaxIter => "iteration limit reached",
            Termination::Failed(_) => "failed",
        },
        report.iterations,
        last.objective,
        last.worst_ratio
    );
    match report.termination {
        Termination::Converged => Ok(EXIT_OK),
        Termination::MaxIter => Ok(EXIT_MAX_ITER),
        Termination::Failed(e) => {
            eprintln!("error: {e}");
            Ok(EXIT_ERROR)
        }
    }
}

fn bench(args: BenchArgs) -> Result<u8> {
    let mut algorithms: Vec<Algorithm> = Vec::new();
    for a in &args.algorithms {
        let a = Algorithm::from(*a);
        if !algorithms.contains(&a) {
            algorithms.push(a);
        }
    }
    let config = ExperimentConfig {
        params: BpdParams {
            p: args.p,
            q: args.q,
            kappa: args.kappa,
            n_agents: args.agents,
            n_edges: args.edges,
        },
        seeds: args.seeds,
        algorithms,
        rho: args.rho,
        sigma: args.sigma,
        iters: args.iters,
        inner: args.inner.inner(),
        inner_retries: args.inner.inner_retries,
        workers: args.inner.workers.map(|w| w as usize),
    };
    config.validate()?;
    let result = bpd::run_experiment(&config)?;
    let files = bpd::write_experiment(&result, &args.out)
        .with_context(|| format!("writing results to {}", args.out.display()))?;
    let metadata = serde_json::to_string_pretty(&ExperimentMetadata::new(&config, &result))?;
    if let Some(path) = &args.metadata {
        fs::write(path, metadata.clone() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{metadata}");
    for (alg, rows) in &result.means {
        if let Some(last) = rows.last() {
            eprintln!(
                "{alg}: mean at iteration {}: relSubopt {:.3e}, infeas {:.3e}, solDist {:.3e}, consViol {:.3e}",
                last.iter, last.rel_subopt, last.infeas, last.sol_dist, last.cons_viol
            );
        }
    }
    eprintln!("wrote {} files to {}", files.len(), args.out.display());
    Ok(EXIT_OK)
}

fn verify_cmd(args: VerifyArgs) -> Result<u8> {
    let fault = match args.inject_fault {
        FaultArg::None => Fault::None,
        FaultArg::PolarSignFlip => Fault::PolarSignFlip,
    };
    let reports = verify::seed_sweep(args.seed_sweep, fault);
    let mut all = true;
    for report in &reports {
        for check in &report.checks {
            println!(
                "seed {}: {} {} (error {:.3e}, tolerance {:.1e})",
                report.seed,
                if check.passed { "PASS" } else { "FAIL" },
                check.name,
                check.error,
                check.tolerance
            );
        }
        all &= report.passed();
    }
    Ok(if all { EXIT_OK } else { EXIT_ERROR })
}
