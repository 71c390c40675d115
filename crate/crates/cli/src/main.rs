//! `mnum`: solve, simulate and check joint rate-control and routing equilibria.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use mnum_core::equilibrium::{
    default_routes, solve_mnum, solve_mte, solve_num_singlepath, SolverKind,
};
use mnum_core::io::load_network;
use mnum_core::protocol::{self, ProtocolOptions};
use mnum_core::{ChoiceModel, Instance, Network, SolverOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use report::{to_json, EquilibriumReport, NumReport, SimulationReport};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mnum",
    version,
    about = "Rate control and Markovian multipath routing equilibria"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the joint rate and routing equilibrium.
    Solve(SolveArgs),
    /// Solve the routing equilibrium for the fixed demands given in the network file.
    Mte(SolveArgs),
    /// Rate control with a single route per source.
    Num(SolveArgs),
    /// Run the distributed protocol and compare it with the solver.
    Simulate(SimulateArgs),
    /// Compare the analytic gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Parse and validate a network file.
    Validate(CommonArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ChoiceArg {
    Logit,
    Min,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Descent,
    Fixedpoint,
}

#[derive(Args)]
struct CommonArgs {
    /// Network file (JSON).
    #[arg(long, short)]
    input: PathBuf,
    /// Choice model; overrides the network file.
    #[arg(long, value_enum)]
    choice: Option<ChoiceArg>,
    /// Logit dispersion; overrides the network file.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Where to write the JSON report; stdout if absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = SolverArg::Descent)]
    solver: SolverArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Where to write the JSON summary; stdout if absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Where to write the CSV trace.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Router smoothing factor.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Source step size.
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    /// Source steps per router step.
    #[arg(long, default_value_t = 50)]
    inner: usize,
    /// Router steps.
    #[arg(long, default_value_t = 500)]
    outer: usize,
    /// Router-only steps at zero load before sources start.
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    /// Standard deviation of noise on observed delays.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Routers sample perturbed next-hop delays, averaging this many samples.
    #[arg(long)]
    window: Option<usize>,
    /// Success band on the relative rate distance to the solver's equilibrium.
    #[arg(long, default_value_t = 0.01)]
    band: f64,
    /// Tolerance of the reference solve.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of random points.
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

/// Failure classes with stable exit codes.
#[derive(Debug)]
enum Failure {
    CheckFailed(String),
    Input(anyhow::Error),
    Convergence(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        use mnum_core::Error as E;
        match e.chain().find_map(|c| c.downcast_ref::<E>()) {
            Some(E::Convergence { .. } | E::LineSearch { .. }) => Failure::Convergence(e),
            _ => Failure::Input(e),
        }
    }
}

impl From<mnum_core::Error> for Failure {
    fn from(e: mnum_core::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn load(common: &CommonArgs) -> Result<(Network, ChoiceModel)> {
    let (net, file_choice) = load_network(&common.input)
        .with_context(|| format!("loading {}", common.input.display()))?;
    let choice = match (common.choice, common.beta, file_choice) {
        (Some(ChoiceArg::Min), Some(_), _) => {
            bail!("--beta does not apply to the min choice model")
        }
        (Some(ChoiceArg::Min), None, _) => ChoiceModel::DeterministicMin,
        (Some(ChoiceArg::Logit), beta, file) => {
            let file_beta = match file {
                Some(ChoiceModel::Logit { beta }) => Some(beta),
                _ => None,
            };
            ChoiceModel::logit(beta.or(file_beta).unwrap_or(1.0))?
        }
        (None, Some(_), Some(ChoiceModel::DeterministicMin)) => {
            bail!("--beta given but the network file selects the min choice model (use --choice logit)")
        }
        (None, Some(beta), _) => ChoiceModel::logit(beta)?,
        (None, None, Some(c)) => c,
        (None, None, None) => ChoiceModel::logit(1.0)?,
    };
    Ok((net, choice))
}

fn solver_options(args: &SolveArgs) -> Result<SolverOptions> {
    if args.tol.is_nan() || args.tol <= 0.0 {
        bail!("--tol must be positive");
    }
    Ok(SolverOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        solver: match args.solver {
            SolverArg::Descent => SolverKind::Descent,
            SolverArg::Fixedpoint => SolverKind::FixedPoint { theta: 0.2 },
        },
        ..SolverOptions::default()
    })
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn demands(net: &Network) -> Result<Vec<f64>> {
    net.sources()
        .iter()
        .map(|s| {
            s.demand
                .with_context(|| format!("source `{}` has no `demand` field", s.id))
        })
        .collect()
}

fn cmd_solve(args: &SolveArgs, fixed_demand: bool) -> Result<(), Failure> {
    let (net, choice) = load(&args.common)?;
    let opts = solver_options(args)?;
    let demand = if fixed_demand {
        Some(demands(&net)?)
    } else {
        None
    };
    let inst = Instance::new(net, choice)?;
    let eq = match &demand {
        Some(d) => solve_mte(&inst, d, &opts),
        None => solve_mnum(&inst, &opts),
    }?;
    let report = EquilibriumReport::from(&eq);
    let text = to_json(&report)?;
    serde_json::from_str::<EquilibriumReport>(&text)
        .map_err(anyhow::Error::from)
        .and_then(|r| r.validate())
        .context("report failed its own schema check")?;
    emit(&text, args.output.as_deref())?;
    let rates = report
        .x
        .iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(", ");
    info!(
        "converged in {} iterations; rates [{rates}]; residual {:.2e}",
        report.iterations, report.rmnum_residual
    );
    if args.output.is_some() {
        println!(
            "converged in {} iterations, rates [{rates}], max |λ - s(w)| = {:.2e}",
            report.iterations, report.rmnum_residual
        );
    }
    Ok(())
}

fn cmd_num(args: &SolveArgs) -> Result<(), Failure> {
    let (net, _) = load(&args.common)?;
    let opts = solver_options(args)?;
    let routes = default_routes(&net)?;
    let sol = solve_num_singlepath(&net, &routes, &opts)?;
    let ids: Vec<String> = net.arcs().iter().map(|a| a.id.clone()).collect();
    let report = NumReport::new(&sol, &ids);
    emit(&to_json(&report)?, args.output.as_deref())?;
    if args.output.is_some() {
        println!(
            "converged in {} iterations, KKT residual {:.2e}",
            report.iterations, report.kkt_residual
        );
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let (net, choice) = load(&args.common)?;
    if matches!(choice, ChoiceModel::DeterministicMin) {
        return Err(Failure::Input(anyhow::anyhow!(
            "the protocol needs a logit choice model"
        )));
    }
    let inst = Instance::new(net, choice)?;
    let reference = solve_mnum(
        &inst,
        &SolverOptions {
            tol: args.tol,
            max_iter: args.max_iter,
            ..SolverOptions::default()
        },
    )?;
    let opts = ProtocolOptions {
        alpha: args.alpha,
        delta: args.delta,
        inner: args.inner,
        outer: args.outer,
        warmup: args.warmup,
        noise_sigma: args.noise_sigma,
        sample_routes: args.window.is_some(),
        window: args.window.unwrap_or(1),
        seed: args.seed,
        ..ProtocolOptions::default()
    };
    let out = protocol::run(&inst, &opts, &reference)?;
    if let Some(path) = &args.trace {
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        protocol::write_trace_csv(&out.trace, std::io::BufWriter::new(file))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let within_band = out.summary.relative_rate_dist < args.band;
    if out.summary.tail_violations > 0 {
        warn!(
            "rate distance increased {} times over the last 10% of router steps",
            out.summary.tail_violations
        );
    }
    let report = SimulationReport {
        seed: args.seed,
        band: args.band,
        within_band,
        summary: out.summary,
    };
    emit(&to_json(&report)?, args.output.as_deref())?;
    let msg = format!(
        "relative rate distance {:.3e} after {} router steps (band {})",
        report.summary.relative_rate_dist, report.summary.outer_steps, args.band
    );
    if within_band {
        if args.output.is_some() {
            println!("{msg}");
        }
        Ok(())
    } else {
        Err(Failure::CheckFailed(msg))
    }
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), Failure> {
    let (net, choice) = load(&args.common)?;
    if matches!(choice, ChoiceModel::DeterministicMin) {
        return Err(Failure::Input(anyhow::anyhow!(
            "the objective is not differentiable under the min choice model; use --choice logit"
        )));
    }
    let inst = Instance::new(net, choice)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let lower = inst.lower_bound();
    let mut worst = 0.0f64;
    println!(
        "{:>5} {:>5} {:>22} {:>22} {:>10}",
        "point", "arc", "analytic", "finite_diff", "rel_err"
    );
    for point in 0..args.points {
        let lambda: Vec<f64> = lower
            .iter()
            .map(|l| l + rng.random_range(0.05..1.5))
            .collect();
        let mut g = inst.gradient(&lambda)?;
        if args.corrupt_gradient {
            g[0] += 1e-3 * g[0].abs().max(1.0);
        }
        for a in 0..lambda.len() {
            let h = 1e-5 * lambda[a].abs().max(1.0);
            let mut up = lambda.clone();
            let mut down = lambda.clone();
            up[a] += h;
            down[a] -= h;
            let fd = (inst.objective(&up)? - inst.objective(&down)?) / (2.0 * h);
            let err = (g[a] - fd).abs() / g[a].abs().max(fd.abs()).max(1e-3);
            worst = worst.max(err);
            println!(
                "{point:>5} {a:>5} {:>22.15e} {fd:>22.15e} {err:>10.3e}",
                g[a]
            );
        }
    }
    println!("max relative error {worst:.3e} (threshold {:e})", args.tol);
    if worst < args.tol {
        Ok(())
    } else {
        Err(Failure::CheckFailed(format!(
            "gradient check failed: max relative error {worst:.3e}"
        )))
    }
}

fn cmd_validate(args: &CommonArgs) -> Result<(), Failure> {
    let (net, choice) = load(args)?;
    let inst = Instance::new(net, choice)?;
    let net = inst.network();
    println!(
        "{}: {} nodes, {} arcs, {} sources, choice {:?}",
        args.input.display(),
        net.node_count(),
        net.arc_count(),
        net.sources().len(),
        inst.choice()
    );
    for (k, (src, dag)) in net.sources().iter().zip(inst.supports()).enumerate() {
        println!(
            "  source {} ({k}): {} support arcs, free-flow delay {:.6}",
            src.id,
            dag.arc_count(),
            inst.tau0()[k]
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MNUM_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, false),
        Command::Mte(a) => cmd_solve(a, true),
        Command::Num(a) => cmd_num(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Convergence(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONVERGENCE)
        }
    }
}
