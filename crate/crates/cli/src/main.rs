//! Command-line surface for the divergence-bottleneck toolkit.
//!
//! Exit codes: 0 success, 1 input error, 2 convergence failure (outputs are
//! still written, flagged), 3 infeasible divergence target.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use dib_core::*;

#[derive(Parser)]
#[command(name = "dib", version, about = "Divergence information bottleneck toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single bottleneck problem at fixed β or for a target divergence λ.
    Solve(SolveArgs),
    /// Reverse deterministic annealing over a β schedule; writes a trace CSV.
    Anneal(AnnealArgs),
    /// Synthetic experiments with file bundles.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Partition an alphabet by the ratio p/p̃ (plus the off-support cell).
    Partition(PartitionArgs),
    /// Symmetry tooling: exact checks, soft residuals, brute-force discovery.
    #[command(subcommand)]
    Symmetry(SymmetryCmd),
    /// Classic information bottleneck on a joint p(X,Y).
    #[command(subcommand)]
    Ib(IbCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Units {
    Nats,
    Bits,
}

impl Units {
    fn convert(self, nats: f64) -> f64 {
        match self {
            Units::Nats => nats,
            Units::Bits => nats / std::f64::consts::LN_2,
        }
    }
    fn name(self) -> &'static str {
        match self {
            Units::Nats => "nats",
            Units::Bits => "bits",
        }
    }
}

#[derive(Args)]
struct ProblemArgs {
    /// Distribution JSON {"labels":[...],"p":[...]}.
    #[arg(long, conflicts_with = "joint")]
    dist: Option<PathBuf>,
    /// Joint JSON {"x_labels":[...],"y_labels":[...],"p":[[...]]} (required for ce/iib).
    #[arg(long)]
    joint: Option<PathBuf>,
    /// Reference family: ce | di | iib | custom:<ptilde.json>.
    #[arg(long)]
    family: String,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Inverse-temperature for a single Lagrangian solve.
    #[arg(long, conflicts_with = "lambda")]
    beta: Option<f64>,
    /// Target divergence level (β found by bisection).
    #[arg(long)]
    lambda: Option<f64>,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "nats")]
    units: Units,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AnnealArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Schedule spec geometric:<max>,<min>,<count>.
    #[arg(long)]
    betas: String,
    /// Tracked symmetry group, repeatable: <name>=<group.json> with
    /// {"generators":[{"images":[...]},...]} acting on the alphabet.
    #[arg(long = "group")]
    groups: Vec<String>,
    /// Trace CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "nats")]
    units: Units,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Grid-world compression experiment: two perturbation stages, annealing
    /// sweeps, symmetry-recovery thresholds, CSV/SVG/JSON bundle.
    Gridworld(GridworldArgs),
}

#[derive(Args)]
struct GridworldArgs {
    /// Output directory for trace.csv, info_curve.svg, residuals.svg, summary.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rotation-preserving perturbation amplitude (stage 1).
    #[arg(long, default_value_t = 0.1)]
    eps1: f64,
    /// I.i.d. perturbation amplitude (stage 2).
    #[arg(long, default_value_t = 0.01)]
    eps2: f64,
    /// Override β schedule, geometric:<max>,<min>,<count>.
    #[arg(long)]
    betas: Option<String>,
    /// Grid side length (odd, ≥ 3).
    #[arg(long, default_value_t = 5)]
    n: usize,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Relative tolerance for equal ratios.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Output JSON path ({"labels":[...],"cells":[[...]]}).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SymmetryCmd {
    /// Exact invariance/equivariance checks (prints true/false).
    Check(SymCheckArgs),
    /// Divergence of an encoder from its group-symmetrized version.
    Divergence(SymDivArgs),
    /// Brute-force discovery of exact channel equivariances.
    Discover(SymDiscoverArgs),
}

#[derive(Args)]
struct SymCheckArgs {
    /// Channel JSON (input-space action; with --tau: equivariance pair).
    #[arg(long, conflicts_with = "dist")]
    channel: Option<PathBuf>,
    /// Distribution JSON (checks invariance under --sigma).
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Permutation JSON {"images":[...]} acting on inputs.
    #[arg(long)]
    sigma: PathBuf,
    /// Optional output-space permutation; checks ch(τy|σx) = ch(y|x).
    #[arg(long)]
    tau: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
}

#[derive(Args)]
struct SymDivArgs {
    /// Encoder channel JSON.
    #[arg(long)]
    channel: PathBuf,
    /// Input distribution JSON.
    #[arg(long)]
    dist: PathBuf,
    /// Group JSON {"generators":[{"images":[...]},...]} acting on inputs.
    #[arg(long)]
    group: PathBuf,
    #[arg(long, default_value = "nats")]
    units: Units,
}

#[derive(Args)]
struct SymDiscoverArgs {
    /// Channel JSON to scan for equivariances.
    #[arg(long)]
    channel: PathBuf,
    /// Input distribution JSON (defaults to uniform on the channel inputs).
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Candidate budget after level-set pruning.
    #[arg(long, default_value_t = 1e7)]
    budget: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Optional output JSON with the discovered generators.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum IbCmd {
    /// Self-consistent-equation solve at fixed β.
    Solve(IbSolveArgs),
}

#[derive(Args)]
struct IbSolveArgs {
    /// Joint JSON {"x_labels":[...],"y_labels":[...],"p":[[...]]}.
    #[arg(long)]
    joint: PathBuf,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "nats")]
    units: Units,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

// ---------------------------------------------------------------------------
// File helpers

fn read_json<T: for<'de> Deserialize<'de>>(path: &PathBuf, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {path:?}"))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {path:?}"))
}

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {path:?}"))?;
    Ok(())
}

#[derive(Deserialize)]
struct GroupFile {
    generators: Vec<Permutation>,
}

fn load_group(path: &PathBuf, degree: usize) -> Result<Group<Permutation>> {
    let file: GroupFile = read_json(path, "group")?;
    for g in &file.generators {
        if g.degree() != degree {
            bail!(
                "group element degree {} does not match alphabet size {degree}",
                g.degree()
            );
        }
    }
    Ok(group_closure(
        Permutation::identity(degree),
        &file.generators,
        1_000_000,
    )?)
}

/// Parses `geometric:<max>,<min>,<count>`.
fn parse_schedule(spec: &str) -> Result<Vec<f64>> {
    let body = spec
        .strip_prefix("geometric:")
        .context("schedule must look like geometric:<max>,<min>,<count>")?;
    let parts: Vec<&str> = body.split(',').collect();
    if parts.len() != 3 {
        bail!("schedule must look like geometric:<max>,<min>,<count>");
    }
    let max: f64 = parts[0].trim().parse().context("bad schedule max")?;
    let min: f64 = parts[1].trim().parse().context("bad schedule min")?;
    let count: usize = parts[2].trim().parse().context("bad schedule count")?;
    Ok(geometric_schedule(max, min, count)?)
}

/// Loads the base distribution and reference family from the shared flags.
fn load_problem(args: &ProblemArgs) -> Result<(Distribution, HierarchicalModel)> {
    let family = args.family.as_str();
    let needs_product = family == "ce" || family == "iib";
    let (p, xy) = match (&args.dist, &args.joint) {
        (Some(path), None) => {
            if needs_product {
                bail!("--family {family} needs --joint (factor alphabets)");
            }
            (read_json::<Distribution>(path, "distribution")?, None)
        }
        (None, Some(path)) => {
            let j: Joint = read_json(path, "joint")?;
            let labels = (j.x_labels().to_vec(), j.y_labels().to_vec());
            (j.flatten(), Some(labels))
        }
        _ => bail!("exactly one of --dist / --joint is required"),
    };
    let model = match family {
        "di" => HierarchicalModel::Di,
        "ce" | "iib" => {
            let (x_labels, y_labels) = xy.expect("checked above");
            if family == "ce" {
                HierarchicalModel::Ce { x_labels, y_labels }
            } else {
                HierarchicalModel::Iib { x_labels, y_labels }
            }
        }
        other => {
            let path = other
                .strip_prefix("custom:")
                .with_context(|| format!("unknown family {other:?}"))?;
            let ptilde: Distribution = read_json(&PathBuf::from(path), "reference distribution")?;
            HierarchicalModel::Custom(ptilde)
        }
    };
    Ok((p, model))
}

fn build_dib_problem(args: &ProblemArgs) -> Result<DibProblem> {
    let (p, model) = load_problem(args)?;
    let ptilde = project_to_family(&model, &p)?;
    Ok(DibProblem::new(p, ptilde, None)?)
}

// ---------------------------------------------------------------------------
// Subcommands

/// JSON wrapper stored by `solve`: values always in nats, the units field
/// records the convention.
#[derive(Serialize)]
struct SolveFile<'a> {
    units: &'static str,
    /// None when the solve targeted a divergence level instead of a fixed β.
    beta: Option<f64>,
    lambda: Option<f64>,
    result: &'a SolverResult,
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let prob = build_dib_problem(&args.problem)?;
    let cfg = SolverConfig {
        seed: args.seed,
        ..SolverConfig::default()
    };
    let result = match (args.beta, args.lambda) {
        (Some(beta), None) => {
            if !(beta >= 0.0) {
                bail!("--beta must be ≥ 0");
            }
            let init = default_init(&prob, &cfg);
            solve_fixed_beta(&prob, beta, &init, &cfg)?
        }
        (None, Some(lambda)) => target_lambda(&prob, lambda, &cfg)?,
        _ => bail!("exactly one of --beta / --lambda is required"),
    };
    let file = SolveFile {
        units: "nats",
        beta: args.beta,
        lambda: args.lambda,
        result: &result,
    };
    write_json(&args.out, &file)?;
    let u = args.units;
    println!(
        "I = {:.6} {u}, D = {:.6} {u}, eff_card = {}, converged = {}",
        u.convert(result.i_nats),
        u.convert(result.d_nats),
        result.eff_card,
        result.converged,
        u = u.name()
    );
    Ok(if result.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_anneal(args: &AnnealArgs) -> Result<ExitCode> {
    let prob = build_dib_problem(&args.problem)?;
    let betas = parse_schedule(&args.betas)?;
    let cfg = SolverConfig {
        seed: args.seed,
        ..SolverConfig::default()
    };
    let mut groups = Vec::new();
    for spec in &args.groups {
        let (name, path) = spec
            .split_once('=')
            .context("--group expects <name>=<group.json>")?;
        groups.push((
            name.to_string(),
            load_group(&PathBuf::from(path), prob.p().len())?,
        ));
    }
    let trace = anneal_reverse(&prob, &betas, &cfg, &groups)?;
    fs::write(&args.out, trace.to_csv()).with_context(|| format!("writing {:?}", args.out))?;
    let unconverged = trace
        .points
        .iter()
        .filter(|pt| !pt.result.converged)
        .count();
    let last = trace.points.last().expect("non-empty schedule");
    let u = args.units;
    println!(
        "{} points ({} unconverged); final I = {:.6} {u}, D = {:.6} {u}",
        trace.points.len(),
        unconverged,
        u.convert(last.result.i_nats),
        u.convert(last.result.d_nats),
        u = u.name()
    );
    Ok(if unconverged == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_gridworld(args: &GridworldArgs) -> Result<ExitCode> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {:?}", args.out))?;
    let mut cfg = ExperimentConfig::new(args.out.clone());
    cfg.grid = GridSpec { n: args.n };
    cfg.seed = args.seed;
    cfg.eps1 = args.eps1;
    cfg.eps2 = args.eps2;
    if let Some(spec) = &args.betas {
        cfg.betas = parse_schedule(spec)?;
    }
    let summary = run_experiment(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if summary.points_unconverged == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_partition(args: &PartitionArgs) -> Result<ExitCode> {
    let (p, model) = load_problem(&args.problem)?;
    let ptilde = project_to_family(&model, &p)?;
    let part = partition_from_dib_relation(&p, &ptilde, args.tol)?;
    if let Some(out) = &args.out {
        write_json(out, &part)?;
    }
    println!("{} cells", part.cells().len());
    for cell in part.cells() {
        let names: Vec<&str> = cell.iter().map(|&a| p.labels()[a].as_str()).collect();
        println!("  {{{}}}", names.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sym_check(args: &SymCheckArgs) -> Result<ExitCode> {
    let sigma: Permutation = read_json(&args.sigma, "permutation")?;
    let ok = match (&args.channel, &args.dist) {
        (Some(path), None) => {
            let ch: Channel = read_json(path, "channel")?;
            match &args.tau {
                Some(tau_path) => {
                    let tau: Permutation = read_json(tau_path, "permutation")?;
                    let pair = ProductPermutation::new(sigma, tau);
                    is_channel_equivariance(&ch, &pair, args.tol)
                }
                None => is_channel_invariance(&ch, &sigma, args.tol),
            }
        }
        (None, Some(path)) => {
            let p: Distribution = read_json(path, "distribution")?;
            is_distribution_invariance(&p, &sigma, args.tol)
        }
        _ => bail!("exactly one of --channel / --dist is required"),
    };
    println!("{ok}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_sym_divergence(args: &SymDivArgs) -> Result<ExitCode> {
    let ch: Channel = read_json(&args.channel, "channel")?;
    let p: Distribution = read_json(&args.dist, "distribution")?;
    let g = load_group(&args.group, p.len())?;
    let v = divergence_from_symmetric(&ch, &p, &g)?;
    println!("{:.16e} {}", args.units.convert(v), args.units.name());
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct DiscoveredFile {
    order: usize,
    generators: Vec<ProductPermutation>,
}

fn cmd_sym_discover(args: &SymDiscoverArgs) -> Result<ExitCode> {
    let ch: Channel = read_json(&args.channel, "channel")?;
    let px = match &args.dist {
        Some(path) => read_json(path, "distribution")?,
        None => Distribution::uniform(ch.input_labels().to_vec())?,
    };
    let limits = DiscoveryLimits {
        budget: args.budget,
        tol: args.tol,
    };
    let g = discover_equivariances(&ch, &px, limits)?;
    println!("group of order {}", g.order());
    if let Some(out) = &args.out {
        write_json(
            out,
            &DiscoveredFile {
                order: g.order(),
                generators: g.elements().to_vec(),
            },
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct IbFile<'a> {
    units: &'static str,
    beta: f64,
    result: &'a ClassicIbResult,
}

fn cmd_ib_solve(args: &IbSolveArgs) -> Result<ExitCode> {
    let j: Joint = read_json(&args.joint, "joint")?;
    let cfg = SolverConfig {
        seed: args.seed,
        ..SolverConfig::default()
    };
    let result = solve_classic_ib(&j, args.beta, &cfg)?;
    write_json(
        &args.out,
        &IbFile {
            units: "nats",
            beta: args.beta,
            result: &result,
        },
    )?;
    let u = args.units;
    println!(
        "I(X;T) = {:.6} {u}, I(Y;T) = {:.6} {u}, converged = {}",
        u.convert(result.i_xt),
        u.convert(result.i_yt),
        result.converged,
        u = u.name()
    );
    Ok(if result.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Anneal(args) => cmd_anneal(args),
        Command::Experiment(ExperimentCmd::Gridworld(args)) => cmd_gridworld(args),
        Command::Partition(args) => cmd_partition(args),
        Command::Symmetry(SymmetryCmd::Check(args)) => cmd_sym_check(args),
        Command::Symmetry(SymmetryCmd::Divergence(args)) => cmd_sym_divergence(args),
        Command::Symmetry(SymmetryCmd::Discover(args)) => cmd_sym_discover(args),
        Command::Ib(IbCmd::Solve(args)) => cmd_ib_solve(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err
                .downcast_ref::<Error>()
                .is_some_and(|e| matches!(e, Error::InfeasibleLambda { .. }))
            {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
