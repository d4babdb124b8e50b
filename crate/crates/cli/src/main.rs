use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use entropic_mfg::analytic::{game_value, ne_policy, solve, GameParams, Variant};
use entropic_mfg::harness::{self, ExperimentConfig, ExperimentReport};
use entropic_mfg::simulate::{
    mc_expected_reward, realized_reward, simulate_trajectory, MeanField, PolicyParams,
};
use entropic_mfg::{Error, Substream};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_CHECK: u8 = 4;

/// Entropy-regularized LQ mean field games: closed forms, simulation, learning.
///
/// Exit codes: 0 success, 2 configuration error, 3 runtime error,
/// 4 acceptance-threshold failure under --check.
#[derive(Debug, Parser)]
#[command(name = "entropic-mfg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// More progress output on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Suppress the stdout summary.
    #[arg(short, long, global = true)]
    quiet: bool,
    /// Worker threads for Monte Carlo and learning (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the closed-form equilibrium on the time grid.
    Solve(SolveArgs),
    /// Monte Carlo payoff of a policy against the equilibrium mean field.
    Simulate(SimulateArgs),
    /// Run the learner on one configuration and write its trace tables.
    Learn(RunArgs),
    /// Run the full temperature sweep of the reference experiment.
    Reproduce(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Game {
    Se,
    Ee,
}

impl From<Game> for Variant {
    fn from(g: Game) -> Self {
        match g {
            Game::Se => Variant::Se,
            Game::Ee => Variant::Ee,
        }
    }
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment configuration (JSON). Defaults to the reference experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set learner.step_size=0.1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shannon temperature (overrides `game.lambda_se`).
    #[arg(long)]
    lambda_se: Option<f64>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_enum, default_value = "se")]
    game: Game,
    /// Cross-entropy temperature (overrides `game.lambda_ce`).
    #[arg(long)]
    lambda_ce: Option<f64>,
    /// Also write the grid table to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_enum, default_value = "se")]
    game: Game,
    #[arg(long)]
    lambda_ce: Option<f64>,
    /// `ne` for the discretized equilibrium, or a JSON file `{"m_hat": .., "sigma2": [..]}`.
    #[arg(long, default_value = "ne")]
    policy: String,
    #[arg(long, default_value_t = 100_000)]
    n_paths: usize,
    /// Write every path's states and realized reward to this CSV file.
    #[arg(long)]
    paths_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory.
    #[arg(long, env = "ENTROPIC_MFG_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
    /// Fail with exit code 4 unless the single-seed acceptance thresholds hold.
    #[arg(long)]
    check: bool,
    /// Relative-error threshold used by --check and convergence checks.
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
}

enum Failure {
    Config(String),
    Runtime(String),
    Check(String),
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    let base = match &args.config {
        Some(p) => ExperimentConfig::load(p).map_err(config_err)?,
        None => ExperimentConfig::default(),
    };
    let mut sets = args.overrides.clone();
    if let Some(l) = args.lambda_se {
        sets.push(format!("game.lambda_se={l}"));
    }
    if let Some(s) = args.seed {
        sets.push(format!("seed={s}"));
    }
    base.with_overrides(&sets).map_err(config_err)
}

fn game_params(cfg: &ExperimentConfig, lambda_ce: Option<f64>) -> Result<GameParams, Failure> {
    let mut p = cfg.game;
    if let Some(l) = lambda_ce {
        p.lambda_ce = l;
    }
    p.require_exploration().map_err(config_err)?;
    Ok(p)
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn run_solve(args: &SolveArgs, quiet: bool) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    let params = game_params(&cfg, args.lambda_ce)?;
    let grid = cfg.grid().map_err(config_err)?;
    let sol = solve(&params, args.game.into(), &grid).map_err(runtime_err)?;
    let mut out = String::new();
    let _ = writeln!(out, "policy_gain {}", num(sol.policy.mean_coeff));
    let _ = writeln!(out, "game_value {}", num(sol.game_value));
    let _ = writeln!(out, "m_star {}", num(sol.m_star));
    let mut table = String::from("t,eta,gamma,policy_variance,state_variance\n");
    for s in 0..sol.times.len() {
        let _ = writeln!(
            table,
            "{},{},{},{},{}",
            num(sol.times[s]),
            num(sol.eta[s]),
            num(sol.gamma[s]),
            num(sol.policy_variance[s]),
            num(sol.variance_path[s])
        );
    }
    out.push_str(&table);
    if !quiet {
        print!("{out}");
    }
    if let Some(path) = &args.csv {
        fs::write(path, table)
            .map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run_simulate(args: &SimulateArgs, quiet: bool) -> Result<(), Failure> {
    let cfg = load_config(&args.cfg)?;
    let grid = cfg.grid().map_err(config_err)?;
    if args.n_paths < 2 {
        return Err(Failure::Config(format!(
            "--n-paths must be at least 2, got {}",
            args.n_paths
        )));
    }
    let variant: Variant = args.game.into();
    let (params, policy, reference) = if args.policy == "ne" {
        let params = game_params(&cfg, args.lambda_ce)?;
        let feedback = ne_policy(&params, variant).map_err(config_err)?;
        let policy = PolicyParams::from_feedback(&feedback, &grid);
        let v = game_value(&params, variant, 0.0, &grid).map_err(runtime_err)?;
        (params, policy, Some(v))
    } else {
        let text = fs::read_to_string(&args.policy)
            .map_err(|e| Failure::Config(format!("reading policy file {}: {e}", args.policy)))?;
        let policy = PolicyParams::from_json_str(&text).map_err(config_err)?;
        policy.check_grid(&grid).map_err(config_err)?;
        let mut params = cfg.game;
        if let Some(l) = args.lambda_ce {
            params.lambda_ce = l;
        }
        params.validate().map_err(config_err)?;
        (params, policy, None)
    };
    let mean_field = MeanField::constant(&grid, params.xi_mean);
    let seed = Substream::root(cfg.seed);
    let est = mc_expected_reward(&params, &grid, &policy, &mean_field, args.n_paths, seed)
        .map_err(runtime_err)?;
    if !quiet {
        println!("mean {}", num(est.mean));
        println!("stderr {}", num(est.stderr));
        println!("n_paths {}", est.n_paths);
        println!("seed {}", cfg.seed);
        if let Some(v) = reference {
            println!("game_value {}", num(v));
        }
    }
    if let Some(path) = &args.paths_csv {
        write_paths(
            path,
            &params,
            &grid,
            &policy,
            &mean_field,
            args.n_paths,
            seed,
        )?;
    }
    Ok(())
}

fn write_paths(
    path: &Path,
    params: &GameParams,
    grid: &entropic_mfg::analytic::TimeGrid,
    policy: &PolicyParams,
    mean_field: &MeanField,
    n_paths: usize,
    seed: Substream,
) -> Result<(), Failure> {
    let mut text = String::from("path");
    for s in 0..=grid.n_steps() {
        let _ = write!(text, ",x{s}");
    }
    text.push_str(",reward\n");
    for j in 0..n_paths as u64 {
        let traj = simulate_trajectory(params, grid, policy, mean_field, seed.child(j))
            .map_err(runtime_err)?;
        let r = realized_reward(params, grid, &traj, policy, mean_field).map_err(runtime_err)?;
        let _ = write!(text, "{j}");
        for x in &traj.states {
            let _ = write!(text, ",{}", num(*x));
        }
        let _ = writeln!(text, ",{}", num(r));
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn run_experiment(args: &RunArgs, single: bool, verbose: u8, quiet: bool) -> Result<(), Failure> {
    let mut cfg = load_config(&args.cfg)?;
    if single {
        cfg.lambda_se_values = vec![cfg.game.lambda_se];
    } else if let Some(l) = args.cfg.lambda_se {
        cfg.lambda_se_values = vec![l];
    }
    cfg.output_dir = Some(args.out_dir.clone());
    cfg.validate().map_err(config_err)?;
    if verbose > 0 {
        eprintln!("config:\n{}", cfg.to_json());
    }
    let report = match harness::reproduce(&cfg) {
        Ok(r) => r,
        Err(e) => {
            let _ = harness::write_failure_marker(&args.out_dir, &e.to_string());
            return Err(runtime_err(e));
        }
    };
    let files = harness::write_report(&report, &args.out_dir).map_err(runtime_err)?;
    if verbose > 0 {
        for f in &files {
            eprintln!("wrote {}", f.display());
        }
    }
    if !quiet {
        print_summary(&report, args.threshold);
    }
    if args.check {
        let checks = harness::check_report(&report, args.threshold);
        let mut failed = 0;
        for c in &checks {
            println!(
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            );
            failed += usize::from(!c.passed);
        }
        if failed > 0 {
            return Err(Failure::Check(format!(
                "{failed} of {} checks failed",
                checks.len()
            )));
        }
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport, threshold: f64) {
    for r in &report.runs {
        println!(
            "lambda_se {}: m_hat {:.6} (true {}), final rel_error {:.6}, first outer below {threshold}: {:?}, diverged_at {:?}",
            r.lambda_se,
            r.learned.m_hat,
            r.true_m_hat,
            r.final_error(),
            r.first_outer_below(threshold),
            r.diverged_at
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a, cli.quiet),
        Command::Simulate(a) => run_simulate(a, cli.quiet),
        Command::Learn(a) => run_experiment(a, true, cli.verbose, cli.quiet),
        Command::Reproduce(a) => run_experiment(a, false, cli.verbose, cli.quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("runtime error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
