use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use edpower::central::{run_mbi_min, run_mbi_sum, CentralReport, MbiConfig};
use edpower::feasibility::{check_necessary, check_sufficient, find_feasible_start};
use edpower::game::{run_brd, BrdConfig, QosFallback, Schedule, Termination};
use edpower::scenario::{generate, load_config, load_spec, spec_to_toml, ScenarioConfig};
use edpower::{Error, GameSpec, Result};
use edpower_cli::demo::energy_ratio_demo;
use edpower_cli::selftest::run_selftest;
use edpower_cli::{emit_csv, emit_plot_script, exit_code, load_plan, run_experiment, ExperimentPlan};

/// `println!` that ignores a closed stdout, as when piped into `head`.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "edpower",
    version,
    about = "Energy-delay power control: feasibility, best-response dynamics and centralized benchmarks"
)]
struct Cli {
    /// Seed for scenario generation (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario config (TOML); for `sweep`, an experiment plan.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Link parameter file (TOML) used instead of generating a scenario.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Convergence tolerance of the selected solver.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Iteration budget of the selected solver.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Power budget in dBW (overrides the config file).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pmax_dbw: Option<f64>,
    /// Use the full 4-cell, 8-user layout instead of the desk-scale default.
    #[arg(long, global = true)]
    full: bool,
    /// Print only the final summary.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Synchronous,
    Sequential,
    Randomized,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartArg {
    /// Every link at its power budget.
    Pmax,
    /// The equilibrium of the relaxed game.
    Ne,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and write its link parameters.
    Generate,
    /// Report joint QoS feasibility.
    Feasibility,
    /// Run best-response dynamics.
    Brd {
        #[arg(long, value_enum, default_value = "sequential")]
        schedule: ScheduleArg,
        /// Drop the QoS thresholds.
        #[arg(long)]
        relax: bool,
        /// Drop the QoS thresholds and restart when a best response is infeasible.
        #[arg(long)]
        fallback: bool,
    },
    /// Centralized sum-cost solver.
    MbiSum {
        #[arg(long, value_enum, default_value = "pmax")]
        start: StartArg,
    },
    /// Centralized max-delay solver.
    MbiMin {
        #[arg(long, value_enum, default_value = "pmax")]
        start: StartArg,
    },
    /// Minimize one link's energy per bit with Dinkelbach's method.
    DinkelbachDemo {
        #[arg(long, default_value_t = 0)]
        link: usize,
    },
    /// Monte-Carlo sweep over the power budget, written as CSV.
    Sweep {
        /// Override the number of Monte-Carlo runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Also write a matplotlib script charting the table.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

fn scenario(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None if cli.full => ScenarioConfig::default(),
        None => ScenarioConfig::desk(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(p) = cli.pmax_dbw {
        cfg.p_max_dbw = p;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn game(cli: &Cli) -> Result<GameSpec> {
    match &cli.spec {
        Some(path) => load_spec(path),
        None => generate(&scenario(cli)?),
    }
}

fn write_out(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(e.to_string())),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")
}

fn cmd_feasibility(cli: &Cli) -> Result<ExitCode> {
    let spec = game(cli)?;
    let suff = check_sufficient(&spec);
    let report = check_necessary(&spec);
    say!("links: {}", spec.len());
    say!("per-link sufficient check: {}", if suff.ok { "pass" } else { "fail" });
    for (k, ok) in suff.per_link.iter().enumerate() {
        if !ok {
            say!("  link {k}: fails at worst-case interference");
        }
    }
    say!("spectral radius: {:.6}", report.rho_f);
    if let Some(p) = &report.min_power_vector {
        say!("minimum power vector [W]: {}", fmt_vec(p));
    }
    match &report.failure {
        None => {
            say!("joint QoS: feasible");
            Ok(ExitCode::SUCCESS)
        }
        Some(cause) => {
            say!("joint QoS: infeasible ({cause})");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_brd(cli: &Cli, schedule: ScheduleArg, relax: bool, fallback: bool) -> Result<ExitCode> {
    let spec = game(cli)?;
    let mut cfg = BrdConfig {
        schedule: match schedule {
            ScheduleArg::Synchronous => Schedule::Synchronous,
            ScheduleArg::Sequential => Schedule::Sequential,
            ScheduleArg::Randomized => Schedule::Randomized,
        },
        relax_qos: relax,
        qos_fallback: if fallback {
            QosFallback::RelaxToZero
        } else {
            QosFallback::Enforce
        },
        seed: cli.seed.unwrap_or(0),
        ..BrdConfig::default()
    };
    if let Some(t) = cli.tolerance {
        cfg.epsilon = t;
    }
    if let Some(n) = cli.max_iters {
        cfg.max_rounds = n;
    }
    let start = if relax {
        spec.p_max().into_inner()
    } else {
        match find_feasible_start(&spec) {
            Ok(p) => p.into_inner(),
            Err(e) if fallback => {
                eprintln!("note: {e}; starting the relaxed game from full power");
                cfg.relax_qos = true;
                spec.p_max().into_inner()
            }
            Err(e) => return Err(e),
        }
    };
    let report = run_brd(&spec, &start, &cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !cli.quiet {
        say!("round metric");
        for (i, m) in report.metric_trace.iter().enumerate() {
            say!("{:5} {m:.6e}", i + 1);
        }
    }
    say!("termination: {:?}", report.termination);
    say!("rounds: {}", report.rounds);
    say!("powers [W]: {}", fmt_vec(&report.powers));
    say!("per-link cost [J/bit]: {}", fmt_vec(&report.per_link_cost));
    if let Some(path) = &cli.out {
        let mut text = String::from("round,metric\n");
        for (i, m) in report.metric_trace.iter().enumerate() {
            text.push_str(&format!("{},{m}\n", i + 1));
        }
        std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(match report.termination {
        Termination::Converged => ExitCode::SUCCESS,
        Termination::Infeasible { link, cause } => {
            eprintln!("best response of link {link} infeasible: {cause}");
            ExitCode::from(1)
        }
        Termination::MaxRounds => {
            eprintln!("no convergence within {} rounds", cfg.max_rounds);
            ExitCode::from(2)
        }
    })
}

fn cmd_mbi(cli: &Cli, start: StartArg, max_delay: bool) -> Result<ExitCode> {
    let spec = game(cli)?;
    let mut cfg = MbiConfig::default();
    if let Some(t) = cli.tolerance {
        cfg.epsilon = t;
    }
    if let Some(n) = cli.max_iters {
        cfg.max_iters = n;
    }
    let start = match start {
        StartArg::Pmax => spec.p_max().into_inner(),
        StartArg::Ne => {
            let relaxed = BrdConfig {
                relax_qos: true,
                ..BrdConfig::default()
            };
            run_brd(&spec, &spec.p_max(), &relaxed)?.powers.into_inner()
        }
    };
    let report: CentralReport = if max_delay {
        run_mbi_min(&spec, &start, &cfg)?
    } else {
        run_mbi_sum(&spec, &start, &cfg)?
    };
    if !cli.quiet {
        say!("iteration block objective");
        for (i, b) in report.chosen_blocks.iter().enumerate() {
            let name = if *b == spec.len() {
                "t".to_string()
            } else {
                b.to_string()
            };
            say!("{:9} {name:>5} {:.9e}", i + 1, report.objective_trace[i + 1]);
        }
    }
    say!("iterations: {}", report.iterations);
    say!("converged: {}", report.converged);
    say!("objective [J/bit]: {:.9e}", report.final_objective());
    say!("relative KKT residual: {:.3e}", report.kkt_residual);
    say!("powers [W]: {}", fmt_vec(&report.powers));
    if let Some(path) = &cli.out {
        let mut text = String::from("iteration,block,objective\n");
        for (i, b) in report.chosen_blocks.iter().enumerate() {
            text.push_str(&format!("{},{b},{}\n", i + 1, report.objective_trace[i + 1]));
        }
        std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_dinkelbach(cli: &Cli, link: usize) -> Result<ExitCode> {
    let spec = game(cli)?;
    if link >= spec.len() {
        return Err(Error::InvalidParameter {
            field: "link".into(),
            reason: format!("{link} out of range for {} links", spec.len()),
        });
    }
    let tol = cli.tolerance.unwrap_or(1e-10 * spec.links[link].p_max);
    let demo = energy_ratio_demo(&spec, link, &spec.p_max(), tol, cli.max_iters.unwrap_or(50))?;
    if !cli.quiet {
        say!("iteration lambda F");
        for (i, (l, f)) in demo.report.lambda_trace.iter().zip(&demo.report.f_trace).enumerate() {
            say!("{:9} {l:.9e} {f:.3e}", i + 1);
        }
    }
    say!("power range [W]: [{:.6e}, {:.6e}]", demo.lo, demo.hi);
    say!("minimizer [W]: {:.9e}", demo.report.x);
    say!("energy per bit [J/bit]: {:.9e}", demo.report.lambda);
    say!("grid minimum [J/bit]: {:.9e}", demo.grid_min);
    Ok(if demo.report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn cmd_sweep(cli: &Cli, runs: Option<usize>, plot: Option<&PathBuf>) -> Result<ExitCode> {
    let mut plan = match &cli.config {
        Some(path) => load_plan(path)?,
        None if cli.full => ExperimentPlan {
            scenario: ScenarioConfig::default(),
            ..ExperimentPlan::default()
        },
        None => ExperimentPlan::default(),
    };
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    if let Some(r) = runs {
        plan.monte_carlo_runs = r;
    }
    if let Some(t) = cli.tolerance {
        plan.brd_epsilon = t;
    }
    if let Some(n) = cli.max_iters {
        plan.brd_max_rounds = n;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let started = Instant::now();
    let rows = run_experiment(&plan)?;
    emit_csv(&rows, &out)?;
    if let Some(p) = plot {
        emit_plot_script(&out.display().to_string(), p)?;
    }
    if !cli.quiet {
        let failed = rows
            .iter()
            .filter(|r| r.status == edpower_cli::RunStatus::Error)
            .count();
        say!("rows: {} ({failed} solver failures)", rows.len());
    }
    say!("wrote {} in {:.1} s", out.display(), started.elapsed().as_secs_f64());
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest(cli: &Cli) -> ExitCode {
    let checks = run_selftest(cli.seed.unwrap_or(0));
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        if !cli.quiet || !c.passed {
            say!("[{}] {} ({})", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Generate => {
            write_out(cli, &spec_to_toml(&game(cli)?))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Feasibility => cmd_feasibility(cli),
        Command::Brd {
            schedule,
            relax,
            fallback,
        } => cmd_brd(cli, *schedule, *relax, *fallback),
        Command::MbiSum { start } => cmd_mbi(cli, *start, false),
        Command::MbiMin { start } => cmd_mbi(cli, *start, true),
        Command::DinkelbachDemo { link } => cmd_dinkelbach(cli, *link),
        Command::Sweep { runs, plot } => cmd_sweep(cli, *runs, plot.as_ref()),
        Command::Selftest => Ok(cmd_selftest(cli)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
