//! Monte-Carlo sweeps over the power budget.

use std::fmt;
use std::str::FromStr;

use edpower::central::{cost_min, cost_sum, delay_cost_mean, energy_cost_network, run_mbi_min, run_mbi_sum, MbiConfig};
use edpower::feasibility::{check_necessary, check_sufficient, find_feasible_start};
use edpower::game::{run_brd, run_brd_with_beliefs, Beliefs, BrdConfig, QosFallback, Termination};
use edpower::scenario::{generate, ScenarioConfig};
use edpower::{Error, GameSpec, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Solver configurations compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Best-response dynamics with QoS thresholds, dropped to zero when a best response is infeasible.
    BrdQos,
    /// Best-response dynamics with queue stability only.
    BrdRelaxed,
    /// Centralized sum-cost MBI, warm-started at the relaxed equilibrium.
    MbiSum,
    /// Centralized max-delay MBI, warm-started at the relaxed equilibrium.
    MbiMin,
    /// `BrdQos` where players act on perturbed channel parameters.
    BrdPerturbed,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::BrdQos,
        Scheme::BrdRelaxed,
        Scheme::MbiSum,
        Scheme::MbiMin,
        Scheme::BrdPerturbed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::BrdQos => "brd-qos",
            Scheme::BrdRelaxed => "brd-relaxed",
            Scheme::MbiSum => "mbi-sum",
            Scheme::MbiMin => "mbi-min",
            Scheme::BrdPerturbed => "brd-perturbed",
        }
    }

    /// Whether rows are produced once per QoS level.
    pub fn uses_theta(self) -> bool {
        matches!(self, Scheme::BrdQos | Scheme::BrdPerturbed)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioConfig,
    pub pmax_sweep_dbw: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub theta_levels: Vec<f64>,
    pub rho_levels: Vec<f64>,
    pub monte_carlo_runs: usize,
    pub seed: u64,
    /// Largest relative error in the believed parameters, in percent.
    pub perturbation_pct: f64,
    pub brd_epsilon: f64,
    pub brd_max_rounds: usize,
    /// Relative stopping threshold of the MBI solvers.
    pub mbi_epsilon: f64,
    pub mbi_max_iters: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::desk(),
            pmax_sweep_dbw: vec![-40.0, -30.0, -20.0, -10.0],
            schemes: Scheme::ALL.to_vec(),
            theta_levels: vec![1.0 - 1e-2, 1.0 - 1e-3],
            rho_levels: vec![1.0, 10.0],
            monte_carlo_runs: 10,
            seed: 0,
            perturbation_pct: 30.0,
            brd_epsilon: 1e-4,
            brd_max_rounds: 500,
            mbi_epsilon: MbiConfig::default().epsilon,
            mbi_max_iters: MbiConfig::default().max_iters,
        }
    }
}

fn bad(field: &str, reason: &str) -> Error {
    Error::InvalidParameter {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.pmax_sweep_dbw.is_empty() || self.pmax_sweep_dbw.iter().any(|x| !x.is_finite()) {
            return Err(bad("pmax_sweep_dbw", "must be a non-empty list of finite values"));
        }
        if self.schemes.is_empty() {
            return Err(bad("schemes", "must not be empty"));
        }
        if self.theta_levels.is_empty()
            || self
                .theta_levels
                .iter()
                .any(|t| !(*t > self.scenario.arrival_prob && *t < 1.0))
        {
            return Err(bad(
                "theta_levels",
                "every level must lie in (arrival_prob, 1): QoS requires theta > lambda",
            ));
        }
        if self.rho_levels.is_empty() || self.rho_levels.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(bad("rho_levels", "every level must be positive and finite"));
        }
        if self.monte_carlo_runs == 0 {
            return Err(bad("monte_carlo_runs", "must be >= 1"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(bad("seed", "must fit in a signed 64-bit integer"));
        }
        if !(self.perturbation_pct >= 0.0 && self.perturbation_pct < 100.0) {
            return Err(bad("perturbation_pct", "must lie in [0, 100)"));
        }
        if !(self.brd_epsilon > 0.0) || self.brd_max_rounds == 0 {
            return Err(bad("brd_epsilon", "BRD needs epsilon > 0 and at least one round"));
        }
        if !(self.mbi_epsilon >= 0.0) || self.mbi_max_iters == 0 {
            return Err(bad("mbi_epsilon", "MBI needs epsilon >= 0 and at least one iteration"));
        }
        Ok(())
    }

    /// Scenario seed of Monte-Carlo run `run`; every budget and scheme sees the same channels.
    pub fn scenario_seed(&self, run: usize) -> u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(run as u64);
        rand::Rng::gen::<u64>(&mut rng) & i64::MAX as u64
    }

    fn brd_config(&self) -> BrdConfig {
        BrdConfig {
            epsilon: self.brd_epsilon,
            max_rounds: self.brd_max_rounds,
            qos_fallback: QosFallback::RelaxToZero,
            ..BrdConfig::default()
        }
    }

    fn mbi_config(&self) -> MbiConfig {
        MbiConfig {
            epsilon: self.mbi_epsilon,
            max_iters: self.mbi_max_iters,
            ..MbiConfig::default()
        }
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &scheme in &self.schemes {
            let thetas: Vec<Option<f64>> = if scheme.uses_theta() {
                self.theta_levels.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for &rho in &self.rho_levels {
                for &theta in &thetas {
                    for &p_max_dbw in &self.pmax_sweep_dbw {
                        for run in 0..self.monte_carlo_runs {
                            cells.push(Cell {
                                scheme,
                                theta,
                                rho,
                                p_max_dbw,
                                run,
                            });
                        }
                    }
                }
            }
        }
        cells
    }
}

/// Scenario instance behind a row: the plan's scenario with the row's seed,
/// budget, delay weight and QoS level.
pub fn instance(
    scenario: &ScenarioConfig,
    scenario_seed: u64,
    p_max_dbw: f64,
    rho: f64,
    theta: f64,
) -> Result<GameSpec> {
    let cfg = ScenarioConfig {
        seed: scenario_seed,
        p_max_dbw,
        rho,
        theta,
        ..scenario.clone()
    };
    generate(&cfg)
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    scheme: Scheme,
    theta: Option<f64>,
    rho: f64,
    p_max_dbw: f64,
    run: usize,
}

/// Outcome of one solver run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    /// Iteration budget exhausted; the row holds the last iterate.
    MaxIters,
    /// No feasible point under the scheme's constraints.
    Infeasible,
    /// The solver failed; cost columns are NaN.
    Error,
}

/// One line of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scheme: Scheme,
    /// QoS level, NaN for schemes without QoS.
    pub theta: f64,
    pub rho: f64,
    pub p_max_dbw: f64,
    pub run: usize,
    pub scenario_seed: u64,
    pub status: RunStatus,
    /// Whether the per-link sufficient feasibility check passed.
    pub sufficient_ok: bool,
    pub qos_relaxed: bool,
    pub iterations: usize,
    pub c_sum: f64,
    pub c_min: f64,
    pub energy_cost: f64,
    pub delay_cost: f64,
    pub c_k_min: f64,
    pub c_k_max: f64,
    pub mean_power_w: f64,
    /// Sum cost of the comparison point: the warm start for MBI schemes, the
    /// unperturbed equilibrium for `brd-perturbed`, NaN otherwise.
    pub reference_c_sum: f64,
    /// Semicolon-separated transmit powers in watts.
    pub powers_w: String,
}

impl Row {
    pub fn powers(&self) -> Result<Vec<f64>> {
        if self.powers_w.is_empty() {
            return Ok(Vec::new());
        }
        self.powers_w
            .split(';')
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("powers_w entry `{s}`: {e}")))
            })
            .collect()
    }

    /// Relative true-parameter cost excess over the reference point.
    pub fn reference_gap(&self) -> f64 {
        (self.c_sum - self.reference_c_sum) / self.reference_c_sum
    }
}

pub fn format_powers(p: &[f64]) -> String {
    p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

struct Solved {
    powers: Vec<f64>,
    status: RunStatus,
    iterations: usize,
    qos_relaxed: bool,
    reference_c_sum: f64,
}

fn brd_status(t: &Termination) -> RunStatus {
    match t {
        Termination::Converged => RunStatus::Converged,
        Termination::MaxRounds => RunStatus::MaxIters,
        Termination::Infeasible { .. } => RunStatus::Infeasible,
    }
}

/// QoS-constrained BRD from a feasible start when one exists, otherwise the
/// relaxed game from full power.
fn brd_with_fallback(spec: &GameSpec, cfg: &BrdConfig, beliefs: &Beliefs) -> Result<edpower::game::SolveReport> {
    let start = if check_necessary(spec).necessary_ok {
        find_feasible_start(spec).ok()
    } else {
        None
    };
    match start {
        Some(start) => run_brd_with_beliefs(spec, &start, cfg, beliefs),
        None => {
            let relaxed = BrdConfig {
                relax_qos: true,
                ..cfg.clone()
            };
            let mut report = run_brd_with_beliefs(spec, &spec.p_max(), &relaxed, beliefs)?;
            report.qos_relaxed = true;
            Ok(report)
        }
    }
}

fn relaxed_ne(spec: &GameSpec, cfg: &BrdConfig) -> Result<Vec<f64>> {
    let relaxed = BrdConfig {
        relax_qos: true,
        ..cfg.clone()
    };
    Ok(run_brd(spec, &spec.p_max(), &relaxed)?.powers.into_inner())
}

fn solve(plan: &ExperimentPlan, cell: &Cell, spec: &GameSpec, scenario_seed: u64) -> Result<Solved> {
    let brd = plan.brd_config();
    match cell.scheme {
        Scheme::BrdQos | Scheme::BrdRelaxed => {
            let report = if cell.scheme == Scheme::BrdQos {
                brd_with_fallback(spec, &brd, &Beliefs::exact(spec.len()))?
            } else {
                run_brd(spec, &spec.p_max(), &BrdConfig { relax_qos: true, ..brd })?
            };
            Ok(Solved {
                status: brd_status(&report.termination),
                iterations: report.rounds,
                qos_relaxed: report.qos_relaxed,
                powers: report.powers.into_inner(),
                reference_c_sum: f64::NAN,
            })
        }
        Scheme::BrdPerturbed => {
            let exact = brd_with_fallback(spec, &brd, &Beliefs::exact(spec.len()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed);
            rng.set_stream(1);
            let beliefs = Beliefs::perturbed(&mut rng, spec.len(), plan.perturbation_pct / 100.0);
            let report = brd_with_fallback(spec, &brd, &beliefs)?;
            Ok(Solved {
                status: brd_status(&report.termination),
                iterations: report.rounds,
                qos_relaxed: report.qos_relaxed,
                powers: report.powers.into_inner(),
                reference_c_sum: cost_sum(&exact.powers, spec).unwrap_or(f64::NAN),
            })
        }
        Scheme::MbiSum | Scheme::MbiMin => {
            let start = relaxed_ne(spec, &brd)?;
            let cfg = plan.mbi_config();
            let report = if cell.scheme == Scheme::MbiSum {
                run_mbi_sum(spec, &start, &cfg)?
            } else {
                run_mbi_min(spec, &start, &cfg)?
            };
            Ok(Solved {
                status: if report.converged {
                    RunStatus::Converged
                } else {
                    RunStatus::MaxIters
                },
                iterations: report.iterations,
                qos_relaxed: false,
                powers: report.powers.into_inner(),
                reference_c_sum: cost_sum(&start, spec).unwrap_or(f64::NAN),
            })
        }
    }
}

fn run_cell(plan: &ExperimentPlan, cell: &Cell) -> Row {
    let scenario_seed = plan.scenario_seed(cell.run);
    // schemes without QoS still need a valid threshold to build the instance
    let theta = cell.theta.unwrap_or(plan.theta_levels[0]);
    let mut row = Row {
        scheme: cell.scheme,
        theta: cell.theta.unwrap_or(f64::NAN),
        rho: cell.rho,
        p_max_dbw: cell.p_max_dbw,
        run: cell.run,
        scenario_seed,
        status: RunStatus::Error,
        sufficient_ok: false,
        qos_relaxed: false,
        iterations: 0,
        c_sum: f64::NAN,
        c_min: f64::NAN,
        energy_cost: f64::NAN,
        delay_cost: f64::NAN,
        c_k_min: f64::NAN,
        c_k_max: f64::NAN,
        mean_power_w: f64::NAN,
        reference_c_sum: f64::NAN,
        powers_w: String::new(),
    };
    let Ok(spec) = instance(&plan.scenario, scenario_seed, cell.p_max_dbw, cell.rho, theta) else {
        return row;
    };
    row.sufficient_ok = check_sufficient(&spec).ok;
    let solved = match solve(plan, cell, &spec, scenario_seed) {
        Ok(s) => s,
        Err(Error::Infeasible { .. } | Error::NoFeasiblePoint | Error::InfeasibleStart(_)) => {
            row.status = RunStatus::Infeasible;
            return row;
        }
        Err(_) => return row,
    };
    fill_costs(&mut row, &spec, &solved.powers);
    row.status = solved.status;
    row.iterations = solved.iterations;
    row.qos_relaxed = solved.qos_relaxed;
    row.reference_c_sum = solved.reference_c_sum;
    row
}

/// Cost columns of `row` recomputed from `powers` on `spec`.
pub fn fill_costs(row: &mut Row, spec: &GameSpec, powers: &[f64]) {
    let nan_on_err = |r: Result<f64>| r.unwrap_or(f64::NAN);
    row.c_sum = nan_on_err(cost_sum(powers, spec));
    row.c_min = nan_on_err(cost_min(powers, spec));
    row.energy_cost = energy_cost_network(powers, spec);
    row.delay_cost = nan_on_err(delay_cost_mean(powers, spec));
    let ck = spec.link_costs(powers);
    row.c_k_min = ck.iter().copied().fold(f64::INFINITY, f64::min);
    row.c_k_max = ck.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    row.mean_power_w = powers.iter().sum::<f64>() / powers.len() as f64;
    row.powers_w = format_powers(powers);
}

/// Runs every (scheme, rho, theta, budget, run) cell. Failed runs become rows
/// with a non-converged status; the sweep never aborts. Rows come back in a
/// fixed order whatever the thread scheduling.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<Row>> {
    plan.validate()?;
    Ok(plan.cells().par_iter().map(|c| run_cell(plan, c)).collect())
}
