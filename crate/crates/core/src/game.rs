//! Distributed power control: single-link best responses and best-response dynamics.
//!
//! Each player sees only its own link parameters, its own power and the SINR
//! measured at its receiver. The aggregate interference is recovered locally as
//! `omega = alpha p / gamma - phi p`, so no player ever reads another's power.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, InfeasibleCause, Result};
use crate::feasibility::{meets_qos, qos_floor};
use crate::model::{link_cost, log_grid, residual_unchecked, GameSpec, LinkSpec, PowerVector, SuccessCurve};
use crate::numerics::{expand_bracket, BracketedRootProblem};

/// Relative offset above the queue-stability power used as the open lower end.
pub const STABILITY_GUARD: f64 = 1e-9;

/// Tolerance on the uniqueness-condition expression.
pub const UNIQUENESS_TOL: f64 = 1e-12;

/// Order in which players update within a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Everyone responds to the previous round's powers.
    Synchronous,
    /// Players 0..K in turn, each seeing the latest powers.
    Sequential,
    /// A fresh random order every round.
    Randomized,
}

/// What to do when a best response becomes infeasible under the QoS constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QosFallback {
    /// Stop and report the infeasible link.
    Enforce,
    /// Restart the whole run from full power with the QoS thresholds dropped.
    RelaxToZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrdConfig {
    /// Stop once `|p(n) - p(n-1)|^2 / |p(n)|^2 <= epsilon`.
    pub epsilon: f64,
    pub max_rounds: usize,
    pub schedule: Schedule,
    /// Drop the QoS thresholds from the start (only queue stability remains).
    pub relax_qos: bool,
    pub qos_fallback: QosFallback,
    /// Seed for the randomized schedule.
    pub seed: u64,
}

impl Default for BrdConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_rounds: 500,
            schedule: Schedule::Sequential,
            relax_qos: false,
            qos_fallback: QosFallback::Enforce,
            seed: 0,
        }
    }
}

impl BrdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(crate::error::invalid("epsilon", "must be > 0"));
        }
        if self.max_rounds == 0 {
            return Err(crate::error::invalid("max_rounds", "must be >= 1"));
        }
        Ok(())
    }
}

/// Which constraint, if any, binds at a best response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    Interior,
    /// The QoS (or stability) floor.
    Floor,
    /// The power budget.
    Ceiling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    pub power: f64,
    pub clamp: Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Converged,
    MaxRounds,
    Infeasible { link: usize, cause: InfeasibleCause },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub powers: PowerVector,
    pub per_link_cost: Vec<f64>,
    pub rounds: usize,
    /// Power vector after each round.
    pub trace: Vec<Vec<f64>>,
    /// Convergence metric after each round.
    pub metric_trace: Vec<f64>,
    pub termination: Termination,
    /// Links held at their QoS floor in the final round.
    pub active_qos: Vec<usize>,
    /// The run was restarted with QoS dropped after an infeasible best response.
    pub qos_relaxed: bool,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Lowest admissible power: the QoS floor, or just above the queue-stability power.
fn power_floor(link: &LinkSpec, omega: f64, qos: bool) -> Result<f64, InfeasibleCause> {
    if qos {
        return qos_floor(link, omega);
    }
    let p_lambda = link
        .stability_power(omega)
        .map_err(|_| InfeasibleCause::QueueStability {
            p_floor: f64::INFINITY,
            p_max: link.p_max,
        })?;
    Ok(p_lambda * (1.0 + STABILITY_GUARD) + 1e-300)
}

/// Best response of a link against aggregate interference `omega`.
///
/// The cost is quasi-convex above the stability power, so the answer is the
/// stationary point clamped to `[floor, p_max]`.
pub fn best_response_from_omega(link: &LinkSpec, omega: f64, qos: bool) -> Result<BestResponse, InfeasibleCause> {
    let floor = power_floor(link, omega, qos)?;
    if floor > link.p_max {
        return Err(if qos {
            InfeasibleCause::PowerBudget {
                p_min: floor,
                p_max: link.p_max,
            }
        } else {
            InfeasibleCause::QueueStability {
                p_floor: floor,
                p_max: link.p_max,
            }
        });
    }
    let residual = |p: f64| residual_unchecked(link, p, omega);
    if residual(floor) >= 0.0 {
        return Ok(BestResponse {
            power: floor,
            clamp: Clamp::Floor,
        });
    }
    if residual(link.p_max) <= 0.0 {
        return Ok(BestResponse {
            power: link.p_max,
            clamp: Clamp::Ceiling,
        });
    }
    let power = BracketedRootProblem::new(residual, floor, link.p_max)
        .bisect()
        .expect("residual changes sign on [floor, p_max]");
    Ok(BestResponse {
        power,
        clamp: Clamp::Interior,
    })
}

/// Best response of link `k` to the other entries of `p` (`p[k]` is ignored).
pub fn best_response(k: usize, p: &[f64], spec: &GameSpec, qos: bool) -> Result<BestResponse> {
    best_response_from_omega(&spec.links[k], spec.omega(k, p), qos)
        .map_err(|cause| Error::Infeasible { link: k, cause })
}

/// Unconstrained minimizer of the link cost above the stability power.
pub fn stationary_power(link: &LinkSpec, omega: f64) -> Result<f64> {
    let lo = link.stability_power(omega)? * (1.0 + STABILITY_GUARD) + 1e-300;
    let residual = |p: f64| residual_unchecked(link, p, omega);
    let hint = (2.0 * lo).max(omega / link.coeffs.alpha);
    let (lo, hi) = expand_bracket(residual, lo, hint)
        .map_err(|e| Error::ModelViolation(format!("stationary point not bracketed: {e}")))?;
    BracketedRootProblem::new(residual, lo, hi).bisect()
}

/// Aggregate interference recovered from a link's own power and measured SINR.
pub fn reconstruct_omega(link: &LinkSpec, p: f64, gamma: f64) -> Result<f64> {
    if !(p > 0.0 && gamma > 0.0) {
        return Err(Error::Domain(format!(
            "interference reconstruction needs p > 0 and gamma > 0, got p = {p}, gamma = {gamma}"
        )));
    }
    Ok(link.coeffs.alpha * p / gamma - link.coeffs.phi * p)
}

/// Multiplicative errors in what each player believes about its own link.
#[derive(Debug, Clone, PartialEq)]
pub struct Beliefs {
    pub alpha: Vec<f64>,
    pub phi: Vec<f64>,
    /// Bias of the SINR measurement.
    pub gamma: Vec<f64>,
}

impl Beliefs {
    pub fn exact(k: usize) -> Self {
        Self {
            alpha: vec![1.0; k],
            phi: vec![1.0; k],
            gamma: vec![1.0; k],
        }
    }

    /// Independent factors `1 +/- U(0, fraction)` with a random sign.
    pub fn perturbed<R: Rng + ?Sized>(rng: &mut R, k: usize, fraction: f64) -> Self {
        let mut factor = || {
            let m: f64 = rng.gen_range(0.0..=fraction);
            if rng.gen_bool(0.5) {
                1.0 + m
            } else {
                1.0 - m
            }
        };
        let alpha = (0..k).map(|_| factor()).collect();
        let phi = (0..k).map(|_| factor()).collect();
        let gamma = (0..k).map(|_| factor()).collect();
        Self { alpha, phi, gamma }
    }

    fn believed_link(&self, k: usize, link: &LinkSpec) -> LinkSpec {
        let mut l = link.clone();
        l.coeffs.alpha *= self.alpha[k];
        l.coeffs.phi *= self.phi[k];
        l
    }
}

/// One player's update from purely local information.
fn player_update(
    believed: &LinkSpec,
    p_k: f64,
    measured_gamma: f64,
    qos: bool,
) -> Result<BestResponse, InfeasibleCause> {
    // noise is the smallest interference a receiver can see
    let omega = reconstruct_omega(believed, p_k, measured_gamma)
        .map(|w| w.max(believed.coeffs.sigma2))
        .map_err(|_| InfeasibleCause::DegenerateDenominator)?;
    best_response_from_omega(believed, omega, qos)
}

fn convergence_metric(prev: &[f64], next: &[f64]) -> f64 {
    let diff: f64 = prev.iter().zip(next).map(|(a, b)| (a - b).powi(2)).sum();
    let norm: f64 = next.iter().map(|v| v * v).sum();
    diff / norm
}

/// Best-response dynamics from `start`.
pub fn run_brd(spec: &GameSpec, start: &[f64], cfg: &BrdConfig) -> Result<SolveReport> {
    run_brd_with_beliefs(spec, start, cfg, &Beliefs::exact(spec.len()))
}

/// Best-response dynamics where players act on possibly wrong beliefs about
/// their own links. Costs in the report use the true parameters.
pub fn run_brd_with_beliefs(spec: &GameSpec, start: &[f64], cfg: &BrdConfig, beliefs: &Beliefs) -> Result<SolveReport> {
    cfg.validate()?;
    spec.check_box(start)?;
    if beliefs.alpha.len() != spec.len() || beliefs.phi.len() != spec.len() || beliefs.gamma.len() != spec.len() {
        return Err(Error::Dimension("beliefs must have one entry per link".into()));
    }
    if let Some(k) = start.iter().position(|p| *p <= 0.0) {
        return Err(Error::InfeasibleStart(format!(
            "p[{k}] = 0: a silent link cannot measure its SINR"
        )));
    }
    let qos = !cfg.relax_qos;
    if qos && !meets_qos(spec, start) {
        return Err(Error::InfeasibleStart("start does not meet every QoS threshold".into()));
    }
    let mut warnings = uniqueness_warnings(spec);
    let report = brd_loop(spec, start, cfg, beliefs, qos)?;
    if let (Termination::Infeasible { .. }, true, QosFallback::RelaxToZero) =
        (report.termination, qos, cfg.qos_fallback)
    {
        let mut relaxed = brd_loop(spec, &spec.p_max(), cfg, beliefs, false)?;
        relaxed.qos_relaxed = true;
        warnings.push(format!(
            "QoS dropped after infeasible best response ({:?})",
            report.termination
        ));
        relaxed.warnings = warnings;
        return Ok(relaxed);
    }
    Ok(SolveReport { warnings, ..report })
}

fn uniqueness_warnings(spec: &GameSpec) -> Vec<String> {
    let grid = default_uniqueness_grid();
    spec.links
        .iter()
        .enumerate()
        .filter_map(|(k, l)| {
            let check = check_uniqueness_condition(&l.success, &grid);
            (!check.holds).then(|| {
                format!(
                    "link {k}: uniqueness condition fails (worst value {:e} at gamma = {:e}); the equilibrium may not be unique",
                    check.worst, check.worst_gamma
                )
            })
        })
        .collect()
}

fn brd_loop(spec: &GameSpec, start: &[f64], cfg: &BrdConfig, beliefs: &Beliefs, qos: bool) -> Result<SolveReport> {
    let k_total = spec.len();
    let believed: Vec<LinkSpec> = spec
        .links
        .iter()
        .enumerate()
        .map(|(k, l)| beliefs.believed_link(k, l))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..k_total).collect();
    let mut p = start.to_vec();
    let mut trace = Vec::new();
    let mut metric_trace = Vec::new();
    let mut clamps = vec![Clamp::Interior; k_total];
    let mut termination = Termination::MaxRounds;

    'rounds: for _ in 0..cfg.max_rounds {
        let prev = p.clone();
        if cfg.schedule == Schedule::Randomized {
            order.shuffle(&mut rng);
        }
        for &k in &order {
            let view = if cfg.schedule == Schedule::Synchronous {
                &prev
            } else {
                &p
            };
            let measured = spec.sinr(k, view) * beliefs.gamma[k];
            match player_update(&believed[k], view[k], measured, qos) {
                Ok(br) => {
                    p[k] = br.power;
                    clamps[k] = br.clamp;
                }
                Err(cause) => {
                    termination = Termination::Infeasible { link: k, cause };
                    break 'rounds;
                }
            }
        }
        let metric = convergence_metric(&prev, &p);
        trace.push(p.clone());
        metric_trace.push(metric);
        if metric <= cfg.epsilon {
            termination = Termination::Converged;
            break;
        }
    }

    let active_qos = if qos {
        (0..k_total).filter(|k| clamps[*k] == Clamp::Floor).collect()
    } else {
        Vec::new()
    };
    Ok(SolveReport {
        per_link_cost: spec.link_costs(&p),
        powers: PowerVector::new(p)?,
        rounds: trace.len(),
        trace,
        metric_trace,
        termination,
        active_qos,
        qos_relaxed: false,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniquenessCheck {
    pub holds: bool,
    /// Largest value of the condition expression over the grid.
    pub worst: f64,
    pub worst_gamma: f64,
}

/// SINR grid for the uniqueness check: 10^4 log-spaced points on `[1e-6, 1e3]` plus zero.
pub fn default_uniqueness_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    g.extend(log_grid(1e-6, 1e3, 10_000));
    g
}

/// `S S' - gamma S'^2 + gamma S S''`, which must be non-positive for the
/// best-response map to be a standard interference function.
pub fn uniqueness_expression<C: SuccessCurve + ?Sized>(curve: &C, gamma: f64) -> f64 {
    let (s, d1, d2) = (
        curve.value(gamma),
        curve.derivative(gamma),
        curve.second_derivative(gamma),
    );
    s * d1 - gamma * d1 * d1 + gamma * s * d2
}

pub fn check_uniqueness_condition<C: SuccessCurve + ?Sized>(curve: &C, grid: &[f64]) -> UniquenessCheck {
    let (worst_gamma, worst) =
        grid.iter()
            .map(|g| (*g, uniqueness_expression(curve, *g)))
            .fold(
                (f64::NAN, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
    UniquenessCheck {
        holds: worst <= UNIQUENESS_TOL,
        worst,
        worst_gamma,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeCheck {
    pub verified: bool,
    /// Relative cost reduction available to each link by deviating.
    pub gains: Vec<f64>,
}

/// Checks that no link can lower its cost by more than `tol` (relative) alone.
pub fn verify_ne(spec: &GameSpec, p: &[f64], tol: f64, qos: bool) -> NeCheck {
    let gains: Vec<f64> = (0..spec.len())
        .map(|k| {
            let link = &spec.links[k];
            let current = link_cost(link, p[k], spec.sinr(k, p)).unwrap_or(f64::INFINITY);
            let Ok(br) = best_response(k, p, spec, qos) else {
                return f64::NAN;
            };
            let omega = spec.omega(k, p);
            let best = link_cost(link, br.power, link.coeffs.gamma(br.power, omega)).unwrap_or(f64::INFINITY);
            if current.is_infinite() {
                f64::INFINITY
            } else {
                (current - best) / current
            }
        })
        .collect();
    NeCheck {
        verified: gains.iter().all(|g| *g <= tol),
        gains,
    }
}
