//! Max-delay objective via an auxiliary variable `t`:
//!
//! ```text
//! minimize rho / t + sum(p + P_C) / (R sum S)
//! subject to t <= R (S_l - lambda_l) for every link l
//! ```
//!
//! The blocks are the K powers and `t`.

use crate::error::{Error, Result};
use crate::model::{GameSpec, PowerVector, SuccessCurve};

use super::block::BlockView;
use super::mbi::{mbi_generic, BlockProblem, MbiConfig};
use super::sum::{scan_grid, sign_scan_roots};
use super::{cost_min, energy_cost_network, projected_gradient_residual, uniform_rho_rate, CentralReport};

/// Relative inward shift of the feasible interval ends, absorbing round-off.
const INTERVAL_SHRINK: f64 = 1e-12;

/// Relative slack allowed on `t <= R (S - lambda)` when evaluating the objective.
const CONSTRAINT_SLACK: f64 = 1e-9;

/// Optimal `t` for fixed powers: `R min_l (S_l - lambda_l)`.
pub fn solve_block_t(p: &[f64], spec: &GameSpec) -> Result<f64> {
    let (_, rate) = uniform_rho_rate(spec)?;
    let mut worst = f64::INFINITY;
    for (l, link) in spec.links.iter().enumerate() {
        let margin = link.s(spec.sinr(l, p)) - link.success.lambda;
        if !(margin > 0.0) {
            return Err(Error::QueueUnstable { link: Some(l) });
        }
        worst = worst.min(margin);
    }
    Ok(rate * worst)
}

/// Admissible range of `p_k` for fixed `t` and other powers.
#[derive(Debug, Clone, PartialEq)]
pub struct MinBlockInterval {
    pub floor: f64,
    pub ceiling: f64,
    /// SINR each link needs: `S_l^-1(t / R + lambda_l)`.
    pub required_sinr: Vec<f64>,
}

/// Power range keeping every link's success margin at least `t / R`.
///
/// Link k's own constraint gives the floor `b_k omega_k / (alpha_k - b_k phi_k)`;
/// each interferer l gives the ceiling `(alpha_l p_l / b_l - psi_l) / beta_{l,k}`,
/// with `psi_l = sigma2_l + phi_l p_l + sum_{j != l, k} beta_{l,j} p_j`.
pub fn block_min_interval(k: usize, p: &[f64], t: f64, spec: &GameSpec) -> Result<MinBlockInterval> {
    let (_, rate) = uniform_rho_rate(spec)?;
    let empty = |floor: f64, ceiling: f64| Error::EmptyInterval {
        block: k,
        floor,
        ceiling,
    };
    let mut required = Vec::with_capacity(spec.len());
    for link in &spec.links {
        let target = t / rate + link.success.lambda;
        if target >= 1.0 {
            return Err(empty(f64::INFINITY, link.p_max));
        }
        required.push(if target <= 0.0 {
            0.0
        } else {
            link.success.inverse(target)?
        });
    }
    let own = &spec.links[k].coeffs;
    let denom = own.alpha - required[k] * own.phi;
    if denom <= 0.0 {
        return Err(empty(f64::INFINITY, spec.links[k].p_max));
    }
    let floor = required[k] * spec.omega(k, p) / denom;
    let mut ceiling = spec.links[k].p_max;
    for (l, link) in spec.links.iter().enumerate() {
        let c = &link.coeffs;
        if l == k || c.beta[k] == 0.0 || required[l] == 0.0 {
            continue;
        }
        let psi = spec.omega(l, p) - c.beta[k] * p[k] + c.phi * p[l];
        ceiling = ceiling.min((c.alpha * p[l] / required[l] - psi) / c.beta[k]);
    }
    let (floor, ceiling) = (floor * (1.0 + INTERVAL_SHRINK), ceiling * (1.0 - INTERVAL_SHRINK));
    if floor > ceiling {
        return Err(empty(floor, ceiling));
    }
    Ok(MinBlockInterval {
        floor,
        ceiling,
        required_sinr: required,
    })
}

/// Minimizer of the network energy per bit in `p_k` over the admissible range.
pub fn solve_block_min(k: usize, p: &[f64], t: f64, spec: &GameSpec, cfg: &MbiConfig) -> Result<f64> {
    let iv = block_min_interval(k, p, t, spec)?;
    let view = BlockView::new(spec, k, p);
    let mut candidates = vec![iv.floor];
    if iv.ceiling > iv.floor {
        let grid = scan_grid(iv.floor, iv.ceiling, cfg.grid_points);
        candidates.extend(sign_scan_roots(
            |x| Some(view.energy(x).1),
            &grid,
            cfg.stationary_tol * iv.ceiling,
        ));
        candidates.push(iv.ceiling);
    }
    candidates.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for c in candidates {
        let v = view.energy(c).0;
        if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
            best = Some((c, v));
        }
    }
    best.map(|b| b.0).ok_or(Error::AllCandidatesInfeasible { block: k })
}

struct MinProblem<'a> {
    spec: &'a GameSpec,
    cfg: &'a MbiConfig,
    rho: f64,
    rate: f64,
}

impl BlockProblem for MinProblem<'_> {
    fn num_blocks(&self) -> usize {
        self.spec.len() + 1
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let (p, t) = x.split_at(self.spec.len());
        let t = t[0];
        if !(t > 0.0) {
            return f64::INFINITY;
        }
        for (l, link) in self.spec.links.iter().enumerate() {
            let margin = link.s(self.spec.sinr(l, p)) - link.success.lambda;
            if t > self.rate * margin * (1.0 + CONSTRAINT_SLACK) {
                return f64::INFINITY;
            }
        }
        self.rho / t + energy_cost_network(p, self.spec)
    }

    fn solve_block(&self, b: usize, x: &[f64]) -> Result<Option<f64>> {
        let k_total = self.spec.len();
        let (p, t) = x.split_at(k_total);
        if b == k_total {
            return solve_block_t(p, self.spec).map(Some);
        }
        match solve_block_min(b, p, t[0], self.spec, self.cfg) {
            Ok(v) => Ok(Some(v)),
            Err(Error::EmptyInterval { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Maximum block improvement on the max-delay objective. Block `K` is `t`,
/// initialized at its optimum for `start`.
pub fn run_mbi_min(spec: &GameSpec, start: &[f64], cfg: &MbiConfig) -> Result<CentralReport> {
    spec.check_box(start)?;
    let (rho, rate) = uniform_rho_rate(spec)?;
    let t0 = solve_block_t(start, spec)?;
    let mut x0 = start.to_vec();
    x0.push(t0);
    let problem = MinProblem { spec, cfg, rho, rate };
    let out = mbi_generic(&problem, &x0, cfg)?;
    let k_total = spec.len();
    let direct = |x: &[f64]| cost_min(&x[..k_total], spec).unwrap_or(f64::INFINITY);
    let mut t_trace = vec![t0];
    t_trace.extend(out.x_trace.iter().map(|x| x[k_total]));
    let mut direct_trace = vec![direct(&x0)];
    direct_trace.extend(out.x_trace.iter().map(|x| direct(x)));
    let powers = out.x[..k_total].to_vec();
    let lower = vec![0.0; k_total];
    // informational: the coupling constraint makes the max-delay cost non-smooth
    let kkt_residual = projected_gradient_residual(
        |x| cost_min(x, spec).unwrap_or(f64::INFINITY),
        &powers,
        &lower,
        &spec.p_max(),
    );
    Ok(CentralReport {
        powers: PowerVector::new(powers)?,
        objective_trace: out.objective_trace,
        chosen_blocks: out.chosen_blocks,
        decrements: out.decrements,
        t_trace,
        direct_trace,
        iterations: out.iterations,
        converged: out.converged,
        kkt_residual,
    })
}
