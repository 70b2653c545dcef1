//! Centralized benchmarks: network-wide cost functions, the maximum block
//! improvement driver and its sum-cost and max-delay instantiations, and
//! Dinkelbach's method for single-ratio problems.

mod block;
mod dinkelbach;
mod mbi;
mod minmax;
mod sum;

pub use block::BlockView;
pub use dinkelbach::{dinkelbach, DinkelbachReport};
pub use mbi::{mbi_generic, BlockProblem, MbiConfig, MbiOutcome};
pub use minmax::{block_min_interval, run_mbi_min, solve_block_min, solve_block_t, MinBlockInterval};
pub use sum::{run_mbi_sum, solve_block_sum, stationary_points_sum, sum_residual};

use crate::error::{invalid, Error, Result};
use crate::model::{GameSpec, PowerVector};

/// Energy per delivered bit over the whole network, `sum(p + P_C) / sum(R S)`.
pub fn energy_cost_network(p: &[f64], spec: &GameSpec) -> f64 {
    let num: f64 = p.iter().zip(&spec.links).map(|(pk, l)| pk + l.p_c).sum();
    let den: f64 = spec
        .links
        .iter()
        .enumerate()
        .map(|(k, l)| l.success.rate * l.s(spec.sinr(k, p)))
        .sum();
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Mean per-link delay, `(1/K) sum rho_k / (R_k (S_k - lambda_k))`.
pub fn delay_cost_mean(p: &[f64], spec: &GameSpec) -> Result<f64> {
    let mut total = 0.0;
    for (k, l) in spec.links.iter().enumerate() {
        let margin = l.s(spec.sinr(k, p)) - l.success.lambda;
        if !(margin > 0.0) {
            return Err(Error::QueueUnstable { link: Some(k) });
        }
        total += l.rho / (l.success.rate * margin);
    }
    Ok(total / spec.len() as f64)
}

/// Sum-cost objective: mean weighted delay plus network energy per bit.
pub fn cost_sum(p: &[f64], spec: &GameSpec) -> Result<f64> {
    spec.check_box(p)?;
    Ok(delay_cost_mean(p, spec)? + energy_cost_network(p, spec))
}

/// Common `(rho, R)` of all links; the max-delay objective needs them uniform.
pub fn uniform_rho_rate(spec: &GameSpec) -> Result<(f64, f64)> {
    let first = &spec.links[0];
    let (rho, rate) = (first.rho, first.success.rate);
    for (k, l) in spec.links.iter().enumerate() {
        if l.rho != rho || l.success.rate != rate {
            return Err(invalid(
                format!("links[{k}]"),
                "the max-delay objective requires identical rho and rate on every link",
            ));
        }
    }
    Ok((rho, rate))
}

/// Worst-link delay, `rho / (R min_k (S_k - lambda_k))`.
pub fn delay_cost_max(p: &[f64], spec: &GameSpec) -> Result<f64> {
    let (rho, rate) = uniform_rho_rate(spec)?;
    let mut worst = f64::INFINITY;
    for (k, l) in spec.links.iter().enumerate() {
        let margin = l.s(spec.sinr(k, p)) - l.success.lambda;
        if !(margin > 0.0) {
            return Err(Error::QueueUnstable { link: Some(k) });
        }
        worst = worst.min(margin);
    }
    Ok(rho / (rate * worst))
}

/// Max-delay objective: worst-link delay plus network energy per bit.
pub fn cost_min(p: &[f64], spec: &GameSpec) -> Result<f64> {
    spec.check_box(p)?;
    Ok(delay_cost_max(p, spec)? + energy_cost_network(p, spec))
}

/// Box-projected first-order residual of `f` at `x`, relative to `|f(x)|`:
/// `max_k |proj_k grad f| (upper_k - lower_k) / |f(x)|`, with central
/// differences inside the box and one-sided ones on its faces.
pub fn projected_gradient_residual<F>(mut f: F, x: &[f64], lower: &[f64], upper: &[f64]) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let f0 = f(x);
    let mut worst = 0.0f64;
    let mut y = x.to_vec();
    for k in 0..x.len() {
        let width = upper[k] - lower[k];
        let h = 1e-7 * width;
        let at_lower = x[k] - h < lower[k];
        let at_upper = x[k] + h > upper[k];
        let eval = |y: &mut Vec<f64>, v: f64, f: &mut F| {
            y[k] = v;
            let r = f(y);
            y[k] = x[k];
            r
        };
        let g = match (at_lower, at_upper) {
            (false, false) => (eval(&mut y, x[k] + h, &mut f) - eval(&mut y, x[k] - h, &mut f)) / (2.0 * h),
            (true, _) => (eval(&mut y, x[k] + h, &mut f) - f0) / h,
            (false, true) => (f0 - eval(&mut y, x[k] - h, &mut f)) / h,
        };
        // a face blocks descent in the outward direction
        let projected = if (at_lower && g > 0.0) || (at_upper && g < 0.0) {
            0.0
        } else {
            g.abs()
        };
        worst = worst.max(projected * width);
    }
    worst / f0.abs()
}

/// Result of a centralized solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralReport {
    pub powers: PowerVector,
    /// Objective after every accepted update, starting with the initial value.
    pub objective_trace: Vec<f64>,
    /// Block updated at each iteration (`K` denotes the auxiliary `t` block).
    pub chosen_blocks: Vec<usize>,
    /// Decrement offered by every block at each iteration (`-inf` when a block had none).
    pub decrements: Vec<Vec<f64>>,
    /// Auxiliary variable after each iteration (max-delay variant only).
    pub t_trace: Vec<f64>,
    /// Max-delay cost evaluated directly from the powers after each iteration
    /// (max-delay variant only).
    pub direct_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

impl CentralReport {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the start value")
    }
}
