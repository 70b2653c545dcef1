//! Single-link energy-per-bit minimization by Dinkelbach's method.

use edpower::central::{dinkelbach, DinkelbachReport};
use edpower::feasibility::qos_floor;
use edpower::numerics::BracketedRootProblem;
use edpower::{GameSpec, Result, SuccessCurve};

/// Lower end of the search range when the QoS floor is out of reach.
const FALLBACK_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct EnergyDemo {
    pub link: usize,
    /// Search range `[lo, hi]` for the link's power.
    pub lo: f64,
    pub hi: f64,
    pub report: DinkelbachReport<f64>,
    /// Smallest ratio on a uniform grid over the range.
    pub grid_min: f64,
}

/// Minimizes `(p_k + P_C,k) / (R_k S_k)` over link `k`'s QoS-feasible powers with
/// the interference of `p` frozen.
pub fn energy_ratio_demo(spec: &GameSpec, k: usize, p: &[f64], tol: f64, max_iters: usize) -> Result<EnergyDemo> {
    spec.check_box(p)?;
    let link = &spec.links[k];
    let omega = spec.omega(k, p);
    let c = &link.coeffs;
    let hi = link.p_max;
    let lo = qos_floor(link, omega).unwrap_or(hi * FALLBACK_FLOOR).min(hi);
    let gamma = |x: f64| c.gamma(x, omega);
    let f = |x: &f64| x + link.p_c;
    let g = |x: &f64| link.success.rate * link.s(gamma(*x));
    // x + P_C - lambda R S(gamma(x)) is convex; its slope is increasing
    let minimizer = |lambda: f64| -> Result<f64> {
        let slope =
            |x: f64| 1.0 - lambda * link.success.rate * link.success.derivative(gamma(x)) * c.dgamma_dp(x, omega);
        if slope(lo) >= 0.0 {
            return Ok(lo);
        }
        if slope(hi) <= 0.0 {
            return Ok(hi);
        }
        BracketedRootProblem::new(slope, lo, hi).tol_x(hi * 1e-15).bisect()
    };
    let report = dinkelbach(f, g, minimizer, tol, max_iters)?;
    let n = 100_000;
    let grid_min = (0..=n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            f(&x) / g(&x)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(EnergyDemo {
        link: k,
        lo,
        hi,
        report,
        grid_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use edpower::scenario::{generate, ScenarioConfig};

    #[test]
    fn matches_grid_on_desk_scenario() {
        let spec = generate(&ScenarioConfig::desk()).unwrap();
        let p = spec.p_max();
        for k in 0..spec.len() {
            let d = energy_ratio_demo(&spec, k, &p, 1e-10 * spec.links[k].p_max, 50).unwrap();
            assert!(d.report.converged);
            assert!(
                d.report.lambda <= d.grid_min * (1.0 + 1e-9),
                "{} vs {}",
                d.report.lambda,
                d.grid_min
            );
        }
    }
}
