use crate::error::{Error, Result};
use crate::model::{GameSpec, PowerVector};
use crate::numerics::BracketedRootProblem;

use super::block::BlockView;
use super::mbi::{mbi_generic, BlockProblem, MbiConfig};
use super::{cost_sum, projected_gradient_residual, CentralReport};

/// Scan points on `(0, hi]`: half log-spaced down to `hi * 1e-10`, half evenly spaced.
pub(crate) fn scan_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let half = (n / 2).max(2);
    let log_lo = (hi * 1e-10).max(lo);
    let mut g: Vec<f64> = Vec::with_capacity(2 * half + 2);
    if log_lo < hi {
        let (a, b) = (log_lo.ln(), hi.ln());
        g.extend((0..half).map(|i| (a + (b - a) * i as f64 / (half - 1) as f64).exp()));
    }
    g.extend((0..half).map(|i| lo + (hi - lo) * (i + 1) as f64 / half as f64));
    g.push(lo);
    g.push(hi);
    g.retain(|x| *x >= lo && *x <= hi && *x > 0.0);
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Roots of `f` found by a sign scan over `grid` and bisection. `f` returns
/// `None` where it is undefined; those points break the scan.
pub(crate) fn sign_scan_roots<F>(f: F, grid: &[f64], tol_x: f64) -> Vec<f64>
where
    F: Fn(f64) -> Option<f64>,
{
    let vals: Vec<Option<f64>> = grid.iter().map(|x| f(*x)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len().saturating_sub(1) {
        let (Some(a), Some(b)) = (vals[i], vals[i + 1]) else {
            continue;
        };
        if a == 0.0 {
            roots.push(grid[i]);
            continue;
        }
        if a.signum() != b.signum() && b != 0.0 {
            let residual = |x: f64| f(x).unwrap_or(f64::NAN);
            if let Ok(r) = BracketedRootProblem::new(residual, grid[i], grid[i + 1])
                .tol_x(tol_x)
                .bisect()
            {
                roots.push(r);
            }
        }
    }
    if let (Some(Some(last)), Some(x)) = (vals.last(), grid.last()) {
        if *last == 0.0 {
            roots.push(*x);
        }
    }
    roots
}

/// `d c_sum / d p_k` at `p`, or `None` when some queue is unstable.
pub fn sum_residual(k: usize, p: &[f64], spec: &GameSpec) -> Option<f64> {
    BlockView::new(spec, k, p).cost_sum_derivative(p[k]).map(|d| d.0)
}

/// Stationary points of `c_sum` in `p_k` on `(0, p_max,k]`, others fixed at `p`.
pub fn stationary_points_sum(k: usize, p: &[f64], spec: &GameSpec, cfg: &MbiConfig) -> Vec<f64> {
    let view = BlockView::new(spec, k, p);
    let p_max = spec.links[k].p_max;
    let grid = scan_grid(0.0, p_max, cfg.grid_points);
    sign_scan_roots(
        |x| view.cost_sum_derivative(x).map(|d| d.0),
        &grid,
        cfg.stationary_tol * p_max,
    )
}

/// Best `p_k` among zero, the budget and the stationary points; ties go to the
/// smaller power.
pub fn solve_block_sum(k: usize, p: &[f64], spec: &GameSpec, cfg: &MbiConfig) -> Result<f64> {
    let view = BlockView::new(spec, k, p);
    let mut candidates = vec![0.0];
    candidates.extend(stationary_points_sum(k, p, spec, cfg));
    candidates.push(spec.links[k].p_max);
    candidates.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64)> = None;
    for c in candidates {
        let v = view.cost_sum(c);
        if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
            best = Some((c, v));
        }
    }
    best.map(|b| b.0).ok_or(Error::AllCandidatesInfeasible { block: k })
}

struct SumProblem<'a> {
    spec: &'a GameSpec,
    cfg: &'a MbiConfig,
}

impl BlockProblem for SumProblem<'_> {
    fn num_blocks(&self) -> usize {
        self.spec.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        cost_sum(x, self.spec).unwrap_or(f64::INFINITY)
    }

    fn solve_block(&self, b: usize, x: &[f64]) -> Result<Option<f64>> {
        solve_block_sum(b, x, self.spec, self.cfg).map(Some)
    }
}

/// Maximum block improvement on the sum cost over the power box, from `start`.
pub fn run_mbi_sum(spec: &GameSpec, start: &[f64], cfg: &MbiConfig) -> Result<CentralReport> {
    spec.check_box(start)?;
    let problem = SumProblem { spec, cfg };
    let out = mbi_generic(&problem, start, cfg)?;
    let lower = vec![0.0; spec.len()];
    let kkt_residual = projected_gradient_residual(
        |x| cost_sum(x, spec).unwrap_or(f64::INFINITY),
        &out.x,
        &lower,
        &spec.p_max(),
    );
    Ok(CentralReport {
        powers: PowerVector::new(out.x)?,
        objective_trace: out.objective_trace,
        chosen_blocks: out.chosen_blocks,
        decrements: out.decrements,
        t_trace: Vec::new(),
        direct_trace: Vec::new(),
        iterations: out.iterations,
        converged: out.converged,
        kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::central::energy_cost_network;
    use crate::feasibility::check_sufficient;
    use crate::game::{run_brd, BrdConfig};
    use crate::model::{LinkCoefficients, LinkSpec, SuccessModel};
    use crate::scenario::{random_instance, RandomInstanceConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> MbiConfig {
        MbiConfig::default()
    }

    fn stable_point(rng: &mut ChaCha8Rng, spec: &GameSpec) -> Option<Vec<f64>> {
        for _ in 0..20 {
            let p: Vec<f64> = spec.links.iter().map(|l| rng.gen_range(0.05..1.0) * l.p_max).collect();
            if cost_sum(&p, spec).is_ok() {
                return Some(p);
            }
        }
        None
    }

    #[test]
    fn single_link_energy_minimizer_matches_grid() {
        let spec = GameSpec::new(vec![LinkSpec {
            coeffs: LinkCoefficients::new(1.0, 0.05, vec![0.0], 0.1).unwrap(),
            success: SuccessModel::new(1.0, 0.0, 1.0).unwrap(),
            p_max: 5.0,
            p_c: 0.05,
            theta: 0.5,
            rho: 1e-9,
        }])
        .unwrap();
        let roots = stationary_points_sum(0, &[1.0], &spec, &cfg());
        assert_eq!(roots.len(), 1);
        let n = 100_000;
        let (best, _) = (1..=n)
            .map(|i| {
                let p = 5.0 * i as f64 / n as f64;
                (p, energy_cost_network(&[p], &spec))
            })
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!((roots[0] - best).abs() <= 5.0 / n as f64, "{} vs {best}", roots[0]);
    }

    #[test]
    fn roots_zero_the_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rcfg = RandomInstanceConfig {
            lambda: (0.0, 0.05),
            ..RandomInstanceConfig::default()
        };
        for _ in 0..30 {
            let spec = random_instance(&mut rng, 4, &rcfg);
            let Some(p) = stable_point(&mut rng, &spec) else {
                continue;
            };
            let k = rng.gen_range(0..4);
            let view = BlockView::new(&spec, k, &p);
            for r in stationary_points_sum(k, &p, &spec, &cfg()) {
                let (d, scale) = view.cost_sum_derivative(r).unwrap();
                // root located to a 1e-9 * p_max bracket; residual moves by at most that much slope
                let h = 1e-9 * spec.links[k].p_max;
                let slope = (view.cost_sum_derivative(r + h).unwrap().0 - view.cost_sum_derivative(r - h).unwrap().0)
                    .abs()
                    / (2.0 * h);
                assert!(d.abs() <= 1e-9 * scale + 2.0 * slope * h, "residual {d} at {r}");
            }
        }
    }

    #[test]
    fn block_solution_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rcfg = RandomInstanceConfig {
            lambda: (0.0, 0.05),
            ..RandomInstanceConfig::default()
        };
        let mut checked = 0;
        while checked < 100 {
            let spec = random_instance(&mut rng, 4, &rcfg);
            let Some(p) = stable_point(&mut rng, &spec) else {
                continue;
            };
            let k = rng.gen_range(0..4);
            let view = BlockView::new(&spec, k, &p);
            let chosen = solve_block_sum(k, &p, &spec, &cfg()).unwrap();
            let p_max = spec.links[k].p_max;
            let n = 100_000;
            let grid_best = (0..=n)
                .map(|i| view.cost_sum(p_max * i as f64 / n as f64))
                .fold(f64::INFINITY, f64::min);
            assert!(view.cost_sum(chosen) <= grid_best * (1.0 + 1e-12));
            let roots = stationary_points_sum(k, &p, &spec, &cfg());
            assert!(chosen == 0.0 || chosen == p_max || roots.contains(&chosen));
            checked += 1;
        }
    }

    #[test]
    fn dominant_direct_gain_goes_to_budget() {
        // low SNR without circuit power: the delay term falls steeply in p_k
        let mk = |beta: Vec<f64>| LinkSpec {
            coeffs: LinkCoefficients::new(1.0, 0.0, beta, 1.0).unwrap(),
            success: SuccessModel::new(1.0, 0.0, 1.0).unwrap(),
            p_max: 1e-3,
            p_c: 0.0,
            theta: 0.5,
            rho: 1.0,
        };
        let spec = GameSpec::new(vec![mk(vec![0.0, 1e-3]), mk(vec![1e-3, 0.0])]).unwrap();
        let p = [5e-4, 5e-4];
        let view = BlockView::new(&spec, 0, &p);
        let grid: Vec<f64> = (1..=1000)
            .map(|i| 1e-3 * i as f64 / 1000.0)
            .map(|x| view.cost_sum(x))
            .collect();
        assert!(grid.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(solve_block_sum(0, &p, &spec, &cfg()).unwrap(), 1e-3);
    }

    #[test]
    fn unstable_everywhere_fails() {
        // link 1's queue cannot be stable at its current power whatever link 0 does
        let mk = |beta: Vec<f64>, lambda: f64| LinkSpec {
            coeffs: LinkCoefficients::new(1.0, 0.0, beta, 1.0).unwrap(),
            success: SuccessModel::new(1.0, lambda, 1.0).unwrap(),
            p_max: 1.0,
            p_c: 0.0,
            theta: 0.95,
            rho: 1.0,
        };
        let spec = GameSpec::new(vec![mk(vec![0.0, 0.1], 0.0), mk(vec![0.1, 0.0], 0.9)]).unwrap();
        let err = solve_block_sum(0, &[0.5, 0.01], &spec, &cfg()).unwrap_err();
        assert_eq!(err, Error::AllCandidatesInfeasible { block: 0 });
    }

    #[test]
    fn single_link_mbi_is_one_block_solve() {
        let spec = GameSpec::new(vec![LinkSpec {
            coeffs: LinkCoefficients::new(1.0, 0.05, vec![0.0], 0.1).unwrap(),
            success: SuccessModel::new(1.0, 0.1, 1.0).unwrap(),
            p_max: 5.0,
            p_c: 0.05,
            theta: 0.5,
            rho: 0.3,
        }])
        .unwrap();
        let report = run_mbi_sum(&spec, &[5.0], &cfg()).unwrap();
        let direct = solve_block_sum(0, &[5.0], &spec, &cfg()).unwrap();
        assert_eq!(report.chosen_blocks, vec![0]);
        assert_eq!(report.powers[0], direct);
    }

    #[test]
    fn descent_and_kkt_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rcfg = RandomInstanceConfig {
            lambda: (0.0, 0.05),
            ..RandomInstanceConfig::default()
        };
        let mut checked = 0;
        while checked < 10 {
            let spec = random_instance(&mut rng, 4, &rcfg);
            if cost_sum(&spec.p_max(), &spec).is_err() {
                continue;
            }
            let report = run_mbi_sum(&spec, &spec.p_max(), &cfg()).unwrap();
            assert!(report.objective_trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(report.converged);
            assert!(report.kkt_residual <= 1e-4, "kkt {}", report.kkt_residual);
            checked += 1;
        }
    }

    #[test]
    fn warm_start_at_equilibrium_never_loses() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let rcfg = RandomInstanceConfig::default();
        let mut checked = 0;
        while checked < 10 {
            let spec = random_instance(&mut rng, 4, &rcfg);
            if !check_sufficient(&spec).ok {
                continue;
            }
            let ne = run_brd(&spec, &spec.p_max(), &BrdConfig::default()).unwrap();
            let c_ne = cost_sum(&ne.powers, &spec).unwrap();
            let report = run_mbi_sum(&spec, &ne.powers, &cfg()).unwrap();
            assert!(report.final_objective() <= c_ne);
            assert_relative_eq!(report.objective_trace[0], c_ne);
            checked += 1;
        }
    }

    #[test]
    fn energy_term_has_at_most_one_stationary_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let rcfg = RandomInstanceConfig::default();
        for _ in 0..50 {
            let spec = random_instance(&mut rng, 4, &rcfg);
            let p: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
            let k = rng.gen_range(0..4);
            let view = BlockView::new(&spec, k, &p);
            let grid = scan_grid(0.0, spec.links[k].p_max, 4096);
            let signs: Vec<bool> = grid.iter().map(|x| view.energy(*x).1 > 0.0).collect();
            let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
            assert!(changes <= 1, "{changes} sign changes");
        }
    }

    #[test]
    fn grid_is_sorted_and_bounded() {
        let g = scan_grid(0.0, 2.0, 512);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.last().unwrap(), 2.0);
        assert!(g[0] > 0.0 && g[0] <= 2e-10 * 1.0000001);
    }
}
