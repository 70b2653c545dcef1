//! Quick invariant checks runnable from the command line.

use edpower::central::{dinkelbach, run_mbi_min, run_mbi_sum, solve_block_t, MbiConfig};
use edpower::feasibility::{check_necessary, check_sufficient};
use edpower::game::{best_response, check_uniqueness_condition, default_uniqueness_grid};
use edpower::model::link_cost;
use edpower::scenario::{random_instance, RandomInstanceConfig};
use edpower::{SuccessCurve, SuccessModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, failures: usize, total: usize) -> Check {
    Check {
        name,
        passed: failures == 0,
        detail: format!("{failures} of {total} cases failed"),
    }
}

fn sufficient_implies_necessary(rng: &mut ChaCha8Rng) -> Check {
    let cfg = RandomInstanceConfig::default();
    let mut bad = 0;
    for _ in 0..200 {
        let spec = random_instance(rng, 6, &cfg);
        if check_sufficient(&spec).ok && !check_necessary(&spec).necessary_ok {
            bad += 1;
        }
    }
    check("sufficient feasibility implies necessary", bad, 200)
}

fn min_power_vector_meets_qos(rng: &mut ChaCha8Rng) -> Check {
    let cfg = RandomInstanceConfig::default();
    let (mut bad, mut total) = (0, 0);
    while total < 50 {
        let spec = random_instance(rng, 6, &cfg);
        let Some(p) = check_necessary(&spec).min_power_vector else {
            continue;
        };
        total += 1;
        let ok = spec
            .links
            .iter()
            .enumerate()
            .all(|(k, l)| (l.s(spec.sinr(k, &p)) - l.theta).abs() <= 1e-8);
        bad += usize::from(!ok);
    }
    check("minimum power vector meets QoS with equality", bad, total)
}

fn best_response_beats_grid(rng: &mut ChaCha8Rng) -> Check {
    let cfg = RandomInstanceConfig::default();
    let (mut bad, mut total) = (0, 0);
    while total < 30 {
        let spec = random_instance(rng, 4, &cfg);
        let p: Vec<f64> = spec.links.iter().map(|l| rng.gen_range(0.1..1.0) * l.p_max).collect();
        let k = rng.gen_range(0..spec.len());
        let Ok(br) = best_response(k, &p, &spec, false) else {
            continue;
        };
        total += 1;
        let link = &spec.links[k];
        let cost = |x: f64| {
            let mut q = p.clone();
            q[k] = x;
            link_cost(link, x, spec.sinr(k, &q)).unwrap_or(f64::INFINITY)
        };
        let n = 10_000;
        let grid = (1..=n)
            .map(|i| cost(link.p_max * i as f64 / n as f64))
            .fold(f64::INFINITY, f64::min);
        bad += usize::from(cost(br.power) > grid * (1.0 + 1e-9));
    }
    check("best response no worse than a 1e4-point grid", bad, total)
}

fn uniqueness_condition_holds() -> Check {
    let grid = default_uniqueness_grid();
    let bad = [0.1, 1.0, 10.0]
        .into_iter()
        .filter(|d| !check_uniqueness_condition(&SuccessModel::new(*d, 0.0, 1.0).unwrap(), &grid).holds)
        .count();
    check("uniqueness condition for the exponential success curve", bad, 3)
}

fn success_derivative_matches_fd(rng: &mut ChaCha8Rng) -> Check {
    let mut bad = 0;
    for _ in 0..50 {
        let delta: f64 = rng.gen_range(0.1..10.0);
        let s = SuccessModel::new(delta, 0.0, 1.0).unwrap();
        // beyond delta * gamma ~ 2 the slope sinks toward the difference quotient's round-off
        let g: f64 = rng.gen_range(0.01..2.0) / delta;
        let fd = edpower::numerics::central_diff(|x| s.value(x), g, None);
        bad += usize::from(((s.derivative(g) - fd) / fd).abs() > 1e-5);
    }
    check("success derivative matches finite differences", bad, 50)
}

fn mbi_descends(rng: &mut ChaCha8Rng) -> Check {
    let cfg = RandomInstanceConfig {
        rho: (0.5, 0.5),
        lambda: (0.0, 0.05),
        ..RandomInstanceConfig::default()
    };
    let (mut bad, mut total) = (0, 0);
    while total < 5 {
        let spec = random_instance(rng, 4, &cfg);
        if solve_block_t(&spec.p_max(), &spec).is_err() {
            continue;
        }
        total += 1;
        let monotone = |t: &[f64]| t.windows(2).all(|w| w[1] <= w[0]);
        let ok = match (
            run_mbi_sum(&spec, &spec.p_max(), &MbiConfig::default()),
            run_mbi_min(&spec, &spec.p_max(), &MbiConfig::default()),
        ) {
            (Ok(a), Ok(b)) => monotone(&a.objective_trace) && monotone(&b.objective_trace),
            _ => false,
        };
        bad += usize::from(!ok);
    }
    check("MBI objective traces are non-increasing", bad, total)
}

fn dinkelbach_converges(rng: &mut ChaCha8Rng) -> Check {
    let mut bad = 0;
    for _ in 0..50 {
        let (a, c, d) = (
            rng.gen_range(0.1..3.0),
            rng.gen_range(-1.0..3.0),
            rng.gen_range(0.0..2.0),
        );
        let (e, h) = (rng.gen_range(0.0..2.0), rng.gen_range(0.1..2.0));
        let out = dinkelbach(
            |x: &f64| a * (x - c) * (x - c) + d,
            |x: &f64| e * x + h,
            |l| Ok((c + l * e / (2.0 * a)).clamp(0.0, 2.0)),
            1e-10,
            50,
        );
        let ok = out.is_ok_and(|o| o.converged && o.lambda_trace[1..].windows(2).all(|w| w[1] <= w[0] + 1e-15));
        bad += usize::from(!ok);
    }
    check("Dinkelbach converges with non-increasing ratio", bad, 50)
}

/// Runs every check with a fixed seed.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        sufficient_implies_necessary(&mut rng),
        min_power_vector_meets_qos(&mut rng),
        best_response_beats_grid(&mut rng),
        uniqueness_condition_holds(),
        success_derivative_matches_fd(&mut rng),
        mbi_descends(&mut rng),
        dinkelbach_converges(&mut rng),
    ]
}
