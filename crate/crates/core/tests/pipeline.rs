use edpower::central::{cost_min, cost_sum, run_mbi_min, run_mbi_sum, MbiConfig};
use edpower::feasibility::{check_necessary, find_feasible_start, meets_qos};
use edpower::game::{run_brd, verify_ne, BrdConfig, Schedule};
use edpower::scenario::{generate, parse_config, parse_spec, spec_to_toml, ScenarioConfig};
use edpower::Error;

fn desk(seed: u64, theta: f64, p_max_dbw: f64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        theta,
        p_max_dbw,
        ..ScenarioConfig::desk()
    }
}

/// A desk instance whose QoS targets are jointly reachable.
fn feasible_desk() -> edpower::GameSpec {
    (0..200)
        .map(|seed| generate(&desk(seed, 0.9, -20.0)).unwrap())
        .find(|s| check_necessary(s).necessary_ok)
        .expect("some seed admits the QoS targets")
}

#[test]
fn generated_spec_survives_a_text_round_trip() {
    let spec = generate(&desk(3, 0.99, -30.0)).unwrap();
    let back = parse_spec(&spec_to_toml(&spec)).unwrap();
    assert_eq!(back.len(), spec.len());
    let p = spec.p_max();
    for k in 0..spec.len() {
        assert_eq!(back.sinr(k, &p), spec.sinr(k, &p));
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate(&desk(5, 0.99, -30.0)).unwrap();
    let b = generate(&desk(5, 0.99, -30.0)).unwrap();
    let c = generate(&desk(6, 0.99, -30.0)).unwrap();
    assert_eq!(spec_to_toml(&a), spec_to_toml(&b));
    assert_ne!(spec_to_toml(&a), spec_to_toml(&c));
}

#[test]
fn qos_game_reaches_a_verified_equilibrium() {
    let spec = feasible_desk();
    let start = find_feasible_start(&spec).unwrap();
    let cfg = BrdConfig {
        epsilon: 1e-14,
        max_rounds: 2000,
        ..BrdConfig::default()
    };
    let report = run_brd(&spec, &start, &cfg).unwrap();
    assert!(report.converged());
    assert!(meets_qos(&spec, &report.powers));
    let ne = verify_ne(&spec, &report.powers, 1e-6, true);
    assert!(ne.verified, "{:?}", ne.gains);
}

#[test]
fn schedules_agree_on_the_relaxed_game() {
    let spec = generate(&desk(1, 0.99, -20.0)).unwrap();
    let solve = |schedule| {
        let cfg = BrdConfig {
            epsilon: 1e-16,
            max_rounds: 2000,
            relax_qos: true,
            schedule,
            ..BrdConfig::default()
        };
        run_brd(&spec, &spec.p_max(), &cfg).unwrap().powers.into_inner()
    };
    let a = solve(Schedule::Sequential);
    let b = solve(Schedule::Synchronous);
    let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = a.iter().map(|x| x * x).sum();
    assert!((num / den).sqrt() < 1e-6);
}

#[test]
fn centralized_solvers_improve_on_the_equilibrium() {
    let spec = generate(&desk(2, 0.99, -20.0)).unwrap();
    let relaxed = BrdConfig {
        relax_qos: true,
        ..BrdConfig::default()
    };
    let ne = run_brd(&spec, &spec.p_max(), &relaxed).unwrap().powers.into_inner();
    let sum = run_mbi_sum(&spec, &ne, &MbiConfig::default()).unwrap();
    assert!(sum.final_objective() <= cost_sum(&ne, &spec).unwrap());
    let min = run_mbi_min(&spec, &ne, &MbiConfig::default()).unwrap();
    assert!(min.final_objective() <= cost_min(&ne, &spec).unwrap() * (1.0 + 1e-12));
    for (p, l) in sum.powers.iter().zip(&spec.links) {
        assert!(*p >= 0.0 && *p <= l.p_max);
    }
}

#[test]
fn bad_config_text_is_a_parse_error() {
    assert!(matches!(parse_config("cells = \"four\""), Err(Error::Parse(_))));
    assert!(parse_config("no_such_field = 1").is_err());
    assert!(parse_config("cells = 0").is_err());
}
