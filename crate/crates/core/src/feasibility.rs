//! Feasibility of the QoS-constrained best-response problems.
//!
//! Three tests, from strongest to weakest:
//! * [`check_sufficient`]: every best response is feasible whatever the others do
//!   (worst case: all interferers at full power).
//! * [`check_br_feasible`]: one best response against a given interference level.
//! * [`check_necessary`]: some joint allocation meets every QoS target, decided
//!   through the spectral radius of the normalized interference matrix.

use crate::error::{Error, InfeasibleCause, Result};
use crate::model::{GameSpec, LinkSpec, PowerVector, SuccessCurve};
use crate::numerics::{solve_linear, spectral_radius, NonnegativeMatrix};

/// Safety factor applied to the minimal power vector before using it as a start.
pub const START_SAFETY_FACTOR: f64 = 1.001;

/// Relative slack accepted when re-verifying `S(gamma) >= theta` on a computed point.
pub const QOS_SLACK: f64 = 1e-12;

/// Whether the SINR ceiling `alpha/phi` lets the link reach its QoS threshold.
/// Always true without self-interference.
pub fn ceiling_reaches_qos(link: &LinkSpec) -> bool {
    let c = &link.coeffs;
    if c.phi == 0.0 {
        return true;
    }
    link.s(c.alpha / c.phi) > link.theta && c.alpha - link.qos_gamma() * c.phi > 0.0
}

/// Minimum power meeting the QoS target against interference `omega`.
pub fn qos_floor(link: &LinkSpec, omega: f64) -> Result<f64, InfeasibleCause> {
    if !ceiling_reaches_qos(link) {
        return Err(InfeasibleCause::DegenerateDenominator);
    }
    link.coeffs
        .power_for_gamma(link.qos_gamma(), omega)
        .ok_or(InfeasibleCause::DegenerateDenominator)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientReport {
    pub per_link: Vec<bool>,
    pub ok: bool,
}

/// Worst-case test: each link meets its QoS target with everyone else at full power.
pub fn check_sufficient(spec: &GameSpec) -> SufficientReport {
    let p_max = spec.p_max();
    let per_link: Vec<bool> = spec
        .links
        .iter()
        .enumerate()
        .map(|(k, link)| match qos_floor(link, spec.omega(k, &p_max)) {
            Ok(p_min) => link.p_max >= p_min,
            Err(_) => false,
        })
        .collect();
    let ok = per_link.iter().all(|b| *b);
    SufficientReport { per_link, ok }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrFeasibility {
    pub feasible: bool,
    /// Minimum QoS power, when the self-interference ceiling allows one.
    pub p_min: Option<f64>,
    pub cause: Option<InfeasibleCause>,
}

/// Feasibility of link `k`'s best response against the other entries of `p`.
/// `p[k]` itself is ignored.
pub fn check_br_feasible(k: usize, p: &[f64], spec: &GameSpec) -> BrFeasibility {
    let link = &spec.links[k];
    match qos_floor(link, spec.omega(k, p)) {
        Err(cause) => BrFeasibility {
            feasible: false,
            p_min: None,
            cause: Some(cause),
        },
        Ok(p_min) if p_min <= link.p_max => BrFeasibility {
            feasible: true,
            p_min: Some(p_min),
            cause: None,
        },
        Ok(p_min) => BrFeasibility {
            feasible: false,
            p_min: Some(p_min),
            cause: Some(InfeasibleCause::PowerBudget {
                p_min,
                p_max: link.p_max,
            }),
        },
    }
}

/// Why the joint QoS problem has no solution.
#[derive(Debug, Clone, PartialEq)]
pub enum NecessaryFailure {
    /// These links cannot reach their threshold at any power.
    SelfInterference(Vec<usize>),
    /// The interference matrix has spectral radius >= 1.
    SpectralRadius(f64),
    /// The minimal power vector exceeds the budget on these links.
    PowerBudget(Vec<usize>),
}

impl std::fmt::Display for NecessaryFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NecessaryFailure::SelfInterference(links) => {
                write!(f, "QoS unreachable under self-interference on links {links:?}")
            }
            NecessaryFailure::SpectralRadius(r) => {
                write!(f, "interference matrix spectral radius rho_F = {r:.6} >= 1")
            }
            NecessaryFailure::PowerBudget(links) => {
                write!(f, "minimal QoS powers exceed the budget on links {links:?}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub sufficient_ok: bool,
    pub necessary_ok: bool,
    /// Spectral radius of the normalized interference matrix (`inf` when it cannot be built).
    pub rho_f: f64,
    /// Componentwise-minimal allocation meeting every QoS target, when `rho_f < 1`.
    pub min_power_vector: Option<Vec<f64>>,
    /// `p_max,k` minus the minimal QoS power (`-inf` where undefined).
    pub per_link_margin: Vec<f64>,
    pub failure: Option<NecessaryFailure>,
}

/// Normalized interference matrix and noise-only power vector.
///
/// Link k meets its target iff `p_k >= sum_j F[k][j] p_j + s_k`, with
/// `F[k][j] = beta_{k,j} g_k / (alpha_k - phi_k g_k)` and
/// `s_k = sigma2_k g_k / (alpha_k - phi_k g_k)`, `g_k = S_k^-1(theta_k)`.
/// Returns the links whose self-interference ceiling blocks the target instead.
pub fn interference_matrix(spec: &GameSpec) -> Result<(NonnegativeMatrix, Vec<f64>), Vec<usize>> {
    let blocked: Vec<usize> = spec
        .links
        .iter()
        .enumerate()
        .filter(|(_, l)| !ceiling_reaches_qos(l))
        .map(|(k, _)| k)
        .collect();
    if !blocked.is_empty() {
        return Err(blocked);
    }
    let n = spec.len();
    let mut rows = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for (k, link) in spec.links.iter().enumerate() {
        let c = &link.coeffs;
        let g = link.qos_gamma();
        let scale = g / (c.alpha - c.phi * g);
        rows.push(
            (0..n)
                .map(|j| if j == k { 0.0 } else { c.beta[j] * scale })
                .collect::<Vec<_>>(),
        );
        noise.push(c.sigma2 * scale);
    }
    let f = NonnegativeMatrix::from_rows(&rows).expect("entries are finite and non-negative");
    Ok((f, noise))
}

/// Offline necessary condition for joint QoS feasibility.
pub fn check_necessary(spec: &GameSpec) -> FeasibilityReport {
    let n = spec.len();
    let sufficient_ok = check_sufficient(spec).ok;
    let (f, noise) = match interference_matrix(spec) {
        Ok(v) => v,
        Err(blocked) => {
            return FeasibilityReport {
                sufficient_ok,
                necessary_ok: false,
                rho_f: f64::INFINITY,
                min_power_vector: None,
                per_link_margin: vec![f64::NEG_INFINITY; n],
                failure: Some(NecessaryFailure::SelfInterference(blocked)),
            }
        }
    };
    let rho_f = spectral_radius(&f);
    let infeasible_radius = |rho_f| FeasibilityReport {
        sufficient_ok,
        necessary_ok: false,
        rho_f,
        min_power_vector: None,
        per_link_margin: vec![f64::NEG_INFINITY; n],
        failure: Some(NecessaryFailure::SpectralRadius(rho_f)),
    };
    if rho_f >= 1.0 {
        return infeasible_radius(rho_f);
    }
    let system: Vec<Vec<f64>> = f
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, v)| if i == j { 1.0 - v } else { -v })
                .collect()
        })
        .collect();
    let min_power = match solve_linear(&system, &noise) {
        Ok(x) => x,
        Err(_) => return infeasible_radius(rho_f),
    };
    let per_link_margin: Vec<f64> = min_power.iter().zip(&spec.links).map(|(p, l)| l.p_max - p).collect();
    let over: Vec<usize> = per_link_margin
        .iter()
        .enumerate()
        .filter(|(_, m)| **m < 0.0)
        .map(|(k, _)| k)
        .collect();
    let necessary_ok = over.is_empty();
    FeasibilityReport {
        sufficient_ok,
        necessary_ok,
        rho_f,
        min_power_vector: Some(min_power),
        per_link_margin,
        failure: (!necessary_ok).then_some(NecessaryFailure::PowerBudget(over)),
    }
}

/// Whether `p` lies in the power boxes and meets every QoS threshold.
pub fn meets_qos(spec: &GameSpec, p: &[f64]) -> bool {
    spec.check_box(p).is_ok()
        && spec
            .links
            .iter()
            .enumerate()
            .all(|(k, l)| l.success.value(spec.sinr(k, p)) >= l.theta * (1.0 - QOS_SLACK))
}

/// A power vector satisfying every QoS constraint, to start the best-response dynamics.
///
/// All-`p_max` when the worst-case test passes; otherwise the minimal QoS
/// allocation scaled by [`START_SAFETY_FACTOR`] and clipped to the budget.
pub fn find_feasible_start(spec: &GameSpec) -> Result<PowerVector> {
    if check_sufficient(spec).ok {
        return PowerVector::new(spec.p_max().into_inner());
    }
    let report = check_necessary(spec);
    let min_power = match (report.necessary_ok, report.min_power_vector) {
        (true, Some(p)) => p,
        _ => return Err(Error::NoFeasiblePoint),
    };
    let scaled: Vec<f64> = min_power
        .iter()
        .zip(&spec.links)
        .map(|(p, l)| (p * START_SAFETY_FACTOR).min(l.p_max))
        .collect();
    for candidate in [scaled, min_power] {
        if meets_qos(spec, &candidate) {
            return PowerVector::new(candidate);
        }
    }
    Err(Error::NoFeasiblePoint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinkCoefficients, SuccessModel};
    use crate::scenario::{random_instance, RandomInstanceConfig};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn link(alpha: f64, phi: f64, beta: Vec<f64>, sigma2: f64, theta: f64, p_max: f64) -> LinkSpec {
        LinkSpec {
            coeffs: LinkCoefficients::new(alpha, phi, beta, sigma2).unwrap(),
            success: SuccessModel::new(1.0, 0.0, 1.0).unwrap(),
            p_max,
            p_c: 0.0,
            theta,
            rho: 1.0,
        }
    }

    /// theta with S^-1(theta) = g for delta = 1
    fn theta_for(g: f64) -> f64 {
        1.0 - (-g).exp()
    }

    #[test]
    fn no_self_interference_passes_ceiling_test() {
        let l = link(1.0, 0.0, vec![0.0], 1.0, 0.999999, 1.0);
        assert!(ceiling_reaches_qos(&l));
    }

    #[test]
    fn single_link_substitution() {
        let spec = GameSpec::new(vec![link(1.0, 0.0, vec![0.0], 1.0, theta_for(0.5), 1.0)]).unwrap();
        let r = check_sufficient(&spec);
        assert!(r.ok);
        let br = check_br_feasible(0, &[0.0], &spec);
        assert_relative_eq!(br.p_min.unwrap(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn silent_interferers_give_noise_floor() {
        let l0 = link(2.0, 0.1, vec![0.0, 0.3], 0.5, theta_for(1.2), 10.0);
        let l1 = link(1.0, 0.0, vec![0.2, 0.0], 0.5, theta_for(1.0), 10.0);
        let spec = GameSpec::new(vec![l0, l1]).unwrap();
        let br = check_br_feasible(0, &[0.0, 0.0], &spec);
        let expected = 1.2 * 0.5 / (2.0 - 1.2 * 0.1);
        assert_relative_eq!(br.p_min.unwrap(), expected, max_relative = 1e-12);
        // raising the interferer raises the floor
        let louder = check_br_feasible(0, &[0.0, 1.0], &spec);
        assert!(louder.p_min.unwrap() > br.p_min.unwrap());
    }

    #[test]
    fn boundary_power_is_feasible() {
        // choose p_1 such that P_min,0 = P_max,0 exactly: omega = P_max (alpha - g phi) / g
        let (alpha, phi, sigma2, g, p_max, b) = (2.0, 0.1, 0.5, 1.2, 3.0, 0.3);
        let omega = p_max * (alpha - g * phi) / g;
        let p1 = (omega - sigma2) / b;
        let l0 = link(alpha, phi, vec![0.0, b], sigma2, theta_for(g), p_max);
        let l1 = link(1.0, 0.0, vec![0.2, 0.0], 0.5, theta_for(1.0), 10.0);
        let spec = GameSpec::new(vec![l0, l1]).unwrap();
        let br = check_br_feasible(0, &[0.0, p1], &spec);
        assert_relative_eq!(br.p_min.unwrap(), p_max, max_relative = 1e-12);
        let br = check_br_feasible(0, &[0.0, p1 * (1.0 - 1e-9)], &spec);
        assert!(br.feasible);
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        // alpha/phi = 2, but QoS needs gamma = 3
        let spec = GameSpec::new(vec![link(1.0, 0.5, vec![0.0], 1.0, theta_for(3.0), 1.0)]).unwrap();
        let br = check_br_feasible(0, &[0.0], &spec);
        assert!(!br.feasible);
        assert_eq!(br.cause, Some(InfeasibleCause::DegenerateDenominator));
        let report = check_necessary(&spec);
        assert!(!report.necessary_ok);
        assert!(matches!(report.failure, Some(NecessaryFailure::SelfInterference(_))));
    }

    #[test]
    fn decoupled_links() {
        let spec = GameSpec::new(vec![
            link(1.0, 0.0, vec![0.0, 0.0], 0.5, theta_for(1.0), 1.0),
            link(2.0, 0.2, vec![0.0, 0.0], 0.3, theta_for(2.0), 1.0),
        ])
        .unwrap();
        let r = check_necessary(&spec);
        assert_eq!(r.rho_f, 0.0);
        let s = [0.5, 0.3 * 2.0 / (2.0 - 0.4)];
        let mp = r.min_power_vector.unwrap();
        assert_relative_eq!(mp[0], s[0], max_relative = 1e-12);
        assert_relative_eq!(mp[1], s[1], max_relative = 1e-12);
        assert!(r.necessary_ok);
    }

    #[test]
    fn two_link_spectral_radius_closed_form() {
        let (b01, b10) = (0.4, 0.9);
        let spec = GameSpec::new(vec![
            link(1.0, 0.0, vec![0.0, b01], 0.1, theta_for(1.0), 10.0),
            link(1.0, 0.0, vec![b10, 0.0], 0.1, theta_for(1.0), 10.0),
        ])
        .unwrap();
        let r = check_necessary(&spec);
        assert_relative_eq!(r.rho_f, (b01 * b10).sqrt(), max_relative = 1e-10);

        let sym = GameSpec::new(vec![
            link(1.0, 0.0, vec![0.0, 0.5], 0.1, theta_for(1.0), 10.0),
            link(1.0, 0.0, vec![0.5, 0.0], 0.1, theta_for(1.0), 10.0),
        ])
        .unwrap();
        assert_relative_eq!(check_necessary(&sym).rho_f, 0.5, max_relative = 1e-10);
    }

    #[test]
    fn min_power_vector_meets_qos_with_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = RandomInstanceConfig::default();
        let mut checked = 0;
        while checked < 30 {
            let spec = random_instance(&mut rng, 6, &cfg);
            let r = check_necessary(&spec);
            let Some(mp) = r.min_power_vector else { continue };
            for (k, l) in spec.links.iter().enumerate() {
                let s = l.s(spec.sinr(k, &mp));
                assert!((s - l.theta).abs() <= 1e-8, "link {k}: {s} vs {}", l.theta);
            }
            checked += 1;
        }
    }

    #[test]
    fn neumann_iteration_reaches_min_power_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let cfg = RandomInstanceConfig::default();
        let mut checked = 0;
        while checked < 20 {
            let spec = random_instance(&mut rng, 5, &cfg);
            let Ok((f, s)) = interference_matrix(&spec) else {
                continue;
            };
            let r = check_necessary(&spec);
            if r.rho_f >= 0.95 {
                continue;
            }
            let mut p = vec![0.0; spec.len()];
            for _ in 0..5000 {
                let fp = f.mul_vec(&p);
                p = fp.iter().zip(&s).map(|(a, b)| a + b).collect();
            }
            for (a, b) in p.iter().zip(r.min_power_vector.as_ref().unwrap()) {
                assert_relative_eq!(*a, *b, max_relative = 1e-8);
            }
            checked += 1;
        }
    }

    #[test]
    fn sufficient_implies_necessary() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let cfg = RandomInstanceConfig::default();
        for _ in 0..300 {
            let k = rng.gen_range(1..=8);
            let spec = random_instance(&mut rng, k, &cfg);
            let r = check_necessary(&spec);
            if r.sufficient_ok {
                assert!(r.necessary_ok);
            }
        }
    }

    #[test]
    fn br_feasibility_is_monotone_in_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = RandomInstanceConfig::default();
        for _ in 0..100 {
            let spec = random_instance(&mut rng, 4, &cfg);
            let p: Vec<f64> = spec.links.iter().map(|l| rng.gen::<f64>() * l.p_max).collect();
            let louder: Vec<f64> = p.iter().map(|v| v * rng.gen_range(1.0..3.0)).collect();
            for k in 0..spec.len() {
                let quiet = check_br_feasible(k, &p, &spec);
                let loud = check_br_feasible(k, &louder, &spec);
                if !quiet.feasible {
                    assert!(!loud.feasible);
                }
            }
        }
    }

    #[test]
    fn start_is_all_pmax_when_sufficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let cfg = RandomInstanceConfig::default();
        let mut found = 0;
        while found < 10 {
            let spec = random_instance(&mut rng, 4, &cfg);
            if !check_sufficient(&spec).ok {
                continue;
            }
            let start = find_feasible_start(&spec).unwrap();
            assert_eq!(&*start, &*spec.p_max());
            for k in 0..spec.len() {
                assert!(check_br_feasible(k, &start, &spec).feasible);
            }
            found += 1;
        }
    }

    #[test]
    fn start_from_min_power_vector() {
        let spec = GameSpec::new(vec![
            link(1.0, 0.0, vec![0.0, 0.0], 0.5, theta_for(1.0), 1.0),
            link(2.0, 0.2, vec![0.0, 0.0], 0.3, theta_for(2.0), 1.0),
        ])
        .unwrap();
        // make the worst-case test fail while the decoupled system stays feasible
        let mut tight = spec.clone();
        tight.links[0].coeffs.beta[1] = 0.6;
        assert!(!check_sufficient(&tight).ok);
        let start = find_feasible_start(&tight).unwrap();
        assert!(meets_qos(&tight, &start));
    }

    #[test]
    fn overloaded_instance_has_no_start() {
        let spec = GameSpec::new(vec![link(1.0, 0.0, vec![0.0], 100.0, theta_for(1.0), 1.0)]).unwrap();
        assert_eq!(find_feasible_start(&spec).unwrap_err(), Error::NoFeasiblePoint);
    }
}
