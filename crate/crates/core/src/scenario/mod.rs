//! Synthetic multicell scenarios, success-curve fitting and random test instances.
//!
//! [`generate`] builds a [`GameSpec`] from a cell layout with distance path loss
//! and Rayleigh fading. The SINR coefficients follow a surrogate massive-MIMO
//! model (not an exact derivation):
//!
//! ```text
//! alpha_k   = N g_kk (1 - tau^2)(1 - eps^2)
//! phi_k     = g_kk (tau^2 + eps^2) n_eff
//! beta_kj   = g_kj (tau^2 + eps^2)     j in the same cell as k
//! beta_kj   = g_kj                     otherwise
//! sigma2    = F B N0
//! ```
//!
//! where `g_kj` is the channel gain from user j to the base station serving k.

mod io;

pub use io::{config_to_toml, load_config, load_spec, parse_config, parse_spec, save_config, save_spec, spec_to_toml};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{GameSpec, LinkCoefficients, LinkSpec, SuccessModel};

/// `x` dB as a linear ratio.
pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

/// `x` dBW in Watts.
pub fn dbw_to_w(x_dbw: f64) -> f64 {
    db_to_linear(x_dbw)
}

/// `x` dBm in Watts.
pub fn dbm_to_w(x_dbm: f64) -> f64 {
    db_to_linear(x_dbm) * 1e-3
}

pub fn w_to_dbw(w: f64) -> f64 {
    10.0 * w.log10()
}

/// Multicell uplink scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cells: usize,
    pub users_per_cell: usize,
    pub cell_edge_m: f64,
    pub min_distance_m: f64,
    pub antennas_n: usize,
    pub pathloss_exp: f64,
    /// Path loss at 1 km, dB.
    pub pathloss_ref_db: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub p_c_dbm: f64,
    pub p_max_dbw: f64,
    pub tau: f64,
    pub eps_impairment: f64,
    /// Self-interference scale factor in `phi`.
    pub n_eff: f64,
    pub rho: f64,
    pub rate_bps: f64,
    pub theta: f64,
    /// Per-slot packet arrival probability.
    pub arrival_prob: f64,
    /// Packet length (symbols) of the reference curve used to fit `delta`.
    pub packet_len_q: u32,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cells: 4,
            users_per_cell: 8,
            cell_edge_m: 500.0,
            min_distance_m: 10.0,
            antennas_n: 64,
            pathloss_exp: 3.5,
            pathloss_ref_db: 128.1,
            noise_figure_db: 3.0,
            bandwidth_hz: 180e3,
            noise_psd_dbm_hz: -174.0,
            p_c_dbm: 10.0,
            p_max_dbw: -10.0,
            tau: 0.3,
            eps_impairment: 0.1,
            n_eff: 1.0,
            rho: 1.0,
            rate_bps: 1e6,
            theta: 0.99,
            arrival_prob: 0.0,
            packet_len_q: 100,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Desk-scale variant: 2 cells with 4 users each.
    pub fn desk() -> Self {
        Self {
            cells: 2,
            users_per_cell: 4,
            ..Self::default()
        }
    }

    pub fn num_links(&self) -> usize {
        self.cells * self.users_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cell_edge_m", self.cell_edge_m),
            ("bandwidth_hz", self.bandwidth_hz),
            ("pathloss_exp", self.pathloss_exp),
            ("rho", self.rho),
            ("rate_bps", self.rate_bps),
            ("n_eff", self.n_eff),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("{v} must be finite and > 0")));
            }
        }
        for (field, v) in [
            ("pathloss_ref_db", self.pathloss_ref_db),
            ("noise_figure_db", self.noise_figure_db),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("p_c_dbm", self.p_c_dbm),
            ("p_max_dbw", self.p_max_dbw),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, format!("{v} must be finite")));
            }
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must be at most 2^63 - 1"));
        }
        if self.cells == 0 {
            return Err(invalid("cells", "must be >= 1"));
        }
        if self.users_per_cell == 0 {
            return Err(invalid("users_per_cell", "must be >= 1"));
        }
        if self.antennas_n == 0 {
            return Err(invalid("antennas_n", "must be >= 1"));
        }
        if self.packet_len_q == 0 {
            return Err(invalid("packet_len_q", "must be >= 1"));
        }
        if !(self.min_distance_m >= 0.0 && self.min_distance_m < self.cell_edge_m / 2.0) {
            return Err(invalid(
                "min_distance_m",
                format!(
                    "{} must lie in [0, cell_edge_m / 2 = {})",
                    self.min_distance_m,
                    self.cell_edge_m / 2.0
                ),
            ));
        }
        for (field, v) in [("tau", self.tau), ("eps_impairment", self.eps_impairment)] {
            if !(0.0..1.0).contains(&v) {
                return Err(invalid(field, format!("{v} must lie in [0, 1)")));
            }
        }
        if !(self.arrival_prob >= 0.0 && self.arrival_prob < 1.0) {
            return Err(invalid(
                "arrival_prob",
                format!("{} must lie in [0, 1)", self.arrival_prob),
            ));
        }
        if !(self.theta > 0.0 && self.theta < 1.0 && self.theta > self.arrival_prob) {
            return Err(invalid(
                "theta",
                format!(
                    "{} must lie in (0, 1) and exceed arrival_prob = {} (theta > lambda)",
                    self.theta, self.arrival_prob
                ),
            ));
        }
        Ok(())
    }

    /// Thermal noise power over the band, W.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_w(self.noise_psd_dbm_hz + self.noise_figure_db) * self.bandwidth_hz
    }

    /// Mean channel gain at distance `d_m`.
    pub fn pathloss_gain(&self, d_m: f64) -> f64 {
        let pl_db = self.pathloss_ref_db + 10.0 * self.pathloss_exp * (d_m / 1000.0).log10();
        db_to_linear(-pl_db)
    }

    /// Cell centres on a near-square grid of `cell_edge_m` squares.
    pub fn base_stations(&self) -> Vec<(f64, f64)> {
        let cols = (self.cells as f64).sqrt().ceil() as usize;
        (0..self.cells)
            .map(|c| {
                let (row, col) = (c / cols, c % cols);
                (
                    (col as f64 + 0.5) * self.cell_edge_m,
                    (row as f64 + 0.5) * self.cell_edge_m,
                )
            })
            .collect()
    }
}

/// Attempts per user before placement is declared failed.
pub const MAX_PLACEMENT_RETRIES: usize = 10_000;

/// User positions, cell by cell, uniform in each square at least `min_distance_m`
/// away from the cell's base station.
pub fn place_users<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<(f64, f64)>> {
    let half = cfg.cell_edge_m / 2.0;
    let mut users = Vec::with_capacity(cfg.num_links());
    for (c, (bx, by)) in cfg.base_stations().into_iter().enumerate() {
        for u in 0..cfg.users_per_cell {
            let mut placed = None;
            for _ in 0..MAX_PLACEMENT_RETRIES {
                let x = bx + rng.gen_range(-half..half);
                let y = by + rng.gen_range(-half..half);
                if (x - bx).hypot(y - by) >= cfg.min_distance_m {
                    placed = Some((x, y));
                    break;
                }
            }
            users.push(placed.ok_or_else(|| {
                Error::Placement(format!(
                    "user {u} of cell {c}: no position at least {} m from the base station",
                    cfg.min_distance_m
                ))
            })?);
        }
    }
    Ok(users)
}

/// Builds a game instance from the scenario; deterministic in `cfg.seed`.
pub fn generate(cfg: &ScenarioConfig) -> Result<GameSpec> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let users = place_users(cfg, &mut rng)?;
    let bs = cfg.base_stations();
    let k_total = users.len();
    let cell_of = |k: usize| k / cfg.users_per_cell;

    let delta = fit_delta(cfg.packet_len_q, &default_fit_grid());
    let success = SuccessModel::new(delta, cfg.arrival_prob, cfg.rate_bps)?;
    let sigma2 = cfg.noise_power_w();
    let leak = cfg.tau * cfg.tau + cfg.eps_impairment * cfg.eps_impairment;
    let gain_scale =
        cfg.antennas_n as f64 * (1.0 - cfg.tau * cfg.tau) * (1.0 - cfg.eps_impairment * cfg.eps_impairment);

    let mut links = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let (bx, by) = bs[cell_of(k)];
        let gains: Vec<f64> = users
            .iter()
            .map(|(ux, uy)| {
                let d = (ux - bx).hypot(uy - by).max(cfg.min_distance_m.max(1.0));
                let fading: f64 = rng.sample(Exp1);
                cfg.pathloss_gain(d) * fading
            })
            .collect();
        let g_kk = gains[k];
        let beta = gains
            .iter()
            .enumerate()
            .map(|(j, g)| match j {
                j if j == k => 0.0,
                j if cell_of(j) == cell_of(k) => g * leak,
                _ => *g,
            })
            .collect();
        links.push(LinkSpec {
            coeffs: LinkCoefficients::new(gain_scale * g_kk, g_kk * leak * cfg.n_eff, beta, sigma2)?,
            success,
            p_max: dbw_to_w(cfg.p_max_dbw),
            p_c: dbm_to_w(cfg.p_c_dbm),
            theta: cfg.theta,
            rho: cfg.rho,
        });
    }
    GameSpec::new(links)
}

/// Default fitting grid: 400 SINR values evenly spaced on `[0.05, 20]`.
pub fn default_fit_grid() -> Vec<f64> {
    let (lo, hi, n) = (0.05, 20.0, 400);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Squared error between `1 - exp(-delta g)` and the packet curve `(1 - exp(-g))^q`.
pub fn fit_error(delta: f64, q: u32, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|g| {
            let reference = (-(-g).exp_m1()).powi(q as i32);
            let model = -(-delta * g).exp_m1();
            (model - reference).powi(2)
        })
        .sum()
}

/// Least-squares `delta` for a packet of `q` symbols: golden-section search over
/// `ln delta` in `[ln 1e-4, ln 1e2]`.
pub fn fit_delta(q: u32, grid: &[f64]) -> f64 {
    assert!(q >= 1, "packet length must be >= 1");
    assert!(
        !grid.is_empty() && grid.iter().all(|g| *g > 0.0),
        "grid must be positive"
    );
    let f = |x: f64| fit_error(x.exp(), q, grid);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-4f64.ln(), 1e2f64.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    (0.5 * (a + b)).exp()
}

/// Sampling ranges for unit-scale random test instances.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstanceConfig {
    pub alpha: (f64, f64),
    pub phi: (f64, f64),
    pub beta: (f64, f64),
    pub sigma2: (f64, f64),
    pub p_max: (f64, f64),
    pub p_c: (f64, f64),
    pub theta: (f64, f64),
    pub lambda: (f64, f64),
    pub delta: (f64, f64),
    pub rho: (f64, f64),
    pub rate: f64,
}

impl Default for RandomInstanceConfig {
    fn default() -> Self {
        Self {
            alpha: (1.0, 2.0),
            phi: (0.0, 0.05),
            beta: (0.0, 0.2),
            sigma2: (0.01, 0.3),
            p_max: (1.0, 1.0),
            p_c: (0.0, 0.1),
            theta: (0.3, 0.9),
            lambda: (0.0, 0.2),
            delta: (1.0, 1.0),
            rho: (0.1, 1.0),
            rate: 1.0,
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Random K-link instance with every coefficient drawn uniformly from `cfg`.
/// No feasibility filtering is applied.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, k: usize, cfg: &RandomInstanceConfig) -> GameSpec {
    let links = (0..k)
        .map(|i| {
            let beta = (0..k).map(|j| if i == j { 0.0 } else { draw(rng, cfg.beta) }).collect();
            let lambda = draw(rng, cfg.lambda);
            let theta = draw(rng, cfg.theta).max(lambda + 0.05).min(0.999);
            LinkSpec {
                coeffs: LinkCoefficients::new(draw(rng, cfg.alpha), draw(rng, cfg.phi), beta, draw(rng, cfg.sigma2))
                    .expect("sampling ranges are valid"),
                success: SuccessModel::new(draw(rng, cfg.delta), lambda, cfg.rate).expect("sampling ranges are valid"),
                p_max: draw(rng, cfg.p_max),
                p_c: draw(rng, cfg.p_c),
                theta,
                rho: draw(rng, cfg.rho),
            }
        })
        .collect();
    GameSpec::new(links).expect("sampling ranges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unit_conversions() {
        assert_relative_eq!(dbm_to_w(30.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(dbm_to_w(10.0), 0.01, max_relative = 1e-15);
        assert_relative_eq!(dbw_to_w(-10.0), 0.1, max_relative = 1e-15);
        assert_relative_eq!(w_to_dbw(dbw_to_w(-37.0)), -37.0, max_relative = 1e-14);
    }

    #[test]
    fn noise_power_matches_defaults() {
        let expected = 10f64.powf((-174.0 + 3.0) / 10.0) * 1e-3 * 180000.0;
        assert_relative_eq!(
            ScenarioConfig::default().noise_power_w(),
            expected,
            max_relative = 1e-14
        );
    }

    #[test]
    fn pathloss_reference_point() {
        let cfg = ScenarioConfig::default();
        assert_relative_eq!(cfg.pathloss_gain(1000.0), db_to_linear(-128.1), max_relative = 1e-14);
        // 10x distance costs 35 dB at exponent 3.5
        assert_relative_eq!(
            cfg.pathloss_gain(100.0) / cfg.pathloss_gain(1000.0),
            db_to_linear(35.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn default_layout_is_two_by_two() {
        let bs = ScenarioConfig::default().base_stations();
        assert_eq!(bs, vec![(250.0, 250.0), (750.0, 250.0), (250.0, 750.0), (750.0, 750.0)]);
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = ScenarioConfig {
            seed: 42,
            ..ScenarioConfig::desk()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&ScenarioConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_structure() {
        let cfg = ScenarioConfig {
            seed: 7,
            ..ScenarioConfig::default()
        };
        let spec = generate(&cfg).unwrap();
        assert_eq!(spec.len(), 32);
        for (k, l) in spec.links.iter().enumerate() {
            l.validate().unwrap();
            assert_relative_eq!(l.coeffs.sigma2, cfg.noise_power_w(), max_relative = 1e-14);
            assert_relative_eq!(l.p_c, 0.01, max_relative = 1e-14);
            for j in 0..spec.len() {
                // beta present in both directions
                assert_eq!(j == k, l.coeffs.beta[j] == 0.0);
                assert_eq!(j == k, spec.links[j].coeffs.beta[k] == 0.0);
            }
        }
    }

    #[test]
    fn placement_respects_min_distance() {
        let cfg = ScenarioConfig {
            min_distance_m: 200.0,
            seed: 3,
            ..ScenarioConfig::default()
        };
        let users = place_users(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let bs = cfg.base_stations();
        for (k, (x, y)) in users.iter().enumerate() {
            let (bx, by) = bs[k / cfg.users_per_cell];
            assert!((x - bx).hypot(y - by) >= 200.0);
            assert!((x - bx).abs() <= 250.0 && (y - by).abs() <= 250.0);
        }
    }

    #[test]
    fn no_impairments_means_no_self_interference() {
        let cfg = ScenarioConfig {
            tau: 0.0,
            eps_impairment: 0.0,
            seed: 5,
            ..ScenarioConfig::desk()
        };
        let spec = generate(&cfg).unwrap();
        assert!(spec.links.iter().all(|l| l.coeffs.phi == 0.0));
    }

    #[test]
    fn rayleigh_power_has_unit_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mean: f64 = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ScenarioConfig {
            theta: 0.1,
            arrival_prob: 0.2,
            ..ScenarioConfig::default()
        };
        let err = generate(&cfg).unwrap_err();
        assert!(err.to_string().contains("theta > lambda"), "{err}");
        let cfg = ScenarioConfig {
            cells: 0,
            ..ScenarioConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn fit_delta_unit_packet() {
        assert_relative_eq!(fit_delta(1, &default_fit_grid()), 1.0, max_relative = 1e-6);
    }

    #[test]
    fn fit_delta_beats_brute_force_scan() {
        let grid = default_fit_grid();
        for q in [2, 10, 100] {
            let d = fit_delta(q, &grid);
            assert!(d < 1.0);
            let best = fit_error(d, q, &grid);
            let n = 10_000;
            for i in 0..n {
                let cand = (1e-4f64.ln() + (1e2f64.ln() - 1e-4f64.ln()) * i as f64 / (n - 1) as f64).exp();
                assert!(best <= fit_error(cand, q, &grid) * (1.0 + 1e-12), "q={q} cand={cand}");
            }
        }
    }

    #[test]
    fn fit_delta_decreases_with_packet_length() {
        let grid = default_fit_grid();
        let ds: Vec<f64> = [1, 2, 5, 20, 100, 500].iter().map(|q| fit_delta(*q, &grid)).collect();
        assert!(ds.windows(2).all(|w| w[1] < w[0]), "{ds:?}");
    }

    #[test]
    fn random_instances_are_valid_and_seeded() {
        let cfg = RandomInstanceConfig::default();
        let a = random_instance(&mut ChaCha8Rng::seed_from_u64(1), 5, &cfg);
        let b = random_instance(&mut ChaCha8Rng::seed_from_u64(1), 5, &cfg);
        assert_eq!(a, b);
        a.validate().unwrap();
    }
}
