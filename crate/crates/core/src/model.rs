//! SINR model, success-probability functions and per-link cost metrics.
//!
//! All powers are in Watts. A link's SINR has the general form
//!
//! ```text
//! gamma_k = p_k alpha_k / (sigma2_k + phi_k p_k + sum_{j != k} p_j beta_{k,j})
//!         = p_k alpha_k / (phi_k p_k + omega_k)
//! ```
//!
//! where `omega_k` collects noise plus interference from the other links.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Per-link SINR coefficients.
///
/// `beta` is a full row of length K; the entry at the link's own index is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCoefficients {
    pub alpha: f64,
    pub phi: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl LinkCoefficients {
    pub fn new(alpha: f64, phi: f64, beta: Vec<f64>, sigma2: f64) -> Result<Self> {
        let c = Self {
            alpha,
            phi,
            beta,
            sigma2,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(invalid("alpha", format!("{} must be finite and > 0", self.alpha)));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return Err(invalid("phi", format!("{} must be finite and >= 0", self.phi)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(invalid("sigma2", format!("{} must be finite and > 0", self.sigma2)));
        }
        if let Some(b) = self.beta.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return Err(invalid("beta", format!("entry {b} must be finite and >= 0")));
        }
        Ok(())
    }

    /// SINR as a function of own power and aggregate noise-plus-interference.
    pub fn gamma(&self, p: f64, omega: f64) -> f64 {
        if p == 0.0 {
            return 0.0;
        }
        p * self.alpha / (self.phi * p + omega)
    }

    /// d gamma / d p at fixed omega.
    pub fn dgamma_dp(&self, p: f64, omega: f64) -> f64 {
        let d = self.phi * p + omega;
        self.alpha * omega / (d * d)
    }

    /// d^2 gamma / d p^2 at fixed omega.
    pub fn d2gamma_dp2(&self, p: f64, omega: f64) -> f64 {
        let d = self.phi * p + omega;
        -2.0 * self.alpha * omega * self.phi / (d * d * d)
    }

    /// SINR ceiling `alpha / phi` reached as `p -> inf` (infinite when `phi = 0`).
    pub fn gamma_ceiling(&self) -> f64 {
        if self.phi == 0.0 {
            f64::INFINITY
        } else {
            self.alpha / self.phi
        }
    }

    /// Smallest power reaching SINR `target` against `omega`, or `None` when
    /// the target is at or above the self-interference ceiling.
    pub fn power_for_gamma(&self, target: f64, omega: f64) -> Option<f64> {
        let denom = self.alpha - target * self.phi;
        if denom <= 0.0 {
            None
        } else {
            Some(target * omega / denom)
        }
    }
}

/// Success-probability function contract: value, first two derivatives and inverse.
///
/// Implementations must satisfy [`check_properties`]: `S(0) = 0`, `S >= 0`,
/// non-decreasing, concave, and `S(g)/g -> 0`.
pub trait SuccessCurve {
    fn value(&self, gamma: f64) -> f64;
    fn derivative(&self, gamma: f64) -> f64;
    fn second_derivative(&self, gamma: f64) -> f64;
    /// Inverse on `(0, 1)` (or the function's range).
    fn inverse(&self, y: f64) -> Result<f64>;

    /// `S(gamma) / S'(gamma)`, overridable where a closed form is more accurate.
    fn value_over_derivative(&self, gamma: f64) -> f64 {
        self.value(gamma) / self.derivative(gamma)
    }
}

/// Log-spaced grid on `[lo, hi]` with `n` points.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Checks the four structural properties of a success function on a log grid
/// over `[1e-6, 1e6]`, plus `S(0) = 0`.
pub fn check_properties<C: SuccessCurve + ?Sized>(curve: &C) -> Result<()> {
    let s0 = curve.value(0.0);
    if s0.abs() > 1e-15 {
        return Err(Error::ModelViolation(format!("S(0) = {s0}, expected 0")));
    }
    let grid = log_grid(1e-6, 1e6, 241);
    let mut prev_s = s0;
    let mut prev_ratio = f64::INFINITY;
    for &g in &grid {
        let s = curve.value(g);
        let d1 = curve.derivative(g);
        let d2 = curve.second_derivative(g);
        if !(s >= 0.0) {
            return Err(Error::ModelViolation(format!("S({g}) = {s} is negative")));
        }
        if s < prev_s - 1e-15 {
            return Err(Error::ModelViolation(format!("S decreases at {g}")));
        }
        if !(d1 >= 0.0) {
            return Err(Error::ModelViolation(format!("S'({g}) = {d1} is negative")));
        }
        if d2 > 1e-12 * d1.abs().max(1.0) {
            return Err(Error::ModelViolation(format!("S''({g}) = {d2} > 0 (not concave)")));
        }
        let ratio = s / g;
        if ratio > prev_ratio * (1.0 + 1e-12) {
            return Err(Error::ModelViolation(format!("S(g)/g increases at {g}")));
        }
        prev_s = s;
        prev_ratio = ratio;
    }
    let tail = curve.value(1e6) / 1e6;
    if tail > 1e-3 {
        return Err(Error::ModelViolation(format!(
            "S(g)/g = {tail} at g = 1e6 does not vanish"
        )));
    }
    Ok(())
}

/// Exponential success model `S(gamma) = 1 - exp(-delta gamma)` together with the
/// queue arrival probability and the link bit rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessModel {
    pub delta: f64,
    /// Per-slot packet arrival probability, in `[0, 1)`.
    pub lambda: f64,
    /// Bit rate, bits/s.
    pub rate: f64,
}

impl SuccessModel {
    pub fn new(delta: f64, lambda: f64, rate: f64) -> Result<Self> {
        let s = Self { delta, lambda, rate };
        s.validate()?;
        check_properties(&s)?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid("delta", format!("{} must be finite and > 0", self.delta)));
        }
        if !(self.lambda >= 0.0 && self.lambda < 1.0) {
            return Err(invalid("lambda", format!("{} must lie in [0, 1)", self.lambda)));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(invalid("rate", format!("{} must be finite and > 0", self.rate)));
        }
        Ok(())
    }

    /// `S(gamma)`, rejecting negative SINR.
    pub fn success(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0) {
            return Err(Error::Domain(format!("SINR {gamma} must be >= 0")));
        }
        Ok(self.value(gamma))
    }

    /// SINR at which the success probability equals the arrival probability.
    pub fn stability_gamma(&self) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            -(-self.lambda).ln_1p() / self.delta
        }
    }
}

impl SuccessCurve for SuccessModel {
    fn value(&self, gamma: f64) -> f64 {
        -(-self.delta * gamma).exp_m1()
    }

    fn derivative(&self, gamma: f64) -> f64 {
        self.delta * (-self.delta * gamma).exp()
    }

    fn second_derivative(&self, gamma: f64) -> f64 {
        -self.delta * self.delta * (-self.delta * gamma).exp()
    }

    fn inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y < 1.0) {
            return Err(Error::Domain(format!("success inverse needs 0 < y < 1, got {y}")));
        }
        Ok(-(-y).ln_1p() / self.delta)
    }

    fn value_over_derivative(&self, gamma: f64) -> f64 {
        // (1 - e^{-x}) / (delta e^{-x}) = (e^{x} - 1) / delta
        (self.delta * gamma).exp_m1() / self.delta
    }
}

/// Full description of one transmitter-receiver link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub coeffs: LinkCoefficients,
    pub success: SuccessModel,
    /// Power budget, W.
    pub p_max: f64,
    /// Circuit power, W.
    pub p_c: f64,
    /// Minimum success probability (QoS threshold).
    pub theta: f64,
    /// Delay weight, J/s.
    pub rho: f64,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        self.coeffs.validate()?;
        self.success.validate()?;
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(invalid("p_max", format!("{} must be finite and > 0", self.p_max)));
        }
        if !(self.p_c.is_finite() && self.p_c >= 0.0) {
            return Err(invalid("p_c", format!("{} must be finite and >= 0", self.p_c)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(invalid("theta", format!("{} must lie in (0, 1)", self.theta)));
        }
        if !(self.theta > self.success.lambda) {
            return Err(invalid(
                "theta",
                format!(
                    "QoS threshold {} must exceed the arrival probability lambda = {} (theta > lambda)",
                    self.theta, self.success.lambda
                ),
            ));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(invalid("rho", format!("{} must be finite and > 0", self.rho)));
        }
        Ok(())
    }

    pub fn s(&self, gamma: f64) -> f64 {
        self.success.value(gamma)
    }

    /// Minimum SINR meeting the QoS threshold, `S^-1(theta)`.
    pub fn qos_gamma(&self) -> f64 {
        -(-self.theta).ln_1p() / self.success.delta
    }

    /// Power at which the link's success probability equals its arrival probability
    /// against `omega`. Errors when no finite power keeps the queue stable.
    pub fn stability_power(&self, omega: f64) -> Result<f64> {
        let g = self.success.stability_gamma();
        if g == 0.0 {
            return Ok(0.0);
        }
        self.coeffs.power_for_gamma(g, omega).ok_or_else(|| {
            Error::ModelViolation(format!(
                "arrival probability {} unreachable below the SINR ceiling {}",
                self.success.lambda,
                self.coeffs.gamma_ceiling()
            ))
        })
    }
}

/// A complete game instance: K links with a square interference structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub links: Vec<LinkSpec>,
}

impl GameSpec {
    pub fn new(links: Vec<LinkSpec>) -> Result<Self> {
        let spec = Self { links };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.links.len();
        if k == 0 {
            return Err(invalid("links", "at least one link is required"));
        }
        for (i, link) in self.links.iter().enumerate() {
            link.validate().map_err(|e| match e {
                Error::InvalidParameter { field, reason } => Error::InvalidParameter {
                    field: format!("links[{i}].{field}"),
                    reason,
                },
                other => other,
            })?;
            if link.coeffs.beta.len() != k {
                return Err(Error::Dimension(format!(
                    "links[{i}].beta has {} entries, expected {k}",
                    link.coeffs.beta.len()
                )));
            }
            if link.coeffs.beta[i] != 0.0 {
                return Err(invalid(
                    format!("links[{i}].beta[{i}]"),
                    "own-index cross gain must be zero",
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn p_max(&self) -> PowerVector {
        PowerVector(self.links.iter().map(|l| l.p_max).collect())
    }

    /// Noise plus interference seen by link `k`: `sigma2_k + sum_{j != k} beta_{k,j} p_j`.
    pub fn omega(&self, k: usize, p: &[f64]) -> f64 {
        let c = &self.links[k].coeffs;
        c.sigma2
            + c.beta
                .iter()
                .zip(p)
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, (b, pj))| b * pj)
                .sum::<f64>()
    }

    /// SINR of link `k` under the joint allocation `p`.
    pub fn sinr(&self, k: usize, p: &[f64]) -> f64 {
        let c = &self.links[k].coeffs;
        let p_k = p[k];
        if p_k == 0.0 {
            return 0.0;
        }
        p_k * c.alpha / (c.sigma2 + c.phi * p_k + self.interference(k, p))
    }

    fn interference(&self, k: usize, p: &[f64]) -> f64 {
        self.links[k]
            .coeffs
            .beta
            .iter()
            .zip(p)
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, (b, pj))| b * pj)
            .sum()
    }

    pub fn sinrs(&self, p: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|k| self.sinr(k, p)).collect()
    }

    /// Per-link cost at the allocation `p`; unstable links cost `+inf`.
    pub fn link_costs(&self, p: &[f64]) -> Vec<f64> {
        self.links
            .iter()
            .enumerate()
            .map(|(k, l)| link_cost(l, p[k], self.sinr(k, p)).unwrap_or(f64::INFINITY))
            .collect()
    }

    /// Validates that a power vector has the right length and lies in the boxes.
    pub fn check_box(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.len() {
            return Err(Error::Dimension(format!(
                "power vector has {} entries, expected {}",
                p.len(),
                self.len()
            )));
        }
        for (k, (pk, l)) in p.iter().zip(&self.links).enumerate() {
            if !(pk.is_finite() && *pk >= 0.0 && *pk <= l.p_max * (1.0 + 1e-12)) {
                return Err(Error::Domain(format!("p[{k}] = {pk} outside [0, {}]", l.p_max)));
            }
        }
        Ok(())
    }
}

/// Joint transmit powers in Watts: finite and non-negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector(Vec<f64>);

impl PowerVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = p.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("p[{k}]"), format!("{v} must be finite and >= 0")));
        }
        Ok(Self(p))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PowerVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Average time per reliably delivered bit, `1 / (R (S - lambda))`, in s/bit.
pub fn delay_cost(link: &LinkSpec, gamma: f64) -> Result<f64> {
    let margin = link.s(gamma) - link.success.lambda;
    if !(margin > 0.0) {
        return Err(Error::QueueUnstable { link: None });
    }
    Ok(1.0 / (link.success.rate * margin))
}

/// Energy per reliably delivered bit, `(p + P_C) / (R S)`, in J/bit.
///
/// Returns `+inf` when nothing is delivered (`gamma = 0`).
pub fn energy_cost(link: &LinkSpec, p: f64, gamma: f64) -> f64 {
    let s = link.s(gamma);
    if s <= 0.0 {
        return f64::INFINITY;
    }
    (p + link.p_c) / (link.success.rate * s)
}

/// Scalarized link cost `rho D + F` in J/bit.
pub fn link_cost(link: &LinkSpec, p: f64, gamma: f64) -> Result<f64> {
    Ok(link.rho * delay_cost(link, gamma)? + energy_cost(link, p, gamma))
}

/// `d c_k / d p_k` at fixed interference `omega`.
pub fn link_cost_gradient(link: &LinkSpec, p: f64, omega: f64) -> Result<f64> {
    let c = &link.coeffs;
    let gamma = c.gamma(p, omega);
    let s = link.s(gamma);
    let margin = s - link.success.lambda;
    if !(margin > 0.0) {
        return Err(Error::QueueUnstable { link: None });
    }
    let ds = link.success.derivative(gamma) * c.dgamma_dp(p, omega);
    let r = link.success.rate;
    Ok((-link.rho * ds / (margin * margin) + 1.0 / s - (p + link.p_c) * ds / (s * s)) / r)
}

/// Stationarity residual of the link cost,
///
/// ```text
/// g(p) = S / (S' dgamma/dp) - p - rho S^2 / (S - lambda)^2 - P_C
/// ```
///
/// which has the sign of `d c_k / d p_k` and is strictly increasing on
/// `(p_lambda, inf)`, running from `-inf` (or `-(rho + P_C)` when `lambda = 0`)
/// to `+inf`.
pub fn stationarity_residual(link: &LinkSpec, p: f64, omega: f64) -> Result<f64> {
    let p_lambda = link.stability_power(omega)?;
    if !(p > p_lambda) {
        return Err(Error::Domain(format!(
            "stationarity residual needs p > p_lambda = {p_lambda:e}, got {p:e}"
        )));
    }
    Ok(residual_unchecked(link, p, omega))
}

pub(crate) fn residual_unchecked(link: &LinkSpec, p: f64, omega: f64) -> f64 {
    let c = &link.coeffs;
    let gamma = c.gamma(p, omega);
    let s = link.s(gamma);
    let margin = s - link.success.lambda;
    if !(margin > 0.0) {
        return f64::NEG_INFINITY;
    }
    let d = c.phi * p + omega;
    // S / (S' dgamma/dp) with dgamma/dp = alpha omega / d^2
    let lead = link.success.value_over_derivative(gamma) * d * d / (c.alpha * omega);
    let ratio = s / margin;
    lead - p - link.rho * ratio * ratio - link.p_c
}
