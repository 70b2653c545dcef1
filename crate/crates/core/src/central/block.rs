use crate::model::{GameSpec, SuccessCurve};

/// Network costs as functions of one link's power with all others frozen.
///
/// Precomputes the interference each link sees from everyone except link `k`,
/// so one evaluation costs O(K).
#[derive(Debug, Clone)]
pub struct BlockView<'a> {
    spec: &'a GameSpec,
    k: usize,
    p: &'a [f64],
    /// `phi_l p_l + sigma2_l + sum_{j != l, k} beta_{l,j} p_j` for `l != k`;
    /// `omega_k` itself at index `k`.
    base: Vec<f64>,
    /// `sum_{j != k} (p_j + P_C,j) + P_C,k`
    energy_base: f64,
}

/// Per-link SINR and its derivative in `p_k`.
#[derive(Debug, Clone, Copy)]
struct Sample {
    gamma: f64,
    dgamma: f64,
}

impl<'a> BlockView<'a> {
    pub fn new(spec: &'a GameSpec, k: usize, p: &'a [f64]) -> Self {
        let base = (0..spec.len())
            .map(|l| {
                let c = &spec.links[l].coeffs;
                let omega_without_k = spec.omega(l, p) - if l == k { 0.0 } else { c.beta[k] * p[k] };
                if l == k {
                    omega_without_k
                } else {
                    omega_without_k + c.phi * p[l]
                }
            })
            .collect();
        let energy_base = p
            .iter()
            .zip(&spec.links)
            .enumerate()
            .map(|(j, (pj, l))| if j == k { l.p_c } else { pj + l.p_c })
            .sum();
        Self {
            spec,
            k,
            p,
            base,
            energy_base,
        }
    }

    pub fn block(&self) -> usize {
        self.k
    }

    fn sample(&self, l: usize, pk: f64) -> Sample {
        let c = &self.spec.links[l].coeffs;
        if l == self.k {
            let omega = self.base[l];
            let d = c.phi * pk + omega;
            Sample {
                gamma: if pk == 0.0 { 0.0 } else { pk * c.alpha / d },
                dgamma: c.alpha * omega / (d * d),
            }
        } else {
            let pl = self.p[l];
            let d = self.base[l] + c.beta[self.k] * pk;
            Sample {
                gamma: if pl == 0.0 { 0.0 } else { pl * c.alpha / d },
                dgamma: -pl * c.alpha * c.beta[self.k] / (d * d),
            }
        }
    }

    /// SINR of link `l` when link `k` transmits at `pk`.
    pub fn gamma(&self, l: usize, pk: f64) -> f64 {
        self.sample(l, pk).gamma
    }

    /// `d gamma_l / d p_k`.
    pub fn dgamma(&self, l: usize, pk: f64) -> f64 {
        self.sample(l, pk).dgamma
    }

    /// Network energy per bit and its derivative in `p_k`.
    pub fn energy(&self, pk: f64) -> (f64, f64) {
        let num = self.energy_base + pk;
        let (mut den, mut dden) = (0.0, 0.0);
        for (l, link) in self.spec.links.iter().enumerate() {
            let s = self.sample(l, pk);
            let r = link.success.rate;
            den += r * link.s(s.gamma);
            dden += r * link.success.derivative(s.gamma) * s.dgamma;
        }
        if den <= 0.0 {
            return (f64::INFINITY, f64::NAN);
        }
        (num / den, (den - num * dden) / (den * den))
    }

    /// Mean weighted delay and its derivative in `p_k`; `None` when some queue is unstable.
    pub fn delay_mean(&self, pk: f64) -> Option<(f64, f64)> {
        let (mut d, mut dd) = (0.0, 0.0);
        for (l, link) in self.spec.links.iter().enumerate() {
            let s = self.sample(l, pk);
            let margin = link.s(s.gamma) - link.success.lambda;
            if !(margin > 0.0) {
                return None;
            }
            let w = link.rho / link.success.rate;
            d += w / margin;
            dd -= w * link.success.derivative(s.gamma) * s.dgamma / (margin * margin);
        }
        let k = self.spec.len() as f64;
        Some((d / k, dd / k))
    }

    /// Sum cost at `pk`, `+inf` when a queue is unstable.
    pub fn cost_sum(&self, pk: f64) -> f64 {
        match self.delay_mean(pk) {
            Some((d, _)) => d + self.energy(pk).0,
            None => f64::INFINITY,
        }
    }

    /// `d c_sum / d p_k`, with the magnitude of its largest term for scaling.
    pub fn cost_sum_derivative(&self, pk: f64) -> Option<(f64, f64)> {
        let (_, dd) = self.delay_mean(pk)?;
        let (_, de) = self.energy(pk);
        Some((dd + de, dd.abs().max(de.abs())))
    }
}
