//! Dinkelbach's method for `min f(x) / g(x)` with `g > 0`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachReport<X> {
    pub x: X,
    /// Ratio `f(x) / g(x)` at the returned point.
    pub lambda: f64,
    pub iterations: usize,
    /// Parameter used by each inner solve, starting with zero.
    pub lambda_trace: Vec<f64>,
    /// `F(lambda) = f(x) - lambda g(x)` after each inner solve.
    pub f_trace: Vec<f64>,
    pub converged: bool,
}

/// Solves `x = argmin f - lambda g` repeatedly, updating `lambda = f(x) / g(x)`,
/// until `|F(lambda)| < tol`.
///
/// `minimizer(lambda)` must return an exact minimizer of the parametrized
/// problem; its errors are reported as [`Error::InnerSolverFailure`].
pub fn dinkelbach<X, F, G, M>(f: F, g: G, mut minimizer: M, tol: f64, max_iters: usize) -> Result<DinkelbachReport<X>>
where
    X: Clone,
    F: Fn(&X) -> f64,
    G: Fn(&X) -> f64,
    M: FnMut(f64) -> Result<X>,
{
    let mut lambda = 0.0;
    let mut report = DinkelbachReport {
        x: None,
        lambda,
        iterations: 0,
        lambda_trace: Vec::new(),
        f_trace: Vec::new(),
        converged: false,
    };
    for _ in 0..max_iters {
        report.iterations += 1;
        report.lambda_trace.push(lambda);
        let x = minimizer(lambda).map_err(|e| Error::InnerSolverFailure(e.to_string()))?;
        let (fx, gx) = (f(&x), g(&x));
        if !(gx > 0.0) {
            return Err(Error::NonpositiveDenominator(gx));
        }
        let big_f = fx - lambda * gx;
        report.f_trace.push(big_f);
        lambda = fx / gx;
        report.x = Some(x);
        if big_f.abs() < tol {
            report.converged = true;
            break;
        }
    }
    let x = report
        .x
        .ok_or_else(|| Error::InnerSolverFailure("no iterations were run".into()))?;
    Ok(DinkelbachReport {
        x,
        lambda,
        iterations: report.iterations,
        lambda_trace: report.lambda_trace,
        f_trace: report.f_trace,
        converged: report.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `f = a (x - c)^2 + d`, `g = e x + h`, on `[lo, hi]`.
    #[derive(Debug, Clone, Copy)]
    struct Ratio {
        a: f64,
        c: f64,
        d: f64,
        e: f64,
        h: f64,
        lo: f64,
        hi: f64,
    }

    impl Ratio {
        fn random(rng: &mut ChaCha8Rng) -> Self {
            let (lo, hi): (f64, f64) = (0.0, rng.gen_range(1.0..5.0));
            let e: f64 = rng.gen_range(-0.5..2.0);
            // g stays at least 0.1 on the interval
            let h = rng.gen_range(0.1..2.0) + (-e * hi).max(0.0);
            Self {
                a: rng.gen_range(0.1..3.0),
                c: rng.gen_range(-1.0..6.0),
                d: rng.gen_range(0.0..2.0),
                e,
                h,
                lo,
                hi,
            }
        }
        fn f(&self, x: f64) -> f64 {
            self.a * (x - self.c).powi(2) + self.d
        }
        fn g(&self, x: f64) -> f64 {
            self.e * x + self.h
        }
        fn inner(&self, lambda: f64) -> f64 {
            (self.c + lambda * self.e / (2.0 * self.a)).clamp(self.lo, self.hi)
        }
        fn solve(&self) -> DinkelbachReport<f64> {
            dinkelbach(|x| self.f(*x), |x| self.g(*x), |l| Ok(self.inner(l)), 1e-10, 100).unwrap()
        }
    }

    #[test]
    fn matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let r = Ratio::random(&mut rng);
            let out = r.solve();
            assert!(out.converged && out.iterations <= 20, "{} iterations", out.iterations);
            let n = 1_000_000;
            let best = (0..=n)
                .map(|i| {
                    let x = r.lo + (r.hi - r.lo) * i as f64 / n as f64;
                    r.f(x) / r.g(x)
                })
                .fold(f64::INFINITY, f64::min);
            assert!(out.lambda <= best + 1e-9, "{} vs grid {best}", out.lambda);
            assert_relative_eq!(out.lambda, r.f(out.x) / r.g(out.x), max_relative = 1e-12);
        }
    }

    #[test]
    fn lambda_never_increases_after_first_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let out = Ratio::random(&mut rng).solve();
            for w in out.lambda_trace[1..].windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "{:?}", out.lambda_trace);
            }
            for big_f in &out.f_trace[1..] {
                assert!(*big_f <= 1e-15);
            }
        }
    }

    #[test]
    fn equal_numerator_and_denominator() {
        let out = dinkelbach(|x: &f64| 1.0 + x, |x: &f64| 1.0 + x, |_| Ok(0.5), 1e-12, 10).unwrap();
        assert_eq!(out.lambda, 1.0);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn nonpositive_denominator_is_rejected() {
        let err = dinkelbach(|_: &f64| 1.0, |x: &f64| *x, |_| Ok(0.0), 1e-10, 10).unwrap_err();
        assert_eq!(err, Error::NonpositiveDenominator(0.0));
    }

    #[test]
    fn inner_failure_is_wrapped() {
        let err = dinkelbach(|_: &f64| 1.0, |_: &f64| 1.0, |_| Err(Error::NoFeasiblePoint), 1e-10, 10).unwrap_err();
        assert!(matches!(err, Error::InnerSolverFailure(_)));
    }
}
