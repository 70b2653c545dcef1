//! Scalar root finding, spectral radius, dense linear solves and finite differences.
//!
//! Everything here is a pure function of its inputs; the solvers call these
//! from many places and rely on bit-identical results for identical inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Maximum number of geometric doublings attempted by [`expand_bracket`].
pub const MAX_DOUBLINGS: usize = 200;

const MAX_BISECTIONS: usize = 2_000;

/// A scalar root problem with a sign change across `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct BracketedRootProblem<F> {
    pub residual: F,
    pub lo: f64,
    pub hi: f64,
    /// Stop once the bracket is at most this wide.
    pub tol_x: f64,
    /// Stop once `|residual| <= tol_f`.
    pub tol_f: f64,
}

impl<F: FnMut(f64) -> f64> BracketedRootProblem<F> {
    pub fn new(residual: F, lo: f64, hi: f64) -> Self {
        Self {
            residual,
            lo,
            hi,
            tol_x: 0.0,
            tol_f: 0.0,
        }
    }

    pub fn tol_x(mut self, tol: f64) -> Self {
        self.tol_x = tol;
        self
    }

    pub fn tol_f(mut self, tol: f64) -> Self {
        self.tol_f = tol;
        self
    }

    pub fn bisect(self) -> Result<f64> {
        bisect(self)
    }
}

/// Bisection on a bracket with a sign change.
///
/// Runs until the residual is within `tol_f`, the bracket is narrower than
/// `tol_x`, or the bracket cannot be split further in floating point. Returns
/// whichever evaluated point has the smallest residual magnitude.
pub fn bisect<F: FnMut(f64) -> f64>(problem: BracketedRootProblem<F>) -> Result<f64> {
    let BracketedRootProblem {
        mut residual,
        mut lo,
        mut hi,
        tol_x,
        tol_f,
    } = problem;
    if !(lo <= hi) {
        return Err(Error::Domain(format!("bracket [{lo}, {hi}] is empty")));
    }
    let mut f_lo = residual(lo);
    let f_hi = residual(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.is_nan() || f_hi.is_nan() || f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let mut best = if f_lo.abs() <= f_hi.abs() {
        (lo, f_lo.abs())
    } else {
        (hi, f_hi.abs())
    };
    for _ in 0..MAX_BISECTIONS {
        if best.1 <= tol_f || hi - lo <= tol_x {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = residual(mid);
        if f_mid.is_nan() {
            return Err(Error::Domain(format!("residual is NaN at {mid}")));
        }
        if f_mid.abs() < best.1 {
            best = (mid, f_mid.abs());
        }
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}

/// Safeguarded Newton iteration inside a bracket.
///
/// Takes a Newton step whenever it lands strictly inside the current bracket
/// and falls back to bisection otherwise, so it converges whenever [`bisect`]
/// does.
pub fn newton_bisect<F, D>(mut residual: F, mut derivative: D, lo: f64, hi: f64, tol_x: f64, tol_f: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (lo, hi);
    let mut f_lo = residual(lo);
    let f_hi = residual(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || f_lo.is_nan() || f_hi.is_nan() {
        return Err(Error::NoSignChange { lo, hi, f_lo, f_hi });
    }
    let mut x = lo + 0.5 * (hi - lo);
    for _ in 0..MAX_BISECTIONS {
        let fx = residual(x);
        if fx.abs() <= tol_f || hi - lo <= tol_x {
            return Ok(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let d = derivative(x);
        let step = x - fx / d;
        let next = if d.is_finite() && d != 0.0 && step > lo && step < hi {
            step
        } else {
            lo + 0.5 * (hi - lo)
        };
        if next == x || next <= lo || next >= hi {
            let mid = lo + 0.5 * (hi - lo);
            if mid <= lo || mid >= hi {
                return Ok(x);
            }
            x = mid;
        } else {
            x = next;
        }
    }
    Ok(x)
}

/// Grows `hint` geometrically (factor 2) until the residual turns positive.
///
/// Returns `(lo', hi)` where `hi` has a positive residual and `lo'` is the
/// largest evaluated point with a non-positive residual (or `lo` itself).
pub fn expand_bracket<F: FnMut(f64) -> f64>(mut residual: F, lo: f64, hint: f64) -> Result<(f64, f64)> {
    if !(hint > lo) || !hint.is_finite() {
        return Err(Error::Domain(format!(
            "bracket hint {hint} must exceed the lower end {lo}"
        )));
    }
    let mut last_neg = lo;
    let mut x = hint;
    for _ in 0..=MAX_DOUBLINGS {
        let fx = residual(x);
        if fx > 0.0 {
            return Ok((last_neg, x));
        }
        last_neg = x;
        x *= 2.0;
        if !x.is_finite() {
            break;
        }
    }
    Err(Error::ExpansionFailed {
        doublings: MAX_DOUBLINGS,
    })
}

/// Square matrix with finite, non-negative entries (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct NonnegativeMatrix {
    n: usize,
    data: Vec<f64>,
}

impl NonnegativeMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::Domain(format!(
                        "entry ({i}, {j}) = {v} is not finite and non-negative"
                    )));
                }
                data.push(v);
            }
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .map(<[f64]>::to_vec)
            .take(self.n)
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    fn max_row_sum(&self) -> f64 {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(|row| row.iter().sum::<f64>())
            .fold(0.0, f64::max)
    }
}

const POWER_ITER_MAX: usize = 10_000;
const POWER_ITER_TOL: f64 = 1e-10;

/// Spectral radius of a non-negative matrix by shifted power iteration.
///
/// Iterates `x <- (M/s + I) x` from a positive start, where `s` is the largest
/// row sum. The shift makes the Perron root the unique dominant eigenvalue even
/// for periodic matrices. Collatz-Wielandt bounds bracket the answer while the
/// iterate stays positive; otherwise the growth-rate estimate is used.
pub fn spectral_radius(m: &NonnegativeMatrix) -> f64 {
    let n = m.dim();
    let scale = m.max_row_sum();
    if n == 0 || scale == 0.0 {
        return 0.0;
    }
    let b = m.scaled(1.0 / scale);
    let mut x = vec![1.0 / n as f64; n];
    let mut prev_growth = f64::NAN;
    let mut stalled = 0;
    let mut estimate = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let bx = b.mul_vec(&x);
        let (mut lower, mut upper) = (f64::INFINITY, 0.0f64);
        for (bxi, xi) in bx.iter().zip(&x) {
            if *xi > 0.0 {
                let r = bxi / xi;
                lower = lower.min(r);
                upper = upper.max(r);
            }
        }
        let next: Vec<f64> = x.iter().zip(&bx).map(|(xi, bxi)| xi + bxi).collect();
        let norm_x: f64 = x.iter().sum();
        let norm_next: f64 = next.iter().sum();
        let growth = norm_next / norm_x - 1.0;
        estimate = growth;
        if upper - lower <= 1e-13 * upper.max(f64::MIN_POSITIVE) {
            estimate = 0.5 * (upper + lower);
            break;
        }
        if (growth - prev_growth).abs() < POWER_ITER_TOL * 1e-4 * (1.0 + growth) {
            stalled += 1;
            if stalled >= 50 {
                break;
            }
        } else {
            stalled = 0;
        }
        prev_growth = growth;
        x = next.into_iter().map(|v| v / norm_next).collect();
    }
    scale * estimate.max(0.0)
}

/// Solves `m x = rhs` by LU decomposition with partial pivoting.
pub fn solve_linear(m: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("expected a {n}x{n} system")));
    }
    let a = DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let b = DVector::from_column_slice(rhs);
    let x = a.clone().lu().solve(&b).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let residual = (&a * &x - &b).norm();
    if residual > 1e-8 * (1.0 + b.norm()) {
        return Err(Error::Singular);
    }
    Ok(x.iter().copied().collect())
}

/// Default central-difference step: `max(1e-6, 1e-6 |x|)`.
pub fn default_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

/// Central finite difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: Option<f64>) -> f64 {
    let h = h.unwrap_or_else(|| default_step(x));
    (f(x + h) - f(x - h)) / (2.0 * h)
}
