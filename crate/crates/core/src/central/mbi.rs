use crate::error::{Error, Result};

/// A minimization problem split into scalar blocks.
pub trait BlockProblem {
    fn num_blocks(&self) -> usize;

    /// Objective at `x`, `+inf` where undefined.
    fn objective(&self, x: &[f64]) -> f64;

    /// Minimizer of block `b` with the other blocks fixed at `x`, or `None`
    /// when the block has no admissible move.
    fn solve_block(&self, b: usize, x: &[f64]) -> Result<Option<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbiConfig {
    /// Stop once an iteration lowers the objective by at most `epsilon * |objective|`.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Relative width at which per-block root refinement stops.
    pub stationary_tol: f64,
    /// Points in the sign-change scan of per-block residuals.
    pub grid_points: usize,
}

impl Default for MbiConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-10,
            max_iters: 2000,
            stationary_tol: 1e-9,
            grid_points: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbiOutcome {
    pub x: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub chosen_blocks: Vec<usize>,
    pub decrements: Vec<Vec<f64>>,
    /// Iterate after each accepted update.
    pub x_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximum block improvement: at every iteration all blocks are solved against
/// the current point and only the one with the largest decrement moves.
/// Ties go to the lowest block index. Non-improving moves are never taken, so
/// the objective trace is non-increasing.
pub fn mbi_generic<P: BlockProblem + ?Sized>(problem: &P, start: &[f64], cfg: &MbiConfig) -> Result<MbiOutcome> {
    if start.len() != problem.num_blocks() {
        return Err(Error::Dimension(format!(
            "start has {} entries, problem has {} blocks",
            start.len(),
            problem.num_blocks()
        )));
    }
    let mut x = start.to_vec();
    let mut obj = problem.objective(&x);
    let mut out = MbiOutcome {
        x: Vec::new(),
        objective_trace: vec![obj],
        chosen_blocks: Vec::new(),
        decrements: Vec::new(),
        x_trace: Vec::new(),
        iterations: 0,
        converged: false,
    };
    for _ in 0..cfg.max_iters {
        out.iterations += 1;
        let mut decs = Vec::with_capacity(problem.num_blocks());
        let mut best: Option<(usize, f64, f64)> = None;
        for b in 0..problem.num_blocks() {
            let cand = problem.solve_block(b, &x).map_err(|e| Error::BlockSolverFailure {
                block: b,
                source: Box::new(e),
            })?;
            let dec = cand.and_then(|v| {
                let old = x[b];
                x[b] = v;
                let val = problem.objective(&x);
                x[b] = old;
                decrement(obj, val).map(|d| (d, v))
            });
            decs.push(dec.map_or(f64::NEG_INFINITY, |d| d.0));
            if let Some((d, v)) = dec {
                if best.is_none_or(|(_, bd, _)| d > bd) {
                    best = Some((b, d, v));
                }
            }
        }
        out.decrements.push(decs);
        let Some((b, d, v)) = best.filter(|(_, d, _)| *d > 0.0) else {
            out.converged = true;
            break;
        };
        x[b] = v;
        let new_obj = problem.objective(&x);
        out.chosen_blocks.push(b);
        out.objective_trace.push(new_obj);
        out.x_trace.push(x.clone());
        let stop = d.is_finite() && d <= cfg.epsilon * new_obj.abs();
        obj = new_obj;
        if stop {
            out.converged = true;
            break;
        }
    }
    out.x = x;
    Ok(out)
}

/// Objective decrease from `old` to `new`; `None` when `new` is undefined.
fn decrement(old: f64, new: f64) -> Option<f64> {
    if new.is_nan() || new == f64::INFINITY {
        return None;
    }
    if old == f64::INFINITY {
        return Some(f64::INFINITY);
    }
    Some(old - new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `sum w_i (x_i - c_i)^2` over `[lo, hi]^n`.
    struct Separable {
        w: Vec<f64>,
        c: Vec<f64>,
        lo: f64,
        hi: f64,
    }

    impl BlockProblem for Separable {
        fn num_blocks(&self) -> usize {
            self.w.len()
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.w)
                .zip(&self.c)
                .map(|((x, w), c)| w * (x - c).powi(2))
                .sum()
        }
        fn solve_block(&self, b: usize, _: &[f64]) -> Result<Option<f64>> {
            Ok(Some(self.c[b].clamp(self.lo, self.hi)))
        }
    }

    #[test]
    fn separable_quadratic_reaches_box_minimizer() {
        let p = Separable {
            w: vec![1.0, 3.0, 0.5, 2.0],
            c: vec![0.2, -1.0, 0.7, 5.0],
            lo: 0.0,
            hi: 1.0,
        };
        let out = mbi_generic(&p, &[0.5; 4], &MbiConfig::default()).unwrap();
        assert_eq!(out.x, vec![0.2, 0.0, 0.7, 1.0]);
        // one update per block, then a final check
        assert_eq!(out.chosen_blocks.len(), 4);
        assert!(out.converged);
        // largest decrement first: block 3 offers 2 * (4.5^2 - 4^2) = 8.5
        assert_eq!(out.chosen_blocks[0], 3);
        assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn chosen_block_has_largest_decrement() {
        let p = Separable {
            w: vec![1.0, 2.0, 3.0],
            c: vec![0.9, 0.1, 0.6],
            lo: 0.0,
            hi: 1.0,
        };
        let out = mbi_generic(&p, &[0.0, 1.0, 0.0], &MbiConfig::default()).unwrap();
        for (it, b) in out.chosen_blocks.iter().enumerate() {
            let decs = &out.decrements[it];
            assert!(decs.iter().all(|d| *d <= decs[*b]));
        }
    }

    #[test]
    fn fixed_point_stops_immediately() {
        let p = Separable {
            w: vec![1.0, 1.0],
            c: vec![0.3, 0.4],
            lo: 0.0,
            hi: 1.0,
        };
        let out = mbi_generic(&p, &[0.3, 0.4], &MbiConfig::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.chosen_blocks.is_empty());
        assert_eq!(out.decrements[0], vec![0.0, 0.0]);
        assert_relative_eq!(out.objective_trace[0], 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let p = Separable {
            w: vec![1.0, 1.0],
            c: vec![0.5, 0.5],
            lo: 0.0,
            hi: 1.0,
        };
        let out = mbi_generic(&p, &[0.0, 0.0], &MbiConfig::default()).unwrap();
        assert_eq!(out.chosen_blocks, vec![0, 1]);
    }

    struct Failing;

    impl BlockProblem for Failing {
        fn num_blocks(&self) -> usize {
            2
        }
        fn objective(&self, _: &[f64]) -> f64 {
            1.0
        }
        fn solve_block(&self, b: usize, _: &[f64]) -> Result<Option<f64>> {
            if b == 1 {
                Err(Error::AllCandidatesInfeasible { block: 1 })
            } else {
                Ok(None)
            }
        }
    }

    #[test]
    fn block_failure_names_block() {
        let err = mbi_generic(&Failing, &[0.0, 0.0], &MbiConfig::default()).unwrap_err();
        assert!(matches!(err, Error::BlockSolverFailure { block: 1, .. }));
    }
}
