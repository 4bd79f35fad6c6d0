use ndarray::{Array1, Array2};

use super::{DualPotentials, SolveResult, TransportPlan};
use crate::error::{ensure, Error, Result};
use crate::measures::{CostMatrix, DivergenceKind, Measure};

/// Settings of the primal descent reference solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub tau: f64,
    /// Entropic term ε KL(π | a⊗b); zero gives the unregularized program.
    pub epsilon: f64,
    pub divergence: DivergenceKind,
    pub max_iter: usize,
    /// Stopping threshold on the sup-norm of the log-parametrized gradient.
    pub grad_tol: f64,
    /// Largest problem (rows × cols) the oracle accepts.
    pub max_cells: usize,
}

impl OracleConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            epsilon: 0.0,
            divergence: DivergenceKind::Kl,
            max_iter: 100_000,
            grad_tol: 1e-8,
            max_cells: 400,
        }
    }

    pub fn with_entropy(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

// exp(-1000) is exactly zero in f64; clamping keeps log-sums finite
const LOG_FLOOR: f64 = -1000.0;

struct Problem<'a> {
    n: usize,
    p: usize,
    cost: &'a [f64],
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    active: Vec<bool>,
    tau: f64,
    eps: f64,
}

struct Eval {
    value: f64,
    log_rows: Vec<f64>,
    log_cols: Vec<f64>,
}

impl Problem<'_> {
    fn log_marginals(&self, logp: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (n, p) = (self.n, self.p);
        let mut rows = vec![f64::NEG_INFINITY; n];
        let mut cols = vec![f64::NEG_INFINITY; p];
        for i in 0..n {
            let row = &logp[i * p..(i + 1) * p];
            rows[i] = lse(row.iter().enumerate().filter(|(j, _)| self.active[i * p + j]).map(|(_, v)| *v));
        }
        for j in 0..p {
            cols[j] = lse((0..n).filter(|i| self.active[i * p + j]).map(|i| logp[i * p + j]));
        }
        (rows, cols)
    }

    fn eval(&self, logp: &[f64]) -> Eval {
        let (n, p) = (self.n, self.p);
        let (log_rows, log_cols) = self.log_marginals(logp);
        let mut value = 0.0;
        for i in 0..n {
            for j in 0..p {
                let k = i * p + j;
                if !self.active[k] {
                    continue;
                }
                let pi = logp[k].exp();
                value += pi * self.cost[k];
                if self.eps > 0.0 {
                    let r = self.a[i] * self.b[j];
                    value += self.eps * (pi * (logp[k] - self.log_a[i] - self.log_b[j]) - pi + r);
                }
            }
        }
        let kl = |log_x: f64, log_y: f64, y: f64| {
            if y == 0.0 {
                return 0.0;
            }
            let x = log_x.exp();
            x * (log_x - log_y) - x + y
        };
        for ((&r, &la), &a) in log_rows.iter().zip(&self.log_a).zip(&self.a) {
            value += self.tau * kl(r, la, a);
        }
        for ((&c, &lb), &b) in log_cols.iter().zip(&self.log_b).zip(&self.b) {
            value += self.tau * kl(c, lb, b);
        }
        Eval {
            value,
            log_rows,
            log_cols,
        }
    }

    /// ∂F/∂π_ij at the current point.
    fn gradient(&self, logp: &[f64], ev: &Eval, out: &mut [f64]) {
        let p = self.p;
        for (k, g) in out.iter_mut().enumerate() {
            if !self.active[k] {
                *g = 0.0;
                continue;
            }
            let (i, j) = (k / p, k % p);
            let mut v = self.cost[k]
                + self.tau * (ev.log_rows[i] - self.log_a[i])
                + self.tau * (ev.log_cols[j] - self.log_b[j]);
            if self.eps > 0.0 {
                v += self.eps * (logp[k] - self.log_a[i] - self.log_b[j]);
            }
            *g = v;
        }
    }
}

fn lse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let best = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return best;
    }
    best + values.map(|v| (v - best).exp()).sum::<f64>().ln()
}

/// Minimizes `⟨C,π⟩ + ε KL(π|a⊗b) + τ KL(π1|a) + τ KL(πᵀ1|b)` over `π ≥ 0`
/// by exponentiated-gradient (mirror) descent on `L = log π`, with a
/// backtracking step that enforces the relative-smoothness decrease
/// condition. The program is convex, so a stationary point is a global
/// minimizer. Works for `ε = 0`, which Sinkhorn cannot handle.
///
/// Stops once `max |π_ij ∂F/∂π_ij| ≤ grad_tol`; otherwise returns
/// `converged = false` after `max_iter` steps.
pub fn uot_primal_oracle(a: &Measure, b: &Measure, c: &CostMatrix, cfg: &OracleConfig) -> Result<SolveResult> {
    let (n, p) = c.shape();
    ensure(a.len() == n && b.len() == p, || {
        format!("shape mismatch: a={}, b={}, C={n}x{p}", a.len(), b.len())
    })?;
    ensure(n * p <= cfg.max_cells, || {
        format!("oracle limited to {} cells, got {n}x{p}", cfg.max_cells)
    })?;
    ensure(cfg.tau.is_finite() && cfg.tau > 0.0, || format!("tau must be finite and > 0, got {}", cfg.tau))?;
    ensure(cfg.epsilon >= 0.0 && cfg.epsilon.is_finite(), || "epsilon must be >= 0".into())?;
    if cfg.divergence != DivergenceKind::Kl {
        return Err(Error::Unsupported("the primal oracle only handles KL penalties".into()));
    }

    let cost = c.entries().as_standard_layout().into_owned();
    let cost = cost.as_slice().expect("standard layout");
    let a_w: Vec<f64> = a.weights().to_vec();
    let b_w: Vec<f64> = b.weights().to_vec();
    let active: Vec<bool> = (0..n * p).map(|k| a_w[k / p] > 0.0 && b_w[k % p] > 0.0).collect();
    let prob = Problem {
        n,
        p,
        cost,
        log_a: a_w.iter().map(|w| w.ln()).collect(),
        log_b: b_w.iter().map(|w| w.ln()).collect(),
        a: a_w,
        b: b_w,
        active,
        tau: cfg.tau,
        eps: cfg.epsilon,
    };

    // start from the product coupling a⊗b
    let mut logp: Vec<f64> = (0..n * p)
        .map(|k| {
            if prob.active[k] {
                prob.log_a[k / p] + prob.log_b[k % p]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let mut ev = prob.eval(&logp);
    let mut grad = vec![0.0; n * p];
    let mut trial = vec![0.0; n * p];
    // F is (2τ + ε)-smooth relative to the entropy, so this step is always safe
    let safe_step = 1.0 / (2.0 * cfg.tau + cfg.epsilon);
    let mut step = safe_step;
    let mut iterations = 0;
    let mut converged = false;

    loop {
        prob.gradient(&logp, &ev, &mut grad);
        let stationarity = (0..n * p)
            .filter(|&k| prob.active[k])
            .map(|k| (logp[k].exp() * grad[k]).abs())
            .fold(0.0, f64::max);
        if stationarity <= cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        iterations += 1;

        loop {
            for k in 0..n * p {
                trial[k] = if prob.active[k] {
                    (logp[k] - step * grad[k]).max(LOG_FLOOR)
                } else {
                    f64::NEG_INFINITY
                };
            }
            let cand = prob.eval(&trial);
            // F(π') ≤ F(π) + ⟨∇F, π' − π⟩ + KL(π'|π)/η
            let mut linear = 0.0;
            let mut bregman = 0.0;
            for k in (0..n * p).filter(|&k| prob.active[k]) {
                let (old, new) = (logp[k].exp(), trial[k].exp());
                linear += grad[k] * (new - old);
                bregman += new * (trial[k] - logp[k]) - new + old;
            }
            let slack = 1e-15 * (1.0 + ev.value.abs());
            // at the safe step a failed test is rounding noise
            if step <= safe_step || cand.value <= ev.value + linear + bregman / step + slack {
                std::mem::swap(&mut logp, &mut trial);
                ev = cand;
                step *= 1.5;
                break;
            }
            step = (step * 0.5).max(safe_step);
        }
    }

    let plan = Array2::from_shape_fn((n, p), |(i, j)| logp[i * p + j].exp());
    let f = Array1::from_shape_fn(n, |i| -cfg.tau * (ev.log_rows[i] - prob.log_a[i]));
    let g = Array1::from_shape_fn(p, |j| -cfg.tau * (ev.log_cols[j] - prob.log_b[j]));
    Ok(SolveResult {
        cost: ev.value,
        plan: TransportPlan::new(plan),
        potentials: DualPotentials { f, g },
        iterations,
        converged,
        epsilon: cfg.epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::bound_constant;
    use ndarray::array;

    #[test]
    fn dirac_pair_saturates() {
        for c0 in [0.1, 1.0, 10.0] {
            for tau in [0.5, 1.0, 5.0] {
                let m = Measure::new(vec![1.0]).unwrap();
                let c = CostMatrix::custom(array![[c0]]).unwrap();
                let r = uot_primal_oracle(&m, &m, &c, &OracleConfig::new(tau)).unwrap();
                let expected = 2.0 * tau * (1.0 - (-c0 / (2.0 * tau)).exp());
                assert!(r.converged);
                assert!((r.cost - expected).abs() < 1e-9, "c0={c0} tau={tau}: {} vs {expected}", r.cost);
            }
        }
    }

    #[test]
    fn zero_cost_is_free() {
        let a = Measure::uniform(3, 1.0).unwrap();
        let c = CostMatrix::custom(Array2::zeros((3, 3))).unwrap();
        let r = uot_primal_oracle(&a, &a, &c, &OracleConfig::new(1.0)).unwrap();
        assert!(r.cost.abs() < 1e-10);
    }

    #[test]
    fn random_instance_respects_upper_bound() {
        let c = CostMatrix::custom(array![[0.3, 1.2, 0.7], [2.0, 0.1, 0.9], [0.4, 0.8, 1.5]]).unwrap();
        let a = Measure::new(vec![0.2, 0.5, 0.3]).unwrap();
        let b = Measure::new(vec![0.4, 0.4, 0.2]).unwrap();
        let r = uot_primal_oracle(&a, &b, &c, &OracleConfig::new(1.0)).unwrap();
        let bound = bound_constant(&a, &b, &c, 1.0, DivergenceKind::Kl);
        assert!(r.cost <= bound);
    }

    #[test]
    fn rejects_oversized_problems() {
        let a = Measure::uniform(21, 1.0).unwrap();
        let c = CostMatrix::custom(Array2::zeros((21, 21))).unwrap();
        assert!(uot_primal_oracle(&a, &a, &c, &OracleConfig::new(1.0)).is_err());
    }
}
