//! Entropic (un)balanced Sinkhorn solvers, the unbalanced Sinkhorn
//! divergence, exact reference solvers and the a-priori cost bound.

mod assignment;
mod bounds;
mod divergence;
mod oracle;
mod sinkhorn;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::measures::DivergenceKind;

pub use assignment::{exact_balanced_ot, exact_uniform_ot, hungarian};
pub use bounds::{bound_constant, divergence_bound_constant};
pub use divergence::{sinkhorn_divergence, DivergenceValue};
pub use oracle::{uot_primal_oracle, OracleConfig};
pub use sinkhorn::{primal_energy, sinkhorn_uot};

/// How marginal constraints are enforced.
///
/// `Balanced` is the τ = ∞ limit: it is never emulated with a large float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Marginals {
    Balanced,
    Unbalanced { tau: f64 },
}

impl Marginals {
    /// τ as a float, `+∞` for balanced.
    pub fn tau(&self) -> f64 {
        match *self {
            Marginals::Balanced => f64::INFINITY,
            Marginals::Unbalanced { tau } => tau,
        }
    }

    pub fn is_balanced(&self) -> bool {
        matches!(self, Marginals::Balanced)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    #[serde(flatten)]
    pub marginals: Marginals,
    #[serde(default = "default_divergence")]
    pub divergence: DivergenceKind,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_divergence() -> DivergenceKind {
    DivergenceKind::Kl
}

fn default_max_iter() -> usize {
    10_000
}

fn default_tol() -> f64 {
    1e-9
}

impl SolverConfig {
    pub fn unbalanced(epsilon: f64, tau: f64) -> Self {
        Self {
            epsilon,
            marginals: Marginals::Unbalanced { tau },
            divergence: DivergenceKind::Kl,
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    pub fn balanced(epsilon: f64) -> Self {
        Self {
            marginals: Marginals::Balanced,
            ..Self::unbalanced(epsilon, 1.0)
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn tau(&self) -> f64 {
        self.marginals.tau()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.epsilon.is_finite() && self.epsilon >= 0.0, || {
            format!("epsilon must be finite and >= 0, got {}", self.epsilon)
        })?;
        ensure(self.tol > 0.0, || format!("tol must be > 0, got {}", self.tol))?;
        if let Marginals::Unbalanced { tau } = self.marginals {
            ensure(tau.is_finite() && tau > 0.0, || {
                format!("tau must be finite and > 0 (use balanced mode for tau = inf), got {tau}")
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualPotentials {
    pub f: Array1<f64>,
    pub g: Array1<f64>,
}

/// Nonnegative coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
}

impl TransportPlan {
    pub fn new(entries: Array2<f64>) -> Self {
        debug_assert!(entries.iter().all(|v| *v >= 0.0));
        Self { entries }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(Array2::zeros((rows, cols)))
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    /// π·1
    pub fn row_marginal(&self) -> Array1<f64> {
        self.entries.sum_axis(Axis(1))
    }

    /// πᵀ·1
    pub fn col_marginal(&self) -> Array1<f64> {
        self.entries.sum_axis(Axis(0))
    }

    pub fn mass(&self) -> f64 {
        self.entries.sum()
    }

    /// Cells holding more than `threshold` mass.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize)> {
        self.entries
            .indexed_iter()
            .filter(|(_, v)| **v > threshold)
            .map(|(ij, _)| ij)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Primal objective evaluated on `plan`.
    pub cost: f64,
    pub plan: TransportPlan,
    pub potentials: DualPotentials,
    pub iterations: usize,
    pub converged: bool,
    /// Entropic coefficient the result was computed with.
    pub epsilon: f64,
}

/// JSON layout of a solver result: plan and potentials flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rows: usize,
    pub cols: usize,
    pub plan: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

impl SolveResult {
    pub fn to_record(&self) -> SolveRecord {
        let (rows, cols) = self.plan.shape();
        SolveRecord {
            cost: self.cost,
            iterations: self.iterations,
            converged: self.converged,
            rows,
            cols,
            plan: self.plan.entries().iter().copied().collect(),
            f: self.potentials.f.to_vec(),
            g: self.potentials.g.to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }
}

/// Compensated (Neumaier) summation.
pub(crate) fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
