//! Minibatch estimators of UOT losses and transport plans.
//!
//! A minibatch pair `(I, J)` selects `m` rows of `X` and `m` rows of `Y`
//! without replacement; the batch loss is `h(u_m, u_m, C_{I,J})` where
//! `u_m` holds `mass/m` on every entry. The complete estimator averages
//! over all pairs of `m`-subsets, the incomplete one over `k` uniform
//! draws. Both loss and lifted plan are invariant under reordering a
//! tuple, so enumeration runs over unordered combinations with weight
//! `C(n,m)^-2`.

use std::io::Write;

use itertools::Itertools;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::measures::{build_cost, Measure, PointCloud};
use crate::rng::CounterRng;
use crate::solvers::{sinkhorn_divergence, sinkhorn_uot, SolverConfig, TransportPlan};

/// Which loss a minibatch evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "uot")]
    Uot,
    #[serde(rename = "sinkhorn-div")]
    SinkhornDivergence,
}

/// `m` distinct indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexTuple(pub Vec<usize>);

impl IndexTuple {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        ensure(indices.iter().all(|&i| i < n), || format!("index tuple entry out of range 0..{n}"))?;
        ensure(indices.iter().all_unique(), || "index tuple has repeated entries".into())?;
        Ok(Self(indices))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinibatchScheme {
    pub m: usize,
    pub k: usize,
    pub seed: u64,
    pub kind: SchemeKind,
}

impl MinibatchScheme {
    pub fn incomplete(m: usize, k: usize, seed: u64) -> Self {
        Self {
            m,
            k,
            seed,
            kind: SchemeKind::Incomplete,
        }
    }

    pub fn complete(m: usize) -> Self {
        Self {
            m,
            k: 0,
            seed: 0,
            kind: SchemeKind::Complete,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        ensure(self.m >= 1 && self.m <= n, || format!("batch size m={} must lie in 1..={n}", self.m))?;
        if self.kind == SchemeKind::Incomplete {
            ensure(self.k >= 1, || "incomplete scheme needs k >= 1".into())?;
        }
        Ok(())
    }
}

/// Size limits for exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetGuard {
    pub max_n: usize,
    pub max_m: usize,
}

impl Default for BudgetGuard {
    fn default() -> Self {
        Self { max_n: 12, max_m: 4 }
    }
}

/// The `draw`-th minibatch pair of an incomplete scheme. `I` and `J` come
/// from the same counter stream `(seed, draw)`, `I` first.
pub fn draw_pair(n_x: usize, n_y: usize, m: usize, seed: u64, draw: u64) -> (IndexTuple, IndexTuple) {
    let mut rng = CounterRng::new(seed, draw);
    let i = rng.sample_prefix(n_x, m);
    let j = rng.sample_prefix(n_y, m);
    (IndexTuple(i), IndexTuple(j))
}

/// Loss of one minibatch pair.
#[derive(Debug, Clone)]
pub struct BatchEval {
    pub value: f64,
    pub converged: bool,
    /// `m × m` plan; only for the UOT loss.
    pub plan: Option<TransportPlan>,
}

/// One incomplete draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawRecord {
    pub draw_index: usize,
    pub i_indices: Vec<usize>,
    pub j_indices: Vec<usize>,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub mean: f64,
    pub std: f64,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct IncompleteRun {
    pub draws: Vec<DrawRecord>,
    pub mean: f64,
    /// Sample standard deviation of the per-draw losses (0 when k = 1).
    pub std: f64,
    pub converged: bool,
    pub scheme: MinibatchScheme,
    pub n: usize,
}

impl IncompleteRun {
    pub fn summary(&self) -> EstimatorSummary {
        EstimatorSummary {
            mean: self.mean,
            std: self.std,
            k: self.scheme.k,
            m: self.scheme.m,
            n: self.n,
            seed: self.scheme.seed,
        }
    }

    /// `draw_index,i_indices,j_indices,loss`; index lists are space separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["draw_index", "i_indices", "j_indices", "loss"])?;
        for d in &self.draws {
            w.write_record([
                d.draw_index.to_string(),
                d.i_indices.iter().join(" "),
                d.j_indices.iter().join(" "),
                format!("{:e}", d.loss),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Incomplete plan estimate with the largest single-batch plan mass seen.
#[derive(Debug, Clone)]
pub struct PlanEstimate {
    pub plan: TransportPlan,
    pub max_batch_mass: f64,
    pub converged: bool,
}

/// Empirical measures on `x` and `y` together with a loss and solver.
#[derive(Debug, Clone, Copy)]
pub struct MinibatchProblem<'a> {
    pub x: &'a PointCloud,
    pub y: &'a PointCloud,
    pub loss: LossKind,
    pub solver: SolverConfig,
    pub mass_x: f64,
    pub mass_y: f64,
}

impl<'a> MinibatchProblem<'a> {
    pub fn new(x: &'a PointCloud, y: &'a PointCloud, loss: LossKind, solver: SolverConfig) -> Result<Self> {
        ensure(x.dim() == y.dim(), || format!("dimension mismatch: {} vs {}", x.dim(), y.dim()))?;
        solver.validate()?;
        Ok(Self {
            x,
            y,
            loss,
            solver,
            mass_x: 1.0,
            mass_y: 1.0,
        })
    }

    pub fn with_masses(mut self, mass_x: f64, mass_y: f64) -> Self {
        self.mass_x = mass_x;
        self.mass_y = mass_y;
        self
    }

    fn n_min(&self) -> usize {
        self.x.len().min(self.y.len())
    }

    /// `h(u_m, u_m, C_{I,J})`.
    pub fn batch_loss(&self, i: &[usize], j: &[usize]) -> Result<BatchEval> {
        let xb = self.x.select(i);
        let yb = self.y.select(j);
        let a = Measure::uniform(i.len(), self.mass_x)?;
        let b = Measure::uniform(j.len(), self.mass_y)?;
        match self.loss {
            LossKind::Uot => {
                let r = sinkhorn_uot(&a, &b, &build_cost(&xb, &yb)?, &self.solver)?;
                Ok(BatchEval {
                    value: r.cost,
                    converged: r.converged,
                    plan: Some(r.plan),
                })
            }
            LossKind::SinkhornDivergence => {
                let s = sinkhorn_divergence(&a, &b, &xb, &yb, &self.solver)?;
                Ok(BatchEval {
                    value: s.value,
                    converged: s.converged,
                    plan: None,
                })
            }
        }
    }

    /// All pairs of `m`-subsets in lexicographic order.
    fn all_pairs(&self, m: usize, guard: &BudgetGuard) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
        let (nx, ny) = (self.x.len(), self.y.len());
        ensure(m >= 1 && m <= self.n_min(), || format!("batch size m={m} must lie in 1..={}", self.n_min()))?;
        if nx.max(ny) > guard.max_n || m > guard.max_m {
            return Err(Error::Contract(format!(
                "complete enumeration limited to n <= {} and m <= {} (got n = {}, m = {m}); \
                 use the incomplete estimator instead",
                guard.max_n,
                guard.max_m,
                nx.max(ny)
            )));
        }
        let rows: Vec<Vec<usize>> = (0..nx).combinations(m).collect();
        let cols: Vec<Vec<usize>> = (0..ny).combinations(m).collect();
        Ok(rows
            .iter()
            .flat_map(|i| cols.iter().map(move |j| (i.clone(), j.clone())))
            .collect())
    }

    /// Complete U-statistic `h̄^m`.
    pub fn complete_estimator(&self, m: usize, guard: &BudgetGuard) -> Result<f64> {
        let pairs = self.all_pairs(m, guard)?;
        let values = pairs
            .par_iter()
            .map(|(i, j)| self.batch_loss(i, j).map(|e| e.value))
            .collect::<Result<Vec<f64>>>()?;
        let total: f64 = values.iter().sum();
        Ok(total / pairs.len() as f64)
    }

    /// Incomplete estimator `h̃_k^m` with per-draw records.
    pub fn incomplete_estimator(&self, scheme: &MinibatchScheme) -> Result<IncompleteRun> {
        ensure(scheme.kind == SchemeKind::Incomplete, || "expected an incomplete scheme".into())?;
        scheme.validate(self.n_min())?;
        let (nx, ny) = (self.x.len(), self.y.len());
        let evals = (0..scheme.k)
            .into_par_iter()
            .map(|d| {
                let (i, j) = draw_pair(nx, ny, scheme.m, scheme.seed, d as u64);
                let e = self.batch_loss(i.as_slice(), j.as_slice())?;
                Ok((
                    DrawRecord {
                        draw_index: d,
                        i_indices: i.0,
                        j_indices: j.0,
                        loss: e.value,
                    },
                    e.converged,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let converged = evals.iter().all(|(_, c)| *c);
        let draws: Vec<DrawRecord> = evals.into_iter().map(|(d, _)| d).collect();
        let (mean, std) = mean_std(draws.iter().map(|d| d.loss));
        Ok(IncompleteRun {
            draws,
            mean,
            std,
            converged,
            scheme: *scheme,
            n: nx,
        })
    }

    fn lifted_plan(&self, i: &[usize], j: &[usize]) -> Result<(Array2<f64>, bool)> {
        ensure(self.loss == LossKind::Uot, || unreachable!())?;
        let e = self.batch_loss(i, j)?;
        let plan = e.plan.expect("uot batches carry a plan");
        let mut lifted = Array2::zeros((self.x.len(), self.y.len()));
        for (r, &ii) in i.iter().enumerate() {
            for (s, &jj) in j.iter().enumerate() {
                lifted[[ii, jj]] = plan.entries()[[r, s]];
            }
        }
        Ok((lifted, e.converged))
    }

    fn require_uot(&self) -> Result<()> {
        if self.loss != LossKind::Uot {
            return Err(Error::Unsupported(
                "averaged plans are only defined for the UOT loss; the Sinkhorn divergence \
                 combines three transport problems"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Complete averaged plan `Π̄^m` (lifted to `n_x × n_y`).
    pub fn averaged_plan(&self, m: usize, guard: &BudgetGuard) -> Result<TransportPlan> {
        self.require_uot()?;
        let pairs = self.all_pairs(m, guard)?;
        let plans = pairs
            .par_iter()
            .map(|(i, j)| self.lifted_plan(i, j).map(|(p, _)| p))
            .collect::<Result<Vec<_>>>()?;
        let mut acc = Array2::zeros((self.x.len(), self.y.len()));
        for p in &plans {
            acc += p;
        }
        acc /= pairs.len() as f64;
        Ok(TransportPlan::new(acc))
    }

    /// Incomplete averaged plan `Π̃_k^m`.
    pub fn incomplete_plan(&self, scheme: &MinibatchScheme) -> Result<PlanEstimate> {
        self.require_uot()?;
        ensure(scheme.kind == SchemeKind::Incomplete, || "expected an incomplete scheme".into())?;
        scheme.validate(self.n_min())?;
        let (nx, ny) = (self.x.len(), self.y.len());
        let plans = (0..scheme.k)
            .into_par_iter()
            .map(|d| {
                let (i, j) = draw_pair(nx, ny, scheme.m, scheme.seed, d as u64);
                self.lifted_plan(i.as_slice(), j.as_slice())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut acc = Array2::zeros((nx, ny));
        let mut max_batch_mass = 0.0f64;
        let mut converged = true;
        for (p, c) in &plans {
            acc += p;
            max_batch_mass = max_batch_mass.max(p.sum());
            converged &= *c;
        }
        acc /= scheme.k as f64;
        Ok(PlanEstimate {
            plan: TransportPlan::new(acc),
            max_batch_mass,
            converged,
        })
    }
}

pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let k = values.clone().count();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, var.sqrt())
}

/// `M (sqrt(log(2/δ) / (2⌊n/m⌋)) + sqrt(2 log(2/δ) / k))`.
pub fn deviation_bound(n: usize, m: usize, k: usize, delta: f64, bound: f64) -> Result<f64> {
    ensure(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0,1), got {delta}"))?;
    ensure(m >= 1 && m <= n, || format!("need 1 <= m <= n, got m={m}, n={n}"))?;
    ensure(k >= 1, || "k must be >= 1".into())?;
    let l = (2.0 / delta).ln();
    let blocks = (n / m) as f64;
    Ok(bound * ((l / (2.0 * blocks)).sqrt() + (2.0 * l / k as f64).sqrt()))
}

/// Per-row marginal deviation bound `𝔐 sqrt(2 log(2/δ) / k)` between the
/// incomplete and complete averaged plans.
pub fn marginal_deviation_bound(k: usize, delta: f64, max_mass: f64) -> Result<f64> {
    ensure(delta > 0.0 && delta < 1.0, || format!("delta must lie in (0,1), got {delta}"))?;
    ensure(k >= 1, || "k must be >= 1".into())?;
    Ok(max_mass * (2.0 * (2.0 / delta).ln() / k as f64).sqrt())
}

/// Share of plan mass linking points with different labels.
pub fn cross_label_mass(plan: ArrayView2<'_, f64>, labels_row: &[usize], labels_col: &[usize]) -> Result<f64> {
    ensure(plan.dim() == (labels_row.len(), labels_col.len()), || {
        format!(
            "plan is {:?} but labels are {}x{}",
            plan.dim(),
            labels_row.len(),
            labels_col.len()
        )
    })?;
    let total = plan.sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let crossed: f64 = plan
        .indexed_iter()
        .filter(|((i, j), _)| labels_row[*i] != labels_col[*j])
        .map(|(_, v)| *v)
        .sum();
    Ok(crossed / total)
}
