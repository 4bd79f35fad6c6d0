//! Envelope gradients of UOT losses and the explicit Euler particle flow.
//!
//! For ε > 0 the optimal plan is unique and the loss is differentiable in
//! the cost with `∂OT/∂C = π`. Position gradients follow by the chain rule
//! through the squared Euclidean cost, keeping the plan fixed.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::measures::{build_cost, Measure, PointCloud};
use crate::minibatch::{draw_pair, LossKind, MinibatchProblem, MinibatchScheme, SchemeKind};
use crate::rng::derive_seed;
use crate::solvers::{sinkhorn_divergence, sinkhorn_uot, SolveResult, SolverConfig};

/// Which point cloud is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wrt {
    X,
    Y,
}

/// Per-point gradient of a loss, with the loss value it was taken at.
#[derive(Debug, Clone)]
pub struct PositionGradient {
    pub values: Array2<f64>,
    pub loss: f64,
    /// Every inner solve reached tolerance.
    pub converged: bool,
}

impl PositionGradient {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `∂OT/∂C`: the optimal plan of an entropic solve.
pub fn grad_cost(result: &SolveResult) -> Result<Array2<f64>> {
    if result.epsilon <= 0.0 {
        return Err(Error::Contract(
            "cost gradient needs epsilon > 0; at epsilon = 0 the plan is not unique".into(),
        ));
    }
    Ok(result.plan.entries().to_owned())
}

/// Gradient of `⟨C(X,Y), π⟩` for fixed π.
fn cross_term(plan: ArrayView2<'_, f64>, x: &PointCloud, y: &PointCloud, wrt: Wrt) -> Array2<f64> {
    let (xs, ys) = (x.as_array(), y.as_array());
    match wrt {
        Wrt::X => {
            // 2 (r_i x_i − Σ_j π_ij y_j)
            let rows = plan.sum_axis(Axis(1));
            let mut out = plan.dot(&ys);
            for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                row.zip_mut_with(&xs.row(i), |o, &xi| *o = 2.0 * (rows[i] * xi - *o));
            }
            out
        }
        Wrt::Y => {
            let cols = plan.sum_axis(Axis(0));
            let mut out = plan.t().dot(&xs);
            for (j, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                row.zip_mut_with(&ys.row(j), |o, &yj| *o = 2.0 * (cols[j] * yj - *o));
            }
            out
        }
    }
}

/// Gradient of `⟨C(Z,Z), π⟩` where `Z` appears on both sides.
fn self_term(plan: ArrayView2<'_, f64>, z: &PointCloud) -> Array2<f64> {
    let sym = &plan + &plan.t();
    cross_term(sym.view(), z, z, Wrt::Y)
}

/// Loss value and position gradient for explicit weights.
pub fn grad_positions_weighted(
    loss: LossKind,
    a: &Measure,
    b: &Measure,
    x: &PointCloud,
    y: &PointCloud,
    wrt: Wrt,
    cfg: &SolverConfig,
) -> Result<PositionGradient> {
    ensure(cfg.epsilon > 0.0, || "position gradients need epsilon > 0".into())?;
    match loss {
        LossKind::Uot => {
            let r = sinkhorn_uot(a, b, &build_cost(x, y)?, cfg)?;
            Ok(PositionGradient {
                values: cross_term(r.plan.entries(), x, y, wrt),
                loss: r.cost,
                converged: r.converged,
            })
        }
        LossKind::SinkhornDivergence => {
            let s = sinkhorn_divergence(a, b, x, y, cfg)?;
            let mut values = cross_term(s.cross.plan.entries(), x, y, wrt);
            let own = match wrt {
                Wrt::X => self_term(s.self_a.plan.entries(), x),
                Wrt::Y => self_term(s.self_b.plan.entries(), y),
            };
            values.scaled_add(-0.5, &own);
            // the ε/2 (m_a − m_b)² term does not depend on positions
            Ok(PositionGradient {
                values,
                loss: s.value,
                converged: s.converged,
            })
        }
    }
}

/// Position gradient for uniform probability weights on `x` and `y`.
pub fn grad_positions(
    loss: LossKind,
    x: &PointCloud,
    y: &PointCloud,
    wrt: Wrt,
    cfg: &SolverConfig,
) -> Result<PositionGradient> {
    let a = Measure::uniform(x.len(), 1.0)?;
    let b = Measure::uniform(y.len(), 1.0)?;
    grad_positions_weighted(loss, &a, &b, x, y, wrt, cfg)
}

/// Gradient of one minibatch loss `h(u_m, u_m, C_{I,J})`, scattered to
/// global indices of the differentiated cloud.
pub fn batch_gradient(problem: &MinibatchProblem<'_>, i: &[usize], j: &[usize], wrt: Wrt) -> Result<PositionGradient> {
    let (xb, yb) = (problem.x.select(i), problem.y.select(j));
    let a = Measure::uniform(i.len(), problem.mass_x)?;
    let b = Measure::uniform(j.len(), problem.mass_y)?;
    let local = grad_positions_weighted(problem.loss, &a, &b, &xb, &yb, wrt, &problem.solver)?;
    let (target, idx) = match wrt {
        Wrt::X => (problem.x, i),
        Wrt::Y => (problem.y, j),
    };
    let mut values = Array2::zeros((target.len(), target.dim()));
    for (r, &g) in idx.iter().enumerate() {
        values.row_mut(g).assign(&local.values.row(r));
    }
    Ok(PositionGradient {
        values,
        loss: local.loss,
        converged: local.converged,
    })
}

/// Gradient of the incomplete estimator: mean of `k` scattered batch
/// gradients, summed in draw order.
pub fn grad_minibatch(problem: &MinibatchProblem<'_>, scheme: &MinibatchScheme, wrt: Wrt) -> Result<PositionGradient> {
    ensure(scheme.kind == SchemeKind::Incomplete, || "expected an incomplete scheme".into())?;
    ensure(scheme.k >= 1, || "k must be >= 1".into())?;
    let (nx, ny) = (problem.x.len(), problem.y.len());
    ensure(scheme.m >= 1 && scheme.m <= nx.min(ny), || format!("batch size m={} out of range", scheme.m))?;
    let parts = (0..scheme.k)
        .into_par_iter()
        .map(|d| {
            let (i, j) = draw_pair(nx, ny, scheme.m, scheme.seed, d as u64);
            batch_gradient(problem, i.as_slice(), j.as_slice(), wrt)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut values = Array2::zeros(parts[0].values.dim());
    let mut loss = 0.0;
    let mut converged = true;
    for p in &parts {
        values += &p.values;
        loss += p.loss;
        converged &= p.converged;
    }
    let k = scheme.k as f64;
    values /= k;
    Ok(PositionGradient {
        values,
        loss: loss / k,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub step_size: f64,
    pub iterations: usize,
    pub scheme: MinibatchScheme,
    pub loss: LossKind,
    pub solver: SolverConfig,
    /// Snapshot cadence; defaults to `max(1, iterations / 100)`.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

impl FlowConfig {
    pub fn snapshot_interval(&self) -> usize {
        self.snapshot_every.unwrap_or((self.iterations / 100).max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.step_size > 0.0 && self.step_size.is_finite(), || {
            format!("step_size must be > 0, got {}", self.step_size)
        })?;
        ensure(self.scheme.kind == SchemeKind::Incomplete && self.scheme.k >= 1, || {
            "flow needs an incomplete scheme with k >= 1".into()
        })?;
        self.solver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub iter: usize,
    pub points: PointCloud,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    /// `(iter, minibatch loss at the start of that iteration)`.
    pub losses: Vec<(usize, f64)>,
    pub final_points: PointCloud,
    /// Iterations in which some inner solve hit its iteration budget.
    pub unconverged_steps: usize,
}

impl Trajectory {
    pub fn write_snapshot_csv<W: Write>(snapshot: &Snapshot, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = snapshot.points.dim();
        let mut header = vec!["iter".to_string(), "point_id".to_string()];
        header.extend((0..d).map(|c| format!("x{c}")));
        w.write_record(&header)?;
        for (id, p) in snapshot.points.as_array().rows().into_iter().enumerate() {
            let mut rec = vec![snapshot.iter.to_string(), id.to_string()];
            rec.extend(p.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_loss_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "loss"])?;
        for (it, l) in &self.losses {
            w.write_record([it.to_string(), format!("{l:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Explicit Euler integration of `Ẋ = −m ∇_X h̃_k^m(X, Y)`; batches are
/// redrawn every iteration from `derive_seed(seed, iter)`.
pub fn euler_flow(x0: &PointCloud, y: &PointCloud, flow: &FlowConfig) -> Result<Trajectory> {
    flow.validate()?;
    let every = flow.snapshot_interval();
    let factor = flow.step_size * flow.scheme.m as f64;
    let mut x = x0.clone();
    let mut snapshots = vec![Snapshot {
        iter: 0,
        points: x.clone(),
    }];
    let mut losses = Vec::with_capacity(flow.iterations);
    let mut unconverged_steps = 0;
    for it in 0..flow.iterations {
        let scheme = MinibatchScheme {
            seed: derive_seed(flow.scheme.seed, it as u64),
            ..flow.scheme
        };
        let problem = MinibatchProblem::new(&x, y, flow.loss, flow.solver)?;
        let g = grad_minibatch(&problem, &scheme, Wrt::X)?;
        losses.push((it, g.loss));
        if !g.converged {
            unconverged_steps += 1;
        }
        let mut next = x.as_array().to_owned();
        next.scaled_add(-factor, &g.values);
        if !g.loss.is_finite() {
            return Err(Error::Numerical(format!("flow diverged at iteration {it}: loss became {}", g.loss)));
        }
        if let Some((idx, v)) = next.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let d = x.dim();
            return Err(Error::Numerical(format!(
                "flow diverged at iteration {it}: point {} coordinate {} became {v} (loss {})",
                idx / d,
                idx % d,
                g.loss
            )));
        }
        x = PointCloud::new(next)?;
        let done = it + 1;
        if done % every == 0 || done == flow.iterations {
            snapshots.push(Snapshot {
                iter: done,
                points: x.clone(),
            });
        }
    }
    Ok(Trajectory {
        snapshots,
        losses,
        final_points: x,
        unconverged_steps,
    })
}
