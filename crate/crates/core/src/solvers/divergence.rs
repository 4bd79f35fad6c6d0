use super::{sinkhorn_uot, SolveResult, SolverConfig};
use crate::error::{ensure, Result};
use crate::measures::{build_cost, Measure, PointCloud};

/// Unbalanced Sinkhorn divergence together with the three transport solves
/// it is made of.
#[derive(Debug, Clone)]
pub struct DivergenceValue {
    pub value: f64,
    /// All three inner solves converged.
    pub converged: bool,
    pub cross: SolveResult,
    pub self_a: SolveResult,
    pub self_b: SolveResult,
}

/// `OT(a,b) + ε/2 (m_a − m_b)² − ½ OT(a,a) − ½ OT(b,b)` with squared
/// Euclidean costs on the given supports.
pub fn sinkhorn_divergence(
    a: &Measure,
    b: &Measure,
    xa: &PointCloud,
    xb: &PointCloud,
    cfg: &SolverConfig,
) -> Result<DivergenceValue> {
    ensure(a.len() == xa.len() && b.len() == xb.len(), || {
        "measure and support sizes differ".into()
    })?;
    let cross = sinkhorn_uot(a, b, &build_cost(xa, xb)?, cfg)?;
    let self_a = sinkhorn_uot(a, a, &build_cost(xa, xa)?, cfg)?;
    let self_b = sinkhorn_uot(b, b, &build_cost(xb, xb)?, cfg)?;
    let gap = a.mass() - b.mass();
    let value = cross.cost + 0.5 * cfg.epsilon * gap * gap - 0.5 * self_a.cost - 0.5 * self_b.cost;
    Ok(DivergenceValue {
        value,
        converged: cross.converged && self_a.converged && self_b.converged,
        cross,
        self_a,
        self_b,
    })
}
