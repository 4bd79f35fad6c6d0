use ndarray::{Array1, Array2};

use super::{stable_sum, DualPotentials, Marginals, SolveResult, SolverConfig, TransportPlan};
use crate::error::{ensure, Error, Result};
use crate::measures::{csiszar_div, CostMatrix, DivergenceKind, Measure};

/// Generalized Sinkhorn in the log domain.
///
/// Alternates
///
/// ```text
/// g_j ← κ · (−ε log Σ_i a_i exp((f_i − C_ij)/ε))
/// f_i ← κ · (−ε log Σ_j b_j exp((g_j − C_ij)/ε))
/// ```
///
/// with κ = τ/(τ+ε) (κ = 1 when balanced) until the sup-norm change of `f`
/// drops below `cfg.tol`. Since `f` is updated last, a balanced plan has
/// exact row marginals. The plan is `π_ij = a_i b_j exp((f_i + g_j − C_ij)/ε)`
/// and the reported cost is the primal energy of that plan.
pub fn sinkhorn_uot(a: &Measure, b: &Measure, c: &CostMatrix, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    ensure(cfg.epsilon > 0.0, || {
        "generalized Sinkhorn needs epsilon > 0; use uot_primal_oracle for epsilon = 0".into()
    })?;
    if cfg.divergence != DivergenceKind::Kl {
        return Err(Error::Unsupported(
            "the Sinkhorn solver only handles KL marginal penalties".into(),
        ));
    }
    let (n, p) = c.shape();
    ensure(a.len() == n && b.len() == p, || {
        format!("shape mismatch: a={}, b={}, C={n}x{p}", a.len(), b.len())
    })?;
    if cfg.marginals.is_balanced() {
        let (ma, mb) = (a.mass(), b.mass());
        ensure((ma - mb).abs() <= 1e-9 * ma.max(mb), || {
            format!("balanced transport needs equal masses, got {ma} and {mb}")
        })?;
    }

    if c.entries().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("cost matrix has non-finite entries".into()));
    }

    let eps = cfg.epsilon;
    let damp = match cfg.marginals {
        Marginals::Balanced => 1.0,
        Marginals::Unbalanced { tau } => tau / (tau + eps),
    };
    let log_a: Vec<f64> = a.weights().iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.weights().iter().map(|w| w.ln()).collect();
    let cost = c.entries().as_standard_layout().into_owned();
    let cost_t = c.entries().t().as_standard_layout().into_owned();
    let cost_rows = cost.as_slice().expect("standard layout");
    let cost_cols = cost_t.as_slice().expect("standard layout");

    let mut f = vec![0.0; n];
    let mut g = vec![0.0; p];
    let mut scratch = Vec::with_capacity(n.max(p));
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        for j in 0..p {
            let col = &cost_cols[j * n..(j + 1) * n];
            g[j] = -damp * eps * softmin_lse(&log_a, &f, col, eps, &mut scratch);
        }
        let mut delta = 0.0f64;
        for i in 0..n {
            let row = &cost_rows[i * p..(i + 1) * p];
            let fi = -damp * eps * softmin_lse(&log_b, &g, row, eps, &mut scratch);
            delta = delta.max((fi - f[i]).abs());
            f[i] = fi;
        }
        if !delta.is_finite() {
            return Err(Error::Numerical(format!(
                "Sinkhorn potentials became non-finite at iteration {iterations}"
            )));
        }
        if delta <= cfg.tol {
            converged = true;
            break;
        }
    }

    let plan = Array2::from_shape_fn((n, p), |(i, j)| {
        (log_a[i] + log_b[j] + (f[i] + g[j] - cost[[i, j]]) / eps).exp()
    });
    let plan = TransportPlan::new(plan);
    let energy = primal_energy(a, b, c, &plan, eps, &cfg.marginals, cfg.divergence)?;
    Ok(SolveResult {
        cost: energy,
        plan,
        potentials: DualPotentials {
            f: Array1::from(f),
            g: Array1::from(g),
        },
        iterations,
        converged,
        epsilon: eps,
    })
}

/// `log Σ_k exp(log_w_k + (pot_k − cost_k)/ε)`, skipping zero weights.
fn softmin_lse(log_w: &[f64], pot: &[f64], cost: &[f64], eps: f64, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    let mut best = f64::NEG_INFINITY;
    for k in 0..log_w.len() {
        let v = log_w[k] + (pot[k] - cost[k]) / eps;
        best = best.max(v);
        buf.push(v);
    }
    if best == f64::NEG_INFINITY {
        return best;
    }
    let s: f64 = buf.iter().map(|v| (v - best).exp()).sum();
    best + s.ln()
}

/// `⟨C,π⟩ + ε KL(π | a⊗b) + τ D_φ(π1 | a) + τ D_φ(πᵀ1 | b)`, the marginal
/// terms being dropped in balanced mode.
pub fn primal_energy(
    a: &Measure,
    b: &Measure,
    c: &CostMatrix,
    plan: &TransportPlan,
    epsilon: f64,
    marginals: &Marginals,
    divergence: DivergenceKind,
) -> Result<f64> {
    let (n, p) = c.shape();
    ensure(plan.shape() == (n, p) && a.len() == n && b.len() == p, || {
        "primal_energy: shape mismatch".into()
    })?;
    let ce = c.entries();
    let pe = plan.entries();
    let (wa, wb) = (a.weights(), b.weights());
    let transport = stable_sum(pe.indexed_iter().map(|((i, j), &v)| v * ce[[i, j]]));
    let entropy = if epsilon > 0.0 {
        let kl = stable_sum(pe.indexed_iter().map(|((i, j), &v)| {
            let r = wa[i] * wb[j];
            if v > 0.0 {
                v * (v / r).ln() - v + r
            } else {
                r
            }
        }));
        epsilon * kl
    } else {
        0.0
    };
    let penalty = match *marginals {
        Marginals::Balanced => 0.0,
        Marginals::Unbalanced { tau } => {
            let rows = plan.row_marginal();
            let cols = plan.col_marginal();
            let d1 = csiszar_div(divergence, rows.as_slice().unwrap(), wa.as_slice().unwrap())?;
            let d2 = csiszar_div(divergence, cols.as_slice().unwrap(), wb.as_slice().unwrap())?;
            tau * (d1 + d2)
        }
    };
    Ok(transport + entropy + penalty)
}
