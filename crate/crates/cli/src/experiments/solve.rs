//! Direct solver access: one transport problem in, one JSON result out.

use ndarray::Array2;
use serde_json::json;

use ubot_core::measures::{build_cost, CostMatrix, Measure};
use ubot_core::solvers::{exact_uniform_ot, sinkhorn_divergence, sinkhorn_uot, uot_primal_oracle, OracleConfig};

use super::{load_points, Output};
use crate::config::{CliError, CliResult, ExperimentConfig, SolveMethod, SolveParams};

fn weights(given: &Option<Vec<f64>>, n: usize, side: &str) -> CliResult<Measure> {
    match given {
        Some(w) if w.len() != n => Err(CliError::Config(format!("{side} has {} weights for {n} points", w.len()))),
        Some(w) => Ok(Measure::new(w.clone())?),
        None => Ok(Measure::uniform(n, 1.0)?),
    }
}

pub fn run(cfg: &ExperimentConfig, p: &SolveParams, out: &mut Output) -> CliResult<()> {
    let points = match (&p.source, &p.target) {
        (Some(s), Some(t)) => Some((load_points(cfg, s)?.points, load_points(cfg, t)?.points)),
        _ => None,
    };
    let cost = match (&p.cost, &points) {
        (Some(rows), _) => {
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(CliError::Config("cost rows have different lengths".into()));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let arr = Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| CliError::Config(e.to_string()))?;
            CostMatrix::custom(arr)?
        }
        (None, Some((x, y))) => build_cost(x, y)?,
        (None, None) => return Err(CliError::Config("nothing to solve".into())),
    };
    let (n, m) = cost.shape();
    let a = weights(&p.source_weights, n, "source")?;
    let b = weights(&p.target_weights, m, "target")?;

    let body = match p.method {
        SolveMethod::Sinkhorn => sinkhorn_uot(&a, &b, &cost, &p.solver)?.to_json()?,
        SolveMethod::Oracle => {
            let oracle = OracleConfig {
                max_cells: (n * m).max(1),
                divergence: p.solver.divergence,
                ..OracleConfig::new(p.solver.tau()).with_entropy(p.solver.epsilon)
            };
            uot_primal_oracle(&a, &b, &cost, &oracle)?.to_json()?
        }
        SolveMethod::Exact => exact_uniform_ot(&cost)?.to_json()?,
        SolveMethod::SinkhornDiv => {
            let Some((x, y)) = &points else {
                return Err(CliError::Config("sinkhorn-div needs source and target points".into()));
            };
            let d = sinkhorn_divergence(&a, &b, x, y, &p.solver)?;
            let value = json!({
                "value": d.value,
                "converged": d.converged,
                "cross": d.cross.to_record(),
                "self_source": d.self_a.to_record(),
                "self_target": d.self_b.to_record(),
            });
            serde_json::to_string_pretty(&value).map_err(|e| CliError::Io(e.to_string()))?
        }
    };
    let check: serde_json::Value = serde_json::from_str(&body).map_err(|e| CliError::Io(e.to_string()))?;
    let headline = check.get("value").or_else(|| check.get("cost"));
    if !headline.is_some_and(|v| v.as_f64().is_some_and(f64::is_finite)) {
        return Err(CliError::Numerical("solver returned a non-finite value".into()));
    }
    out.write("solve.json", body + "\n")
}
