//! Losses between a clean cloud and the same cloud plus one moving outlier.

use rayon::prelude::*;

use ubot_core::datasets::{outlier_base, outlier_position, with_outlier};
use ubot_core::measures::{build_cost, Measure};
use ubot_core::minibatch::{LossKind, MinibatchProblem, MinibatchScheme};
use ubot_core::rng::derive_seed;
use ubot_core::solvers::{exact_uniform_ot, sinkhorn_divergence, uot_primal_oracle, OracleConfig, SolverConfig};

use super::{num, Output};
use crate::config::{CliResult, ExperimentConfig, OutlierLoss, OutlierParams};
use crate::svg::{color, Figure, Line, Scale};

pub const BOUND_TAG: &str = "uot-bound";

struct Row {
    distance: f64,
    loss: String,
    k: Option<usize>,
    mean: f64,
    std: f64,
    /// Solves that stopped at the iteration cap.
    unconverged: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run(cfg: &ExperimentConfig, p: &OutlierParams, out: &mut Output) -> CliResult<()> {
    let n = p.n;
    let base = outlier_base(n, cfg.seed)?;
    let a = Measure::uniform(n, 1.0)?;
    let a_tainted = Measure::uniform(n + 1, 1.0)?;
    // uniform weights on n + 1 points put ζ = n / (n + 1) on the clean part
    let zeta = n as f64 / (n + 1) as f64;
    let oracle = OracleConfig {
        max_cells: (n + 1) * (n + 1),
        ..OracleConfig::new(p.tau)
    };
    let clean = uot_primal_oracle(&a, &a, &build_cost(&base, &base)?, &oracle)?.cost;
    let unbalanced = SolverConfig::unbalanced(p.epsilon, p.tau).with_tol(p.tol).with_max_iter(p.max_iter);
    let balanced = SolverConfig::balanced(p.epsilon).with_tol(p.tol).with_max_iter(p.max_iter);

    let mut rows = Vec::new();
    for &d in &p.distances {
        let z = outlier_position(&base, d);
        let tainted = with_outlier(&base, z)?;
        let c = build_cost(&base, &tainted)?;
        let spread: f64 = base
            .as_array()
            .rows()
            .into_iter()
            .map(|y| (z[0] - y[0]).powi(2) + (z[1] - y[1]).powi(2))
            .sum::<f64>()
            / n as f64;
        let bound = zeta * clean + 2.0 * p.tau * (1.0 - zeta) * (1.0 - (-spread / (2.0 * p.tau)).exp());
        let fixed = |loss: &str, value: f64, converged: bool| Row {
            distance: d,
            loss: loss.into(),
            k: None,
            mean: value,
            std: 0.0,
            unconverged: usize::from(!converged),
        };
        for &loss in &p.losses {
            let tag = loss.tag();
            match loss {
                OutlierLoss::OtBalanced => rows.push(fixed(tag, exact_uniform_ot(&c)?.cost, true)),
                OutlierLoss::Uot => {
                    let r = uot_primal_oracle(&a, &a_tainted, &c, &oracle)?;
                    rows.push(fixed(tag, r.cost, r.converged));
                }
                OutlierLoss::SinkhornDiv | OutlierLoss::SinkhornDivBalanced => {
                    let solver = if loss == OutlierLoss::SinkhornDiv { unbalanced } else { balanced };
                    let v = sinkhorn_divergence(&a, &a_tainted, &base, &tainted, &solver)?;
                    rows.push(fixed(tag, v.value, v.converged));
                }
                OutlierLoss::MbOt | OutlierLoss::MbUot => {
                    let solver = if loss == OutlierLoss::MbOt { balanced } else { unbalanced };
                    let problem = MinibatchProblem::new(&base, &tainted, LossKind::Uot, solver)?;
                    for &k in &p.ks {
                        // the same draws at every distance keep the curves comparable
                        let runs = (0..p.repetitions)
                            .into_par_iter()
                            .map(|r| {
                                let seed = derive_seed(derive_seed(cfg.seed, r as u64 + 1), k as u64);
                                problem.incomplete_estimator(&MinibatchScheme::incomplete(p.m, k, seed))
                            })
                            .collect::<ubot_core::Result<Vec<_>>>()?;
                        let values: Vec<f64> = runs.iter().map(|run| run.mean).collect();
                        let (mean, std) = mean_std(&values);
                        rows.push(Row {
                            distance: d,
                            loss: tag.into(),
                            k: Some(k),
                            mean,
                            std,
                            unconverged: runs.iter().filter(|run| !run.converged).count(),
                        });
                    }
                }
            }
        }
        rows.push(fixed(BOUND_TAG, bound, true));
    }
    if let Some(bad) = rows.iter().find(|r| !r.mean.is_finite()) {
        return Err(crate::config::CliError::Numerical(format!(
            "{} is not finite at distance {}",
            bad.loss, bad.distance
        )));
    }

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.distance),
                r.loss.clone(),
                r.k.map(|k| k.to_string()).unwrap_or_default(),
                num(r.mean),
                num(r.std),
                r.unconverged.to_string(),
            ]
        })
        .collect();
    out.csv("outlier.csv", &["distance", "loss", "k", "mean", "std", "unconverged"], &table)?;
    out.write("outlier.svg", plot(p, &rows))
}

fn plot(p: &OutlierParams, rows: &[Row]) -> String {
    let mut fig = Figure::new("Loss against outlier distance", "outlier distance", "loss");
    if p.distances.iter().all(|&d| d > 0.0) {
        fig.x_scale = Scale::Log;
    }
    fig.y_scale = Scale::Log;
    let mut series: Vec<(String, Option<usize>)> = Vec::new();
    for r in rows {
        let key = (r.loss.clone(), r.k);
        if !series.contains(&key) {
            series.push(key);
        }
    }
    for (idx, (loss, k)) in series.iter().enumerate() {
        let label = match k {
            Some(k) => format!("{loss} k={k}"),
            None => loss.clone(),
        };
        let points = rows
            .iter()
            .filter(|r| &r.loss == loss && &r.k == k)
            .map(|r| [r.distance, r.mean])
            .collect();
        fig.lines.push(Line {
            label,
            color: color(idx),
            points,
            dashed: loss == BOUND_TAG,
        });
    }
    fig.render()
}
