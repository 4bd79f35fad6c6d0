//! Averaged minibatch plans on a small labelled pair of clouds, with their
//! cross-label mass and a connection diagram per plan.

use ubot_core::datasets::ten_point_clusters;
use ubot_core::measures::PointCloud;
use ubot_core::minibatch::{cross_label_mass, BudgetGuard, LossKind, MinibatchProblem, MinibatchScheme};
use ubot_core::rng::derive_seed;
use ubot_core::solvers::{Marginals, SolverConfig, TransportPlan};

use super::{load_points, num, require_labels, xy, Output};
use crate::config::{CliResult, ExperimentConfig, PlanVizParams};
use crate::svg::{color, Figure, Scatter, Segment};

/// Largest number of batch pairs averaged exhaustively.
const MAX_ENUMERATED_PAIRS: f64 = 20_000.0;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub struct Labelled {
    pub points: PointCloud,
    pub labels: Vec<usize>,
}

fn data(cfg: &ExperimentConfig, p: &PlanVizParams) -> CliResult<(Labelled, Labelled)> {
    match (&p.source, &p.target) {
        (Some(s), Some(t)) => {
            let (sp, sl) = require_labels(load_points(cfg, s)?, "plan-viz source")?;
            let (tp, tl) = require_labels(load_points(cfg, t)?, "plan-viz target")?;
            Ok((Labelled { points: sp, labels: sl }, Labelled { points: tp, labels: tl }))
        }
        _ => {
            let (s, t) = ten_point_clusters(cfg.seed)?;
            Ok((
                Labelled {
                    points: s.points().clone(),
                    labels: s.labels().to_vec(),
                },
                Labelled {
                    points: t.points().clone(),
                    labels: t.labels().to_vec(),
                },
            ))
        }
    }
}

/// Averaged plan for batch size `m`: exhaustive when small enough, otherwise
/// `k` seeded draws.
fn averaged(problem: &MinibatchProblem<'_>, m: usize, k: usize, seed: u64) -> CliResult<TransportPlan> {
    let (nx, ny) = (problem.x.len(), problem.y.len());
    if binomial(nx, m) * binomial(ny, m) <= MAX_ENUMERATED_PAIRS {
        let guard = BudgetGuard {
            max_n: nx.max(ny),
            max_m: m,
        };
        Ok(problem.averaged_plan(m, &guard)?)
    } else {
        Ok(problem.incomplete_plan(&MinibatchScheme::incomplete(m, k, seed))?.plan)
    }
}

fn tau_label(marginals: Marginals) -> String {
    match marginals {
        Marginals::Balanced => "inf".into(),
        Marginals::Unbalanced { tau } => num(tau),
    }
}

pub fn run(cfg: &ExperimentConfig, p: &PlanVizParams, out: &mut Output) -> CliResult<()> {
    let (src, tgt) = data(cfg, p)?;
    let n_min = src.points.len().min(tgt.points.len());
    let mut settings = Vec::new();
    if p.include_balanced {
        settings.push(Marginals::Balanced);
    }
    settings.extend(p.taus.iter().map(|&tau| Marginals::Unbalanced { tau }));

    let mut batch_sizes: Vec<usize> = p.batch_sizes.iter().map(|&m| m.min(n_min)).collect();
    batch_sizes.dedup();

    let mut plan_rows = Vec::new();
    let mut summary = Vec::new();
    let mut figures = Vec::new();
    for &m in &batch_sizes {
        for &marginals in &settings {
            let solver = SolverConfig {
                marginals,
                ..SolverConfig::unbalanced(p.epsilon, 1.0).with_tol(p.tol).with_max_iter(p.max_iter)
            };
            let problem = MinibatchProblem::new(&src.points, &tgt.points, LossKind::Uot, solver)?;
            let seed = derive_seed(cfg.seed, m as u64);
            let plan = averaged(&problem, m, p.k, seed)?;
            let entries = plan.entries();
            let peak = entries.fold(0.0f64, |a, &v| a.max(v));
            if !peak.is_finite() {
                return Err(crate::config::CliError::Numerical(format!("plan at m={m} is not finite")));
            }
            let setting = if marginals.is_balanced() { "balanced" } else { "unbalanced" };
            let tau = tau_label(marginals);
            for ((i, j), &v) in entries.indexed_iter() {
                let normalized = if peak > 0.0 { v / peak } else { 0.0 };
                plan_rows.push(vec![
                    setting.to_string(),
                    m.to_string(),
                    tau.clone(),
                    i.to_string(),
                    j.to_string(),
                    num(v),
                    num(normalized),
                ]);
            }
            let crossed = cross_label_mass(entries, &src.labels, &tgt.labels)?;
            let name = format!("plan_viz_{:02}.svg", figures.len());
            summary.push(vec![
                setting.to_string(),
                m.to_string(),
                tau.clone(),
                num(plan.mass()),
                num(crossed),
                name.clone(),
            ]);
            let title = format!("{setting} m={m} tau={tau}, cross-label mass {crossed:.3}");
            figures.push((name, diagram(&title, &src, &tgt, &plan, peak, p.draw_threshold)));
        }
    }

    out.csv(
        "plan_viz_plans.csv",
        &["setting", "m", "tau", "i", "j", "mass", "normalized"],
        &plan_rows,
    )?;
    out.csv(
        "plan_viz_summary.csv",
        &["setting", "m", "tau", "total_mass", "cross_label_mass", "svg"],
        &summary,
    )?;
    for (name, svg) in figures {
        out.write(&name, svg)?;
    }
    Ok(())
}

fn diagram(title: &str, src: &Labelled, tgt: &Labelled, plan: &TransportPlan, peak: f64, threshold: f64) -> String {
    let mut fig = Figure::new(title, "x0", "x1");
    fig.equal_aspect = true;
    let (sp, tp) = (xy(&src.points), xy(&tgt.points));
    if peak > 0.0 {
        for ((i, j), &v) in plan.entries().indexed_iter() {
            let w = v / peak;
            if w >= threshold && w > 0.0 {
                fig.segments.push(Segment {
                    from: sp[i],
                    to: tp[j],
                    opacity: w,
                });
            }
        }
    }
    let classes = src.labels.iter().chain(&tgt.labels).max().map_or(0, |c| c + 1);
    for c in 0..classes {
        let pick = |pts: &[[f64; 2]], labels: &[usize]| -> Vec<[f64; 2]> {
            pts.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| *p).collect()
        };
        fig.scatters.push(Scatter {
            label: format!("source class {c}"),
            color: color(2 * c),
            points: pick(&sp, &src.labels),
            radius: 5.0,
        });
        fig.scatters.push(Scatter {
            label: format!("target class {c}"),
            color: color(2 * c + 1),
            points: pick(&tp, &tgt.labels),
            radius: 5.0,
        });
    }
    fig.render()
}
