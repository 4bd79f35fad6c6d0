//! Minibatch gradient flow of a source cloud toward a target cloud.

use ubot_core::datasets::{cluster_purity, two_cluster_flow};
use ubot_core::gradients::{euler_flow, FlowConfig, Snapshot, Trajectory};
use ubot_core::measures::PointCloud;
use ubot_core::minibatch::MinibatchScheme;
use ubot_core::rng::derive_seed;

use super::{load_points, num, xy, Output};
use crate::config::{CliResult, ExperimentConfig, FlowParams};
use crate::svg::{color, Figure, Scatter};

struct Setup {
    source: PointCloud,
    target: PointCloud,
    /// Source cluster ids and target centers of the built-in scenario.
    clusters: Option<(Vec<usize>, [[f64; 2]; 2])>,
    source_groups: Vec<usize>,
    target_groups: Vec<usize>,
}

fn setup(cfg: &ExperimentConfig, p: &FlowParams) -> CliResult<Setup> {
    match (&p.source, &p.target) {
        (Some(s), Some(t)) => {
            let (s, t) = (load_points(cfg, s)?, load_points(cfg, t)?);
            let groups = |c: &ubot_core::measures::LabeledCloud| c.labels.clone().unwrap_or_else(|| vec![0; c.points.len()]);
            Ok(Setup {
                source_groups: groups(&s),
                target_groups: groups(&t),
                source: s.points,
                target: t.points,
                clusters: None,
            })
        }
        _ => {
            let sc = two_cluster_flow(&p.scenario, cfg.seed)?;
            Ok(Setup {
                source_groups: sc.source_cluster.clone(),
                target_groups: sc.target_cluster.clone(),
                clusters: Some((sc.source_cluster, sc.target_centers)),
                source: sc.source,
                target: sc.target,
            })
        }
    }
}

pub fn run(cfg: &ExperimentConfig, p: &FlowParams, out: &mut Output) -> CliResult<()> {
    let s = setup(cfg, p)?;
    let flow = FlowConfig {
        step_size: p.step_size,
        iterations: p.iterations,
        scheme: MinibatchScheme::incomplete(p.m, p.k, derive_seed(cfg.seed, 1)),
        loss: p.loss,
        solver: p.solver,
        snapshot_every: p.snapshot_every,
    };
    let traj = euler_flow(&s.source, &s.target, &flow)?;

    out.with_writer("flow_loss.csv", |w| traj.write_loss_csv(w))?;
    let target_rows: Vec<Vec<String>> = s
        .target
        .as_array()
        .rows()
        .into_iter()
        .enumerate()
        .map(|(id, r)| std::iter::once(id.to_string()).chain(r.iter().map(|v| num(*v))).collect())
        .collect();
    let mut header = vec!["point_id".to_string()];
    header.extend((0..s.target.dim()).map(|c| format!("x{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("flow_target.csv", &header, &target_rows)?;

    for snap in &traj.snapshots {
        let stem = format!("flow_snapshot_{:06}", snap.iter);
        out.with_writer(&format!("{stem}.csv"), |w| Trajectory::write_snapshot_csv(snap, w))?;
        out.write(&format!("{stem}.svg"), frame(snap, &s))?;
    }

    let purity = s
        .clusters
        .as_ref()
        .map(|(origin, centers)| cluster_purity(&traj.final_points, origin, centers));
    let final_loss = traj.losses.last().map_or(f64::NAN, |(_, l)| *l);
    out.csv(
        "flow_summary.csv",
        &["iterations", "final_loss", "purity", "unconverged_steps", "snapshots"],
        &[vec![
            p.iterations.to_string(),
            num(final_loss),
            purity.map(num).unwrap_or_default(),
            traj.unconverged_steps.to_string(),
            traj.snapshots.len().to_string(),
        ]],
    )
}

fn frame(snap: &Snapshot, s: &Setup) -> String {
    let mut fig = Figure::new(format!("Gradient flow, iteration {}", snap.iter), "x0", "x1");
    fig.equal_aspect = true;
    let groups = |pts: Vec<[f64; 2]>, ids: &[usize]| {
        let count = ids.iter().max().map_or(0, |g| g + 1);
        (0..count)
            .map(|g| pts.iter().zip(ids).filter(|(_, &i)| i == g).map(|(p, _)| *p).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    for (g, pts) in groups(xy(&s.target), &s.target_groups).into_iter().enumerate() {
        fig.scatters.push(Scatter {
            label: format!("target {g}"),
            color: color(2 * g + 1),
            points: pts,
            radius: 1.5,
        });
    }
    for (g, pts) in groups(xy(&snap.points), &s.source_groups).into_iter().enumerate() {
        fig.scatters.push(Scatter {
            label: format!("source {g}"),
            color: color(2 * g),
            points: pts,
            radius: 1.5,
        });
    }
    fig.render()
}
