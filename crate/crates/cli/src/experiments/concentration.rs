//! Empirical coverage of the incomplete-estimator deviation bounds.

use std::collections::BTreeMap;

use rayon::prelude::*;

use ubot_core::measures::{build_cost, Measure};
use ubot_core::minibatch::{deviation_bound, marginal_deviation_bound, LossKind, MinibatchProblem, MinibatchScheme};
use ubot_core::rng::derive_seed;
use ubot_core::solvers::sinkhorn_uot;

use super::{num, unit_square, Output};
use crate::config::{CliError, CliResult, ConcentrationParams, ExperimentConfig};

/// Mean batch loss over independent pairs of `m`-samples from the population.
fn expected_batch_loss(p: &ConcentrationParams, m: usize, seed: u64) -> CliResult<f64> {
    let u = Measure::uniform(m, 1.0)?;
    let values = (0..p.population_draws as u64)
        .into_par_iter()
        .map(|r| -> CliResult<f64> {
            let xb = unit_square(derive_seed(seed, 2 * r), m)?;
            let yb = unit_square(derive_seed(seed, 2 * r + 1), m)?;
            Ok(sinkhorn_uot(&u, &u, &build_cost(&xb, &yb)?, &p.solver)?.cost)
        })
        .collect::<CliResult<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn run(cfg: &ExperimentConfig, p: &ConcentrationParams, out: &mut Output) -> CliResult<()> {
    let mut expected: BTreeMap<usize, f64> = BTreeMap::new();
    for point in &p.grid {
        if let std::collections::btree_map::Entry::Vacant(slot) = expected.entry(point.m) {
            let seed = derive_seed(cfg.seed, 1_000_000 + point.m as u64);
            slot.insert(expected_batch_loss(p, point.m, seed)?);
        }
    }

    let mut rows = Vec::new();
    for (g, point) in p.grid.iter().enumerate() {
        let (n, m, k) = (point.n, point.m, point.k);
        let grid_seed = derive_seed(cfg.seed, g as u64);
        let reference = expected[&m];

        // loss deviation: fresh clouds per repetition
        let loss = (0..p.repetitions as u64)
            .into_par_iter()
            .map(|r| -> CliResult<(f64, f64)> {
                let rep_seed = derive_seed(grid_seed, r);
                let x = unit_square(derive_seed(rep_seed, 0), n)?;
                let y = unit_square(derive_seed(rep_seed, 1), n)?;
                let bound_m = build_cost(&x, &y)?.max_entry();
                let problem = MinibatchProblem::new(&x, &y, LossKind::Uot, p.solver)?;
                let est = problem.incomplete_estimator(&MinibatchScheme::incomplete(m, k, derive_seed(rep_seed, 2)))?;
                Ok(((est.mean - reference).abs(), deviation_bound(n, m, k, p.delta, bound_m)?))
            })
            .collect::<CliResult<Vec<_>>>()?;

        // marginal deviation: fixed clouds against a long-run averaged plan
        let x = unit_square(derive_seed(grid_seed, u64::MAX), n)?;
        let y = unit_square(derive_seed(grid_seed, u64::MAX - 1), n)?;
        let problem = MinibatchProblem::new(&x, &y, LossKind::Uot, p.solver)?;
        let reference_plan =
            problem.incomplete_plan(&MinibatchScheme::incomplete(m, p.reference_draws, derive_seed(grid_seed, u64::MAX - 2)))?;
        let ref_rows = reference_plan.plan.row_marginal();
        let marginal = (0..p.repetitions as u64)
            .into_par_iter()
            .map(|r| -> CliResult<(f64, f64)> {
                let est = problem.incomplete_plan(&MinibatchScheme::incomplete(
                    m,
                    k,
                    derive_seed(derive_seed(grid_seed, r), 3),
                ))?;
                let limit = marginal_deviation_bound(k, p.delta, est.max_batch_mass.max(reference_plan.max_batch_mass))?;
                let dev = est
                    .plan
                    .row_marginal()
                    .iter()
                    .zip(ref_rows.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                Ok((dev, limit))
            })
            .collect::<CliResult<Vec<_>>>()?;

        let reps = p.repetitions as f64;
        let mean = |v: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| v.iter().map(f).sum::<f64>() / reps;
        let coverage = |v: &[(f64, f64)]| v.iter().filter(|(d, b)| d <= b).count() as f64 / reps;
        let max_dev = loss.iter().map(|(d, _)| *d).fold(0.0, f64::max);
        if !(reference.is_finite() && max_dev.is_finite()) {
            return Err(CliError::Numerical(format!("non-finite deviation at n={n}, m={m}, k={k}")));
        }
        rows.push(vec![
            n.to_string(),
            m.to_string(),
            k.to_string(),
            num(p.delta),
            p.repetitions.to_string(),
            num(reference),
            num(mean(&loss, |v| v.0)),
            num(max_dev),
            num(mean(&loss, |v| v.1)),
            num(coverage(&loss)),
            num(mean(&marginal, |v| v.0)),
            num(mean(&marginal, |v| v.1)),
            num(coverage(&marginal)),
        ]);
    }
    out.csv(
        "concentration.csv",
        &[
            "n",
            "m",
            "k",
            "delta",
            "repetitions",
            "expected_loss",
            "mean_deviation",
            "max_deviation",
            "mean_bound",
            "coverage",
            "marginal_mean_deviation",
            "marginal_mean_bound",
            "marginal_coverage",
        ],
        &rows,
    )
}
