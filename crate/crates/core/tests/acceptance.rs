//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.
//!
//! `cargo test -p ubot-core --test acceptance` runs all of them; numeric
//! arguments select a subset, e.g. `-- 1 4 6`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use itertools::Itertools;
use ndarray::Array2;
use rayon::prelude::*;

use ubot_core::datasets::{
    cluster_purity, outlier_base, outlier_position, shifted_blobs, two_cluster_flow, with_outlier, BlobParams,
    TwoClusterParams,
};
use ubot_core::gradients::{euler_flow, grad_cost, grad_positions, FlowConfig, Wrt};
use ubot_core::jumbot::{fixed_plan_objective, jumbot_eval, train, JumbotConfig, LabeledDataset, TinyClassifier};
use ubot_core::measures::{build_cost, CostMatrix, Measure, PointCloud};
use ubot_core::minibatch::{
    deviation_bound, marginal_deviation_bound, BudgetGuard, LossKind, MinibatchProblem, MinibatchScheme,
};
use ubot_core::rng::{derive_seed, CounterRng};
use ubot_core::solvers::{
    exact_balanced_ot, exact_uniform_ot, hungarian, sinkhorn_divergence, sinkhorn_uot, uot_primal_oracle,
    OracleConfig, SolverConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn random_cloud(rng: &mut CounterRng, n: usize, scale: f64) -> PointCloud {
    PointCloud::new(Array2::from_shape_fn((n, 2), |_| rng.uniform() * scale)).unwrap()
}

fn random_weights(rng: &mut CounterRng, n: usize) -> Measure {
    Measure::new((0..n).map(|_| 0.1 + 0.9 * rng.uniform()).collect::<Vec<_>>()).unwrap()
}

fn probability_weights(rng: &mut CounterRng, n: usize) -> Measure {
    let w: Vec<f64> = (0..n).map(|_| 0.1 + 0.9 * rng.uniform()).collect();
    let s: f64 = w.iter().sum();
    Measure::new(w.into_iter().map(|v| v / s).collect::<Vec<_>>()).unwrap()
}

// 1. Sinkhorn vs the primal oracle on the same entropic objective.
fn oracle_equivalence() -> Outcome {
    let mut rng = CounterRng::new(1, 0);
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for inst in 0..50 {
        let tau = [0.1, 1.0, 10.0][inst % 3];
        let n = 2 + rng.below(9) as usize;
        let p = 2 + rng.below(9) as usize;
        let (x, y) = (random_cloud(&mut rng, n, 1.0), random_cloud(&mut rng, p, 1.0));
        let (a, b) = (random_weights(&mut rng, n), random_weights(&mut rng, p));
        let c = build_cost(&x, &y).unwrap();
        let cfg = SolverConfig::unbalanced(0.01, tau).with_tol(1e-11).with_max_iter(1_000_000);
        let s = sinkhorn_uot(&a, &b, &c, &cfg).unwrap();
        let oracle = OracleConfig {
            max_iter: 200_000,
            ..OracleConfig::new(tau).with_entropy(0.01)
        };
        let o = uot_primal_oracle(&a, &b, &c, &oracle).unwrap();
        if !(s.converged && o.converged) {
            unconverged += 1;
        }
        worst = worst.max(rel_err(s.cost, o.cost));
    }
    outcome(
        worst <= 1e-3 && unconverged == 0,
        format!("max relative gap {worst:.2e} over 50 instances (limit 1e-3), {unconverged} unconverged"),
    )
}

// 2. 1×1 closed forms.
fn closed_forms() -> Outcome {
    let one = Measure::new(vec![1.0]).unwrap();
    let mut worst_s: f64 = 0.0;
    let mut worst_o: f64 = 0.0;
    for c0 in [0.1, 1.0, 10.0] {
        for tau in [0.5, 1.0, 5.0] {
            let c = CostMatrix::custom(ndarray::array![[c0]]).unwrap();
            for eps in [0.01, 0.1, 1.0] {
                let k = eps + 2.0 * tau;
                let expected = k * (1.0 - (-c0 / k).exp());
                let s = sinkhorn_uot(&one, &one, &c, &SolverConfig::unbalanced(eps, tau)).unwrap();
                worst_s = worst_s.max((s.cost - expected).abs());
            }
            let o = uot_primal_oracle(&one, &one, &c, &OracleConfig::new(tau)).unwrap();
            let expected = 2.0 * tau * (1.0 - (-c0 / (2.0 * tau)).exp());
            worst_o = worst_o.max((o.cost - expected).abs());
        }
    }
    outcome(
        worst_s <= 1e-6 && worst_o <= 1e-6,
        format!("max abs error: Sinkhorn {worst_s:.2e}, unregularized oracle {worst_o:.2e} (limit 1e-6)"),
    )
}

// 3. Small-ε balanced Sinkhorn vs exact assignment; Hungarian vs 6! enumeration.
fn exact_limit() -> Outcome {
    let mut rng = CounterRng::new(3, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c = CostMatrix::custom(Array2::from_shape_fn((8, 8), |_| rng.uniform())).unwrap();
        let a = Measure::uniform(8, 1.0).unwrap();
        let eps = 1e-3 * c.mean();
        let s = sinkhorn_uot(&a, &a, &c, &SolverConfig::balanced(eps).with_tol(1e-9).with_max_iter(2_000_000)).unwrap();
        let e = exact_balanced_ot(&c).unwrap();
        worst = worst.max(rel_err(s.cost, e.cost));
    }
    let mut mismatches = 0;
    for _ in 0..20 {
        let c = Array2::from_shape_fn((6, 6), |_| (rng.uniform() * 1000.0).round() / 100.0);
        let (sigma, _, _) = hungarian(c.view());
        let got: f64 = sigma.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
        let best = (0..6)
            .permutations(6)
            .map(|perm| perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if got != best {
            mismatches += 1;
        }
    }
    outcome(
        worst <= 0.02 && mismatches == 0,
        format!("max relative gap to exact OT {worst:.2e} (limit 2e-2); Hungarian vs 6! enumeration mismatches: {mismatches}/20"),
    )
}

// 4. Sinkhorn divergence: zero on the diagonal, symmetric, nonnegative.
fn divergence_axioms() -> Outcome {
    let mut rng = CounterRng::new(4, 0);
    let (mut worst_zero, mut worst_sym, mut most_negative) = (0.0f64, 0.0f64, f64::INFINITY);
    for inst in 0..200 {
        let eps = [0.05, 0.5][inst % 2];
        let balanced = (inst / 2) % 2 == 1;
        let cfg = if balanced {
            SolverConfig::balanced(eps)
        } else {
            SolverConfig::unbalanced(eps, 0.5)
        }
        .with_tol(1e-13)
        .with_max_iter(1_000_000);
        let n = 2 + rng.below(7) as usize;
        let p = 2 + rng.below(7) as usize;
        let (x, y) = (random_cloud(&mut rng, n, 1.0), random_cloud(&mut rng, p, 1.0));
        let (a, b) = if balanced {
            (probability_weights(&mut rng, n), probability_weights(&mut rng, p))
        } else {
            (random_weights(&mut rng, n), random_weights(&mut rng, p))
        };
        let ab = sinkhorn_divergence(&a, &b, &x, &y, &cfg).unwrap().value;
        let ba = sinkhorn_divergence(&b, &a, &y, &x, &cfg).unwrap().value;
        let aa = sinkhorn_divergence(&a, &a, &x, &x, &cfg).unwrap().value;
        worst_zero = worst_zero.max(aa.abs());
        worst_sym = worst_sym.max((ab - ba).abs());
        most_negative = most_negative.min(ab);
    }
    outcome(
        worst_zero <= 1e-8 && worst_sym <= 1e-9 && most_negative >= 0.0,
        format!(
            "max |S(a,a)| {worst_zero:.2e} (limit 1e-8), max |S(a,b)-S(b,a)| {worst_sym:.2e} (limit 1e-9), min S(a,b) {most_negative:.2e} over 200 pairs"
        ),
    )
}

// 5. Outlier inequality with the unregularized oracle, and the plateau.
fn outlier_robustness() -> Outcome {
    let mut rng = CounterRng::new(5, 0);
    let mut violations = 0;
    let mut unconverged = 0;
    let mut min_margin = f64::INFINITY;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..100 {
        let tau = [0.5, 1.0, 2.0][rng.below(3) as usize];
        let n = 3 + rng.below(4) as usize;
        let p = 3 + rng.below(4) as usize;
        let (x, y) = (random_cloud(&mut rng, n, 1.0), random_cloud(&mut rng, p, 1.0));
        let zeta = 0.05 + 0.9 * rng.uniform();
        let angle = std::f64::consts::TAU * rng.uniform();
        let dist = 1.0 + 20.0 * rng.uniform();
        let z = [0.5 + dist * angle.cos(), 0.5 + dist * angle.sin()];
        let xz = with_outlier(&x, z).unwrap();
        let a = Measure::uniform(n, 1.0).unwrap();
        let b = Measure::uniform(p, 1.0).unwrap();
        let mut wz = vec![zeta / n as f64; n];
        wz.push(1.0 - zeta);
        let az = Measure::new(wz).unwrap();
        let cfg = OracleConfig {
            grad_tol: 1e-12,
            max_iter: 1_000_000,
            ..OracleConfig::new(tau)
        };
        let base_cost = build_cost(&x, &y).unwrap();
        let base = uot_primal_oracle(&a, &b, &base_cost, &cfg).unwrap();
        let tainted = uot_primal_oracle(&az, &b, &build_cost(&xz, &y).unwrap(), &cfg).unwrap();
        if !(base.converged && tainted.converged) {
            unconverged += 1;
        }
        // tainted.cost is a primal value (upper bound); compare against a dual lower bound for the base
        let base_lower = kl_uot_dual_bound(&a, &b, &base_cost, &base.potentials.f, tau);
        worst_gap = worst_gap.max(base.cost - base_lower);
        let mz: f64 = (0..p)
            .map(|j| {
                let yj = y.point(j);
                ((z[0] - yj[0]).powi(2) + (z[1] - yj[1]).powi(2)) / p as f64
            })
            .sum();
        let rhs = zeta * base_lower + 2.0 * tau * (1.0 - zeta) * (1.0 - (-mz / (2.0 * tau)).exp());
        min_margin = min_margin.min(rhs - tainted.cost);
        if tainted.cost > rhs + 1e-8 {
            violations += 1;
        }
    }

    let base = outlier_base(10, 50).unwrap();
    let a = Measure::uniform(10, 1.0).unwrap();
    let at = Measure::uniform(11, 1.0).unwrap();
    let oracle = OracleConfig::new(1.0);
    let mut uot = Vec::new();
    let mut ot = Vec::new();
    for d in [10.0, 100.0] {
        let tainted = with_outlier(&base, outlier_position(&base, d)).unwrap();
        let c = build_cost(&base, &tainted).unwrap();
        uot.push(uot_primal_oracle(&a, &at, &c, &oracle).unwrap().cost);
        ot.push(exact_uniform_ot(&c).unwrap().cost);
    }
    let uot_change = (uot[1] - uot[0]).abs() / uot[0];
    let ot_growth = (ot[1] - ot[0]) / ot[0];
    outcome(
        violations == 0 && uot_change < 0.05 && ot_growth > 0.5,
        format!(
            "{violations}/100 certified bound violations (min margin {min_margin:.2e}; base duality gap <= {worst_gap:.1e}, {unconverged} solves above grad_tol); UOT change 10->100: {:.2}% (limit 5%), OT growth {:.0}% (needs > 50%)",
            100.0 * uot_change,
            100.0 * ot_growth
        ),
    )
}

/// Dual value of unregularized KL-UOT at `f` after c-transforms; a lower bound on the optimum.
fn kl_uot_dual_bound(a: &Measure, b: &Measure, c: &CostMatrix, f: &ndarray::Array1<f64>, tau: f64) -> f64 {
    let c = c.entries();
    let (n, p) = c.dim();
    let g: Vec<f64> = (0..p).map(|j| (0..n).map(|i| c[[i, j]] - f[i]).fold(f64::INFINITY, f64::min)).collect();
    let f: Vec<f64> = (0..n).map(|i| (0..p).map(|j| c[[i, j]] - g[j]).fold(f64::INFINITY, f64::min)).collect();
    let side = |w: &[f64], u: &[f64]| -> f64 { w.iter().zip(u).map(|(w, u)| tau * w * (-(-u / tau).exp_m1())).sum() };
    side(a.weights().as_slice().unwrap(), &f) + side(b.weights().as_slice().unwrap(), &g)
}

// 6. Minibatch estimators against independent enumeration.
fn minibatch_correctness() -> Outcome {
    let mut rng = CounterRng::new(6, 0);
    let (x, y) = (random_cloud(&mut rng, 6, 1.0), random_cloud(&mut rng, 6, 1.0));
    let cfg = SolverConfig::unbalanced(0.1, 1.0);
    let prob = MinibatchProblem::new(&x, &y, LossKind::Uot, cfg).unwrap();
    let full = build_cost(&x, &y).unwrap();
    let guard = BudgetGuard::default();
    let mut bitwise = true;
    let mut complete_m2 = 0.0;
    for m in [1usize, 2, 3] {
        let u = Measure::uniform(m, 1.0).unwrap();
        let mut total = 0.0;
        let mut count = 0usize;
        for i in (0..6).combinations(m) {
            for j in (0..6).combinations(m) {
                total += sinkhorn_uot(&u, &u, &full.select(&i, &j), &cfg).unwrap().cost;
                count += 1;
            }
        }
        let reference = total / count as f64;
        let got = prob.complete_estimator(m, &guard).unwrap();
        bitwise &= got.to_bits() == reference.to_bits();
        if m == 2 {
            complete_m2 = got;
        }
    }
    let run = prob.incomplete_estimator(&MinibatchScheme::incomplete(2, 10_000, 66)).unwrap();
    let se = run.std / (10_000f64).sqrt();
    let z = (run.mean - complete_m2).abs() / se;

    let bal = MinibatchProblem::new(&x, &y, LossKind::Uot, SolverConfig::balanced(0.1).with_tol(1e-14).with_max_iter(100_000))
        .unwrap();
    let mut worst_marg: f64 = 0.0;
    for m in [1usize, 2, 3] {
        let plan = bal.averaged_plan(m, &guard).unwrap();
        for v in plan.row_marginal().iter().chain(plan.col_marginal().iter()) {
            worst_marg = worst_marg.max((v - 1.0 / 6.0).abs());
        }
    }
    outcome(
        bitwise && z <= 3.0 && worst_marg <= 1e-10,
        format!(
            "complete == enumeration bitwise: {bitwise}; incomplete k=1e4 off by {z:.2} standard errors (limit 3); averaged balanced plan marginal error {worst_marg:.2e} (limit 1e-10)"
        ),
    )
}

// 7. Coverage of the deviation bound and of the marginal bound.
fn concentration_coverage() -> Outcome {
    let (n, m, k, delta) = (60usize, 5usize, 50usize, 0.05);
    let cfg = SolverConfig::unbalanced(0.1, 1.0);
    let sample = |seed: u64, count: usize| {
        let mut rng = CounterRng::new(seed, 0);
        random_cloud(&mut rng, count, 1.0)
    };
    // E[h] over independent m-samples of the population
    let u = Measure::uniform(m, 1.0).unwrap();
    let reference: f64 = (0..100_000u64)
        .into_par_iter()
        .map(|r| {
            let (xb, yb) = (sample(derive_seed(700, 2 * r), m), sample(derive_seed(700, 2 * r + 1), m));
            sinkhorn_uot(&u, &u, &build_cost(&xb, &yb).unwrap(), &cfg).unwrap().cost
        })
        .collect::<Vec<_>>()
        .iter()
        .sum::<f64>()
        / 100_000.0;

    let covered: usize = (0..500u64)
        .into_par_iter()
        .map(|r| {
            let (x, y) = (sample(derive_seed(71, 2 * r), n), sample(derive_seed(71, 2 * r + 1), n));
            let bound_m = build_cost(&x, &y).unwrap().max_entry();
            let prob = MinibatchProblem::new(&x, &y, LossKind::Uot, cfg).unwrap();
            let est = prob.incomplete_estimator(&MinibatchScheme::incomplete(m, k, derive_seed(72, r))).unwrap().mean;
            usize::from((est - reference).abs() <= deviation_bound(n, m, k, delta, bound_m).unwrap())
        })
        .sum();

    // marginal deviation: fixed clouds, reference averaged plan from many draws
    let (x, y) = (sample(73, n), sample(74, n));
    let prob = MinibatchProblem::new(&x, &y, LossKind::Uot, cfg).unwrap();
    let reference_plan = prob.incomplete_plan(&MinibatchScheme::incomplete(m, 20_000, 75)).unwrap();
    let ref_rows = reference_plan.plan.row_marginal();
    let marg_covered: usize = (0..500u64)
        .into_par_iter()
        .map(|r| {
            let est = prob.incomplete_plan(&MinibatchScheme::incomplete(m, k, derive_seed(76, r))).unwrap();
            let limit = marginal_deviation_bound(k, delta, est.max_batch_mass.max(reference_plan.max_batch_mass)).unwrap();
            let rows = est.plan.row_marginal();
            usize::from(rows.iter().zip(ref_rows.iter()).all(|(a, b)| (a - b).abs() <= limit))
        })
        .sum();
    let (f1, f2) = (covered as f64 / 500.0, marg_covered as f64 / 500.0);
    outcome(
        f1 >= 0.95 && f2 >= 0.95,
        format!("loss deviation coverage {f1:.3}, marginal deviation coverage {f2:.3} (both need >= 0.95; E[h] = {reference:.4})"),
    )
}

// 8. Envelope gradients vs central differences.
fn gradient_checks() -> Outcome {
    let mut rng = CounterRng::new(8, 0);
    let settings: Vec<(f64, Option<f64>)> =
        [0.05, 0.5].iter().flat_map(|&e| [Some(0.1), Some(1.0), None].map(|t| (e, t))).collect();
    let cfg_of = |(eps, tau): (f64, Option<f64>)| {
        match tau {
            Some(t) => SolverConfig::unbalanced(eps, t),
            None => SolverConfig::balanced(eps),
        }
        .with_tol(1e-15)
        .with_max_iter(200_000)
    };
    let mut worst_cost: f64 = 0.0;
    let mut worst_pos: f64 = 0.0;
    for inst in 0..50 {
        let cfg = cfg_of(settings[inst % settings.len()]);
        let (x, y) = (random_cloud(&mut rng, 4, 0.5), random_cloud(&mut rng, 4, 0.5));
        let a = Measure::uniform(4, 1.0).unwrap();
        let c = build_cost(&x, &y).unwrap();
        let g = grad_cost(&sinkhorn_uot(&a, &a, &c, &cfg).unwrap()).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            for j in 0..4 {
                let shifted = |s: f64| {
                    let mut e = c.entries().to_owned();
                    e[[i, j]] += s;
                    sinkhorn_uot(&a, &a, &CostMatrix::custom(e).unwrap(), &cfg).unwrap().cost
                };
                // costs must stay nonnegative, so entries near zero get a one-sided stencil
                let fd = if c.entries()[[i, j]] > h {
                    (shifted(h) - shifted(-h)) / (2.0 * h)
                } else {
                    (-3.0 * shifted(0.0) + 4.0 * shifted(h) - shifted(2.0 * h)) / (2.0 * h)
                };
                if fd.abs() > 1e-8 {
                    worst_cost = worst_cost.max(rel_err(g[[i, j]], fd));
                }
            }
        }

        let loss = if inst % 2 == 0 { LossKind::Uot } else { LossKind::SinkhornDivergence };
        let (x, y) = (random_cloud(&mut rng, 5, 0.5), random_cloud(&mut rng, 5, 0.5));
        let gp = grad_positions(loss, &x, &y, Wrt::Y, &cfg).unwrap();
        for j in 0..5 {
            for d in 0..2 {
                let shifted = |s: f64| {
                    let mut arr = y.as_array().to_owned();
                    arr[[j, d]] += s;
                    grad_positions(loss, &x, &PointCloud::new(arr).unwrap(), Wrt::Y, &cfg).unwrap().loss
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                if fd.abs() > 1e-8 {
                    worst_pos = worst_pos.max(rel_err(gp.values[[j, d]], fd));
                }
            }
        }
    }

    // classifier parameters, plan frozen at its converged value
    let mut rng = CounterRng::new(81, 0);
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
    let src = LabeledDataset::new(random_cloud(&mut rng, 10, 2.0), labels.clone(), 3).unwrap();
    let tgt = random_cloud(&mut rng, 10, 2.0);
    let mut jcfg = JumbotConfig::new(SolverConfig::unbalanced(0.1, 1.0), 10, 1, 0);
    jcfg.eta1 = 0.5;
    jcfg.eta2 = 0.5;
    let model = TinyClassifier::new(2, 32, 8, 3, 82);
    let eval = jumbot_eval(&model, &src, &tgt, &jcfg).unwrap();
    let analytic = eval.grads.flatten();
    let base = model.parameters();
    let mut worst_net: f64 = 0.0;
    let h = 1e-4;
    for (idx, g) in analytic.iter().enumerate() {
        let at = |s: f64| {
            let mut mm = model.clone();
            let mut p = base.clone();
            p[idx] += s;
            mm.set_parameters(&p).unwrap();
            fixed_plan_objective(&mm, &src, &tgt, &eval.plan, &jcfg).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        if fd.abs() > 1e-8 {
            worst_net = worst_net.max(rel_err(*g, fd));
        }
    }
    outcome(
        worst_cost <= 1e-4 && worst_pos <= 1e-4 && worst_net <= 1e-3,
        format!(
            "max relative error: cost gradient {worst_cost:.2e}, position gradient {worst_pos:.2e} (limit 1e-4), classifier {worst_net:.2e} over {} parameters (limit 1e-3)",
            analytic.len()
        ),
    )
}

// 9. Imbalanced two-cluster flow: unbalanced keeps clusters apart.
fn gradient_flow() -> Outcome {
    let mut gaps = Vec::new();
    let mut details = Vec::new();
    for seed in 0..5u64 {
        let s = two_cluster_flow(&TwoClusterParams::default(), seed).unwrap();
        let run = |solver: SolverConfig| {
            let flow = FlowConfig {
                step_size: 0.02,
                iterations: 500,
                scheme: MinibatchScheme::incomplete(64, 1, derive_seed(90, seed)),
                loss: LossKind::SinkhornDivergence,
                solver: solver.with_tol(1e-4).with_max_iter(1000),
                snapshot_every: None,
            };
            let t = euler_flow(&s.source, &s.target, &flow).unwrap();
            cluster_purity(&t.final_points, &s.source_cluster, &s.target_centers)
        };
        let unbalanced = run(SolverConfig::unbalanced(0.5, 4.0));
        let balanced = run(SolverConfig::balanced(0.5));
        gaps.push(unbalanced - balanced);
        details.push(format!("{unbalanced:.3}/{balanced:.3}"));
    }
    let med = median(gaps);
    outcome(
        med >= 0.1,
        format!("median purity gap {med:.3} (needs >= 0.1); unbalanced/balanced per seed: {}", details.join(" ")),
    )
}

// 10. JUMBOT on label-shift and partial-DA blobs.
fn jumbot_transfer() -> Outcome {
    let solver_tol = |s: SolverConfig| s.with_tol(1e-4).with_max_iter(300);
    let run = |params: &BlobParams, seed: u64, solver: SolverConfig| {
        let (src, tgt) = shifted_blobs(params, seed).unwrap();
        let mut cfg = JumbotConfig::new(solver_tol(solver), 60, 500, seed);
        cfg.eta1 = 1.0;
        cfg.eta2 = 1.0;
        let r = train(&src, &tgt, &cfg).unwrap();
        let last = r.last().unwrap().clone();
        (last.tgt_acc, last.cross_label_mass)
    };
    let shift = BlobParams::default();
    let partial = BlobParams {
        target_proportions: vec![0.5, 0.5, 0.0],
        ..BlobParams::default()
    };
    let (mut acc_gap, mut clm_u, mut clm_b, mut partial_gap) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let (au, cu) = run(&shift, seed, SolverConfig::unbalanced(0.1, 1.0));
        let (ab, cb) = run(&shift, seed, SolverConfig::balanced(0.1));
        acc_gap.push(au - ab);
        clm_u.push(cu);
        clm_b.push(cb);
        let (pu, _) = run(&partial, seed, SolverConfig::unbalanced(0.1, 1.0));
        let (pb, _) = run(&partial, seed, SolverConfig::balanced(0.1));
        partial_gap.push(pu - pb);
    }
    let (g, mu, mb, pg) = (median(acc_gap), median(clm_u), median(clm_b), median(partial_gap));
    outcome(
        g >= 0.0 && mu < mb && pg >= 0.05,
        format!(
            "label shift: median accuracy gap {g:+.3} (needs >= 0), median cross-label mass {mu:.3} vs {mb:.3} (needs lower); partial DA: median accuracy gap {pg:+.3} (needs >= 0.05)"
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "oracle equivalence", oracle_equivalence, Some(Duration::from_secs(60))),
        (2, "closed-form 1x1", closed_forms, None),
        (3, "exact limit", exact_limit, None),
        (4, "Sinkhorn divergence axioms", divergence_axioms, None),
        (5, "outlier robustness", outlier_robustness, Some(Duration::from_secs(120))),
        (6, "minibatch correctness", minibatch_correctness, None),
        (7, "concentration coverage", concentration_coverage, Some(Duration::from_secs(300))),
        (8, "gradient checks", gradient_checks, None),
        (9, "gradient flow", gradient_flow, Some(Duration::from_secs(600))),
        (10, "JUMBOT transfer", jumbot_transfer, Some(Duration::from_secs(600))),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run, limit) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if let Some(limit) = limit {
            if elapsed > limit {
                pass = false;
                detail.push_str(&format!("; runtime exceeded {}s", limit.as_secs()));
            }
        }
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{name}]: {} in {:.1}s; {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
