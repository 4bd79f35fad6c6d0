use itertools::Itertools;
use ndarray::Array2;
use proptest::prelude::*;

use ubot_core::gradients::{batch_gradient, euler_flow, grad_positions, FlowConfig, Wrt};
use ubot_core::measures::{Measure, PointCloud};
use ubot_core::minibatch::{draw_pair, LossKind, MinibatchProblem, MinibatchScheme};
use ubot_core::rng::CounterRng;
use ubot_core::solvers::{sinkhorn_divergence, SolverConfig};

fn random_cloud(rng: &mut CounterRng, n: usize, shift: f64) -> PointCloud {
    PointCloud::new(Array2::from_shape_fn((n, 2), |(_, d)| rng.uniform() + if d == 0 { shift } else { 0.0 })).unwrap()
}

fn full_batch_flow(n: usize, step_size: f64, iterations: usize, solver: SolverConfig) -> FlowConfig {
    FlowConfig {
        step_size,
        iterations,
        scheme: MinibatchScheme::incomplete(n, 1, 0),
        loss: LossKind::SinkhornDivergence,
        solver,
        snapshot_every: None,
    }
}

fn divergence(x: &PointCloud, y: &PointCloud, solver: &SolverConfig) -> f64 {
    let a = Measure::uniform(x.len(), 1.0).unwrap();
    let b = Measure::uniform(y.len(), 1.0).unwrap();
    sinkhorn_divergence(&a, &b, x, y, solver).unwrap().value
}

#[test]
fn sampled_gradients_average_to_the_enumerated_gradient() {
    let mut rng = CounterRng::new(61, 0);
    let (x, y) = (random_cloud(&mut rng, 6, 0.0), random_cloud(&mut rng, 6, 0.5));
    let problem = MinibatchProblem::new(&x, &y, LossKind::Uot, SolverConfig::unbalanced(0.1, 1.0)).unwrap();

    let mut exact = Array2::<f64>::zeros((6, 2));
    let mut count = 0.0;
    for i in (0..6).combinations(2) {
        for j in (0..6).combinations(2) {
            exact += &batch_gradient(&problem, &i, &j, Wrt::X).unwrap().values;
            count += 1.0;
        }
    }
    exact /= count;

    let draws = 10_000;
    let mut sum = Array2::<f64>::zeros((6, 2));
    let mut sum_sq = Array2::<f64>::zeros((6, 2));
    for d in 0..draws {
        let (i, j) = draw_pair(6, 6, 2, 62, d);
        let g = batch_gradient(&problem, i.as_slice(), j.as_slice(), Wrt::X).unwrap().values;
        sum_sq += &g.mapv(|v| v * v);
        sum += &g;
    }
    let k = draws as f64;
    for ((p, c), &target) in exact.indexed_iter() {
        let mean = sum[[p, c]] / k;
        let var = (sum_sq[[p, c]] / k - mean * mean) * k / (k - 1.0);
        let se = (var / k).sqrt();
        // twelve coordinates at once: 4 standard errors keeps the family-wise level below 0.1%
        assert!((mean - target).abs() <= 4.0 * se, "point {p} coord {c}: {mean} vs {target}, se {se}");
    }
}

#[test]
fn halving_the_step_converges_to_a_common_limit() {
    let mut rng = CounterRng::new(71, 0);
    let (x0, y) = (random_cloud(&mut rng, 8, 0.0), random_cloud(&mut rng, 8, 1.5));
    let solver = SolverConfig::unbalanced(0.5, 1.0).with_tol(1e-11).with_max_iter(100_000);
    let horizon = 0.4;
    let finals: Vec<f64> = [20usize, 40, 80]
        .iter()
        .map(|&iters| {
            let flow = full_batch_flow(8, horizon / iters as f64, iters, solver);
            divergence(&euler_flow(&x0, &y, &flow).unwrap().final_points, &y, &solver)
        })
        .collect();
    let coarse = (finals[0] - finals[1]).abs();
    let fine = (finals[1] - finals[2]).abs();
    assert!(fine < 0.7 * coarse, "differences {coarse} then {fine}, values {finals:?}");
    assert!(fine < 0.05 * finals[2].abs().max(1e-3), "values {finals:?}");
}

#[test]
fn full_batch_flow_decreases_the_loss() {
    let solver = SolverConfig::unbalanced(0.5, 1.0).with_tol(1e-11).with_max_iter(100_000);
    let mut steps = 0;
    let mut decreasing = 0;
    for seed in 0..4 {
        let mut rng = CounterRng::new(81, seed);
        let (x0, y) = (random_cloud(&mut rng, 10, 0.0), random_cloud(&mut rng, 10, 1.0));
        let traj = euler_flow(&x0, &y, &full_batch_flow(10, 0.01, 60, solver)).unwrap();
        for w in traj.losses.windows(2) {
            steps += 1;
            if w[1].1 <= w[0].1 + 1e-9 {
                decreasing += 1;
            }
        }
    }
    let share = decreasing as f64 / steps as f64;
    assert!(share >= 0.95, "{decreasing}/{steps} steps decreased the loss");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn divergence_gradient_vanishes_on_the_diagonal(
        coords in (2usize..=8).prop_flat_map(|n| prop::collection::vec(-2.0..2.0f64, 2 * n)),
        eps in 0.05..1.0f64,
        tau in 0.2..5.0f64,
    ) {
        let x = PointCloud::new(Array2::from_shape_vec((coords.len() / 2, 2), coords).unwrap()).unwrap();
        let cfg = SolverConfig::unbalanced(eps, tau).with_tol(1e-13).with_max_iter(1_000_000);
        let g = grad_positions(LossKind::SinkhornDivergence, &x, &x, Wrt::Y, &cfg).unwrap();
        prop_assert!(g.norm() <= 1e-6 * x.diameter(), "norm {} for diameter {}", g.norm(), x.diameter());
    }
}
