//! Seeded synthetic scenarios.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::jumbot::LabeledDataset;
use crate::measures::PointCloud;
use crate::rng::CounterRng;

fn gaussian_rows(rng: &mut CounterRng, center: &[f64], std: f64, n: usize, out: &mut Vec<Vec<f64>>) {
    let normal = Normal::new(0.0, std).expect("std is finite and >= 0");
    for _ in 0..n {
        out.push(center.iter().map(|c| c + normal.sample(rng)).collect());
    }
}

fn cloud(rows: Vec<Vec<f64>>) -> Result<PointCloud> {
    PointCloud::from_rows(&rows)
}

/// Imbalanced two-cluster flow problem: a source pair of clusters above a
/// target pair, with opposite left/right proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoClusterParams {
    pub n_source: usize,
    pub n_target: usize,
    /// Share of the source in its left cluster; the target mirrors it.
    pub heavy_fraction: f64,
    pub half_width: f64,
    pub half_height: f64,
    pub std: f64,
}

impl Default for TwoClusterParams {
    fn default() -> Self {
        Self {
            n_source: 600,
            n_target: 600,
            heavy_fraction: 0.64,
            half_width: 2.0,
            half_height: 1.0,
            std: 0.25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowScenario {
    pub source: PointCloud,
    /// 0 = left, 1 = right.
    pub source_cluster: Vec<usize>,
    pub target: PointCloud,
    pub target_cluster: Vec<usize>,
    /// Target cluster centers; source cluster `c` is meant to land on `c`.
    pub target_centers: [[f64; 2]; 2],
}

pub fn two_cluster_flow(p: &TwoClusterParams, seed: u64) -> Result<FlowScenario> {
    ensure(p.heavy_fraction > 0.0 && p.heavy_fraction < 1.0, || "heavy_fraction must lie in (0,1)".into())?;
    ensure(p.n_source >= 2 && p.n_target >= 2, || "each side needs at least two points".into())?;
    let mut rng = CounterRng::new(seed, 0);
    let (w, h) = (p.half_width, p.half_height);
    let src_left = ((p.n_source as f64) * p.heavy_fraction).round() as usize;
    let tgt_left = ((p.n_target as f64) * (1.0 - p.heavy_fraction)).round() as usize;
    let mut rows = Vec::new();
    gaussian_rows(&mut rng, &[-w, h], p.std, src_left, &mut rows);
    gaussian_rows(&mut rng, &[w, h], p.std, p.n_source - src_left, &mut rows);
    let source = cloud(rows)?;
    let mut rows = Vec::new();
    gaussian_rows(&mut rng, &[-w, -h], p.std, tgt_left, &mut rows);
    gaussian_rows(&mut rng, &[w, -h], p.std, p.n_target - tgt_left, &mut rows);
    let target = cloud(rows)?;
    let labels = |n: usize, left: usize| (0..n).map(|i| usize::from(i >= left)).collect::<Vec<_>>();
    Ok(FlowScenario {
        source,
        source_cluster: labels(p.n_source, src_left),
        target,
        target_cluster: labels(p.n_target, tgt_left),
        target_centers: [[-w, -h], [w, -h]],
    })
}

/// Fraction of points whose nearest target center is the one their
/// cluster was meant to reach.
pub fn cluster_purity(points: &PointCloud, origin: &[usize], centers: &[[f64; 2]]) -> f64 {
    let hits = (0..points.len())
        .filter(|&i| {
            let p = points.point(i);
            let nearest = centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, (p[0] - ctr[0]).powi(2) + (p[1] - ctr[1]).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .expect("at least one center");
            nearest == origin[i]
        })
        .count();
    hits as f64 / points.len() as f64
}

/// Gaussian classes placed on a circle; the target is translated and has
/// its own class proportions (a zero proportion drops the class).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobParams {
    pub n_source: usize,
    pub n_target: usize,
    pub source_proportions: Vec<f64>,
    pub target_proportions: Vec<f64>,
    pub radius: f64,
    pub std: f64,
    pub shift: [f64; 2],
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            n_source: 2000,
            n_target: 2000,
            source_proportions: vec![1.0 / 3.0; 3],
            target_proportions: vec![0.6, 0.3, 0.1],
            radius: 2.0,
            std: 0.5,
            shift: [1.0, 0.5],
        }
    }
}

fn class_sizes(n: usize, proportions: &[f64]) -> Vec<usize> {
    let total: f64 = proportions.iter().sum();
    let mut sizes: Vec<usize> = proportions.iter().map(|p| ((n as f64) * p / total).floor() as usize).collect();
    // hand the rounding remainder to the largest classes first
    let mut order: Vec<usize> = (0..sizes.len()).filter(|&c| proportions[c] > 0.0).collect();
    order.sort_by(|&a, &b| proportions[b].total_cmp(&proportions[a]));
    let left = n - sizes.iter().sum::<usize>();
    for &c in order.iter().cycle().take(left) {
        sizes[c] += 1;
    }
    sizes
}

fn blob_domain(rng: &mut CounterRng, n: usize, proportions: &[f64], p: &BlobParams, shift: [f64; 2]) -> Result<LabeledDataset> {
    let k = proportions.len();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, size) in class_sizes(n, proportions).into_iter().enumerate() {
        let angle = std::f64::consts::TAU * c as f64 / k as f64;
        let center = [p.radius * angle.cos() + shift[0], p.radius * angle.sin() + shift[1]];
        gaussian_rows(rng, &center, p.std, size, &mut rows);
        labels.extend(std::iter::repeat_n(c, size));
    }
    LabeledDataset::new(cloud(rows)?, labels, k)
}

/// Returns `(source, target)`.
pub fn shifted_blobs(p: &BlobParams, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    ensure(p.source_proportions.len() == p.target_proportions.len(), || "proportion vectors differ in length".into())?;
    ensure(p.source_proportions.iter().all(|&v| v > 0.0), || "every source class needs positive weight".into())?;
    ensure(p.target_proportions.iter().all(|&v| v >= 0.0) && p.target_proportions.iter().any(|&v| v > 0.0), || {
        "target proportions must be >= 0 and not all zero".into()
    })?;
    let mut rng = CounterRng::new(seed, 0);
    let src = blob_domain(&mut rng, p.n_source, &p.source_proportions, p, [0.0, 0.0])?;
    let tgt = blob_domain(&mut rng, p.n_target, &p.target_proportions, p, p.shift)?;
    Ok((src, tgt))
}

/// Two half-rings (upper = class 0, lower = class 1); the target ring is
/// rotated by `angle` radians.
pub fn rotated_ring(n_source: usize, n_target: usize, angle: f64, noise: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut rng = CounterRng::new(seed, 0);
    let normal = Normal::new(0.0, noise).map_err(|e| crate::Error::Contract(e.to_string()))?;
    let mut domain = |n: usize, rot: f64| {
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let t = std::f64::consts::PI * (rng.uniform() + class as f64);
            let r = 2.0 + normal.sample(&mut rng);
            let (x, y) = (r * t.cos(), r * t.sin());
            rows.push(vec![x * rot.cos() - y * rot.sin(), x * rot.sin() + y * rot.cos()]);
            labels.push(class);
        }
        LabeledDataset::new(cloud(rows)?, labels, 2)
    };
    let src = domain(n_source, 0.0)?;
    let tgt = domain(n_target, angle)?;
    Ok((src, tgt))
}

/// Ten-point plan scenario: two source clusters of 5/5 points above two
/// target clusters of 3/7 points. Labels are cluster ids (0 left, 1 right).
pub fn ten_point_clusters(seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut rng = CounterRng::new(seed, 0);
    let mut domain = |sizes: [usize; 2], height: f64| {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in sizes.iter().enumerate() {
            let cx = if c == 0 { -2.0 } else { 2.0 };
            gaussian_rows(&mut rng, &[cx, height], 0.3, n, &mut rows);
            labels.extend(std::iter::repeat_n(c, n));
        }
        LabeledDataset::new(cloud(rows)?, labels, 2)
    };
    let src = domain([5, 5], 1.0)?;
    let tgt = domain([3, 7], -1.0)?;
    Ok((src, tgt))
}

/// Base cloud for the outlier experiment: `n` points from a standard
/// Gaussian blob in the plane.
pub fn outlier_base(n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = CounterRng::new(seed, 0);
    let mut rows = Vec::new();
    gaussian_rows(&mut rng, &[0.0, 0.0], 1.0, n, &mut rows);
    cloud(rows)
}

/// Position `distance` to the right of the cloud's rightmost point, at the
/// cloud's mean height.
pub fn outlier_position(base: &PointCloud, distance: f64) -> [f64; 2] {
    let arr = base.as_array();
    let right = arr.column(0).fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let mid = arr.column(1).mean().unwrap_or(0.0);
    [right + distance, mid]
}

/// `base` with one extra point at `at`.
pub fn with_outlier(base: &PointCloud, at: [f64; 2]) -> Result<PointCloud> {
    base.concat(&PointCloud::new(Array2::from_shape_vec((1, 2), at.to_vec()).expect("1x2"))?)
}
