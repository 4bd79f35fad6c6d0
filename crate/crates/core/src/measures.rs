//! Discrete measures, point clouds, ground costs and Csiszàr divergences.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{contract, ensure, Error, Result};

/// `n` points in `R^d`, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>,
}

impl PointCloud {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        let (n, d) = points.dim();
        ensure(n >= 1, || "point cloud needs at least one point".into())?;
        ensure(d >= 1, || "point cloud needs dimension >= 1".into())?;
        ensure(points.iter().all(|v| v.is_finite()), || {
            "point cloud has non-finite coordinates".into()
        })?;
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return contract("point cloud needs at least one point");
        };
        let d = first.len();
        ensure(rows.iter().all(|r| r.len() == d), || {
            "point rows have inconsistent dimension".into()
        })?;
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::Contract(e.to_string()))?;
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn as_array(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn into_array(self) -> Array2<f64> {
        self.points
    }

    /// Sub-cloud made of the rows listed in `idx` (in that order).
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        PointCloud {
            points: self.points.select(Axis(0), idx),
        }
    }

    /// Largest pairwise Euclidean distance (0 for a single point).
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = squared_distance(self.point(i), self.point(j));
                best = best.max(d);
            }
        }
        best.sqrt()
    }

    /// Stacks two clouds of equal dimension.
    pub fn concat(&self, other: &PointCloud) -> Result<PointCloud> {
        ensure(self.dim() == other.dim(), || {
            format!("dimension mismatch: {} vs {}", self.dim(), other.dim())
        })?;
        let points = ndarray::concatenate(Axis(0), &[self.points.view(), other.points.view()])
            .map_err(|e| Error::Contract(e.to_string()))?;
        Ok(PointCloud { points })
    }
}

#[inline]
pub(crate) fn squared_distance(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Nonnegative weight vector with positive total mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: Array1<f64>,
    mass: f64,
}

impl Measure {
    pub fn new(weights: impl Into<Array1<f64>>) -> Result<Self> {
        let weights = weights.into();
        ensure(!weights.is_empty(), || "measure needs at least one weight".into())?;
        ensure(weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            "measure weights must be finite and nonnegative".into()
        })?;
        let mass = weights.sum();
        ensure(mass > 0.0, || "measure must have positive mass".into())?;
        Ok(Self { weights, mass })
    }

    /// `n` equal weights summing to `total_mass`.
    pub fn uniform(n: usize, total_mass: f64) -> Result<Self> {
        ensure(n >= 1, || "uniform measure needs n >= 1".into())?;
        ensure(total_mass > 0.0 && total_mass.is_finite(), || {
            format!("uniform measure needs positive finite mass, got {total_mass}")
        })?;
        Ok(Self {
            weights: Array1::from_elem(n, total_mass / n as f64),
            mass: total_mass,
        })
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Shorthand for [`Measure::uniform`].
pub fn uniform_measure(n: usize, total_mass: f64) -> Result<Measure> {
    Measure::uniform(n, total_mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    SquaredEuclidean,
    Custom,
}

/// Dense nonnegative ground-cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    kind: CostKind,
}

impl CostMatrix {
    /// `C[i][j] = ||x_i - y_j||²`.
    pub fn squared_euclidean(x: &PointCloud, y: &PointCloud) -> Result<Self> {
        ensure(x.dim() == y.dim(), || {
            format!("dimension mismatch: {} vs {}", x.dim(), y.dim())
        })?;
        let entries = Array2::from_shape_fn((x.len(), y.len()), |(i, j)| {
            squared_distance(x.point(i), y.point(j))
        });
        Ok(Self {
            entries,
            kind: CostKind::SquaredEuclidean,
        })
    }

    /// Wraps a user-supplied matrix.
    pub fn custom(entries: Array2<f64>) -> Result<Self> {
        ensure(entries.nrows() >= 1 && entries.ncols() >= 1, || {
            "cost matrix must be non-empty".into()
        })?;
        ensure(entries.iter().all(|c| c.is_finite() && *c >= 0.0), || {
            "cost entries must be finite and nonnegative".into()
        })?;
        Ok(Self {
            entries,
            kind: CostKind::Custom,
        })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.entries.mean().unwrap_or(0.0)
    }

    /// Sub-matrix on rows `rows` and columns `cols`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CostMatrix {
        let entries = self.entries.select(Axis(0), rows).select(Axis(1), cols);
        CostMatrix {
            entries,
            kind: self.kind,
        }
    }
}

/// Shorthand for [`CostMatrix::squared_euclidean`].
pub fn build_cost(x: &PointCloud, y: &PointCloud) -> Result<CostMatrix> {
    CostMatrix::squared_euclidean(x, y)
}

/// Entropy function φ of a Csiszàr divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DivergenceKind {
    Kl,
    Tv,
}

impl DivergenceKind {
    /// φ(t) for t ≥ 0. KL: t ln t − t + 1 (with 0 ln 0 = 0). TV: |t − 1|.
    pub fn phi(self, t: f64) -> f64 {
        match self {
            DivergenceKind::Kl => {
                if t == 0.0 {
                    1.0
                } else {
                    t * t.ln() - t + 1.0
                }
            }
            DivergenceKind::Tv => (t - 1.0).abs(),
        }
    }

    /// φ′∞ = lim φ(t)/t. Infinite for KL.
    pub fn recession(self) -> f64 {
        match self {
            DivergenceKind::Kl => f64::INFINITY,
            DivergenceKind::Tv => 1.0,
        }
    }
}

/// `D_φ(x | y) = Σ_{y_i≠0} y_i φ(x_i / y_i) + φ′∞ Σ_{y_i=0} x_i`.
///
/// KL returns `+∞` when some `y_i = 0 < x_i`.
pub fn csiszar_div(kind: DivergenceKind, x: &[f64], y: &[f64]) -> Result<f64> {
    ensure(x.len() == y.len(), || {
        format!("length mismatch: {} vs {}", x.len(), y.len())
    })?;
    ensure(x.iter().chain(y).all(|v| *v >= 0.0), || {
        "divergence arguments must be nonnegative".into()
    })?;
    let mut total = 0.0;
    let mut orphan = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        if yi == 0.0 {
            orphan += xi;
            continue;
        }
        total += match kind {
            // written out to avoid the x/y round trip
            DivergenceKind::Kl if xi > 0.0 => xi * (xi / yi).ln() - xi + yi,
            DivergenceKind::Kl => yi,
            DivergenceKind::Tv => (xi - yi).abs(),
        };
    }
    if orphan > 0.0 {
        total += kind.recession() * orphan;
    }
    Ok(total)
}

/// Point cloud with optional integer labels.
#[derive(Debug, Clone)]
pub struct LabeledCloud {
    pub points: PointCloud,
    pub labels: Option<Vec<usize>>,
}

/// Reads `x0,...,x{d-1}[,label]` rows with a mandatory header.
pub fn read_points_csv(path: impl AsRef<Path>) -> Result<LabeledCloud> {
    let file = std::fs::File::open(path)?;
    read_points(file)
}

pub fn read_points<R: std::io::Read>(reader: R) -> Result<LabeledCloud> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let label_col = headers.iter().position(|h| h.trim() == "label");
    let coord_cols: Vec<usize> = (0..headers.len()).filter(|&c| Some(c) != label_col).collect();
    for (k, &c) in coord_cols.iter().enumerate() {
        ensure(headers[c].trim() == format!("x{k}"), || {
            format!("expected column x{k}, found '{}'", &headers[c])
        })?;
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = coord_cols
            .iter()
            .map(|&c| {
                record[c]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Contract(format!("bad coordinate '{}': {e}", &record[c])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        if let Some(lc) = label_col {
            let label = record[lc]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Contract(format!("bad label '{}': {e}", &record[lc])))?;
            labels.push(label);
        }
    }
    Ok(LabeledCloud {
        points: PointCloud::from_rows(&rows)?,
        labels: label_col.map(|_| labels),
    })
}
