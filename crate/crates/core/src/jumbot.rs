//! Joint feature/label minibatch UOT (JUMBOT) on a tiny classifier.
//!
//! The model embeds inputs with two `tanh` layers and classifies the
//! embedding with an affine head. A training step minimizes
//! `CE(source) + η3 · UOT(u, u, C)` where
//! `C_ij = η1 ||e_i^s − e_j^t||² + η2 CE(y_i^s, softmax(logits_j^t))`;
//! the plan is treated as a constant when differentiating.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::measures::{CostMatrix, Measure, PointCloud};
use crate::minibatch::{cross_label_mass, IndexTuple, MinibatchScheme, SchemeKind};
use crate::rng::{derive_seed, CounterRng};
use crate::solvers::{primal_energy, sinkhorn_uot, SolverConfig, TransportPlan};

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: PointCloud,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(points: PointCloud, labels: Vec<usize>, classes: usize) -> Result<Self> {
        ensure(points.len() == labels.len(), || {
            format!("{} points but {} labels", points.len(), labels.len())
        })?;
        ensure(labels.iter().all(|&l| l < classes), || format!("labels must lie in 0..{classes}"))?;
        Ok(Self {
            points,
            labels,
            classes,
        })
    }

    pub fn points(&self) -> &PointCloud {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            points: self.points.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn onehot(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.classes));
        for (i, &l) in self.labels.iter().enumerate() {
            out[[i, l]] = 1.0;
        }
        out
    }
}

/// Affine layer `x ↦ x W + b` with `W` stored input × output.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init(inputs: usize, outputs: usize, rng: &mut CounterRng) -> Self {
        let scale = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            weights: Array2::from_shape_fn((inputs, outputs), |_| (2.0 * rng.uniform() - 1.0) * scale),
            bias: Array1::zeros(outputs),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            weights: Array2::zeros(self.weights.dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub input: Array2<f64>,
    pub hidden: Array2<f64>,
    pub embedding: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Two `tanh` layers to an embedding, then an affine head to logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyClassifier {
    pub layers: Vec<Dense>,
}

/// Parameter gradients, laid out like [`TinyClassifier::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DenseRecord {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelRecord {
    layers: Vec<DenseRecord>,
}

impl TinyClassifier {
    pub fn new(input_dim: usize, hidden: usize, embed: usize, classes: usize, seed: u64) -> Self {
        let mut rng = CounterRng::new(seed, 0);
        Self {
            layers: vec![
                Dense::init(input_dim, hidden, &mut rng),
                Dense::init(hidden, embed, &mut rng),
                Dense::init(embed, classes, &mut rng),
            ],
        }
    }

    pub fn classes(&self) -> usize {
        self.layers[2].bias.len()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Forward {
        let hidden = self.layers[0].apply(x).mapv(f64::tanh);
        let embedding = self.layers[1].apply(hidden.view()).mapv(f64::tanh);
        let logits = self.layers[2].apply(embedding.view());
        Forward {
            input: x.to_owned(),
            hidden,
            embedding,
            logits,
        }
    }

    /// Backpropagates upstream gradients on the embedding and the logits.
    pub fn backward(&self, fw: &Forward, d_embedding: ArrayView2<'_, f64>, d_logits: ArrayView2<'_, f64>) -> ModelGrads {
        let head = Dense {
            weights: fw.embedding.t().dot(&d_logits),
            bias: d_logits.sum_axis(Axis(0)),
        };
        let d_emb = &d_embedding + &d_logits.dot(&self.layers[2].weights.t());
        let d_z2 = d_emb * fw.embedding.mapv(|e| 1.0 - e * e);
        let second = Dense {
            weights: fw.hidden.t().dot(&d_z2),
            bias: d_z2.sum_axis(Axis(0)),
        };
        let d_hidden = d_z2.dot(&self.layers[1].weights.t());
        let d_z1 = d_hidden * fw.hidden.mapv(|h| 1.0 - h * h);
        let first = Dense {
            weights: fw.input.t().dot(&d_z1),
            bias: d_z1.sum_axis(Axis(0)),
        };
        ModelGrads {
            layers: vec![first, second, head],
        }
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
        }
    }

    /// Plain SGD step.
    pub fn apply_step(&mut self, grads: &ModelGrads, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.weights.scaled_add(-lr, &g.weights);
            l.bias.scaled_add(-lr, &g.bias);
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        let logits = self.forward(x).logits;
        logits.rows().into_iter().map(argmax).collect()
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> f64 {
        if data.is_empty() {
            return f64::NAN;
        }
        let pred = self.predict(data.points().as_array());
        let hits = pred.iter().zip(data.labels()).filter(|(p, l)| p == l).count();
        hits as f64 / data.len() as f64
    }

    /// All parameters, layer by layer, weights (row-major) then bias.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum();
        ensure(values.len() == total, || format!("expected {total} parameters, got {}", values.len()))?;
        let mut it = values.iter();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let record = ModelRecord {
            layers: self
                .layers
                .iter()
                .map(|l| DenseRecord {
                    inputs: l.weights.nrows(),
                    outputs: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: ModelRecord = serde_json::from_str(text)?;
        ensure(record.layers.len() == 3, || "model needs exactly three layers".into())?;
        let layers = record
            .layers
            .into_iter()
            .map(|r| {
                let weights = Array2::from_shape_vec((r.inputs, r.outputs), r.weights)
                    .map_err(|e| Error::Contract(format!("bad layer shape: {e}")))?;
                ensure(r.bias.len() == r.outputs, || "bias length differs from layer width".into())?;
                Ok(Dense {
                    weights,
                    bias: Array1::from(r.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }
}

impl ModelGrads {
    pub fn add_scaled(&mut self, other: &ModelGrads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        TinyClassifier {
            layers: self.layers.clone(),
        }
        .parameters()
    }
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

pub fn softmax(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let top = row.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        row.mapv_inplace(|v| (v - top).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

/// `C_ij = η1 ||e_i^s − e_j^t||² + η2 Σ_k −y_ik log max(p_jk, 1e-12)`.
pub fn joint_cost(
    src_emb: ArrayView2<'_, f64>,
    src_labels_onehot: ArrayView2<'_, f64>,
    tgt_logits: ArrayView2<'_, f64>,
    tgt_emb: ArrayView2<'_, f64>,
    eta1: f64,
    eta2: f64,
) -> Result<CostMatrix> {
    ensure(src_emb.ncols() == tgt_emb.ncols(), || {
        format!("embedding dims differ: {} vs {}", src_emb.ncols(), tgt_emb.ncols())
    })?;
    ensure(src_emb.nrows() == src_labels_onehot.nrows(), || "one source label row per embedding".into())?;
    ensure(tgt_emb.nrows() == tgt_logits.nrows(), || "one target logit row per embedding".into())?;
    ensure(src_labels_onehot.ncols() == tgt_logits.ncols(), || "label and logit widths differ".into())?;
    let neg_log_p = softmax(tgt_logits).mapv(|p| -p.max(PROB_FLOOR).ln());
    let label_term = src_labels_onehot.dot(&neg_log_p.t());
    let entries = Array2::from_shape_fn((src_emb.nrows(), tgt_emb.nrows()), |(i, j)| {
        let d: f64 = src_emb.row(i).iter().zip(tgt_emb.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        eta1 * d + eta2 * label_term[[i, j]]
    });
    CostMatrix::custom(entries)
}

/// d CE(y, softmax(z)) / dz for soft labels `y`, honouring the clamp.
fn cross_entropy_grad(probs: ArrayView1<'_, f64>, labels: ArrayView1<'_, f64>) -> Array1<f64> {
    // d(−log p_k)/dz = softmax − e_k while p_k is above the floor, 0 below
    let mut out = Array1::zeros(probs.len());
    for (k, &y) in labels.iter().enumerate() {
        if y == 0.0 || probs[k] < PROB_FLOOR {
            continue;
        }
        out.scaled_add(y, &probs);
        out[k] -= y;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumbotConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub solver: SolverConfig,
    /// Batch size `m`, number of pairs per step `k` and sampling seed.
    pub scheme: MinibatchScheme,
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub iterations: usize,
    /// Model initialization seed.
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_embed")]
    pub embed: usize,
    /// Source-only steps before the transfer term is switched on.
    #[serde(default)]
    pub warmup_iterations: usize,
}

fn default_lr() -> f64 {
    0.05
}

fn default_hidden() -> usize {
    32
}

fn default_embed() -> usize {
    8
}

impl JumbotConfig {
    pub fn new(solver: SolverConfig, m: usize, iterations: usize, seed: u64) -> Self {
        Self {
            eta1: 0.1,
            eta2: 0.1,
            eta3: 1.0,
            solver,
            scheme: MinibatchScheme::incomplete(m, 1, seed),
            lr: default_lr(),
            iterations,
            seed,
            hidden: default_hidden(),
            embed: default_embed(),
            warmup_iterations: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.eta1 >= 0.0 && self.eta2 >= 0.0 && self.eta3 >= 0.0, || "eta weights must be >= 0".into())?;
        ensure(self.eta1 + self.eta2 > 0.0, || "eta1 + eta2 must be > 0".into())?;
        ensure(self.lr > 0.0 && self.lr.is_finite(), || format!("lr must be > 0, got {}", self.lr))?;
        ensure(self.scheme.kind == SchemeKind::Incomplete && self.scheme.k >= 1 && self.scheme.m >= 1, || {
            "jumbot needs an incomplete scheme with m, k >= 1".into()
        })?;
        ensure(self.solver.epsilon > 0.0, || "jumbot needs epsilon > 0".into())?;
        self.solver.validate()
    }
}

/// Objective and parameter gradient of one source/target minibatch pair.
#[derive(Debug, Clone)]
pub struct JumbotEval {
    pub objective: f64,
    pub source_ce: f64,
    pub transfer: f64,
    pub plan: TransportPlan,
    pub converged: bool,
    pub grads: ModelGrads,
}

struct Parts {
    src: Forward,
    tgt: Forward,
    onehot: Array2<f64>,
    source_ce: f64,
    cost: CostMatrix,
    a: Measure,
    b: Measure,
}

fn forward_parts(model: &TinyClassifier, src: &LabeledDataset, tgt: &PointCloud, cfg: &JumbotConfig) -> Result<Parts> {
    ensure(src.classes() == model.classes(), || "model and data class counts differ".into())?;
    let sf = model.forward(src.points().as_array());
    let tf = model.forward(tgt.as_array());
    let onehot = src.onehot();
    let probs = softmax(sf.logits.view());
    let source_ce = src
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs[[i, l]].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / src.len() as f64;
    let cost = joint_cost(sf.embedding.view(), onehot.view(), tf.logits.view(), tf.embedding.view(), cfg.eta1, cfg.eta2)?;
    Ok(Parts {
        src: sf,
        tgt: tf,
        onehot,
        source_ce,
        cost,
        a: Measure::uniform(src.len(), 1.0)?,
        b: Measure::uniform(tgt.len(), 1.0)?,
    })
}

/// Objective with the transport plan held fixed:
/// `CE(source) + η3 (⟨C(θ), π⟩ + entropic and marginal terms of π)`.
pub fn fixed_plan_objective(
    model: &TinyClassifier,
    src: &LabeledDataset,
    tgt: &PointCloud,
    plan: &TransportPlan,
    cfg: &JumbotConfig,
) -> Result<f64> {
    let p = forward_parts(model, src, tgt, cfg)?;
    let transfer = primal_energy(&p.a, &p.b, &p.cost, plan, cfg.solver.epsilon, &cfg.solver.marginals, cfg.solver.divergence)?;
    Ok(p.source_ce + cfg.eta3 * transfer)
}

/// Objective value and the inner plan for one minibatch pair.
pub fn jumbot_loss(
    model: &TinyClassifier,
    src: &LabeledDataset,
    tgt: &PointCloud,
    cfg: &JumbotConfig,
) -> Result<(f64, TransportPlan)> {
    let e = jumbot_eval(model, src, tgt, cfg)?;
    Ok((e.objective, e.plan))
}

/// Solves the inner plan and backpropagates with the plan held fixed.
pub fn jumbot_eval(model: &TinyClassifier, src: &LabeledDataset, tgt: &PointCloud, cfg: &JumbotConfig) -> Result<JumbotEval> {
    let p = forward_parts(model, src, tgt, cfg)?;
    let sol = sinkhorn_uot(&p.a, &p.b, &p.cost, &cfg.solver)?;
    let grads = fixed_plan_grads(model, &p, sol.plan.entries(), src.len(), cfg);
    Ok(JumbotEval {
        objective: p.source_ce + cfg.eta3 * sol.cost,
        source_ce: p.source_ce,
        transfer: sol.cost,
        plan: sol.plan,
        converged: sol.converged,
        grads,
    })
}

fn fixed_plan_grads(model: &TinyClassifier, p: &Parts, plan: ArrayView2<'_, f64>, n_src: usize, cfg: &JumbotConfig) -> ModelGrads {
    // ∂/∂C_ij = η3 π_ij
    let w = plan.mapv(|v| cfg.eta3 * v);
    let (es, et) = (&p.src.embedding, &p.tgt.embedding);
    let rows = w.sum_axis(Axis(1));
    let cols = w.sum_axis(Axis(0));
    let mut d_es = w.dot(et);
    for (i, mut r) in d_es.rows_mut().into_iter().enumerate() {
        r.zip_mut_with(&es.row(i), |o, &e| *o = 2.0 * cfg.eta1 * (rows[i] * e - *o));
    }
    let mut d_et = w.t().dot(es);
    for (j, mut r) in d_et.rows_mut().into_iter().enumerate() {
        r.zip_mut_with(&et.row(j), |o, &e| *o = 2.0 * cfg.eta1 * (cols[j] * e - *o));
    }

    let tgt_probs = softmax(p.tgt.logits.view());
    // soft label seen by target j: Σ_i w_ij y_i
    let pulled = w.t().dot(&p.onehot);
    let mut d_lt = Array2::zeros(p.tgt.logits.dim());
    for j in 0..d_lt.nrows() {
        let g = cross_entropy_grad(tgt_probs.row(j), pulled.row(j));
        d_lt.row_mut(j).assign(&(g * cfg.eta2));
    }

    let src_probs = softmax(p.src.logits.view());
    let mut d_ls = Array2::zeros(p.src.logits.dim());
    for i in 0..n_src {
        let g = cross_entropy_grad(src_probs.row(i), p.onehot.row(i));
        d_ls.row_mut(i).assign(&(g / n_src as f64));
    }

    let mut grads = model.backward(&p.src, d_es.view(), d_ls.view());
    grads.add_scaled(&model.backward(&p.tgt, d_et.view(), d_lt.view()), 1.0);
    grads
}

/// Class-balanced batches: each batch holds `per_class` distinct indices of
/// every class, in class order. Batch `b` depends only on `(seed, b)`.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    by_class: Vec<Vec<usize>>,
    per_class: usize,
    seed: u64,
    counter: u64,
}

impl StratifiedSampler {
    pub fn new(labels: &[usize], classes: usize, per_class: usize, seed: u64) -> Result<Self> {
        ensure(per_class >= 1, || "per_class must be >= 1".into())?;
        let mut by_class = vec![Vec::new(); classes];
        for (i, &l) in labels.iter().enumerate() {
            ensure(l < classes, || format!("label {l} outside 0..{classes}"))?;
            by_class[l].push(i);
        }
        let small: Vec<String> = by_class
            .iter()
            .enumerate()
            .filter(|(_, ids)| ids.len() < per_class)
            .map(|(c, ids)| format!("class {c} ({} samples)", ids.len()))
            .collect();
        if !small.is_empty() {
            return Err(Error::Contract(format!(
                "stratified sampling needs {per_class} samples per class; too small: {}",
                small.join(", ")
            )));
        }
        Ok(Self {
            by_class,
            per_class,
            seed,
            counter: 0,
        })
    }

    pub fn batch(&self, b: u64) -> IndexTuple {
        let mut rng = CounterRng::new(self.seed, b);
        let mut out = Vec::with_capacity(self.per_class * self.by_class.len());
        for ids in &self.by_class {
            out.extend(rng.sample_prefix(ids.len(), self.per_class).into_iter().map(|k| ids[k]));
        }
        IndexTuple(out)
    }
}

impl Iterator for StratifiedSampler {
    type Item = IndexTuple;

    fn next(&mut self) -> Option<IndexTuple> {
        let b = self.batch(self.counter);
        self.counter += 1;
        Some(b)
    }
}

/// Stratified sampler over classes `0..=max(labels)`.
pub fn stratified_sampler(labels: &[usize], per_class: usize, seed: u64) -> Result<StratifiedSampler> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    StratifiedSampler::new(labels, classes, per_class, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub src_acc: f64,
    pub tgt_acc: f64,
    /// Mean UOT value of the epoch's minibatch pairs.
    pub transfer_term: f64,
    /// Share of the epoch's total plan mass linking different true labels.
    pub cross_label_mass: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub epochs: Vec<EpochReport>,
    pub model: TinyClassifier,
    /// Steps in which the inner solve hit its iteration budget.
    pub unconverged_solves: usize,
}

impl TrainingReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "src_acc", "tgt_acc", "transfer_term", "cross_label_mass"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                format!("{:e}", e.src_acc),
                format!("{:e}", e.tgt_acc),
                format!("{:e}", e.transfer_term),
                format!("{:e}", e.cross_label_mass),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochReport> {
        self.epochs.last()
    }
}

/// Trains a fresh [`TinyClassifier`] on labelled source and unlabelled
/// target data. Target labels are used for reporting only.
pub fn train(src: &LabeledDataset, tgt: &LabeledDataset, cfg: &JumbotConfig) -> Result<TrainingReport> {
    cfg.validate()?;
    ensure(src.points().dim() == tgt.points().dim(), || "source and target dimensions differ".into())?;
    ensure(src.classes() == tgt.classes(), || "source and target class counts differ".into())?;
    let model = TinyClassifier::new(src.points().dim(), cfg.hidden, cfg.embed, src.classes(), cfg.seed);
    train_model(model, src, tgt, cfg)
}

/// Like [`train`] but starting from the given model.
pub fn train_model(
    mut model: TinyClassifier,
    src: &LabeledDataset,
    tgt: &LabeledDataset,
    cfg: &JumbotConfig,
) -> Result<TrainingReport> {
    cfg.validate()?;
    let (m, k) = (cfg.scheme.m, cfg.scheme.k);
    ensure(m * k <= tgt.len(), || format!("m·k = {} exceeds the target size {}", m * k, tgt.len()))?;
    let classes = src.classes();
    let per_class = (m / classes).max(1);
    let mut sampler = StratifiedSampler::new(src.labels(), classes, per_class, derive_seed(cfg.scheme.seed, 1))?;
    let target_seed = derive_seed(cfg.scheme.seed, 2);

    for _ in 0..cfg.warmup_iterations {
        let batch = src.select(sampler.next().expect("infinite").as_slice());
        let fw = model.forward(batch.points().as_array());
        let probs = softmax(fw.logits.view());
        let onehot = batch.onehot();
        let mut d_logits = Array2::zeros(fw.logits.dim());
        for i in 0..batch.len() {
            let g = cross_entropy_grad(probs.row(i), onehot.row(i));
            d_logits.row_mut(i).assign(&(g / batch.len() as f64));
        }
        let d_emb = Array2::zeros(fw.embedding.dim());
        let grads = model.backward(&fw, d_emb.view(), d_logits.view());
        model.apply_step(&grads, cfg.lr);
    }

    let steps_per_epoch = (tgt.len() / (m * k)).max(1);
    let mut epochs = Vec::new();
    let mut unconverged_solves = 0;
    let mut step = 0;
    let mut epoch = 0;
    while step < cfg.iterations {
        let mut order: Vec<usize> = (0..tgt.len()).collect();
        CounterRng::new(target_seed, epoch as u64).shuffle(&mut order);
        let (mut transfer_sum, mut pairs) = (0.0, 0usize);
        let (mut crossed, mut mass) = (0.0, 0.0);
        let mut s = 0;
        while s < steps_per_epoch && step < cfg.iterations {
            let mut total = model.zero_grads();
            for q in 0..k {
                let chunk = (s * k + q) * m;
                let t_idx = &order[chunk..chunk + m];
                let tb = tgt.select(t_idx);
                let sb = src.select(sampler.next().expect("infinite").as_slice());
                let e = jumbot_eval(&model, &sb, tb.points(), cfg)?;
                if !e.objective.is_finite() {
                    return Err(Error::Numerical(format!(
                        "objective became {} at epoch {epoch}, step {step} (source CE {}, transfer {})",
                        e.objective, e.source_ce, e.transfer
                    )));
                }
                if !e.converged {
                    unconverged_solves += 1;
                }
                let plan_mass = e.plan.mass();
                crossed += cross_label_mass(e.plan.entries(), sb.labels(), tb.labels())? * plan_mass;
                mass += plan_mass;
                transfer_sum += e.transfer;
                pairs += 1;
                total.add_scaled(&e.grads, 1.0 / k as f64);
            }
            model.apply_step(&total, cfg.lr);
            s += 1;
            step += 1;
        }
        epochs.push(EpochReport {
            epoch,
            src_acc: model.accuracy(src),
            tgt_acc: model.accuracy(tgt),
            transfer_term: transfer_sum / pairs as f64,
            cross_label_mass: if mass > 0.0 { crossed / mass } else { 0.0 },
        });
        epoch += 1;
    }
    Ok(TrainingReport {
        epochs,
        model,
        unconverged_solves,
    })
}
