//! Experiment configuration: a JSON parameter block per experiment, plus the
//! seed, output directory and scale flag taken from the command line.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use ubot_core::datasets::{BlobParams, TwoClusterParams};
use ubot_core::minibatch::LossKind;
use ubot_core::solvers::{Marginals, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Outlier,
    PlanViz,
    Concentration,
    Flow,
    Jumbot,
    Solve,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Outlier => "outlier",
            Experiment::PlanViz => "plan-viz",
            Experiment::Concentration => "concentration",
            Experiment::Flow => "flow",
            Experiment::Jumbot => "jumbot",
            Experiment::Solve => "solve",
        }
    }
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or parameters (exit code 2).
    Config(String),
    /// A solver or flow produced non-finite values (exit code 3).
    Numerical(String),
    /// File system or serialization failure (exit code 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ubot_core::Error> for CliError {
    fn from(e: ubot_core::Error) -> Self {
        use ubot_core::Error;
        match e {
            Error::Contract(_) | Error::Unsupported(_) => CliError::Config(e.to_string()),
            Error::Numerical(_) => CliError::Numerical(e.to_string()),
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    check(v.is_finite() && v > 0.0, || format!("{name} must be finite and > 0, got {v}"))
}

/// Loss tags accepted by the outlier experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierLoss {
    /// Exact balanced OT between uniform measures.
    OtBalanced,
    /// Unregularized unbalanced OT.
    Uot,
    MbOt,
    MbUot,
    /// Unbalanced Sinkhorn divergence.
    SinkhornDiv,
    SinkhornDivBalanced,
}

impl OutlierLoss {
    pub fn tag(self) -> &'static str {
        match self {
            OutlierLoss::OtBalanced => "ot-balanced",
            OutlierLoss::Uot => "uot",
            OutlierLoss::MbOt => "mb-ot",
            OutlierLoss::MbUot => "mb-uot",
            OutlierLoss::SinkhornDiv => "sinkhorn-div",
            OutlierLoss::SinkhornDivBalanced => "sinkhorn-div-balanced",
        }
    }

    pub fn is_minibatch(self) -> bool {
        matches!(self, OutlierLoss::MbOt | OutlierLoss::MbUot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierParams {
    /// Support size of the clean measure.
    pub n: usize,
    pub distances: Vec<f64>,
    pub tau: f64,
    /// Entropic coefficient of the Sinkhorn-based losses.
    pub epsilon: f64,
    pub losses: Vec<OutlierLoss>,
    pub m: usize,
    pub ks: Vec<usize>,
    pub repetitions: usize,
    /// Stopping tolerance and iteration cap of the Sinkhorn solves.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OutlierParams {
    fn default() -> Self {
        Self {
            n: 10,
            distances: (0..9).map(|i| 10f64.powf(i as f64 / 4.0)).collect(),
            tau: 1.0,
            epsilon: 0.1,
            losses: vec![
                OutlierLoss::OtBalanced,
                OutlierLoss::Uot,
                OutlierLoss::MbOt,
                OutlierLoss::MbUot,
                OutlierLoss::SinkhornDiv,
                OutlierLoss::SinkhornDivBalanced,
            ],
            m: 5,
            ks: vec![30, 500],
            repetitions: 10,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

impl OutlierParams {
    fn validate(&self) -> CliResult<()> {
        check((2..=40).contains(&self.n), || format!("n must lie in 2..=40, got {}", self.n))?;
        check(!self.distances.is_empty(), || "distances must not be empty".into())?;
        check(self.distances.iter().all(|d| d.is_finite() && *d >= 0.0), || {
            "distances must be finite and >= 0".into()
        })?;
        positive("tau", self.tau)?;
        positive("epsilon", self.epsilon)?;
        check(!self.losses.is_empty(), || "losses must not be empty".into())?;
        check(self.m >= 1 && self.m <= self.n, || format!("m must lie in 1..=n, got {}", self.m))?;
        if self.losses.iter().any(|l| l.is_minibatch()) {
            check(!self.ks.is_empty() && self.ks.iter().all(|&k| k >= 1), || "ks must be non-empty and >= 1".into())?;
        }
        check(self.repetitions >= 1, || "repetitions must be >= 1".into())?;
        positive("tol", self.tol)?;
        check(self.max_iter >= 1, || "max_iter must be >= 1".into())
    }
}

/// Points given inline or as a CSV file (`x0,...[,label]` with a header).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PointsInput {
    Csv { csv: PathBuf },
    Inline { points: Vec<Vec<f64>>, #[serde(default)] labels: Option<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanVizParams {
    /// Labelled source; the built-in 10-point scenario when absent.
    pub source: Option<PointsInput>,
    pub target: Option<PointsInput>,
    pub epsilon: f64,
    /// Unbalanced settings, plotted in the given order.
    pub taus: Vec<f64>,
    pub include_balanced: bool,
    pub batch_sizes: Vec<usize>,
    /// Draws used when exhaustive enumeration is too large.
    pub k: usize,
    /// Normalized plan entries below this are not drawn.
    pub draw_threshold: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PlanVizParams {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            epsilon: 0.05,
            taus: vec![10.0, 3.0, 1.0, 0.3, 0.1],
            include_balanced: true,
            batch_sizes: vec![3, 5, 10],
            k: 2000,
            draw_threshold: 1e-3,
            tol: 1e-7,
            max_iter: 2000,
        }
    }
}

impl PlanVizParams {
    fn validate(&self) -> CliResult<()> {
        check(self.source.is_some() == self.target.is_some(), || {
            "source and target must be given together".into()
        })?;
        positive("epsilon", self.epsilon)?;
        for &t in &self.taus {
            positive("tau", t)?;
        }
        check(!self.taus.is_empty() || self.include_balanced, || "no transport settings selected".into())?;
        check(!self.batch_sizes.is_empty() && self.batch_sizes.iter().all(|&m| m >= 1), || {
            "batch_sizes must be non-empty and >= 1".into()
        })?;
        check(self.k >= 1, || "k must be >= 1".into())?;
        check((0.0..1.0).contains(&self.draw_threshold), || "draw_threshold must lie in [0, 1)".into())?;
        positive("tol", self.tol)?;
        check(self.max_iter >= 1, || "max_iter must be >= 1".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationParams {
    pub grid: Vec<SweepPoint>,
    pub delta: f64,
    pub repetitions: usize,
    /// Independent m-samples used to estimate the expected batch loss.
    pub population_draws: usize,
    /// Draws of the reference averaged plan for the marginal deviation.
    pub reference_draws: usize,
    pub solver: SolverConfig,
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        Self {
            grid: vec![
                SweepPoint { n: 60, m: 5, k: 50 },
                SweepPoint { n: 60, m: 5, k: 200 },
                SweepPoint { n: 60, m: 10, k: 50 },
            ],
            delta: 0.05,
            repetitions: 200,
            population_draws: 20_000,
            reference_draws: 5_000,
            solver: SolverConfig::unbalanced(0.1, 1.0),
        }
    }
}

impl ConcentrationParams {
    fn validate(&self) -> CliResult<()> {
        check(!self.grid.is_empty(), || "grid must not be empty".into())?;
        for p in &self.grid {
            check(p.m >= 1 && p.m <= p.n && p.k >= 1, || format!("need 1 <= m <= n and k >= 1, got {p:?}"))?;
        }
        check(self.delta > 0.0 && self.delta < 1.0, || format!("delta must lie in (0, 1), got {}", self.delta))?;
        check(self.repetitions >= 1 && self.population_draws >= 1 && self.reference_draws >= 1, || {
            "repetitions, population_draws and reference_draws must be >= 1".into()
        })?;
        self.solver.validate()?;
        positive("solver.epsilon", self.solver.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub scenario: TwoClusterParams,
    /// User data replacing the built-in scenario.
    pub source: Option<PointsInput>,
    pub target: Option<PointsInput>,
    pub step_size: f64,
    pub iterations: usize,
    pub m: usize,
    pub k: usize,
    pub loss: LossKind,
    pub solver: SolverConfig,
    pub snapshot_every: Option<usize>,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            scenario: TwoClusterParams::default(),
            source: None,
            target: None,
            step_size: 0.02,
            iterations: 500,
            m: 64,
            k: 1,
            loss: LossKind::SinkhornDivergence,
            solver: SolverConfig::unbalanced(0.5, 4.0).with_tol(1e-4).with_max_iter(1000),
            snapshot_every: None,
        }
    }
}

impl FlowParams {
    fn validate(&self) -> CliResult<()> {
        check(self.source.is_some() == self.target.is_some(), || {
            "source and target must be given together".into()
        })?;
        positive("step_size", self.step_size)?;
        check(self.m >= 1 && self.k >= 1, || "m and k must be >= 1".into())?;
        check(self.snapshot_every != Some(0), || "snapshot_every must be >= 1".into())?;
        let s = &self.scenario;
        check(s.n_source >= 2 && s.n_target >= 2, || "scenario sizes must be >= 2".into())?;
        check(s.heavy_fraction > 0.0 && s.heavy_fraction < 1.0, || "heavy_fraction must lie in (0, 1)".into())?;
        self.solver.validate()?;
        positive("solver.epsilon", self.solver.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumbotParams {
    pub blobs: BlobParams,
    /// User data replacing the blob generator; labels are required.
    pub source: Option<PointsInput>,
    pub target: Option<PointsInput>,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub solver: SolverConfig,
    pub m: usize,
    pub k: usize,
    pub iterations: usize,
    pub lr: f64,
    pub hidden: usize,
    pub embed: usize,
    pub warmup_iterations: usize,
}

impl Default for JumbotParams {
    fn default() -> Self {
        Self {
            blobs: BlobParams::default(),
            source: None,
            target: None,
            eta1: 1.0,
            eta2: 1.0,
            eta3: 1.0,
            solver: SolverConfig::unbalanced(0.1, 1.0).with_tol(1e-4).with_max_iter(300),
            m: 60,
            k: 1,
            iterations: 500,
            lr: 0.05,
            hidden: 32,
            embed: 8,
            warmup_iterations: 0,
        }
    }
}

impl JumbotParams {
    fn validate(&self) -> CliResult<()> {
        check(self.source.is_some() == self.target.is_some(), || {
            "source and target must be given together".into()
        })?;
        check(self.m >= 1 && self.k >= 1, || "m and k must be >= 1".into())?;
        check(self.hidden >= 1 && self.embed >= 1, || "hidden and embed must be >= 1".into())?;
        let b = &self.blobs;
        check(b.source_proportions.len() == b.target_proportions.len() && b.source_proportions.len() >= 2, || {
            "blob proportions need equal lengths >= 2".into()
        })?;
        check(b.source_proportions.iter().all(|&p| p > 0.0), || "source proportions must be > 0".into())?;
        check(b.target_proportions.iter().all(|&p| p >= 0.0) && b.target_proportions.iter().any(|&p| p > 0.0), || {
            "target proportions must be >= 0 and not all zero".into()
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Sinkhorn,
    /// Primal mirror-descent reference; handles ε = 0.
    Oracle,
    /// Exact balanced OT between uniform measures.
    Exact,
    SinkhornDiv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveParams {
    pub source: Option<PointsInput>,
    pub target: Option<PointsInput>,
    /// Dense cost matrix replacing the squared Euclidean cost.
    pub cost: Option<Vec<Vec<f64>>>,
    /// Defaults to uniform weights of total mass 1.
    pub source_weights: Option<Vec<f64>>,
    pub target_weights: Option<Vec<f64>>,
    pub method: SolveMethod,
    pub solver: SolverConfig,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            cost: None,
            source_weights: None,
            target_weights: None,
            method: SolveMethod::Sinkhorn,
            solver: SolverConfig::unbalanced(0.1, 1.0),
        }
    }
}

impl SolveParams {
    fn validate(&self) -> CliResult<()> {
        let has_points = self.source.is_some() && self.target.is_some();
        check(has_points || self.cost.is_some(), || "give source and target points or a cost matrix".into())?;
        check(self.source.is_some() == self.target.is_some(), || {
            "source and target must be given together".into()
        })?;
        if self.method == SolveMethod::SinkhornDiv {
            check(has_points, || "sinkhorn-div needs source and target points".into())?;
        }
        if self.method == SolveMethod::Exact {
            check(self.source_weights.is_none() && self.target_weights.is_none(), || {
                "the exact method works on uniform weights only".into()
            })?;
        }
        if self.method == SolveMethod::Oracle {
            check(matches!(self.solver.marginals, Marginals::Unbalanced { .. }), || {
                "the oracle solves unbalanced problems only".into()
            })?;
        }
        if matches!(self.method, SolveMethod::Sinkhorn | SolveMethod::SinkhornDiv) {
            positive("solver.epsilon", self.solver.epsilon)?;
        }
        self.solver.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Outlier(OutlierParams),
    PlanViz(PlanVizParams),
    Concentration(ConcentrationParams),
    Flow(FlowParams),
    Jumbot(JumbotParams),
    Solve(SolveParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub params: Params,
    pub seed: u64,
    pub out: PathBuf,
    /// Directory relative CSV paths in the parameters are resolved against.
    pub base_dir: PathBuf,
}

fn parse<T: DeserializeOwned>(value: Value) -> CliResult<T> {
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}

/// Defaults of the full-size runs, used for keys the config leaves out.
fn paper_scale_defaults(experiment: Experiment) -> Map<String, Value> {
    let defaults = match experiment {
        Experiment::Flow => json!({
            "scenario": {"n_source": 10000, "n_target": 10000},
            "iterations": 5000,
        }),
        _ => json!({}),
    };
    defaults.as_object().cloned().unwrap_or_default()
}

impl ExperimentConfig {
    /// Parses and validates a parameter block. An `experiment` key, if
    /// present, must match the requested experiment.
    pub fn from_json(
        experiment: Experiment,
        text: &str,
        seed: u64,
        out: PathBuf,
        base_dir: PathBuf,
        paper_scale: bool,
    ) -> CliResult<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        let Value::Object(mut obj) = value else {
            return invalid("the config must be a JSON object");
        };
        if let Some(tag) = obj.remove("experiment") {
            let named: Experiment = parse(tag)?;
            check(named == experiment, || {
                format!("config is for '{}', not '{}'", named.name(), experiment.name())
            })?;
        }
        if paper_scale {
            for (key, default) in paper_scale_defaults(experiment) {
                match (obj.get_mut(&key), default) {
                    (Some(Value::Object(given)), Value::Object(d)) => {
                        for (k, v) in d {
                            given.entry(k).or_insert(v);
                        }
                    }
                    (Some(_), _) => {}
                    (None, d) => {
                        obj.insert(key, d);
                    }
                }
            }
        }
        let value = Value::Object(obj);
        let params = match experiment {
            Experiment::Outlier => Params::Outlier(parse(value)?),
            Experiment::PlanViz => Params::PlanViz(parse(value)?),
            Experiment::Concentration => Params::Concentration(parse(value)?),
            Experiment::Flow => Params::Flow(parse(value)?),
            Experiment::Jumbot => Params::Jumbot(parse(value)?),
            Experiment::Solve => Params::Solve(parse(value)?),
        };
        let cfg = Self {
            experiment,
            params,
            seed,
            out,
            base_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(experiment: Experiment, path: &Path, seed: u64, out: PathBuf, paper_scale: bool) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(experiment, &text, seed, out, base_dir, paper_scale)
    }

    pub fn validate(&self) -> CliResult<()> {
        match &self.params {
            Params::Outlier(p) => p.validate(),
            Params::PlanViz(p) => p.validate(),
            Params::Concentration(p) => p.validate(),
            Params::Flow(p) => p.validate(),
            Params::Jumbot(p) => p.validate(),
            Params::Solve(p) => p.validate(),
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(exp: Experiment, text: &str) -> CliResult<ExperimentConfig> {
        ExperimentConfig::from_json(exp, text, 0, PathBuf::from("out"), PathBuf::new(), false)
    }

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = load(Experiment::Outlier, "{}").unwrap();
        assert_eq!(cfg.params, Params::Outlier(OutlierParams::default()));
    }

    #[test]
    fn default_distances_are_log_spaced() {
        let d = OutlierParams::default().distances;
        assert_eq!(d.len(), 9);
        assert!((d[0] - 1.0).abs() < 1e-12 && (d[8] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load(Experiment::Flow, r#"{"step": 0.1}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn invalid_loss_tag_is_rejected() {
        let err = load(Experiment::Outlier, r#"{"losses": ["uot", "wasserstein-7"]}"#).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn experiment_key_must_match() {
        assert!(load(Experiment::Flow, r#"{"experiment": "flow"}"#).is_ok());
        assert!(load(Experiment::Flow, r#"{"experiment": "jumbot"}"#).is_err());
        assert!(load(Experiment::Flow, r#"{"experiment": "teleport"}"#).is_err());
    }

    #[test]
    fn numeric_preconditions_are_checked() {
        assert!(load(Experiment::Outlier, r#"{"tau": -1}"#).is_err());
        assert!(load(Experiment::Concentration, r#"{"delta": 1.5}"#).is_err());
        assert!(load(Experiment::Flow, r#"{"solver": {"epsilon": 0.5, "mode": "unbalanced", "tau": 0}}"#).is_err());
        assert!(load(Experiment::Solve, r#"{"cost": [[1.0]], "method": "oracle", "solver": {"epsilon": 0, "mode": "balanced"}}"#).is_err());
        assert!(load(Experiment::Solve, r#"{}"#).is_err());
    }

    #[test]
    fn paper_scale_fills_missing_keys_only() {
        let base = PathBuf::new();
        let cfg = ExperimentConfig::from_json(Experiment::Flow, r#"{"iterations": 7}"#, 0, "o".into(), base, true).unwrap();
        let Params::Flow(p) = cfg.params else { panic!() };
        assert_eq!(p.iterations, 7);
        assert_eq!(p.scenario.n_source, 10000);
        assert_eq!(p.scenario.heavy_fraction, 0.64);
    }

    #[test]
    fn points_input_forms() {
        let csv: PointsInput = serde_json::from_str(r#"{"csv": "a.csv"}"#).unwrap();
        assert_eq!(csv, PointsInput::Csv { csv: "a.csv".into() });
        let inline: PointsInput = serde_json::from_str(r#"{"points": [[0, 1]], "labels": [2]}"#).unwrap();
        assert!(matches!(inline, PointsInput::Inline { labels: Some(_), .. }));
    }
}
