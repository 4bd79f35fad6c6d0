//! Experiment runners. Each is a pure function of its configuration and
//! seed; every file is written once, after its content is complete.

mod concentration;
mod flow;
mod jumbot;
mod outlier;
mod plan_viz;
mod solve;

use std::path::{Path, PathBuf};

use ubot_core::measures::{read_points_csv, LabeledCloud, PointCloud};
use ubot_core::rng::CounterRng;

use crate::config::{CliError, CliResult, ExperimentConfig, Params, PointsInput};

/// Files written by a run, in write order.
#[derive(Debug, Default)]
pub struct Output {
    dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.files.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.write(name, bytes)
    }

    /// Runs a core writer into an in-memory buffer, then stores it.
    pub fn with_writer(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Vec<u8>) -> ubot_core::Result<()>,
    ) -> CliResult<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }
}

/// Float formatting shared by every CSV: shortest round-trip scientific form.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn load_points(cfg: &ExperimentConfig, input: &PointsInput) -> CliResult<LabeledCloud> {
    match input {
        PointsInput::Csv { csv } => Ok(read_points_csv(cfg.resolve(csv))?),
        PointsInput::Inline { points, labels } => {
            if let Some(l) = labels {
                if l.len() != points.len() {
                    return Err(CliError::Config(format!(
                        "{} labels for {} points",
                        l.len(),
                        points.len()
                    )));
                }
            }
            Ok(LabeledCloud {
                points: PointCloud::from_rows(points)?,
                labels: labels.clone(),
            })
        }
    }
}

pub fn require_labels(cloud: LabeledCloud, what: &str) -> CliResult<(PointCloud, Vec<usize>)> {
    match cloud.labels {
        Some(labels) => Ok((cloud.points, labels)),
        None => Err(CliError::Config(format!("{what} needs a label column"))),
    }
}

/// `count` points uniform on the unit square.
pub fn unit_square(seed: u64, count: usize) -> CliResult<PointCloud> {
    let mut rng = CounterRng::new(seed, 0);
    let rows: Vec<Vec<f64>> = (0..count).map(|_| vec![rng.uniform(), rng.uniform()]).collect();
    Ok(PointCloud::from_rows(&rows)?)
}

pub fn xy(cloud: &PointCloud) -> Vec<[f64; 2]> {
    cloud
        .as_array()
        .rows()
        .into_iter()
        .map(|r| [r[0], r.get(1).copied().unwrap_or(0.0)])
        .collect()
}

/// Runs the configured experiment and returns the files it wrote.
pub fn run(cfg: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let mut out = Output::create(&cfg.out)?;
    match &cfg.params {
        Params::Outlier(p) => outlier::run(cfg, p, &mut out)?,
        Params::PlanViz(p) => plan_viz::run(cfg, p, &mut out)?,
        Params::Concentration(p) => concentration::run(cfg, p, &mut out)?,
        Params::Flow(p) => flow::run(cfg, p, &mut out)?,
        Params::Jumbot(p) => jumbot::run(cfg, p, &mut out)?,
        Params::Solve(p) => solve::run(cfg, p, &mut out)?,
    }
    Ok(out.files)
}
