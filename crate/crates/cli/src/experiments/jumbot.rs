//! Toy domain adaptation with the joint unbalanced minibatch objective.

use ubot_core::datasets::shifted_blobs;
use ubot_core::jumbot::{train, JumbotConfig, LabeledDataset};
use ubot_core::minibatch::MinibatchScheme;
use ubot_core::rng::derive_seed;

use super::{load_points, num, require_labels, Output};
use crate::config::{CliResult, ExperimentConfig, JumbotParams};

fn data(cfg: &ExperimentConfig, p: &JumbotParams) -> CliResult<(LabeledDataset, LabeledDataset)> {
    match (&p.source, &p.target) {
        (Some(s), Some(t)) => {
            let (sp, sl) = require_labels(load_points(cfg, s)?, "jumbot source")?;
            let (tp, tl) = require_labels(load_points(cfg, t)?, "jumbot target (labels are used for scoring only)")?;
            let classes = sl.iter().chain(&tl).max().map_or(0, |c| c + 1);
            Ok((LabeledDataset::new(sp, sl, classes)?, LabeledDataset::new(tp, tl, classes)?))
        }
        _ => Ok(shifted_blobs(&p.blobs, cfg.seed)?),
    }
}

pub fn run(cfg: &ExperimentConfig, p: &JumbotParams, out: &mut Output) -> CliResult<()> {
    let (src, tgt) = data(cfg, p)?;
    let jcfg = JumbotConfig {
        eta1: p.eta1,
        eta2: p.eta2,
        eta3: p.eta3,
        solver: p.solver,
        scheme: MinibatchScheme::incomplete(p.m, p.k, derive_seed(cfg.seed, 1)),
        lr: p.lr,
        iterations: p.iterations,
        seed: derive_seed(cfg.seed, 2),
        hidden: p.hidden,
        embed: p.embed,
        warmup_iterations: p.warmup_iterations,
    };
    let report = train(&src, &tgt, &jcfg)?;
    out.with_writer("jumbot_report.csv", |w| report.write_csv(w))?;
    out.write("jumbot_model.json", report.model.to_json()?)?;
    let last = report.last();
    out.csv(
        "jumbot_summary.csv",
        &["epochs", "src_acc", "tgt_acc", "cross_label_mass", "unconverged_solves"],
        &[vec![
            report.epochs.len().to_string(),
            last.map(|e| num(e.src_acc)).unwrap_or_default(),
            last.map(|e| num(e.tgt_acc)).unwrap_or_default(),
            last.map(|e| num(e.cross_label_mass)).unwrap_or_default(),
            report.unconverged_solves.to_string(),
        ]],
    )
}
