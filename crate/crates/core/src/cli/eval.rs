use std::fmt::Write as _;

use log::info;
use serde::{Deserialize, Serialize};

use super::fit::load_grid;
use super::score::channel_path;
use super::{list_files, write_bytes, write_json, LabelRole, RunConfig};
use crate::ensemble::ScoreChannel;
use crate::error::{Error, Result};
use crate::metrics::{miou, EvalReport, ScoredPixels};
use crate::FeatureMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEval {
    pub channel: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub files: usize,
    pub reports: Vec<ChannelEval>,
}

impl EvalSummary {
    /// One line per channel, for the terminal.
    pub fn table(&self) -> String {
        let mut out = format!("{:<22} {:>8} {:>8} {:>8} {:>8}\n", "channel", "AUROC", "AUPRC", "FPR95", "mIoU");
        for r in &self.reports {
            let m = &r.report;
            let _ = writeln!(
                out,
                "{:<22} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                r.channel, m.auroc, m.auprc, m.fpr95, m.miou
            );
        }
        out
    }

    pub fn report(&self, channel: ScoreChannel) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.channel == channel.name()).map(|r| &r.report)
    }
}

/// Evaluates every channel written by `score` against the label grids.
/// Pixels count when valid in both the scores and the ground truth and not
/// mapped to ignore; the outlier label is the positive class. mIoU compares
/// predictions with the ground truth on ID pixels.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalSummary> {
    let classes = cfg.model.classes;
    cfg.class_map.validate(classes)?;
    let score_dir = cfg.paths.score_dir();
    if !score_dir.is_dir() {
        return Err(Error::Config(format!("score directory {} not found", score_dir.display())));
    }
    let stems: Vec<String> = list_files(&score_dir, ".pred.fmap", &[])?
        .into_iter()
        .map(|(stem, _)| stem)
        .collect();
    if stems.is_empty() {
        return Err(Error::Config(format!("no prediction maps in {}", score_dir.display())));
    }
    let grid_dir = cfg.paths.grid_dir();

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); ScoreChannel::ALL.len()];
    let mut is_ood = Vec::new();
    let (mut pred, mut gt, mut ignore) = (Vec::new(), Vec::new(), Vec::new());
    for stem in &stems {
        let pred_map = FeatureMap::read(&channel_path(&score_dir, stem, "pred"))?;
        let grid = load_grid(&grid_dir, stem, &pred_map)?;
        let maps = ScoreChannel::ALL
            .iter()
            .map(|c| FeatureMap::read(&channel_path(&score_dir, stem, c.name())))
            .collect::<Result<Vec<_>>>()?;
        for p in 0..pred_map.pixel_count() {
            if !pred_map.is_valid(p) || !grid.is_valid(p) {
                continue;
            }
            let ood = match cfg.class_map.role(grid.pixel(p)[0] as u16) {
                LabelRole::Ignore => continue,
                LabelRole::Outlier => {
                    gt.push(0);
                    true
                }
                LabelRole::Train(c) => {
                    gt.push(c);
                    false
                }
            };
            pred.push(pred_map.pixel(p)[0] as u32);
            ignore.push(ood);
            is_ood.push(ood);
            for (v, m) in values.iter_mut().zip(&maps) {
                v.push(m.pixel(p)[0] as f64);
            }
        }
    }

    let seg = miou(&pred, &gt, classes, &ignore)?;
    let eval_dir = cfg.paths.output_dir.join("eval");
    let mut reports = Vec::new();
    for (channel, v) in ScoreChannel::ALL.iter().zip(values) {
        let report = EvalReport::evaluate(&ScoredPixels::new(v, is_ood.clone())?, &seg)?;
        write_json(&eval_dir.join(format!("{}.json", channel.name())), &report)?;
        write_bytes(&eval_dir.join(format!("{}.csv", channel.name())), report.to_csv().as_bytes())?;
        reports.push(ChannelEval {
            channel: channel.name().to_string(),
            report,
        });
    }
    let summary = EvalSummary {
        files: stems.len(),
        reports,
    };
    write_json(&eval_dir.join("summary.json"), &summary)?;
    info!("evaluated {} files", summary.files);
    Ok(summary)
}
