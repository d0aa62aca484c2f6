use log::info;
use serde::Serialize;

use super::{write_bytes, write_json, RunConfig};
use crate::error::Result;
use crate::synth::{generate, run_benchmark, BenchmarkOutcome, GeneratingParams, PipelineConfig, SynthConfig};
use crate::FeatureMap;

/// One row of `dim` features per pixel on a 1×N grid.
fn row_map(rows: &[f64], dim: usize) -> Result<FeatureMap> {
    let n = rows.len() / dim;
    FeatureMap::from_parts(1, n, dim, rows.iter().map(|&v| v as f32).collect(), vec![true; n])
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a SynthConfig,
    generating_params: &'a GeneratingParams,
}

/// Generates the dataset from `[synth]`, writes it under `<out>/synth/`,
/// runs the benchmark with the `[model]`, `[prior]`, `[ensemble]` and `[em]`
/// settings, and writes per-channel reports plus `delta.json`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<BenchmarkOutcome> {
    let dataset = generate(&cfg.synth)?;
    let dir = cfg.paths.output_dir.join("synth");
    let d = dataset.dim;

    for (c, rows) in dataset.train_features.iter().enumerate() {
        write_bytes(&dir.join(format!("train_{c}.fmap")), &row_map(rows, d)?.to_bytes()?)?;
    }
    write_bytes(&dir.join("eval.fmap"), &row_map(&dataset.eval_features, d)?.to_bytes()?)?;
    let labels: Vec<Option<f32>> = dataset.eval_labels.iter().map(|l| l.map(|c| c as f32)).collect();
    let n = labels.len();
    write_bytes(&dir.join("eval_labels.fmap"), &FeatureMap::from_scalars(1, n, &labels)?.to_bytes()?)?;
    let ood: Vec<Option<f32>> = dataset.eval_is_ood.iter().map(|&o| Some(o as u8 as f32)).collect();
    write_bytes(&dir.join("eval_is_ood.fmap"), &FeatureMap::from_scalars(1, n, &ood)?.to_bytes()?)?;
    write_json(
        &dir.join("generating_params.json"),
        &Sidecar {
            config: &cfg.synth,
            generating_params: &dataset.generating_params,
        },
    )?;

    let pipeline = PipelineConfig {
        components: cfg.model.components,
        prior: cfg.prior,
        n_samples: cfg.ensemble.n_samples,
        seed: cfg.ensemble.seed,
        em: cfg.em,
    };
    let outcome = run_benchmark(&dataset, &pipeline)?;
    let reports = dir.join("reports");
    for r in &outcome.channels {
        let name = r.channel.name();
        write_json(&reports.join(format!("{name}.json")), &r.report)?;
        write_bytes(&reports.join(format!("{name}.csv")), r.report.to_csv().as_bytes())?;
    }
    write_json(&reports.join("delta.json"), &outcome.delta)?;
    write_json(&reports.join("benchmark.json"), &outcome)?;
    info!(
        "epistemic AUROC {:.4}, predictive-entropy AUROC {:.4}",
        outcome.epistemic.auroc, outcome.predictive.auroc
    );
    Ok(outcome)
}
