//! Experiment runner: loads a TOML config, runs the adaptation pipeline
//! over a range of seeds and writes `report.json` and `runs.csv`.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::{Path, PathBuf};

use clusterda::data::{default_feature_names, generate_synthetic_pair, write_csv_file};
use clusterda::{Scalar, Stage};

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::Mode;
pub use report::Report;

/// Environment variable that overrides `run.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "CLUSTERDA_OUTPUT_DIR";

fn execute_as<T: Scalar>(cfg: &ExperimentConfig, mode: Mode) -> Result<Report, CliError> {
    let data = pipeline::load_task::<T>(cfg)?;
    let notes = match &data {
        pipeline::TaskData::Csv { notes, .. } => Some(notes.clone()),
        pipeline::TaskData::Synthetic => None,
    };
    let runs = pipeline::run_all(cfg, &data, mode)?;
    report::build_report(cfg, mode, pipeline::method_names(cfg, mode), notes, &runs)
}

/// Runs every seed of `cfg` in the configured scalar precision.
pub fn execute(cfg: &ExperimentConfig, mode: Mode) -> Result<Report, CliError> {
    match cfg.run.scalar {
        config::ScalarKind::F64 => execute_as::<f64>(cfg, mode),
        config::ScalarKind::F32 => execute_as::<f32>(cfg, mode),
    }
}

/// Runs and writes both report files into `out_dir`.
pub fn execute_to(cfg: &ExperimentConfig, mode: Mode, out_dir: &Path) -> Result<Report, CliError> {
    let report = execute(cfg, mode)?;
    report::write_report(out_dir, &report)?;
    Ok(report)
}

/// Writes the synthetic pair of `seed` as `source.csv` and `target.csv`,
/// each with a trailing `label` column.
pub fn write_synthetic(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let Some(syn) = cfg.task.synthetic else {
        return Err(CliError::Config("synth needs a synthetic task".into()));
    };
    let pair = generate_synthetic_pair::<f64>(&syn.spec(seed)).map_err(CliError::at(Stage::Preprocess))?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::output(out_dir, e))?;
    let src = out_dir.join("source.csv");
    let tgt = out_dir.join("target.csv");
    let x_s = pair.source.features();
    write_csv_file(
        &src,
        &default_feature_names(x_s.cols()),
        x_s,
        Some(("label", pair.source.labels())),
    )
    .map_err(|e| CliError::output(&src, e))?;
    let x_t = &pair.target_features;
    write_csv_file(
        &tgt,
        &default_feature_names(x_t.cols()),
        x_t,
        pair.target_truth().map(|t| ("label", t)),
    )
    .map_err(|e| CliError::output(&tgt, e))?;
    Ok(vec![src, tgt])
}
