//! `report.json` and `runs.csv`.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use clusterda::evaluate::{summarize_runs, RunSummary};
use clusterda::Scalar;

use crate::config::{ExperimentConfig, ScalarKind};
use crate::error::CliError;
use crate::pipeline::{AdaptOutcome, DataNotes, Mode, RunOutcome};

pub const REPORT_FILE: &str = "report.json";
pub const RUNS_FILE: &str = "runs.csv";

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: Tool,
    pub mode: Mode,
    pub task: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub data: Option<DataNotes>,
    pub notes: Vec<String>,
    pub methods: Vec<String>,
    pub summaries: Vec<MethodSummary>,
    pub runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub scalar: ScalarKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    fn from_core<T: Scalar>(s: &RunSummary<T>) -> Self {
        Self {
            mean: s.mean.to_f64_lossy(),
            std: s.std.to_f64_lossy(),
            min: s.min.to_f64_lossy(),
            q1: s.q1.to_f64_lossy(),
            median: s.median.to_f64_lossy(),
            q3: s.q3.to_f64_lossy(),
            max: s.max.to_f64_lossy(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub acc: Summary,
    pub precision: Summary,
    pub recall: Summary,
    pub f1: Summary,
    pub auc: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub shared_dim: usize,
    pub source_rows: usize,
    pub target_rows: usize,
    pub z_s_sha256: String,
    pub z_t_sha256: String,
    pub methods: Vec<MethodRecord>,
    pub adaptation: Vec<AdaptRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodRecord {
    pub method: String,
    pub acc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub confusion: Confusion,
    /// `(fpr, tpr)` points of the ROC curve.
    pub roc: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdaptRecord {
    pub method: String,
    pub m: usize,
    pub rounds: usize,
    pub best_round: usize,
    pub l_da: Vec<f64>,
    pub ratio: Vec<f64>,
    pub eta: Vec<f64>,
    pub pairs: usize,
    pub source_cluster_sizes: Option<Vec<usize>>,
    pub target_cluster_sizes: Option<Vec<usize>>,
}

fn f64s<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64_lossy()).collect()
}

fn adapt_record<T: Scalar>(a: &AdaptOutcome<T>) -> AdaptRecord {
    let (s, t) = match &a.cluster_sizes {
        Some((s, t)) => (Some(s.clone()), Some(t.clone())),
        None => (None, None),
    };
    AdaptRecord {
        method: a.method.clone(),
        m: a.m,
        rounds: a.rounds,
        best_round: a.best_round,
        l_da: f64s(&a.l_da),
        ratio: f64s(&a.ratio),
        eta: f64s(&a.eta),
        pairs: a.pairs,
        source_cluster_sizes: s,
        target_cluster_sizes: t,
    }
}

fn run_record<T: Scalar>(r: &RunOutcome<T>) -> RunRecord {
    RunRecord {
        seed: r.seed,
        shared_dim: r.d,
        source_rows: r.source_rows,
        target_rows: r.target_rows,
        z_s_sha256: r.z_s_sha256.clone(),
        z_t_sha256: r.z_t_sha256.clone(),
        methods: r
            .methods
            .iter()
            .map(|m| {
                let e = &m.eval;
                MethodRecord {
                    method: m.method.clone(),
                    acc: e.metrics.acc.to_f64_lossy(),
                    precision: e.metrics.precision.to_f64_lossy(),
                    recall: e.metrics.recall.to_f64_lossy(),
                    f1: e.metrics.f1.to_f64_lossy(),
                    auc: e.roc.auc.to_f64_lossy(),
                    confusion: Confusion {
                        tp: e.confusion.tp,
                        tn: e.confusion.tn,
                        fp: e.confusion.fp,
                        fn_: e.confusion.fn_,
                    },
                    roc: e
                        .roc
                        .points
                        .iter()
                        .map(|&(x, y)| [x.to_f64_lossy(), y.to_f64_lossy()])
                        .collect(),
                }
            })
            .collect(),
        adaptation: r.adaptation.iter().map(adapt_record).collect(),
    }
}

/// SHA-256 of the config's canonical JSON form.
pub fn config_fingerprint(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

pub fn build_report<T: Scalar>(
    cfg: &ExperimentConfig,
    mode: Mode,
    methods: Vec<String>,
    data: Option<DataNotes>,
    runs: &[RunOutcome<T>],
) -> Result<Report, CliError> {
    let mut summaries = Vec::with_capacity(methods.len());
    for name in &methods {
        let pick = |f: &dyn Fn(&clusterda::EvaluationReport<T>) -> T| -> Vec<T> {
            runs.iter()
                .flat_map(|r| r.methods.iter().filter(|m| &m.method == name).map(|m| f(&m.eval)))
                .collect()
        };
        let summary = |v: Vec<T>| -> Result<Summary, CliError> {
            summarize_runs(&v)
                .map(|s| Summary::from_core(&s))
                .map_err(CliError::at(clusterda::Stage::Evaluate))
        };
        summaries.push(MethodSummary {
            method: name.clone(),
            runs: runs.len(),
            acc: summary(pick(&|e| e.metrics.acc))?,
            precision: summary(pick(&|e| e.metrics.precision))?,
            recall: summary(pick(&|e| e.metrics.recall))?,
            f1: summary(pick(&|e| e.metrics.f1))?,
            auc: summary(pick(&|e| e.roc.auc))?,
        });
    }
    let mut notes = vec![
        "features are z-scored per domain with population standard deviation".to_string(),
        "hard labels threshold scores at 0.5; label 1 is the positive class".to_string(),
        "target labels are used only for evaluation".to_string(),
        "baselines and the no-adaptation arm train on the PCA-homogenized features".to_string(),
    ];
    if cfg.task.synthetic.is_some() {
        notes.push("synthetic data is redrawn for each run with the run seed".to_string());
    }
    if mode == Mode::Ablate {
        notes.push("random-omega draws its pairs from a stream seeded with the run seed".to_string());
    }
    Ok(Report {
        tool: Tool {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            core_version: clusterda::VERSION,
            scalar: cfg.run.scalar,
        },
        mode,
        task: cfg.task_name().to_string(),
        config_sha256: config_fingerprint(cfg),
        config: cfg.clone(),
        data,
        notes,
        methods,
        summaries,
        runs: runs.iter().map(run_record).collect(),
    })
}

pub fn write_report(dir: &Path, report: &Report) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let path = dir.join(REPORT_FILE);
    let mut json = serde_json::to_string_pretty(report).map_err(|e| CliError::output(&path, e))?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| CliError::output(&path, e))?;

    let path = dir.join(RUNS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::output(&path, e))?;
    w.write_record(["task", "method", "seed", "acc", "precision", "recall", "f1", "auc"])
        .map_err(|e| CliError::output(&path, e))?;
    for run in &report.runs {
        for m in &run.methods {
            w.write_record([
                report.task.clone(),
                m.method.clone(),
                run.seed.to_string(),
                m.acc.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.auc.to_string(),
            ])
            .map_err(|e| CliError::output(&path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::output(&path, e))
}
