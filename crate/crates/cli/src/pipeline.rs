//! Per-seed execution of the transfer task and its ablation arms.

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use clusterda::adapt::{adapt_iterate, AdaptationResult, CorrespondenceMode};
use clusterda::classify::{train_classifier, Classifier, ClassifierSpec};
use clusterda::data::{generate_synthetic_pair, load_csv, DomainPair, LabeledDataset};
use clusterda::evaluate::{evaluate_scores, EvaluationReport};
use clusterda::homogenize::{default_shared_dim, homogenize_pair};
use clusterda::preprocess::standardize;
use clusterda::{Error, FeatureMatrix, Label, Scalar, Stage};

use crate::config::{ClassifierKind, ExperimentConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Run,
    Ablate,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Ablate => "ablate",
        }
    }
}

pub const ARM_CLUSTERING: &str = "clustering-omega";
pub const ARM_RANDOM: &str = "random-omega";
pub const ARM_NONE: &str = "no-adaptation";

/// Row counts and label/category handling of the loaded data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataNotes {
    pub source_rows: usize,
    pub target_rows: usize,
    pub source_features: usize,
    pub target_features: usize,
    pub source_dropped_rows: usize,
    pub target_dropped_rows: usize,
    pub source_corrected_labels: usize,
    pub target_corrected_labels: usize,
}

/// Loaded CSV data, reused by every run; synthetic data is drawn per seed.
#[allow(clippy::large_enum_variant)]
pub enum TaskData<T> {
    Csv { pair: DomainPair<T>, notes: DataNotes },
    Synthetic,
}

pub fn load_task<T: Scalar>(cfg: &ExperimentConfig) -> Result<TaskData<T>, CliError> {
    let Some(csv) = &cfg.task.csv else {
        return Ok(TaskData::Synthetic);
    };
    let pre = CliError::at(Stage::Preprocess);
    let (encoding, unseen) = cfg.encoding();
    let src = load_csv::<T>(cfg.data_path(&csv.source), &csv.source_schema.to_schema()?).map_err(&pre)?;
    let tgt = load_csv::<T>(cfg.data_path(&csv.target), &csv.target_schema.to_schema()?).map_err(&pre)?;
    let src_x = src.encode(None, unseen, encoding).map_err(&pre)?.features;
    let tgt_x = tgt.encode(None, unseen, encoding).map_err(&pre)?.features;
    let src_labels = src.labels.as_ref().expect("validated: source schema has a label");
    let notes = DataNotes {
        source_rows: src.n_rows,
        target_rows: tgt.n_rows,
        source_features: src_x.cols(),
        target_features: tgt_x.cols(),
        source_dropped_rows: src.dropped,
        target_dropped_rows: tgt.dropped,
        source_corrected_labels: src_labels.corrected,
        target_corrected_labels: tgt.labels.as_ref().map_or(0, |l| l.corrected),
    };
    let source = LabeledDataset::new(src_x, src_labels.labels.clone()).map_err(&pre)?;
    let truth = tgt.labels.map(|l| l.labels);
    let pair = DomainPair::new(cfg.task_name(), source, tgt_x, truth).map_err(&pre)?;
    Ok(TaskData::Csv { pair, notes })
}

/// One method scored on one run.
#[derive(Debug, Clone)]
pub struct MethodOutcome<T> {
    pub method: String,
    pub eval: EvaluationReport<T>,
}

/// Adaptation diagnostics of one arm on one run.
#[derive(Debug, Clone)]
pub struct AdaptOutcome<T> {
    pub method: String,
    pub m: usize,
    pub rounds: usize,
    pub best_round: usize,
    pub l_da: Vec<T>,
    pub ratio: Vec<T>,
    pub eta: Vec<T>,
    pub pairs: usize,
    pub cluster_sizes: Option<(Vec<usize>, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub seed: u64,
    pub d: usize,
    pub source_rows: usize,
    pub target_rows: usize,
    /// SHA-256 of the homogenized source and target matrices.
    pub z_s_sha256: String,
    pub z_t_sha256: String,
    pub methods: Vec<MethodOutcome<T>>,
    pub adaptation: Vec<AdaptOutcome<T>>,
}

pub fn matrix_sha256<T: Scalar>(x: &FeatureMatrix<T>) -> String {
    let mut h = Sha256::new();
    h.update((x.rows() as u64).to_le_bytes());
    h.update((x.cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        h.update(v.to_f64_lossy().to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn scored<T: Scalar>(
    spec: &ClassifierSpec<T>,
    train: &FeatureMatrix<T>,
    labels: &[Label],
    test: &FeatureMatrix<T>,
    truth: &[Label],
    seed: u64,
) -> Result<EvaluationReport<T>, CliError> {
    let model = train_classifier(spec, train, labels, seed).map_err(CliError::at(Stage::Classify))?;
    let scores = model.predict_scores(test).map_err(CliError::at(Stage::Classify))?;
    evaluate_scores(&scores, truth).map_err(CliError::at(Stage::Evaluate))
}

fn adapt_outcome<T: Scalar>(method: &str, r: &AdaptationResult<T>) -> AdaptOutcome<T> {
    AdaptOutcome {
        method: method.to_string(),
        m: r.projection.m(),
        rounds: r.rounds.len(),
        best_round: r.best_round,
        l_da: r.l_da_history(),
        ratio: r.ratio_history(),
        eta: r.projection.eta.clone(),
        pairs: r.omega.len(),
        cluster_sizes: r.clusterings.as_ref().map(|(s, t)| (s.sizes(), t.sizes())),
    }
}

/// Executes one seed: preprocess, homogenize, then the adapted method plus
/// baselines (`Mode::Run`) or the three ablation arms (`Mode::Ablate`).
pub fn run_seed<T: Scalar>(
    cfg: &ExperimentConfig,
    data: &TaskData<T>,
    mode: Mode,
    seed: u64,
) -> Result<RunOutcome<T>, CliError> {
    let drawn;
    let pair = match data {
        TaskData::Csv { pair, .. } => pair,
        TaskData::Synthetic => {
            let spec = cfg
                .task
                .synthetic
                .expect("resolved config has a task source")
                .spec(seed);
            drawn = generate_synthetic_pair::<T>(&spec).map_err(CliError::at(Stage::Preprocess))?;
            &drawn
        }
    };
    let truth = pair.target_truth().ok_or_else(|| CliError::Stage {
        stage: Stage::Evaluate,
        source: Error::InvalidParameter("target ground truth is required for evaluation".into()),
    })?;
    let labels = pair.source.labels();

    let pre = CliError::at(Stage::Preprocess);
    let floor = T::lit(cfg.preprocess.sigma_floor);
    let (x_s, _) = standardize(pair.source.features(), floor).map_err(&pre)?;
    let (x_t, _) = standardize(&pair.target_features, floor).map_err(&pre)?;
    let d = match cfg.homogenize.d {
        Some(d) => d,
        None => default_shared_dim(&x_s, &x_t, T::lit(cfg.homogenize.variance_threshold))
            .map_err(CliError::at(Stage::Homogenize))?,
    };
    let h = homogenize_pair(&x_s, &x_t, d).map_err(CliError::at(Stage::Homogenize))?;
    let (z_s, z_t) = (&h.z_s, &h.z_t);

    let kind = cfg.classifier.kind;
    let spec = cfg.classifier.spec::<T>(kind);
    let mut methods = Vec::new();
    let mut adaptation = Vec::new();

    let mut adapted = |name: &str, mode: CorrespondenceMode| -> Result<MethodOutcome<T>, CliError> {
        let acfg = cfg.adapt.to_config::<T>(mode);
        let r = adapt_iterate(z_s, z_t, &acfg).map_err(CliError::at(Stage::Alignment))?;
        let eval = scored(&spec, &r.h_s, labels, &r.h_t, truth, seed)?;
        adaptation.push(adapt_outcome(name, &r));
        Ok(MethodOutcome {
            method: name.to_string(),
            eval,
        })
    };

    match mode {
        Mode::Run => {
            methods.push(adapted(
                &format!("adapted-{}", kind.name()),
                CorrespondenceMode::Clustering,
            )?);
            for &b in &cfg.baselines {
                let eval = scored(&cfg.classifier.spec::<T>(b), z_s, labels, z_t, truth, seed)?;
                methods.push(MethodOutcome {
                    method: b.name().to_string(),
                    eval,
                });
            }
        }
        Mode::Ablate => {
            methods.push(adapted(ARM_CLUSTERING, CorrespondenceMode::Clustering)?);
            methods.push(adapted(ARM_RANDOM, CorrespondenceMode::Random { seed })?);
            let eval = scored(&spec, z_s, labels, z_t, truth, seed)?;
            methods.push(MethodOutcome {
                method: ARM_NONE.to_string(),
                eval,
            });
        }
    }

    Ok(RunOutcome {
        seed,
        d,
        source_rows: z_s.rows(),
        target_rows: z_t.rows(),
        z_s_sha256: matrix_sha256(z_s),
        z_t_sha256: matrix_sha256(z_t),
        methods,
        adaptation,
    })
}

/// Runs every seed in parallel and returns the outcomes in seed order.
/// The first failing seed (in seed order) aborts the whole run.
pub fn run_all<T: Scalar>(
    cfg: &ExperimentConfig,
    data: &TaskData<T>,
    mode: Mode,
) -> Result<Vec<RunOutcome<T>>, CliError> {
    let seeds: Vec<u64> = (0..cfg.run.runs as u64).map(|r| cfg.run.base_seed + r).collect();
    let results: Vec<_> = seeds.par_iter().map(|&s| run_seed(cfg, data, mode, s)).collect();
    results.into_iter().collect()
}

/// Classifier names that appear in a run, in report order.
pub fn method_names(cfg: &ExperimentConfig, mode: Mode) -> Vec<String> {
    match mode {
        Mode::Run => std::iter::once(format!("adapted-{}", cfg.classifier.kind.name()))
            .chain(cfg.baselines.iter().map(|b: &ClassifierKind| b.name().to_string()))
            .collect(),
        Mode::Ablate => [ARM_CLUSTERING, ARM_RANDOM, ARM_NONE].map(String::from).to_vec(),
    }
}
