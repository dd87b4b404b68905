//! Experiment configuration file (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use clusterda::adapt::{AdaptConfig, CorrespondenceMode};
use clusterda::classify::{ClassifierSpec, TrainConfig};
use clusterda::correspondence::{PairWeighting, PairingOptions, TauPolicy};
use clusterda::data::{ColumnSchema, SyntheticTaskSpec};
use clusterda::preprocess::{CategoricalEncoding, LabelMap, UnknownLabelPolicy, UnseenCategoryPolicy};
use clusterda::Scalar;

use crate::error::CliError;

/// Everything that determines a run, given the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub preprocess: PreprocessConfig,
    pub homogenize: HomogenizeConfig,
    pub adapt: AdaptSection,
    pub classifier: ClassifierConfig,
    /// Detectors also run on the homogenized features without adaptation.
    pub baselines: Vec<ClassifierKind>,
    pub run: RunConfig,
    /// Directory relative CSV paths are resolved against; not echoed.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskConfig::default(),
            preprocess: PreprocessConfig::default(),
            homogenize: HomogenizeConfig::default(),
            adapt: AdaptSection::default(),
            classifier: ClassifierConfig::default(),
            baselines: vec![
                ClassifierKind::Logistic,
                ClassifierKind::Knn,
                ClassifierKind::Gnb,
                ClassifierKind::Mlp,
            ],
            run: RunConfig::default(),
            base_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub name: Option<String>,
    /// Seeded synthetic pair; the data seed of run `r` is `base_seed + r`.
    pub synthetic: Option<SyntheticConfig>,
    pub csv: Option<CsvTaskConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub d_s: usize,
    pub d_t: usize,
    pub n_s: usize,
    pub n_t: usize,
    pub shift: f64,
    pub class_sep: f64,
    pub noise_dims_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let s = SyntheticTaskSpec::default();
        Self {
            d_s: s.d_s,
            d_t: s.d_t,
            n_s: s.n_s,
            n_t: s.n_t,
            shift: s.shift,
            class_sep: s.class_sep,
            noise_dims_fraction: s.noise_dims_fraction,
        }
    }
}

impl SyntheticConfig {
    pub fn spec(&self, seed: u64) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            d_s: self.d_s,
            d_t: self.d_t,
            n_s: self.n_s,
            n_t: self.n_t,
            shift: self.shift,
            class_sep: self.class_sep,
            noise_dims_fraction: self.noise_dims_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvTaskConfig {
    /// Relative paths are resolved against the config file's directory.
    pub source: PathBuf,
    pub target: PathBuf,
    pub source_schema: SchemaConfig,
    pub target_schema: SchemaConfig,
    #[serde(default)]
    pub encoding: EncodingKind,
    #[serde(default)]
    pub unseen_category: UnseenKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingKind {
    #[default]
    Ordinal,
    OneHot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnseenKind {
    #[default]
    NewCode,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub columns: Vec<String>,
    /// Omit for an unlabeled file.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub labels: LabelVocabulary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelVocabulary {
    pub canonical: BTreeMap<String, u8>,
    /// Known misspellings and their intended class.
    pub corrections: BTreeMap<String, u8>,
    pub unknown: UnknownLabelKind,
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self {
            canonical: BTreeMap::from([("0".to_string(), 0), ("1".to_string(), 1)]),
            corrections: BTreeMap::new(),
            unknown: UnknownLabelKind::Reject,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownLabelKind {
    #[default]
    Reject,
    /// Map unknown tokens to 0.
    Normal,
    /// Map unknown tokens to 1.
    Malicious,
}

impl SchemaConfig {
    pub fn to_schema(&self) -> Result<ColumnSchema, CliError> {
        let policy = match self.labels.unknown {
            UnknownLabelKind::Reject => UnknownLabelPolicy::Reject,
            UnknownLabelKind::Normal => UnknownLabelPolicy::Assign(0),
            UnknownLabelKind::Malicious => UnknownLabelPolicy::Assign(1),
        };
        let map = LabelMap::new(self.labels.canonical.clone())
            .and_then(|m| m.with_corrections(self.labels.corrections.clone()))
            .and_then(|m| m.with_unknown_policy(policy))
            .map_err(|e| CliError::Config(format!("label vocabulary: {e}")))?;
        let mut schema = ColumnSchema::new(self.columns.clone())
            .with_categorical(self.categorical.clone())
            .with_label_map(map);
        if let Some(l) = &self.label {
            schema = schema.with_label(l.clone());
        }
        Ok(schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub sigma_floor: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sigma_floor: clusterda::preprocess::DEFAULT_SIGMA_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomogenizeConfig {
    /// Shared dimension; when absent it is chosen from `variance_threshold`.
    pub d: Option<usize>,
    pub variance_threshold: f64,
}

impl Default for HomogenizeConfig {
    fn default() -> Self {
        Self {
            d: None,
            variance_threshold: clusterda::homogenize::DEFAULT_VARIANCE_THRESHOLD,
        }
    }
}

/// `"auto"` or a positive number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Fixed(f64),
    Named(String),
}

impl Default for TauSetting {
    fn default() -> Self {
        TauSetting::Named("auto".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingKind {
    #[default]
    Similarity,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptSection {
    /// Latent dimension; `min(d, 5)` when absent.
    pub m: Option<usize>,
    pub gamma: f64,
    /// Reported only; the spectral solve depends on gamma alone.
    pub lambda: f64,
    pub tau: TauSetting,
    pub k_s: Option<usize>,
    pub k_t: Option<usize>,
    pub per_target_neighbors: usize,
    pub weighting: WeightingKind,
    pub max_rounds: usize,
    pub rel_tol: f64,
    pub max_swaps: Option<usize>,
}

impl Default for AdaptSection {
    fn default() -> Self {
        let d = AdaptConfig::<f64>::default();
        Self {
            m: d.m,
            gamma: d.gamma,
            lambda: d.lambda_weight,
            tau: TauSetting::default(),
            k_s: d.k_s,
            k_t: d.k_t,
            per_target_neighbors: d.pairing.per_target_neighbors,
            weighting: WeightingKind::Similarity,
            max_rounds: d.max_rounds,
            rel_tol: d.rel_tol,
            max_swaps: d.max_swaps,
        }
    }
}

impl AdaptSection {
    pub fn to_config<T: Scalar>(&self, mode: CorrespondenceMode) -> AdaptConfig<T> {
        let tau = match self.tau {
            TauSetting::Fixed(t) => TauPolicy::Fixed(T::lit(t)),
            TauSetting::Named(_) => TauPolicy::Auto,
        };
        AdaptConfig {
            m: self.m,
            gamma: T::lit(self.gamma),
            lambda_weight: T::lit(self.lambda),
            tau,
            k_s: self.k_s,
            k_t: self.k_t,
            max_swaps: self.max_swaps,
            pairing: PairingOptions {
                per_target_neighbors: self.per_target_neighbors,
                weighting: match self.weighting {
                    WeightingKind::Similarity => PairWeighting::Similarity,
                    WeightingKind::Uniform => PairWeighting::Uniform,
                },
            },
            max_rounds: self.max_rounds,
            rel_tol: T::lit(self.rel_tol),
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Logistic,
    Mlp,
    Knn,
    Gnb,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::Mlp => "mlp",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Gnb => "gnb",
        }
    }
}

/// Detector settings; `kind` picks the adapted-feature classifier, the
/// remaining fields apply to every detector that uses them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub hidden: usize,
    pub k_neighbors: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let t = TrainConfig::<f64>::default();
        Self {
            kind: ClassifierKind::Logistic,
            epochs: t.epochs,
            lr: t.lr,
            l2: t.l2,
            hidden: 16,
            k_neighbors: 5,
        }
    }
}

impl ClassifierConfig {
    pub fn spec<T: Scalar>(&self, kind: ClassifierKind) -> ClassifierSpec<T> {
        let train = TrainConfig {
            epochs: self.epochs,
            lr: T::lit(self.lr),
            l2: T::lit(self.l2),
        };
        match kind {
            ClassifierKind::Logistic => ClassifierSpec::Logistic(train),
            ClassifierKind::Mlp => ClassifierSpec::Mlp {
                hidden: self.hidden,
                train,
            },
            ClassifierKind::Knn => ClassifierSpec::Knn { k: self.k_neighbors },
            ClassifierKind::Gnb => ClassifierSpec::Gnb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarKind {
    #[default]
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
    pub scalar: ScalarKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            base_seed: 0,
            output_dir: PathBuf::from("out"),
            scalar: ScalarKind::F64,
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    check(v > 0.0 && v.is_finite(), || {
        format!("{name} must be positive and finite, got {v}")
    })
}

fn non_negative(name: &str, v: f64) -> Result<(), CliError> {
    check(v >= 0.0 && v.is_finite(), || {
        format!("{name} must be finite and >= 0, got {v}")
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, resolves and validates a config file. Relative CSV paths are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.resolve()
    }

    /// `p` joined onto the config file's directory when relative.
    pub fn data_path(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Fills implied defaults and validates every knob.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        match (&self.task.synthetic, &self.task.csv) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "task must define either synthetic or csv, not both".into(),
                ))
            }
            (None, None) => self.task.synthetic = Some(SyntheticConfig::default()),
            _ => {}
        }
        if self.task.name.is_none() {
            self.task.name = Some(if self.task.csv.is_some() { "csv" } else { "synthetic" }.to_string());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn task_name(&self) -> &str {
        self.task.name.as_deref().unwrap_or("task")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = &self.task.synthetic {
            s.spec(0)
                .validate()
                .map_err(|e| CliError::Config(format!("task.synthetic: {e}")))?;
        }
        if let Some(c) = &self.task.csv {
            c.source_schema.to_schema()?;
            c.target_schema.to_schema()?;
            check(c.source_schema.label.is_some(), || {
                "task.csv.source_schema needs a label column".into()
            })?;
        }
        positive("preprocess.sigma_floor", self.preprocess.sigma_floor)?;
        let h = &self.homogenize;
        check(h.variance_threshold > 0.0 && h.variance_threshold <= 1.0, || {
            format!(
                "homogenize.variance_threshold must lie in (0, 1], got {}",
                h.variance_threshold
            )
        })?;
        check(h.d != Some(0), || "homogenize.d must be at least 1".into())?;
        let a = &self.adapt;
        check(a.m != Some(0), || "adapt.m must be at least 1".into())?;
        if let (Some(m), Some(d)) = (a.m, h.d) {
            check(m <= d, || format!("adapt.m = {m} exceeds homogenize.d = {d}"))?;
        }
        positive("adapt.gamma", a.gamma)?;
        non_negative("adapt.lambda", a.lambda)?;
        match &a.tau {
            TauSetting::Fixed(t) => positive("adapt.tau", *t)?,
            TauSetting::Named(s) => check(s == "auto", || {
                format!("adapt.tau must be \"auto\" or a number, got {s:?}")
            })?,
        }
        check(a.k_s != Some(0) && a.k_t != Some(0), || {
            "adapt.k_s and adapt.k_t must be at least 1".into()
        })?;
        check(a.per_target_neighbors >= 1, || {
            "adapt.per_target_neighbors must be at least 1".into()
        })?;
        check(a.max_rounds >= 1, || "adapt.max_rounds must be at least 1".into())?;
        non_negative("adapt.rel_tol", a.rel_tol)?;
        let c = &self.classifier;
        check(c.epochs >= 1, || "classifier.epochs must be at least 1".into())?;
        positive("classifier.lr", c.lr)?;
        non_negative("classifier.l2", c.l2)?;
        check(c.hidden >= 1, || "classifier.hidden must be at least 1".into())?;
        check(c.k_neighbors % 2 == 1, || {
            format!("classifier.k_neighbors must be odd, got {}", c.k_neighbors)
        })?;
        check(self.run.runs >= 1, || "run.runs must be at least 1".into())?;
        check(self.run.base_seed.checked_add(self.run.runs as u64).is_some(), || {
            "run.base_seed + run.runs overflows".into()
        })?;
        Ok(())
    }

    pub fn encoding(&self) -> (CategoricalEncoding, UnseenCategoryPolicy) {
        match &self.task.csv {
            Some(c) => (
                match c.encoding {
                    EncodingKind::Ordinal => CategoricalEncoding::Ordinal,
                    EncodingKind::OneHot => CategoricalEncoding::OneHot,
                },
                match c.unseen_category {
                    UnseenKind::NewCode => UnseenCategoryPolicy::NewCode,
                    UnseenKind::Reject => UnseenCategoryPolicy::Reject,
                },
            ),
            None => Default::default(),
        }
    }
}
