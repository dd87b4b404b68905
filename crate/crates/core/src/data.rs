//! Dataset containers, CSV ingestion and the synthetic two-domain generator.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::preprocess::{
    codes_to_features, encode_categoricals, CategoricalEncoding, CategoryEncoder, CorrectedLabels, LabelMap, RawColumn,
    UnseenCategoryPolicy,
};
use crate::scalar::Scalar;

/// Class label: 0 = normal, 1 = malicious.
pub type Label = u8;

pub(crate) fn check_labels(labels: &[Label]) -> Result<()> {
    match labels.iter().find(|&&l| l > 1) {
        Some(&l) => Err(Error::InvalidLabel(l)),
        None => Ok(()),
    }
}

/// Feature matrix with one binary label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    features: FeatureMatrix<T>,
    labels: Vec<Label>,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(features: FeatureMatrix<T>, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                found: labels.len(),
            });
        }
        check_labels(&labels)?;
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &FeatureMatrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn into_parts(self) -> (FeatureMatrix<T>, Vec<Label>) {
        (self.features, self.labels)
    }
}

/// One transfer task: a labeled source domain and an unlabeled target.
///
/// The target ground truth is kept apart from the target features; the
/// adaptation routines take plain feature matrices and never see it.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair<T> {
    pub task_name: String,
    pub source: LabeledDataset<T>,
    pub target_features: FeatureMatrix<T>,
    target_truth: Option<Vec<Label>>,
}

impl<T: Scalar> DomainPair<T> {
    pub fn new(
        task_name: impl Into<String>,
        source: LabeledDataset<T>,
        target_features: FeatureMatrix<T>,
        target_truth: Option<Vec<Label>>,
    ) -> Result<Self> {
        if let Some(t) = &target_truth {
            if t.len() != target_features.rows() {
                return Err(Error::DimensionMismatch {
                    expected: target_features.rows(),
                    found: t.len(),
                });
            }
            check_labels(t)?;
        }
        Ok(Self {
            task_name: task_name.into(),
            source,
            target_features,
            target_truth,
        })
    }

    /// Held-out target labels, for evaluation only.
    pub fn target_truth(&self) -> Option<&[Label]> {
        self.target_truth.as_deref()
    }
}

/// Column layout expected in a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSchema {
    /// Exact header, in file order.
    pub columns: Vec<String>,
    /// Label column name; `None` for unlabeled files.
    pub label: Option<String>,
    /// Columns holding category tokens rather than numbers.
    pub categorical: Vec<String>,
    pub label_map: LabelMap,
}

impl ColumnSchema {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            label: None,
            categorical: Vec::new(),
            label_map: LabelMap::identity(),
        }
    }

    pub fn with_label(mut self, name: impl Into<String>) -> Self {
        self.label = Some(name.into());
        self
    }

    pub fn with_categorical<S: Into<String>>(mut self, names: impl IntoIterator<Item = S>) -> Self {
        self.categorical = names.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_label_map(mut self, map: LabelMap) -> Self {
        self.label_map = map;
        self
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::param(format!("duplicate column {c:?} in schema")));
            }
        }
        let known = |n: &String| self.columns.contains(n);
        if let Some(l) = &self.label {
            if !known(l) {
                return Err(Error::param(format!("label column {l:?} not in schema")));
            }
            if self.categorical.contains(l) {
                return Err(Error::param(format!("label column {l:?} listed as categorical")));
            }
        }
        if let Some(c) = self.categorical.iter().find(|c| !known(c)) {
            return Err(Error::param(format!("categorical column {c:?} not in schema")));
        }
        let n_features = self.columns.len() - usize::from(self.label.is_some());
        if n_features == 0 {
            return Err(Error::param("schema has no feature columns"));
        }
        Ok(())
    }
}

/// Feature column as loaded, before categorical encoding.
#[derive(Debug, Clone, PartialEq)]
pub enum TableColumn<T> {
    Numeric { name: String, values: Vec<T> },
    Categorical(RawColumn),
}

impl<T> TableColumn<T> {
    pub fn name(&self) -> &str {
        match self {
            TableColumn::Numeric { name, .. } => name,
            TableColumn::Categorical(c) => &c.name,
        }
    }
}

/// Parsed CSV contents with categorical columns still as raw tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable<T> {
    /// Feature columns in file order (label column excluded).
    pub columns: Vec<TableColumn<T>>,
    pub labels: Option<CorrectedLabels>,
    pub n_rows: usize,
    /// Rows dropped for unparseable or non-finite numeric cells.
    pub dropped: usize,
}

/// Numeric view of a table after categorical encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTable<T> {
    pub feature_names: Vec<String>,
    pub features: FeatureMatrix<T>,
    pub encoder: CategoryEncoder,
}

impl<T: Scalar> CsvTable<T> {
    /// Encodes categorical columns and assembles the feature matrix.
    ///
    /// Ordinal encoding keeps file column order; one-hot columns replace
    /// their source column in place.
    pub fn encode(
        &self,
        encoder: Option<&CategoryEncoder>,
        policy: UnseenCategoryPolicy,
        encoding: CategoricalEncoding,
    ) -> Result<EncodedTable<T>> {
        let raw: Vec<RawColumn> = self
            .columns
            .iter()
            .filter_map(|c| match c {
                TableColumn::Categorical(r) => Some(r.clone()),
                TableColumn::Numeric { .. } => None,
            })
            .collect();
        let (codes, encoder) = encode_categoricals(&raw, encoder, policy)?;
        let mut expanded = codes_to_features::<T>(&codes, &encoder, encoding).into_iter();
        let mut names = Vec::new();
        let mut cols: Vec<Vec<T>> = Vec::new();
        let mut cat = 0;
        for c in &self.columns {
            match c {
                TableColumn::Numeric { name, values } => {
                    names.push(name.clone());
                    cols.push(values.clone());
                }
                TableColumn::Categorical(_) => {
                    let width = match encoding {
                        CategoricalEncoding::Ordinal => 1,
                        CategoricalEncoding::OneHot => encoder.tokens(cat).len(),
                    };
                    for (name, values) in expanded.by_ref().take(width) {
                        names.push(name);
                        cols.push(values);
                    }
                    cat += 1;
                }
            }
        }
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            data.extend(cols.iter().map(|c| c[i]));
        }
        let features = FeatureMatrix::new(self.n_rows, cols.len(), data)?;
        Ok(EncodedTable {
            feature_names: names,
            features,
            encoder,
        })
    }
}

/// Reads a CSV file according to `schema`.
///
/// The header must match `schema.columns` exactly. A row whose numeric
/// cell does not parse to a finite number is dropped and counted. Label
/// tokens are resolved through the schema's label map; an unresolvable
/// token in a kept row is an error.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<CsvTable<T>> {
    let path = path.as_ref();
    schema.validate()?;
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema).map_err(|e| match e {
        Error::Csv { message, .. } => Error::Csv {
            path: path.to_path_buf(),
            message,
        },
        e => e,
    })
}

/// [`load_csv`] over any reader.
pub fn read_csv<T: Scalar, R: std::io::Read>(reader: R, schema: &ColumnSchema) -> Result<CsvTable<T>> {
    schema.validate()?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: Default::default(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header != schema.columns {
        return Err(Error::SchemaMismatch {
            expected: schema.columns.clone(),
            found: header,
        });
    }

    let label_pos = schema.label.as_ref().and_then(|l| header.iter().position(|h| h == l));
    let is_cat: Vec<bool> = header.iter().map(|h| schema.categorical.contains(h)).collect();

    let feature_pos: Vec<usize> = (0..header.len()).filter(|&i| Some(i) != label_pos).collect();
    let mut numeric: Vec<Vec<T>> = vec![Vec::new(); feature_pos.len()];
    let mut tokens: Vec<Vec<String>> = vec![Vec::new(); feature_pos.len()];
    let mut raw_labels = Vec::new();
    let mut dropped = 0;
    let mut n_rows = 0;
    let mut parsed: Vec<T> = Vec::with_capacity(feature_pos.len());

    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        parsed.clear();
        let ok = feature_pos.iter().all(|&p| {
            if is_cat[p] {
                return true;
            }
            match rec[p].parse::<T>() {
                Ok(v) if v.is_finite() => {
                    parsed.push(v);
                    true
                }
                _ => false,
            }
        });
        if !ok {
            dropped += 1;
            continue;
        }
        let mut num = parsed.iter();
        for (slot, &p) in feature_pos.iter().enumerate() {
            if is_cat[p] {
                tokens[slot].push(rec[p].to_string());
            } else {
                numeric[slot].push(*num.next().expect("parsed value per numeric cell"));
            }
        }
        if let Some(lp) = label_pos {
            raw_labels.push(rec[lp].to_string());
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::NoUsableRows { dropped });
    }

    let labels = match label_pos {
        Some(_) => Some(crate::preprocess::correct_labels(&raw_labels, &schema.label_map)?),
        None => None,
    };
    let columns = feature_pos
        .iter()
        .enumerate()
        .map(|(slot, &p)| {
            let name = header[p].clone();
            if is_cat[p] {
                TableColumn::Categorical(RawColumn {
                    name,
                    tokens: std::mem::take(&mut tokens[slot]),
                })
            } else {
                TableColumn::Numeric {
                    name,
                    values: std::mem::take(&mut numeric[slot]),
                }
            }
        })
        .collect();
    Ok(CsvTable {
        columns,
        labels,
        n_rows,
        dropped,
    })
}

/// Writes a numeric matrix (and optional trailing label column) as CSV.
///
/// Values are written with the shortest representation that parses back
/// to the same number, so a load of the output reproduces `x` exactly.
pub fn write_csv<T: Scalar, W: std::io::Write>(
    writer: W,
    names: &[String],
    x: &FeatureMatrix<T>,
    labels: Option<(&str, &[Label])>,
) -> Result<()> {
    if names.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            found: names.len(),
        });
    }
    if let Some((_, l)) = labels {
        if l.len() != x.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                found: l.len(),
            });
        }
    }
    let csv_err = |e: csv::Error| Error::Csv {
        path: Default::default(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    if let Some((name, _)) = labels {
        header.push(name);
    }
    w.write_record(&header).map_err(csv_err)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for (i, row) in x.row_iter().enumerate() {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        if let Some((_, l)) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv {
        path: Default::default(),
        message: e.to_string(),
    })
}

/// [`write_csv`] to a file path.
pub fn write_csv_file<T: Scalar>(
    path: impl AsRef<Path>,
    names: &[String],
    x: &FeatureMatrix<T>,
    labels: Option<(&str, &[Label])>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(std::io::BufWriter::new(file), names, x, labels).map_err(|e| match e {
        Error::Csv { message, .. } => Error::Csv {
            path: path.to_path_buf(),
            message,
        },
        e => e,
    })
}

/// Default feature names `f1..fd`.
pub fn default_feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("f{i}")).collect()
}

/// Parameters of a synthetic source/target pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTaskSpec {
    pub d_s: usize,
    pub d_t: usize,
    pub n_s: usize,
    pub n_t: usize,
    /// Displacement of the target's malicious class along the clean latent axis.
    pub shift: f64,
    pub class_sep: f64,
    pub noise_dims_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            d_s: 8,
            d_t: 6,
            n_s: 500,
            n_t: 500,
            shift: 3.0,
            class_sep: 4.0,
            noise_dims_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_s < 4 || self.n_t < 4 {
            return Err(Error::param(format!(
                "synthetic sample counts must be >= 4, got n_s={} n_t={}",
                self.n_s, self.n_t
            )));
        }
        if self.d_s < 2 || self.d_t < 2 {
            return Err(Error::param(format!(
                "synthetic dimensions must be >= 2, got d_s={} d_t={}",
                self.d_s, self.d_t
            )));
        }
        if !(self.shift.is_finite() && self.shift >= 0.0) {
            return Err(Error::param(format!(
                "shift must be finite and >= 0, got {}",
                self.shift
            )));
        }
        if !(self.class_sep.is_finite() && self.class_sep > 0.0) {
            return Err(Error::param(format!(
                "class_sep must be finite and > 0, got {}",
                self.class_sep
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_dims_fraction) {
            return Err(Error::param(format!(
                "noise_dims_fraction must lie in [0, 1], got {}",
                self.noise_dims_fraction
            )));
        }
        Ok(())
    }
}

// Within-class covariance is I + KAPPA²·vvᵀ with v at angle NUISANCE_ANGLE,
// so each class is an elongated cloud whose long axis leans across the
// class axis (1, CLASS_AXIS_TILT).
const KAPPA: f64 = 2.0;
const NUISANCE_ANGLE: f64 = -0.5;
const CLASS_AXIS_TILT: f64 = 0.3;
const EMBED_NOISE: f64 = 0.3;

/// Draws a seeded source/target pair.
///
/// Both domains share a 2-D latent structure: two Gaussian classes whose
/// means sit `class_sep` apart. In the target, the malicious class is moved
/// by `shift` along the second latent axis. Each domain embeds the latent
/// plane into its signal dimensions through its own seeded map with
/// orthonormal, non-negative columns (disjoint supports) and adds a little
/// isotropic noise; the remaining `noise_dims_fraction` of dimensions are
/// pure standard normal noise.
///
/// All draws come from one ChaCha8 stream seeded with `spec.seed` and are
/// made in `f64`, so the output is reproducible for both scalar types.
pub fn generate_synthetic_pair<T: Scalar>(spec: &SyntheticTaskSpec) -> Result<DomainPair<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (vc, vs) = (NUISANCE_ANGLE.cos(), NUISANCE_ANGLE.sin());
    // Cholesky factor of I + KAPPA²·vvᵀ.
    let k2 = KAPPA * KAPPA;
    let c00 = 1.0 + k2 * vc * vc;
    let c01 = k2 * vc * vs;
    let c11 = 1.0 + k2 * vs * vs;
    let l00 = c00.sqrt();
    let l10 = c01 / l00;
    let l11 = (c11 - l10 * l10).sqrt();
    let un = (1.0 + CLASS_AXIS_TILT * CLASS_AXIS_TILT).sqrt();
    let u = [1.0 / un, CLASS_AXIS_TILT / un];

    let mut domain = |d: usize, n: usize, shift: f64| -> (FeatureMatrix<T>, Vec<Label>) {
        let mut labels: Vec<Label> = (0..n).map(|i| (i % 2) as Label).collect();
        labels.shuffle(&mut rng);
        let half = spec.class_sep / 2.0;
        let latent: Vec<[f64; 2]> = labels
            .iter()
            .map(|&y| {
                let g0: f64 = rng.sample(StandardNormal);
                let g1: f64 = rng.sample(StandardNormal);
                let s = if y == 1 { 1.0 } else { -1.0 };
                let mut p = [l00 * g0 + s * half * u[0], l10 * g0 + l11 * g1 + s * half * u[1]];
                if y == 1 {
                    p[1] -= shift;
                }
                p
            })
            .collect();
        let n_noise = (spec.noise_dims_fraction * d as f64).round() as usize;
        let n_signal = d - n_noise.min(d);
        let q = positive_embedding(&mut rng, n_signal);
        let mut data = vec![0.0f64; n * d];
        for (i, p) in latent.iter().enumerate() {
            let row = &mut data[i * d..(i + 1) * d];
            for (k, cell) in row.iter_mut().enumerate() {
                *cell = if k < n_signal {
                    let e: f64 = rng.sample(StandardNormal);
                    q[k][0] * p[0] + q[k][1] * p[1] + EMBED_NOISE * e
                } else {
                    rng.sample(StandardNormal)
                };
            }
        }
        let data = data.into_iter().map(T::lit).collect();
        (FeatureMatrix::from_parts(n, d, data), labels)
    };

    let (xs, ys) = domain(spec.d_s, spec.n_s, 0.0);
    let (xt, yt) = domain(spec.d_t, spec.n_t, spec.shift);
    DomainPair::new(
        format!("synthetic(seed={})", spec.seed),
        LabeledDataset::new(xs, ys)?,
        xt,
        Some(yt),
    )
}

/// `d × 2` map with orthonormal non-negative columns: the rows are split
/// into two disjoint random groups, each carrying positive weights.
fn positive_embedding<R: Rng>(rng: &mut R, d: usize) -> Vec<[f64; 2]> {
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(rng);
    let first = d.div_ceil(2);
    let mut q = vec![[0.0; 2]; d];
    for (c, group) in [&perm[..first], &perm[first..]].into_iter().enumerate() {
        let w: Vec<f64> = group.iter().map(|_| rng.random_range(0.5..1.5)).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (&row, &wi) in group.iter().zip(&w) {
            q[row][c] = wi / norm;
        }
    }
    q
}
