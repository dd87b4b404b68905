//! Label correction, categorical encoding and per-domain z-scoring.

use std::collections::{BTreeMap, HashMap};

use crate::data::Label;
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Default lower bound on a feature's standard deviation before it is
/// treated as constant.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-12;

/// What to do with a label token that is neither canonical nor corrected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownLabelPolicy {
    #[default]
    Reject,
    Assign(Label),
}

/// Mapping from raw label tokens to `{0, 1}`.
///
/// Canonical tokens are the expected spellings of each class; correction
/// tokens are known-erroneous spellings that get rewritten. Only tokens
/// resolved through the correction table count as corrected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    canonical: BTreeMap<String, Label>,
    corrections: BTreeMap<String, Label>,
    unknown: UnknownLabelPolicy,
}

impl Default for LabelMap {
    /// `"0" → 0`, `"1" → 1`, everything else rejected.
    fn default() -> Self {
        Self::identity()
    }
}

impl LabelMap {
    pub fn new<I, S>(canonical: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Label)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (tok, label) in canonical {
            check_label(label)?;
            map.insert(tok.into(), label);
        }
        Ok(Self {
            canonical: map,
            corrections: BTreeMap::new(),
            unknown: UnknownLabelPolicy::Reject,
        })
    }

    pub fn identity() -> Self {
        Self::new([("0", 0), ("1", 1)]).expect("identity map is valid")
    }

    pub fn with_corrections<I, S>(mut self, corrections: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Label)>,
        S: Into<String>,
    {
        for (tok, label) in corrections {
            check_label(label)?;
            self.corrections.insert(tok.into(), label);
        }
        Ok(self)
    }

    pub fn with_unknown_policy(mut self, policy: UnknownLabelPolicy) -> Result<Self> {
        if let UnknownLabelPolicy::Assign(l) = policy {
            check_label(l)?;
        }
        self.unknown = policy;
        Ok(self)
    }

    pub fn canonical(&self) -> &BTreeMap<String, Label> {
        &self.canonical
    }

    pub fn corrections(&self) -> &BTreeMap<String, Label> {
        &self.corrections
    }

    pub fn unknown_policy(&self) -> UnknownLabelPolicy {
        self.unknown
    }

    /// Resolves one token; the flag is true when the token was corrected.
    pub fn resolve(&self, token: &str) -> Result<(Label, bool)> {
        let token = token.trim();
        if let Some(&l) = self.canonical.get(token) {
            return Ok((l, false));
        }
        if let Some(&l) = self.corrections.get(token) {
            return Ok((l, true));
        }
        match self.unknown {
            UnknownLabelPolicy::Reject => Err(Error::UnknownLabel {
                token: token.to_string(),
            }),
            UnknownLabelPolicy::Assign(l) => Ok((l, true)),
        }
    }
}

fn check_label(l: Label) -> Result<()> {
    if l > 1 {
        Err(Error::InvalidLabel(l))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectedLabels {
    pub labels: Vec<Label>,
    pub corrected: usize,
}

/// Maps raw label tokens to `{0,1}` and counts how many needed correcting.
pub fn correct_labels<S: AsRef<str>>(raw: &[S], map: &LabelMap) -> Result<CorrectedLabels> {
    let mut labels = Vec::with_capacity(raw.len());
    let mut corrected = 0;
    for tok in raw {
        let (l, fixed) = map.resolve(tok.as_ref())?;
        corrected += usize::from(fixed);
        labels.push(l);
    }
    Ok(CorrectedLabels { labels, corrected })
}

/// Per-feature mean and standard deviation fitted on one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizerModel<T> {
    mean: Vec<T>,
    sigma: Vec<T>,
    divisor: Vec<T>,
    sigma_floor: T,
}

impl<T: Scalar> StandardizerModel<T> {
    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    /// Population standard deviations.
    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    /// Divisors actually applied: `sigma`, or 1 where `sigma < sigma_floor`.
    pub fn divisor(&self) -> &[T] {
        &self.divisor
    }

    pub fn sigma_floor(&self) -> T {
        self.sigma_floor
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Builds a model from explicit parameters.
    pub fn from_parts(mean: Vec<T>, divisor: Vec<T>) -> Result<Self> {
        if mean.len() != divisor.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: divisor.len(),
            });
        }
        if mean.is_empty() || divisor.iter().any(|&d| !(d > T::zero()) || !d.is_finite()) {
            return Err(Error::param("divisors must be finite and positive"));
        }
        Ok(Self {
            sigma: divisor.clone(),
            mean,
            divisor,
            sigma_floor: T::zero(),
        })
    }

    pub fn apply(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        apply_standardizer(self, x)
    }
}

/// Fits column means and population standard deviations.
pub fn fit_standardizer<T: Scalar>(x: &FeatureMatrix<T>, sigma_floor: T) -> Result<StandardizerModel<T>> {
    if x.rows() < 2 {
        return Err(Error::param("standardization needs at least 2 rows"));
    }
    if !(sigma_floor >= T::zero()) {
        return Err(Error::param("sigma floor must be non-negative"));
    }
    let mean = x.column_means();
    let mut var = vec![T::zero(); x.cols()];
    for r in x.row_iter() {
        for ((v, &xi), &m) in var.iter_mut().zip(r).zip(&mean) {
            let d = xi - m;
            *v += d * d;
        }
    }
    let n = T::from_count(x.rows());
    let sigma: Vec<T> = var.into_iter().map(|v| (v / n).sqrt()).collect();
    let divisor = sigma
        .iter()
        .map(|&s| if s >= sigma_floor && s > T::zero() { s } else { T::one() })
        .collect();
    Ok(StandardizerModel {
        mean,
        sigma,
        divisor,
        sigma_floor,
    })
}

pub fn apply_standardizer<T: Scalar>(model: &StandardizerModel<T>, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if x.cols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.cols(),
        });
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for ((v, &m), &d) in out.row_mut(i).iter_mut().zip(&model.mean).zip(&model.divisor) {
            *v = (*v - m) / d;
        }
    }
    Ok(out)
}

/// Fit-and-apply convenience used for each domain separately.
pub fn standardize<T: Scalar>(
    x: &FeatureMatrix<T>,
    sigma_floor: T,
) -> Result<(FeatureMatrix<T>, StandardizerModel<T>)> {
    let model = fit_standardizer(x, sigma_floor)?;
    let z = apply_standardizer(&model, x)?;
    Ok((z, model))
}

/// How unseen tokens are handled when reusing a fitted encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnseenCategoryPolicy {
    /// Append the token with the next free code.
    #[default]
    NewCode,
    Reject,
}

/// How encoded categorical columns enter the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CategoricalEncoding {
    /// One column of integer codes per categorical attribute.
    #[default]
    Ordinal,
    /// One indicator column per (attribute, token) pair.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct ColumnCodes {
    name: String,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl ColumnCodes {
    fn code(&mut self, token: &str, policy: UnseenCategoryPolicy, grow: bool) -> Result<usize> {
        if let Some(&c) = self.index.get(token) {
            return Ok(c);
        }
        if !grow && policy == UnseenCategoryPolicy::Reject {
            return Err(Error::UnknownCategory {
                column: self.name.clone(),
                token: token.to_string(),
            });
        }
        let c = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), c);
        Ok(c)
    }
}

/// Per-column token → code tables in first-appearance order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CategoryEncoder {
    columns: Vec<ColumnCodes>,
}

impl CategoryEncoder {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_name(&self, col: usize) -> &str {
        &self.columns[col].name
    }

    /// Tokens of one column, indexed by code.
    pub fn tokens(&self, col: usize) -> &[String] {
        &self.columns[col].tokens
    }

    pub fn encode(&self, col: usize, token: &str) -> Option<usize> {
        self.columns.get(col)?.index.get(token).copied()
    }

    pub fn decode(&self, col: usize, code: usize) -> Option<&str> {
        self.columns.get(col)?.tokens.get(code).map(String::as_str)
    }
}

/// A categorical attribute as read from disk: its name and raw tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawColumn {
    pub name: String,
    pub tokens: Vec<String>,
}

/// Integer-codes each raw column.
///
/// With `encoder == None` a fresh encoder is fitted. With an existing
/// encoder, known tokens keep their codes and unseen tokens follow
/// `policy`. Returns one code vector per input column.
pub fn encode_categoricals(
    columns: &[RawColumn],
    encoder: Option<&CategoryEncoder>,
    policy: UnseenCategoryPolicy,
) -> Result<(Vec<Vec<usize>>, CategoryEncoder)> {
    let fitting = encoder.is_none();
    let mut enc = match encoder {
        Some(e) => {
            if e.n_columns() != columns.len() {
                return Err(Error::DimensionMismatch {
                    expected: e.n_columns(),
                    found: columns.len(),
                });
            }
            e.clone()
        }
        None => CategoryEncoder {
            columns: columns
                .iter()
                .map(|c| ColumnCodes {
                    name: c.name.clone(),
                    ..Default::default()
                })
                .collect(),
        },
    };
    let mut out = Vec::with_capacity(columns.len());
    for (col, codes) in columns.iter().zip(enc.columns.iter_mut()) {
        let v = col
            .tokens
            .iter()
            .map(|t| codes.code(t, policy, fitting))
            .collect::<Result<Vec<_>>>()?;
        out.push(v);
    }
    Ok((out, enc))
}

/// Expands code vectors into numeric feature columns.
pub fn codes_to_features<T: Scalar>(
    codes: &[Vec<usize>],
    encoder: &CategoryEncoder,
    encoding: CategoricalEncoding,
) -> Vec<(String, Vec<T>)> {
    let mut out = Vec::new();
    for (col, c) in codes.iter().enumerate() {
        let name = encoder.column_name(col);
        match encoding {
            CategoricalEncoding::Ordinal => {
                out.push((name.to_string(), c.iter().map(|&v| T::from_count(v)).collect()));
            }
            CategoricalEncoding::OneHot => {
                for (code, tok) in encoder.tokens(col).iter().enumerate() {
                    let ind = c
                        .iter()
                        .map(|&v| if v == code { T::one() } else { T::zero() })
                        .collect();
                    out.push((format!("{name}={tok}"), ind));
                }
            }
        }
    }
    out
}
