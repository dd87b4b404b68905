//! Binary classifiers trained on source features and scored on the target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{check_labels, Label};
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, FeatureMatrix};
use crate::scalar::Scalar;

const MAX_HALVINGS: usize = 30;
/// Lower bound on Gaussian naive Bayes variances.
pub const GNB_VAR_FLOOR: f64 = 1e-9;

/// A trained detector mapping feature rows to malicious-class scores.
pub trait Classifier<T: Scalar> {
    fn input_dim(&self) -> usize;

    /// Per-row score in `[0, 1]`.
    fn score_rows(&self, x: &FeatureMatrix<T>) -> Vec<T>;

    fn predict_scores(&self, x: &FeatureMatrix<T>) -> Result<Vec<T>> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        Ok(self.score_rows(x))
    }

    fn predict_labels(&self, x: &FeatureMatrix<T>) -> Result<Vec<Label>> {
        Ok(threshold_labels(&self.predict_scores(x)?))
    }
}

/// Hard labels: 1 where `score ≥ 0.5`.
pub fn threshold_labels<T: Scalar>(scores: &[T]) -> Vec<Label> {
    let half = T::lit(0.5);
    scores.iter().map(|&s| Label::from(s >= half)).collect()
}

fn check_training<T: Scalar>(x: &FeatureMatrix<T>, y: &[Label]) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    check_labels(y)?;
    let ones = y.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + eᶻ)` without overflow.
#[inline]
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

/// Log loss of logit `z` against label `y`.
#[inline]
fn logit_loss<T: Scalar>(z: T, y: Label) -> T {
    softplus(z) - if y == 1 { z } else { T::zero() }
}

fn label_value<T: Scalar>(y: Label) -> T {
    if y == 1 {
        T::one()
    } else {
        T::zero()
    }
}

/// Gradient-descent settings shared by the logistic model and the MLP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    /// Initial step of every epoch; halved until the loss does not increase.
    pub lr: T,
    pub l2: T,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: T::one(),
            l2: T::lit(1e-4),
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.lr > T::zero() && self.lr.is_finite()) {
            return Err(Error::param(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.l2 >= T::zero() && self.l2.is_finite()) {
            return Err(Error::param(format!("l2 must be >= 0, got {}", self.l2)));
        }
        Ok(())
    }
}

/// Full-batch descent with per-epoch step halving on flat parameters.
fn descend<T: Scalar, F>(params: &mut Vec<T>, cfg: &TrainConfig<T>, mut loss_grad: F) -> Result<Vec<T>>
where
    F: FnMut(&[T]) -> (T, Vec<T>),
{
    let (mut loss, mut grad) = loss_grad(params);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("initial training loss is {loss}")));
    }
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut trial = params.clone();
    for _ in 0..cfg.epochs {
        let mut step = cfg.lr;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for ((t, &p), &g) in trial.iter_mut().zip(params.iter()).zip(&grad) {
                *t = p - step * g;
            }
            let (l, _) = loss_grad(&trial);
            if l.is_finite() && l <= loss {
                accepted = true;
                break;
            }
            step *= T::lit(0.5);
        }
        if !accepted {
            curve.push(loss);
            break;
        }
        std::mem::swap(params, &mut trial);
        let (l, g) = loss_grad(params);
        loss = l;
        grad = g;
        curve.push(loss);
    }
    Ok(curve)
}

/// L2-regularized logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub l2: T,
    /// Training loss after every epoch, non-increasing.
    pub training_curve: Vec<T>,
}

/// Mean log loss plus `l2·‖w‖²/2` and its gradient `(∂w, ∂b)`.
pub fn logistic_loss_and_grad<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[Label],
    weights: &[T],
    bias: T,
    l2: T,
) -> (T, Vec<T>, T) {
    let n = T::from_count(x.rows());
    let mut loss = T::zero();
    let mut gw = vec![T::zero(); weights.len()];
    let mut gb = T::zero();
    for (row, &yi) in x.row_iter().zip(y) {
        let z = row.iter().zip(weights).map(|(&a, &w)| a * w).sum::<T>() + bias;
        loss += logit_loss(z, yi);
        let r = sigmoid(z) - label_value::<T>(yi);
        for (g, &a) in gw.iter_mut().zip(row) {
            *g += r * a;
        }
        gb += r;
    }
    let half = T::lit(0.5);
    let reg: T = weights.iter().map(|&w| w * w).sum::<T>() * l2 * half;
    for (g, &w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (loss / n + reg, gw, gb / n)
}

/// Trains from zero initialization.
pub fn train_logistic<T: Scalar>(x: &FeatureMatrix<T>, y: &[Label], cfg: &TrainConfig<T>) -> Result<LogisticModel<T>> {
    check_training(x, y)?;
    cfg.validate()?;
    let d = x.cols();
    let mut params = vec![T::zero(); d + 1];
    let curve = descend(&mut params, cfg, |p| {
        let (l, mut gw, gb) = logistic_loss_and_grad(x, y, &p[..d], p[d], cfg.l2);
        gw.push(gb);
        (l, gw)
    })?;
    Ok(LogisticModel {
        bias: params[d],
        weights: params[..d].to_vec(),
        l2: cfg.l2,
        training_curve: curve,
    })
}

impl<T: Scalar> Classifier<T> for LogisticModel<T> {
    fn input_dim(&self) -> usize {
        self.weights.len()
    }

    fn score_rows(&self, x: &FeatureMatrix<T>) -> Vec<T> {
        x.row_iter()
            .map(|r| sigmoid(r.iter().zip(&self.weights).map(|(&a, &w)| a * w).sum::<T>() + self.bias))
            .collect()
    }
}

/// Parameters of an `[m, h, 1]` network with sigmoid units.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    /// `h × m`, row `k` feeds hidden unit `k`.
    pub w1: FeatureMatrix<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: T,
}

impl<T: Scalar> MlpParams<T> {
    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn n_params(&self) -> usize {
        self.hidden() * (self.input_dim() + 2) + 1
    }

    /// Flat layout: `w1` row-major, `b1`, `w2`, `b2`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut v = self.w1.as_slice().to_vec();
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_flat(m: usize, h: usize, v: &[T]) -> Self {
        assert_eq!(v.len(), h * (m + 2) + 1);
        let (w1, rest) = v.split_at(h * m);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h);
        Self {
            w1: FeatureMatrix::from_parts(h, m, w1.to_vec()),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: rest[0],
        }
    }

    /// Uniform `(−r, r)` weights with `r = √(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn init(m: usize, h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r1 = (6.0 / (m + h) as f64).sqrt();
        let r2 = (6.0 / (h + 1) as f64).sqrt();
        let w1 = (0..h * m).map(|_| T::lit(rng.random_range(-r1..r1))).collect();
        let w2 = (0..h).map(|_| T::lit(rng.random_range(-r2..r2))).collect();
        Self {
            w1: FeatureMatrix::from_parts(h, m, w1),
            b1: vec![T::zero(); h],
            w2,
            b2: T::zero(),
        }
    }

    fn forward_row(&self, row: &[T], hidden: &mut [T]) -> T {
        for (k, a) in hidden.iter_mut().enumerate() {
            let z = self.w1.row(k).iter().zip(row).map(|(&w, &x)| w * x).sum::<T>() + self.b1[k];
            *a = sigmoid(z);
        }
        hidden.iter().zip(&self.w2).map(|(&a, &w)| a * w).sum::<T>() + self.b2
    }
}

/// Mean log loss plus `l2·(‖W1‖² + ‖w2‖²)/2` and the gradient in the flat
/// layout of [`MlpParams::to_flat`].
pub fn mlp_loss_and_grad<T: Scalar>(x: &FeatureMatrix<T>, y: &[Label], params: &MlpParams<T>, l2: T) -> (T, Vec<T>) {
    let (m, h) = (params.input_dim(), params.hidden());
    let n = T::from_count(x.rows());
    let mut g = vec![T::zero(); params.n_params()];
    let mut loss = T::zero();
    let mut hid = vec![T::zero(); h];
    let (o_b1, o_w2, o_b2) = (h * m, h * m + h, h * m + 2 * h);
    for (row, &yi) in x.row_iter().zip(y) {
        let z = params.forward_row(row, &mut hid);
        loss += logit_loss(z, yi);
        let r = sigmoid(z) - label_value::<T>(yi);
        for k in 0..h {
            g[o_w2 + k] += r * hid[k];
            let dz = r * params.w2[k] * hid[k] * (T::one() - hid[k]);
            g[o_b1 + k] += dz;
            for (j, &xj) in row.iter().enumerate() {
                g[k * m + j] += dz * xj;
            }
        }
        g[o_b2] += r;
    }
    g.iter_mut().for_each(|v| *v /= n);
    let half = T::lit(0.5);
    let mut reg = T::zero();
    for (i, &w) in params.w1.as_slice().iter().enumerate() {
        reg += w * w;
        g[i] += l2 * w;
    }
    for (k, &w) in params.w2.iter().enumerate() {
        reg += w * w;
        g[o_w2 + k] += l2 * w;
    }
    (loss / n + l2 * half * reg, g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    pub params: MlpParams<T>,
    pub seed: u64,
    pub training_curve: Vec<T>,
}

pub fn train_mlp<T: Scalar>(
    x: &FeatureMatrix<T>,
    y: &[Label],
    hidden: usize,
    cfg: &TrainConfig<T>,
    seed: u64,
) -> Result<MlpModel<T>> {
    check_training(x, y)?;
    cfg.validate()?;
    if hidden == 0 {
        return Err(Error::param("hidden width must be at least 1"));
    }
    let m = x.cols();
    let mut flat = MlpParams::<T>::init(m, hidden, seed).to_flat();
    let curve = descend(&mut flat, cfg, |p| {
        mlp_loss_and_grad(x, y, &MlpParams::from_flat(m, hidden, p), cfg.l2)
    })?;
    Ok(MlpModel {
        params: MlpParams::from_flat(m, hidden, &flat),
        seed,
        training_curve: curve,
    })
}

impl<T: Scalar> Classifier<T> for MlpModel<T> {
    fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    fn score_rows(&self, x: &FeatureMatrix<T>) -> Vec<T> {
        let mut hid = vec![T::zero(); self.params.hidden()];
        x.row_iter()
            .map(|r| sigmoid(self.params.forward_row(r, &mut hid)))
            .collect()
    }
}

/// k-nearest-neighbour detector; the score is the malicious fraction among
/// the `k` nearest training rows (lowest index first on distance ties).
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel<T> {
    pub train: FeatureMatrix<T>,
    pub labels: Vec<Label>,
    pub k: usize,
}

pub fn fit_knn<T: Scalar>(x: &FeatureMatrix<T>, y: &[Label], k: usize) -> Result<KnnModel<T>> {
    check_training(x, y)?;
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::param(format!("k_neighbors must be odd and positive, got {k}")));
    }
    if k > x.rows() {
        return Err(Error::param(format!(
            "k_neighbors = {k} exceeds the {} training rows",
            x.rows()
        )));
    }
    Ok(KnnModel {
        train: x.clone(),
        labels: y.to_vec(),
        k,
    })
}

impl<T: Scalar> Classifier<T> for KnnModel<T> {
    fn input_dim(&self) -> usize {
        self.train.cols()
    }

    fn score_rows(&self, x: &FeatureMatrix<T>) -> Vec<T> {
        let kk = T::from_count(self.k);
        let mut d: Vec<(T, usize)> = Vec::with_capacity(self.train.rows());
        x.row_iter()
            .map(|q| {
                d.clear();
                d.extend(
                    self.train
                        .row_iter()
                        .enumerate()
                        .map(|(i, r)| (squared_distance(q, r), i)),
                );
                let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1));
                if self.k < d.len() {
                    d.select_nth_unstable_by(self.k - 1, cmp);
                }
                let hits = d[..self.k].iter().filter(|&&(_, i)| self.labels[i] == 1).count();
                T::from_count(hits) / kk
            })
            .collect()
    }
}

/// Gaussian naive Bayes with per-class, per-feature variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GnbModel<T> {
    /// Indexed by class.
    pub priors: [T; 2],
    pub means: [Vec<T>; 2],
    pub variances: [Vec<T>; 2],
}

pub fn fit_gnb<T: Scalar>(x: &FeatureMatrix<T>, y: &[Label]) -> Result<GnbModel<T>> {
    check_training(x, y)?;
    let d = x.cols();
    let floor = T::lit(GNB_VAR_FLOOR);
    let mut counts = [0usize; 2];
    let mut means = [vec![T::zero(); d], vec![T::zero(); d]];
    for (row, &c) in x.row_iter().zip(y) {
        counts[c as usize] += 1;
        for (m, &v) in means[c as usize].iter_mut().zip(row) {
            *m += v;
        }
    }
    for c in 0..2 {
        let n = T::from_count(counts[c]);
        means[c].iter_mut().for_each(|m| *m /= n);
    }
    let mut variances = [vec![T::zero(); d], vec![T::zero(); d]];
    for (row, &c) in x.row_iter().zip(y) {
        let c = c as usize;
        for ((s, &v), &m) in variances[c].iter_mut().zip(row).zip(&means[c]) {
            *s += (v - m) * (v - m);
        }
    }
    for c in 0..2 {
        let n = T::from_count(counts[c]);
        variances[c].iter_mut().for_each(|s| *s = (*s / n).max(floor));
    }
    let total = T::from_count(y.len());
    Ok(GnbModel {
        priors: [T::from_count(counts[0]) / total, T::from_count(counts[1]) / total],
        means,
        variances,
    })
}

impl<T: Scalar> GnbModel<T> {
    fn log_joint(&self, c: usize, row: &[T]) -> T {
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        let half = T::lit(0.5);
        let ll: T = row
            .iter()
            .zip(&self.means[c])
            .zip(&self.variances[c])
            .map(|((&x, &m), &v)| -half * ((two_pi * v).ln() + (x - m) * (x - m) / v))
            .sum();
        self.priors[c].ln() + ll
    }
}

impl<T: Scalar> Classifier<T> for GnbModel<T> {
    fn input_dim(&self) -> usize {
        self.means[0].len()
    }

    fn score_rows(&self, x: &FeatureMatrix<T>) -> Vec<T> {
        x.row_iter()
            .map(|r| sigmoid(self.log_joint(1, r) - self.log_joint(0, r)))
            .collect()
    }
}

/// Which detector to train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierSpec<T> {
    Logistic(TrainConfig<T>),
    Mlp { hidden: usize, train: TrainConfig<T> },
    Knn { k: usize },
    Gnb,
}

impl<T> ClassifierSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Logistic(_) => "logistic",
            ClassifierSpec::Mlp { .. } => "mlp",
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::Gnb => "gnb",
        }
    }
}

/// Any trained detector.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel<T> {
    Logistic(LogisticModel<T>),
    Mlp(MlpModel<T>),
    Knn(KnnModel<T>),
    Gnb(GnbModel<T>),
}

impl<T: Scalar> TrainedModel<T> {
    fn inner(&self) -> &dyn Classifier<T> {
        match self {
            TrainedModel::Logistic(m) => m,
            TrainedModel::Mlp(m) => m,
            TrainedModel::Knn(m) => m,
            TrainedModel::Gnb(m) => m,
        }
    }
}

impl<T: Scalar> Classifier<T> for TrainedModel<T> {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn score_rows(&self, x: &FeatureMatrix<T>) -> Vec<T> {
        self.inner().score_rows(x)
    }
}

/// Trains the detector described by `spec`; `seed` only affects the MLP.
pub fn train_classifier<T: Scalar>(
    spec: &ClassifierSpec<T>,
    x: &FeatureMatrix<T>,
    y: &[Label],
    seed: u64,
) -> Result<TrainedModel<T>> {
    Ok(match spec {
        ClassifierSpec::Logistic(cfg) => TrainedModel::Logistic(train_logistic(x, y, cfg)?),
        ClassifierSpec::Mlp { hidden, train } => TrainedModel::Mlp(train_mlp(x, y, *hidden, train, seed)?),
        ClassifierSpec::Knn { k } => TrainedModel::Knn(fit_knn(x, y, *k)?),
        ClassifierSpec::Gnb => TrainedModel::Gnb(fit_gnb(x, y)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> FeatureMatrix<f64> {
        FeatureMatrix::column_vector(v).unwrap()
    }

    #[test]
    fn logistic_separable_line() {
        let x = col(&[-1.0, 1.0]);
        let m = train_logistic(&x, &[0, 1], &TrainConfig::default()).unwrap();
        let s = m.predict_scores(&x).unwrap();
        assert!(s[1] > 0.5 && s[0] < 0.5);
        assert!(m.training_curve.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn zero_model_scores_half() {
        let m = LogisticModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            l2: 0.0,
            training_curve: vec![],
        };
        let x = FeatureMatrix::from_rows(&[[1.0, -4.0], [3.0, 2.0]]).unwrap();
        assert_eq!(m.predict_scores(&x).unwrap(), vec![0.5, 0.5]);
        assert_eq!(m.predict_labels(&x).unwrap(), vec![1, 1]);
    }

    #[test]
    fn heavy_l2_shrinks_to_prior() {
        let x = col(&[-2.0, -1.0, 1.0, 2.0, 3.0]);
        let cfg = TrainConfig {
            l2: 1e6,
            ..TrainConfig::default()
        };
        let m = train_logistic(&x, &[0, 0, 1, 1, 1], &cfg).unwrap();
        assert!(m.weights[0].abs() < 1e-5);
        assert!(m.predict_scores(&x).unwrap().iter().all(|&s| s > 0.5));
    }

    #[test]
    fn single_class_rejected() {
        let x = col(&[1.0, 2.0]);
        assert!(matches!(
            train_logistic(&x, &[1, 1], &TrainConfig::default()),
            Err(Error::SingleClass)
        ));
        assert!(fit_gnb(&x, &[0, 0]).is_err());
    }

    #[test]
    fn knn_self_scores_and_odd_k() {
        let x = col(&[0.0, 1.0, 5.0, 6.0]);
        let y = [0, 0, 1, 1];
        let m = fit_knn(&x, &y, 1).unwrap();
        assert_eq!(m.predict_scores(&x).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
        assert!(fit_knn(&x, &y, 2).is_err());
        assert!(fit_knn(&x, &y, 5).is_err());
        let m = fit_knn(&x, &y, 3).unwrap();
        assert_eq!(m.predict_scores(&col(&[5.5])).unwrap(), vec![2.0 / 3.0]);
    }

    #[test]
    fn knn_counts_malicious_neighbors() {
        let x = col(&[0.0, 0.1, 0.2, 5.0, 6.0]);
        let m = fit_knn(&x, &[1, 1, 1, 0, 0], 3).unwrap();
        assert_eq!(m.predict_scores(&col(&[0.05])).unwrap(), vec![1.0]);
    }

    #[test]
    fn gnb_estimates() {
        let x = col(&[0.0, 2.0]);
        let m = fit_gnb(&x, &[0, 1]).unwrap();
        assert_eq!(m.means[0], vec![0.0]);
        assert_eq!(m.means[1], vec![2.0]);
        assert_eq!(m.priors, [0.5, 0.5]);
        assert_eq!(m.variances[0], vec![GNB_VAR_FLOOR]);
    }

    #[test]
    fn gnb_midpoint_is_half() {
        let x = col(&[-1.0, -3.0, 1.0, 3.0]);
        let m = fit_gnb(&x, &[0, 0, 1, 1]).unwrap();
        let s = m.predict_scores(&col(&[0.0])).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn mlp_same_seed_same_model() {
        let x = FeatureMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]]).unwrap();
        let y = [0, 0, 1, 1];
        let cfg = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let a = train_mlp(&x, &y, 4, &cfg, 9).unwrap();
        let b = train_mlp(&x, &y, 4, &cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params.n_params(), 4 * 2 + 4 + 4 + 1);
    }

    #[test]
    fn mlp_single_hidden_orders_scores() {
        let x = col(&[-2.0, -1.0, 1.0, 2.0]);
        let y = [0, 0, 1, 1];
        let m = train_mlp(&x, &y, 1, &TrainConfig::default(), 3).unwrap();
        let s = m.predict_scores(&x).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }
}
