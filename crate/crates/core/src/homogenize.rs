//! Per-domain PCA into a shared dimension.

use crate::error::{Error, Result, Stage};
use crate::linalg::symmetric_eigen;
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Default explained-variance target for choosing the shared dimension.
pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.95;

/// PCA fitted on one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    /// `d_orig × d`, orthonormal columns, largest-magnitude entry positive.
    pub basis: FeatureMatrix<T>,
    pub mean: Vec<T>,
    /// Top `d` covariance eigenvalues, non-increasing.
    pub eigenvalues: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
    /// All `d_orig` covariance eigenvalues, non-increasing.
    pub spectrum: Vec<T>,
}

impl<T: Scalar> PcaModel<T> {
    pub fn input_dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.cols()
    }

    /// `(x − mean)·basis`.
    pub fn project(&self, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        project(self, x)
    }
}

/// Population covariance `XcᵀXc / n` and the column means.
pub fn covariance<T: Scalar>(x: &FeatureMatrix<T>) -> (FeatureMatrix<T>, Vec<T>) {
    let mean = x.column_means();
    let xc = center(x, &mean);
    let n = T::from_count(x.rows());
    let mut c = xc.tr_mul(&xc);
    let d = c.cols();
    for i in 0..d {
        for j in 0..d {
            let v = c.get(i, j) / n;
            c.set(i, j, v);
        }
    }
    (c, mean)
}

fn center<T: Scalar>(x: &FeatureMatrix<T>, mean: &[T]) -> FeatureMatrix<T> {
    let mut xc = x.clone();
    for i in 0..xc.rows() {
        for (v, &m) in xc.row_mut(i).iter_mut().zip(mean) {
            *v -= m;
        }
    }
    xc
}

/// Fits a `d`-component PCA on `x` (expected to be standardized).
pub fn fit_pca<T: Scalar>(x: &FeatureMatrix<T>, d: usize) -> Result<PcaModel<T>> {
    let limit = (x.rows() - 1).min(x.cols());
    if d == 0 || d > limit {
        return Err(Error::param(format!(
            "PCA dimension must lie in [1, {limit}] for a {}x{} matrix, got {d}",
            x.rows(),
            x.cols()
        )));
    }
    let (cov, mean) = covariance(x);
    let eig = symmetric_eigen(&cov)?;
    let trace = cov.trace();
    let tol = T::lit(1e-12) * T::one().max(trace.abs());
    let mut spectrum = Vec::with_capacity(eig.values.len());
    for (i, &v) in eig.values.iter().enumerate() {
        if v < -tol {
            return Err(Error::Numeric(format!(
                "covariance eigenvalue {i} is {v}, below -{tol}; matrix is not positive semidefinite"
            )));
        }
        spectrum.push(v.max(T::zero()));
    }
    let total: T = spectrum.iter().copied().sum();
    let cols: Vec<usize> = (0..d).collect();
    let basis = eig.vectors.select_columns(&cols);
    let eigenvalues = spectrum[..d].to_vec();
    let explained_variance_ratio = eigenvalues
        .iter()
        .map(|&v| if total > T::zero() { v / total } else { T::zero() })
        .collect();
    Ok(PcaModel {
        basis,
        mean,
        eigenvalues,
        explained_variance_ratio,
        spectrum,
    })
}

pub fn project<T: Scalar>(model: &PcaModel<T>, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if x.cols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: x.cols(),
        });
    }
    Ok(center(x, &model.mean).mul(&model.basis))
}

/// Both domains projected into the same number of dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Homogenized<T> {
    pub z_s: FeatureMatrix<T>,
    pub z_t: FeatureMatrix<T>,
    pub pca_s: PcaModel<T>,
    pub pca_t: PcaModel<T>,
}

/// Fits one PCA per domain and projects each domain with its own model.
pub fn homogenize_pair<T: Scalar>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    d: usize,
) -> Result<Homogenized<T>> {
    let limit = source
        .cols()
        .min(target.cols())
        .min(source.rows() - 1)
        .min(target.rows() - 1);
    if d == 0 || d > limit {
        return Err(Error::param(format!(
            "shared dimension must lie in [1, {limit}] (d_s={}, d_t={}, n_s={}, n_t={}), got {d}",
            source.cols(),
            target.cols(),
            source.rows(),
            target.rows()
        ))
        .at(Stage::Homogenize));
    }
    let run = || -> Result<Homogenized<T>> {
        let pca_s = fit_pca(source, d)?;
        let pca_t = fit_pca(target, d)?;
        Ok(Homogenized {
            z_s: project(&pca_s, source)?,
            z_t: project(&pca_t, target)?,
            pca_s,
            pca_t,
        })
    };
    run().map_err(|e| e.at(Stage::Homogenize))
}

/// Smallest `d` whose cumulative explained variance reaches `threshold`.
fn dim_for_threshold<T: Scalar>(spectrum: &[T], threshold: T) -> usize {
    let total: T = spectrum.iter().copied().sum();
    if total <= T::zero() {
        return 1;
    }
    let mut acc = T::zero();
    for (i, &v) in spectrum.iter().enumerate() {
        acc += v;
        if acc / total >= threshold {
            return i + 1;
        }
    }
    spectrum.len()
}

/// Default shared dimension: the smallest `d` reaching `threshold` of the
/// variance in both domains, capped at `min(d_s, d_t) − 1` and at what the
/// sample counts allow, never below 1.
pub fn default_shared_dim<T: Scalar>(
    source: &FeatureMatrix<T>,
    target: &FeatureMatrix<T>,
    threshold: T,
) -> Result<usize> {
    if !(threshold > T::zero() && threshold <= T::one()) {
        return Err(Error::param(format!(
            "variance threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let run = || -> Result<usize> {
        let spec_s = symmetric_eigen(&covariance(source).0)?.values;
        let spec_t = symmetric_eigen(&covariance(target).0)?.values;
        let clamp = |v: Vec<T>| v.into_iter().map(|x| x.max(T::zero())).collect::<Vec<_>>();
        let want = dim_for_threshold(&clamp(spec_s), threshold).max(dim_for_threshold(&clamp(spec_t), threshold));
        let cap = (source.cols().min(target.cols()).saturating_sub(1))
            .min(source.rows() - 1)
            .min(target.rows() - 1)
            .max(1);
        Ok(want.min(cap).max(1))
    };
    run().map_err(|e| e.at(Stage::Homogenize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_points_rank_one() {
        let x = FeatureMatrix::from_rows(&[[-1.0, -1.0], [0.0, 0.0], [1.0, 1.0]]).unwrap();
        let m = fit_pca(&x, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.basis.get(0, 0) - h).abs() < 1e-12);
        assert!((m.basis.get(1, 0) - h).abs() < 1e-12);
        // variance along the line: projections ±√2, 0 → 4/3
        assert!((m.eigenvalues[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_row_projects_to_zero() {
        let x =
            FeatureMatrix::<f64>::from_rows(&[[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 0.0, 1.0], [2.0, 5.0, -3.0]])
                .unwrap();
        let m = fit_pca(&x, 2).unwrap();
        let mean = FeatureMatrix::from_rows(std::slice::from_ref(&m.mean)).unwrap();
        let z = m.project(&mean).unwrap();
        assert!(z.as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dimension_bounds() {
        let x = FeatureMatrix::from_rows(&[[1.0, 2.0], [3.0, 1.0], [0.0, 4.0]]).unwrap();
        assert!(fit_pca(&x, 0).is_err());
        assert!(fit_pca(&x, 3).is_err());
        let t = FeatureMatrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, 1.0, 1.0]]).unwrap();
        let err = homogenize_pair(&x, &t, 2).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Homogenize));
        assert!(homogenize_pair(&x, &t, 1).is_ok());
    }

    #[test]
    fn threshold_dimension() {
        assert_eq!(dim_for_threshold(&[5.0, 4.0, 1.0], 0.5), 1);
        assert_eq!(dim_for_threshold(&[5.0, 4.0, 1.0], 0.9), 2);
        assert_eq!(dim_for_threshold(&[5.0, 4.0, 1.0], 0.95), 3);
        assert_eq!(dim_for_threshold(&[0.0, 0.0], 0.95), 1);
    }
}
