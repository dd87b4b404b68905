//! Latent projection learning and the iterative adaptation loop.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{default_k, Clustering, KMedoids};
use crate::correspondence::{
    build_correspondences, match_clusters, random_correspondences, similarity_matrix, CorrespondenceSet,
    PairingOptions, TauPolicy,
};
use crate::error::{Error, Result, Stage};
use crate::linalg::{generalized_symmetric_eigen, symmetrize};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

/// Alignment cost and total scatter, both `d × d` and symmetric PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrices<T> {
    /// `ZᵀLZ` for the correspondence graph Laplacian `L`.
    pub k_l: FeatureMatrix<T>,
    /// `ZᵀHZ` for the centering matrix `H`.
    pub k_h: FeatureMatrix<T>,
}

/// Builds `K_L` and `K_H` over the stacked samples `Z = [Z_s; Z_t]`.
///
/// Each pair `(i, j, w)` contributes `w` to `L[i][i]` and `L[j'][j']` and
/// `−w` to `L[i][j']`, `L[j'][i]` with `j' = n_s + j`, so that
/// `tr(AᵀK_L A) = Σ w·‖Aᵀz_i − Aᵀz_j‖²`.
pub fn build_alignment_matrices<T: Scalar>(
    z_s: &FeatureMatrix<T>,
    z_t: &FeatureMatrix<T>,
    omega: &CorrespondenceSet<T>,
) -> Result<AlignmentMatrices<T>> {
    if z_s.cols() != z_t.cols() {
        return Err(Error::DimensionMismatch {
            expected: z_s.cols(),
            found: z_t.cols(),
        });
    }
    if omega.is_empty() {
        return Err(Error::param("correspondence set is empty"));
    }
    let (n_s, n_t, d) = (z_s.rows(), z_t.rows(), z_s.cols());
    let mut lap: BTreeMap<(usize, usize), T> = BTreeMap::new();
    for p in &omega.pairs {
        if p.source >= n_s || p.target >= n_t {
            return Err(Error::param(format!(
                "pair ({}, {}) out of range for n_s={n_s}, n_t={n_t}",
                p.source, p.target
            )));
        }
        let (a, b) = (p.source, n_s + p.target);
        *lap.entry((a, a)).or_insert_with(T::zero) += p.weight;
        *lap.entry((b, b)).or_insert_with(T::zero) += p.weight;
        *lap.entry((a, b)).or_insert_with(T::zero) -= p.weight;
        *lap.entry((b, a)).or_insert_with(T::zero) -= p.weight;
    }
    let row = |i: usize| if i < n_s { z_s.row(i) } else { z_t.row(i - n_s) };
    let mut k_l = FeatureMatrix::zeros(d, d);
    for (&(a, b), &w) in &lap {
        if w == T::zero() {
            continue;
        }
        let (za, zb) = (row(a), row(b));
        for (r, &zar) in za.iter().enumerate() {
            let wa = w * zar;
            for (c, &zbc) in zb.iter().enumerate() {
                let v = k_l.get(r, c) + wa * zbc;
                k_l.set(r, c, v);
            }
        }
    }

    let z = z_s.vstack(z_t)?;
    let mean = z.column_means();
    let mut zc = z;
    for i in 0..zc.rows() {
        for (v, &m) in zc.row_mut(i).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let k_h = zc.tr_mul(&zc);
    Ok(AlignmentMatrices {
        k_l: symmetrize(&k_l),
        k_h: symmetrize(&k_h),
    })
}

/// Learned projection `A` (`d × m`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel<T> {
    pub a: FeatureMatrix<T>,
    /// Generalized eigenvalues of the kept directions, non-increasing.
    pub eta: Vec<T>,
    pub gamma: T,
    /// Carried for reporting; the spectral solve does not depend on it.
    pub lambda_weight: T,
}

impl<T: Scalar> ProjectionModel<T> {
    pub fn m(&self) -> usize {
        self.a.cols()
    }

    /// `Z·A`.
    pub fn transform(&self, z: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
        z.matmul(&self.a)
    }
}

/// `K_L + γI`.
pub fn constraint_matrix<T: Scalar>(k_l: &FeatureMatrix<T>, gamma: T) -> FeatureMatrix<T> {
    let mut b = k_l.clone();
    for i in 0..b.rows() {
        let v = b.get(i, i) + gamma;
        b.set(i, i, v);
    }
    b
}

/// Top-`m` solutions of `K_H·a = η·(K_L + γI)·a`, each scaled so that
/// `aᵀ(K_L + γI)a = 1` and sign-fixed like PCA bases.
pub fn solve_projection<T: Scalar>(
    k_l: &FeatureMatrix<T>,
    k_h: &FeatureMatrix<T>,
    m: usize,
    gamma: T,
) -> Result<ProjectionModel<T>> {
    let d = k_h.rows();
    if k_h.cols() != d || k_l.rows() != d || k_l.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: k_l.rows(),
        });
    }
    if !(gamma > T::zero() && gamma.is_finite()) {
        return Err(Error::param(format!(
            "gamma must be positive and finite, got {gamma} (use a small value such as 1e-8 instead of 0)"
        )));
    }
    if m == 0 || m > d {
        return Err(Error::param(format!(
            "latent dimension m must lie in [1, {d}], got {m}"
        )));
    }
    let b = constraint_matrix(k_l, gamma);
    let eig = generalized_symmetric_eigen(k_h, &b)?;
    let cols: Vec<usize> = (0..m).collect();
    Ok(ProjectionModel {
        a: eig.vectors.select_columns(&cols),
        eta: eig.values[..m].to_vec(),
        gamma,
        lambda_weight: T::one(),
    })
}

/// `tr(AᵀMA)`.
pub fn quadratic_trace<T: Scalar>(a: &FeatureMatrix<T>, m: &FeatureMatrix<T>) -> T {
    a.tr_mul(&m.mul(a)).trace()
}

/// Where the correspondences of each round come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrespondenceMode {
    /// Cluster, match clusters, pair within matched clusters.
    #[default]
    Clustering,
    /// Each target sample paired with uniformly drawn source samples,
    /// redrawn every round from a stream seeded with `seed`.
    Random { seed: u64 },
}

/// Settings of [`adapt_iterate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptConfig<T> {
    /// Latent dimension; `None` means `min(d, 5)`.
    pub m: Option<usize>,
    pub gamma: T,
    pub lambda_weight: T,
    pub tau: TauPolicy<T>,
    /// Cluster counts; `None` uses [`default_k`].
    pub k_s: Option<usize>,
    pub k_t: Option<usize>,
    pub max_swaps: Option<usize>,
    pub pairing: PairingOptions,
    pub max_rounds: usize,
    pub rel_tol: T,
    pub mode: CorrespondenceMode,
}

impl<T: Scalar> Default for AdaptConfig<T> {
    fn default() -> Self {
        Self {
            m: None,
            gamma: T::one(),
            lambda_weight: T::one(),
            tau: TauPolicy::Auto,
            k_s: None,
            k_t: None,
            max_swaps: None,
            pairing: PairingOptions::default(),
            max_rounds: 5,
            rel_tol: T::lit(1e-3),
            mode: CorrespondenceMode::Clustering,
        }
    }
}

/// Diagnostics of one outer round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<T> {
    /// `tr(AᵀK_L A)`.
    pub l_da: T,
    /// `tr(AᵀK_H A)`.
    pub scatter: T,
    /// `l_da / scatter`.
    pub ratio: T,
    pub eta: Vec<T>,
    pub pairs: usize,
}

/// Output of [`adapt_iterate`], taken from the round with the lowest ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationResult<T> {
    pub projection: ProjectionModel<T>,
    pub h_s: FeatureMatrix<T>,
    pub h_t: FeatureMatrix<T>,
    pub omega: CorrespondenceSet<T>,
    /// Clusterings used by the selected round (clustering mode only).
    pub clusterings: Option<(Clustering<T>, Clustering<T>)>,
    pub rounds: Vec<RoundRecord<T>>,
    /// Zero-based index of the selected round.
    pub best_round: usize,
}

impl<T: Scalar> AdaptationResult<T> {
    pub fn l_da_history(&self) -> Vec<T> {
        self.rounds.iter().map(|r| r.l_da).collect()
    }

    pub fn ratio_history(&self) -> Vec<T> {
        self.rounds.iter().map(|r| r.ratio).collect()
    }
}

struct Candidate<T> {
    projection: ProjectionModel<T>,
    omega: CorrespondenceSet<T>,
    clusterings: Option<(Clustering<T>, Clustering<T>)>,
}

/// Alternates correspondence estimation and projection solving.
///
/// Round 1 clusters the homogenized features; later rounds cluster
/// `Z·A` from the previous round, while every solve uses the original `Z`.
/// Stops when the relative improvement of `tr(AᵀK_L A) / tr(AᵀK_H A)`
/// falls below `rel_tol` or after `max_rounds`, and returns the round with
/// the lowest ratio (earliest on ties). Only unlabeled geometry enters:
/// neither source nor target labels are inputs.
pub fn adapt_iterate<T: Scalar>(
    z_s: &FeatureMatrix<T>,
    z_t: &FeatureMatrix<T>,
    config: &AdaptConfig<T>,
) -> Result<AdaptationResult<T>> {
    let d = z_s.cols();
    if z_t.cols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: z_t.cols(),
        }
        .at(Stage::Alignment));
    }
    let m = config.m.unwrap_or(d.min(5));
    if m == 0 || m > d {
        return Err(Error::param(format!("latent dimension m must lie in [1, {d}], got {m}")).at(Stage::Projection));
    }
    if config.max_rounds == 0 {
        return Err(Error::param("max_rounds must be at least 1"));
    }
    if !(config.rel_tol >= T::zero()) {
        return Err(Error::param(format!("rel_tol must be >= 0, got {}", config.rel_tol)));
    }
    let (n_s, n_t) = (z_s.rows(), z_t.rows());
    let k_s = config.k_s.unwrap_or_else(|| default_k(n_s));
    let k_t = config.k_t.unwrap_or_else(|| default_k(n_t));
    let mut rng = match config.mode {
        CorrespondenceMode::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        CorrespondenceMode::Clustering => None,
    };

    let mut h_s = z_s.clone();
    let mut h_t = z_t.clone();
    let mut rounds: Vec<RoundRecord<T>> = Vec::new();
    let mut best: Option<(usize, Candidate<T>)> = None;
    let mut prev: Option<T> = None;

    for r in 0..config.max_rounds {
        let (omega, clusterings) = match rng.as_mut() {
            None => {
                let fit = |z: &FeatureMatrix<T>, k: usize| {
                    KMedoids {
                        max_swaps: config.max_swaps,
                        ..KMedoids::new(k)
                    }
                    .fit(z)
                    .map_err(|e| e.at(Stage::Cluster))
                };
                let cs = fit(&h_s, k_s)?;
                let ct = fit(&h_t, k_t)?;
                let omega = (|| {
                    let s = similarity_matrix(&cs, &ct, &h_s, &h_t, config.tau)?;
                    let pi = match_clusters(&s);
                    build_correspondences(&pi, &s, &cs, &ct, &h_s, &h_t, config.pairing)
                })()
                .map_err(|e| e.at(Stage::Correspondence))?;
                (omega, Some((cs, ct)))
            }
            Some(rng) => {
                let omega = random_correspondences(n_s, n_t, config.pairing.per_target_neighbors, rng)
                    .map_err(|e| e.at(Stage::Correspondence))?;
                (omega, None)
            }
        };
        let mats = build_alignment_matrices(z_s, z_t, &omega).map_err(|e| e.at(Stage::Alignment))?;
        let mut projection =
            solve_projection(&mats.k_l, &mats.k_h, m, config.gamma).map_err(|e| e.at(Stage::Projection))?;
        projection.lambda_weight = config.lambda_weight;

        let l_da = quadratic_trace(&projection.a, &mats.k_l);
        let scatter = quadratic_trace(&projection.a, &mats.k_h);
        let ratio = if scatter > T::zero() {
            l_da / scatter
        } else {
            T::infinity()
        };
        rounds.push(RoundRecord {
            l_da,
            scatter,
            ratio,
            eta: projection.eta.clone(),
            pairs: omega.len(),
        });

        let next_s = z_s.mul(&projection.a);
        let next_t = z_t.mul(&projection.a);
        let improved = best.as_ref().is_none_or(|(i, _)| ratio < rounds[*i].ratio);
        if improved {
            best = Some((
                r,
                Candidate {
                    projection,
                    omega,
                    clusterings,
                },
            ));
        }
        if let Some(p) = prev {
            let gain = if p == T::zero() || !p.is_finite() {
                T::zero()
            } else {
                (p - ratio) / p.abs()
            };
            if gain < config.rel_tol {
                break;
            }
        }
        prev = Some(ratio);
        h_s = next_s;
        h_t = next_t;
    }

    let (best_round, c) = best.expect("at least one round runs");
    Ok(AdaptationResult {
        h_s: z_s.mul(&c.projection.a),
        h_t: z_t.mul(&c.projection.a),
        projection: c.projection,
        omega: c.omega,
        clusterings: c.clusterings,
        rounds,
        best_round,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::{alignment_loss, Pair};

    #[test]
    fn coincident_pair_gives_zero_cost() {
        let zs = FeatureMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let zt = zs.clone();
        let omega = CorrespondenceSet::new(
            vec![Pair {
                source: 0,
                target: 0,
                weight: 1.0,
            }],
            1,
            1,
        )
        .unwrap();
        let m = build_alignment_matrices(&zs, &zt, &omega).unwrap();
        assert!(m.k_l.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_solved_pencil() {
        let kh = FeatureMatrix::<f64>::from_diagonal(&[4.0, 1.0]);
        let kl = FeatureMatrix::from_diagonal(&[1.0, 0.0]);
        let p = solve_projection(&kl, &kh, 1, 1.0).unwrap();
        assert!((p.eta[0] - 2.0).abs() < 1e-12);
        assert!((p.a.get(0, 0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(p.a.get(1, 0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pencil_keeps_coordinate_order() {
        let kh = FeatureMatrix::<f64>::identity(3);
        let kl = FeatureMatrix::zeros(3, 3);
        let p = solve_projection(&kl, &kh, 2, 1.0).unwrap();
        assert_eq!(p.eta, vec![1.0, 1.0]);
        let ata = p.a.tr_mul(&p.a);
        assert!(ata.max_abs_diff(&FeatureMatrix::identity(2)) < 1e-12);
        assert_eq!(p.a.get(0, 0), 1.0);
        assert_eq!(p.a.get(1, 1), 1.0);
    }

    #[test]
    fn rejects_bad_gamma_and_m() {
        let k = FeatureMatrix::<f64>::identity(2);
        assert!(solve_projection(&k, &k, 1, 0.0).is_err());
        assert!(solve_projection(&k, &k, 3, 1.0).is_err());
    }

    #[test]
    fn trace_matches_pair_sum() {
        let zs = FeatureMatrix::<f64>::from_rows(&[[0.3, -1.0], [2.0, 0.5], [1.0, 1.0]]).unwrap();
        let zt = FeatureMatrix::from_rows(&[[0.0, 0.2], [-1.5, 0.7], [0.4, 0.4]]).unwrap();
        let omega = CorrespondenceSet::new(
            vec![
                Pair {
                    source: 0,
                    target: 1,
                    weight: 0.5,
                },
                Pair {
                    source: 2,
                    target: 1,
                    weight: 2.0,
                },
                Pair {
                    source: 1,
                    target: 0,
                    weight: 1.0,
                },
            ],
            3,
            3,
        )
        .unwrap();
        let a = FeatureMatrix::from_rows(&[[0.7], [-0.2]]).unwrap();
        let m = build_alignment_matrices(&zs, &zt, &omega).unwrap();
        let direct = alignment_loss(&zs.mul(&a), &zt.mul(&a), &omega);
        assert!((quadratic_trace(&a, &m.k_l) - direct).abs() < 1e-12);
    }

    #[test]
    fn identical_domains_stop_after_two_rounds() {
        let z = FeatureMatrix::from_rows(&[
            [0.0, 0.1],
            [0.2, -0.1],
            [3.0, 3.1],
            [3.2, 2.9],
            [-2.0, 4.0],
            [-2.1, 4.2],
        ])
        .unwrap();
        let cfg = AdaptConfig {
            m: Some(1),
            k_s: Some(3),
            k_t: Some(3),
            ..AdaptConfig::default()
        };
        let res = adapt_iterate(&z, &z, &cfg).unwrap();
        assert_eq!(res.rounds.len(), 2);
        assert_eq!(res.rounds[0].l_da, 0.0);
        for p in &res.omega.pairs {
            assert_eq!(p.source, p.target);
        }
    }

    #[test]
    fn cluster_errors_are_tagged() {
        let z = FeatureMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let cfg = AdaptConfig {
            k_s: Some(5),
            ..AdaptConfig::default()
        };
        let err = adapt_iterate(&z, &z, &cfg).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Cluster));
    }
}
