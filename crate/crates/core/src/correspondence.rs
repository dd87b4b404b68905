//! Cluster similarity, cluster matching and sample-level correspondences.

use rand::Rng;

use crate::cluster::Clustering;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, FeatureMatrix};
use crate::scalar::Scalar;

/// Scale of the Gaussian medoid similarity.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TauPolicy<T> {
    /// Median of the squared medoid distances, or 1 when that median is 0.
    #[default]
    Auto,
    Fixed(T),
}

/// `S[p][q] = exp(−‖m_p − m_q‖² / τ)` over source clusters `p` and target
/// clusters `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    pub values: FeatureMatrix<T>,
    pub tau: T,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn get(&self, p: usize, q: usize) -> T {
        self.values.get(p, q)
    }

    pub fn n_source(&self) -> usize {
        self.values.rows()
    }

    pub fn n_target(&self) -> usize {
        self.values.cols()
    }
}

pub(crate) fn median<T: Scalar>(v: &[T]) -> T {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) * T::lit(0.5)
    }
}

pub fn similarity_matrix<T: Scalar>(
    source: &Clustering<T>,
    target: &Clustering<T>,
    z_s: &FeatureMatrix<T>,
    z_t: &FeatureMatrix<T>,
    tau: TauPolicy<T>,
) -> Result<SimilarityMatrix<T>> {
    if z_s.cols() != z_t.cols() {
        return Err(Error::DimensionMismatch {
            expected: z_s.cols(),
            found: z_t.cols(),
        });
    }
    if source.k() == 0 || target.k() == 0 {
        return Err(Error::param("clusterings must be non-empty"));
    }
    let (ks, kt) = (source.k(), target.k());
    let mut sq = Vec::with_capacity(ks * kt);
    for &mp in &source.medoids {
        for &mq in &target.medoids {
            sq.push(squared_distance(z_s.row(mp), z_t.row(mq)));
        }
    }
    let tau = match tau {
        TauPolicy::Fixed(t) => {
            if !(t > T::zero() && t.is_finite()) {
                return Err(Error::param(format!("tau must be positive and finite, got {t}")));
            }
            t
        }
        TauPolicy::Auto => {
            let m = median(&sq);
            if m > T::zero() {
                m
            } else {
                T::one()
            }
        }
    };
    let values = sq.into_iter().map(|d| (-d / tau).exp()).collect();
    Ok(SimilarityMatrix {
        values: FeatureMatrix::from_parts(ks, kt, values),
        tau,
    })
}

/// `pi[q]` is the source cluster matched to target cluster `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterMatching {
    pub pi: Vec<usize>,
}

/// Column-wise argmax of `S`; lowest source index wins ties. Several target
/// clusters may share one source cluster.
pub fn match_clusters<T: Scalar>(s: &SimilarityMatrix<T>) -> ClusterMatching {
    let pi = (0..s.n_target())
        .map(|q| {
            let mut best = 0;
            for p in 1..s.n_source() {
                if s.get(p, q) > s.get(best, q) {
                    best = p;
                }
            }
            best
        })
        .collect();
    ClusterMatching { pi }
}

/// One source/target correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair<T> {
    pub source: usize,
    pub target: usize,
    pub weight: T,
}

/// The correspondence set Ω, sorted by (target, source).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet<T> {
    pub pairs: Vec<Pair<T>>,
}

impl<T: Scalar> CorrespondenceSet<T> {
    /// Validates indices and weights, then sorts by (target, source).
    pub fn new(mut pairs: Vec<Pair<T>>, n_s: usize, n_t: usize) -> Result<Self> {
        for p in &pairs {
            if p.source >= n_s || p.target >= n_t {
                return Err(Error::param(format!(
                    "pair ({}, {}) out of range for n_s={n_s}, n_t={n_t}",
                    p.source, p.target
                )));
            }
            if !(p.weight >= T::zero() && p.weight.is_finite()) {
                return Err(Error::param(format!(
                    "pair weight must be finite and >= 0, got {}",
                    p.weight
                )));
            }
        }
        pairs.sort_by_key(|p| (p.target, p.source));
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn scale_weights(&self, c: T) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| Pair {
                    weight: p.weight * c,
                    ..*p
                })
                .collect(),
        }
    }
}

/// How pair weights are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairWeighting {
    /// Weight = similarity of the matched cluster pair.
    #[default]
    Similarity,
    /// Every pair weighs 1.
    Uniform,
}

/// Sample-level pairing options.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairingOptions {
    /// Source samples paired with each target sample.
    pub per_target_neighbors: usize,
    pub weighting: PairWeighting,
}

impl Default for PairingOptions {
    fn default() -> Self {
        Self {
            per_target_neighbors: 1,
            weighting: PairWeighting::Similarity,
        }
    }
}

/// Pairs each target sample with its nearest source samples in the matched
/// source cluster (all of them when the cluster is smaller than
/// `per_target_neighbors`). Distance ties go to the lower source index.
pub fn build_correspondences<T: Scalar>(
    matching: &ClusterMatching,
    similarity: &SimilarityMatrix<T>,
    source: &Clustering<T>,
    target: &Clustering<T>,
    z_s: &FeatureMatrix<T>,
    z_t: &FeatureMatrix<T>,
    options: PairingOptions,
) -> Result<CorrespondenceSet<T>> {
    let PairingOptions {
        per_target_neighbors: neighbors,
        weighting,
    } = options;
    if neighbors == 0 {
        return Err(Error::param("per_target_neighbors must be at least 1"));
    }
    if z_s.cols() != z_t.cols() {
        return Err(Error::DimensionMismatch {
            expected: z_s.cols(),
            found: z_t.cols(),
        });
    }
    if matching.pi.len() != target.k() {
        return Err(Error::DimensionMismatch {
            expected: target.k(),
            found: matching.pi.len(),
        });
    }
    if source.assignments.len() != z_s.rows() || target.assignments.len() != z_t.rows() {
        return Err(Error::param("clustering does not match its feature matrix"));
    }
    let members: Vec<Vec<usize>> = (0..source.k()).map(|p| source.members(p)).collect();
    let mut pairs = Vec::with_capacity(z_t.rows() * neighbors);
    let mut cand: Vec<(T, usize)> = Vec::new();
    for (j, &q) in target.assignments.iter().enumerate() {
        let p = *matching
            .pi
            .get(q)
            .filter(|&&p| p < source.k())
            .ok_or_else(|| Error::param(format!("target cluster {q} has no valid match")))?;
        let pool = &members[p];
        if pool.is_empty() {
            return Err(Error::Numeric(format!("matched source cluster {p} is empty")));
        }
        cand.clear();
        cand.extend(pool.iter().map(|&i| (squared_distance(z_s.row(i), z_t.row(j)), i)));
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
        let weight = match weighting {
            PairWeighting::Similarity => similarity.get(p, q),
            PairWeighting::Uniform => T::one(),
        };
        pairs.extend(cand.iter().take(neighbors).map(|&(_, i)| Pair {
            source: i,
            target: j,
            weight,
        }));
    }
    CorrespondenceSet::new(pairs, z_s.rows(), z_t.rows())
}

/// Pairs each target sample with `per_target` uniformly drawn source
/// samples (with replacement), weight 1.
pub fn random_correspondences<T: Scalar, R: Rng>(
    n_s: usize,
    n_t: usize,
    per_target: usize,
    rng: &mut R,
) -> Result<CorrespondenceSet<T>> {
    if n_s == 0 || n_t == 0 || per_target == 0 {
        return Err(Error::param("random correspondences need n_s, n_t, per_target >= 1"));
    }
    let mut pairs = Vec::with_capacity(n_t * per_target);
    for j in 0..n_t {
        for _ in 0..per_target {
            pairs.push(Pair {
                source: rng.random_range(0..n_s),
                target: j,
                weight: T::one(),
            });
        }
    }
    CorrespondenceSet::new(pairs, n_s, n_t)
}

/// `Σ_Ω w·‖h_i − h_j‖²` over already projected features.
pub fn alignment_loss<T: Scalar>(h_s: &FeatureMatrix<T>, h_t: &FeatureMatrix<T>, omega: &CorrespondenceSet<T>) -> T {
    omega
        .pairs
        .iter()
        .map(|p| p.weight * squared_distance(h_s.row(p.source), h_t.row(p.target)))
        .sum()
}
