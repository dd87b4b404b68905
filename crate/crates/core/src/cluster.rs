//! K-Medoids clustering with PAM (BUILD + SWAP).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{euclidean, FeatureMatrix};
use crate::scalar::Scalar;

/// A K-Medoids partition.
///
/// Cluster `c` is represented by sample `medoids[c]`. Every sample is
/// assigned to its nearest medoid (lowest cluster id on ties) except that a
/// medoid always belongs to its own cluster, even when another medoid is a
/// duplicate point.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<T> {
    pub medoids: Vec<usize>,
    pub assignments: Vec<usize>,
    /// Sum of Euclidean distances from each sample to its medoid.
    pub total_cost: T,
    /// Swaps performed after initialization.
    pub swaps: usize,
}

impl<T: Scalar> Clustering<T> {
    pub fn k(&self) -> usize {
        self.medoids.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &c in &self.assignments {
            s[c] += 1;
        }
        s
    }
}

/// `max(2, round(√(n/2)))`, capped at `n`.
pub fn default_k(n: usize) -> usize {
    let k = ((n as f64 / 2.0).sqrt().round() as usize).max(2);
    k.min(n)
}

/// PAM settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMedoids {
    pub k: usize,
    /// Upper bound on SWAP steps; `None` means `10·n`.
    pub max_swaps: Option<usize>,
    /// Extra runs from seeded random initial medoids; the lowest-cost
    /// result wins, with the BUILD run preferred on ties.
    pub restarts: usize,
    pub seed: u64,
}

impl KMedoids {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_swaps: None,
            restarts: 0,
            seed: 0,
        }
    }

    pub fn fit<T: Scalar>(&self, z: &FeatureMatrix<T>) -> Result<Clustering<T>> {
        let n = z.rows();
        if self.k == 0 {
            return Err(Error::param("k must be at least 1"));
        }
        if self.k > n {
            return Err(Error::param(format!("k = {} exceeds the {n} samples", self.k)));
        }
        let dist = DistanceMatrix::new(z);
        let max_swaps = self.max_swaps.unwrap_or(10 * n);
        let mut best = dist.swap(dist.build(self.k), max_swaps);
        if self.restarts > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for _ in 0..self.restarts {
                let init = sample(&mut rng, n, self.k).into_vec();
                let c = dist.swap(init, max_swaps);
                if c.total_cost < best.total_cost {
                    best = c;
                }
            }
        }
        Ok(best)
    }
}

/// Runs PAM from the deterministic BUILD initialization.
///
/// `seed` only matters for [`KMedoids::restarts`]; with this entry point
/// the result does not depend on it.
pub fn kmedoids_fit<T: Scalar>(
    z: &FeatureMatrix<T>,
    k: usize,
    seed: u64,
    max_swaps: Option<usize>,
) -> Result<Clustering<T>> {
    KMedoids {
        k,
        max_swaps,
        restarts: 0,
        seed,
    }
    .fit(z)
}

/// Total distance from every sample to its nearest listed medoid.
pub fn cluster_cost<T: Scalar>(z: &FeatureMatrix<T>, medoids: &[usize]) -> Result<T> {
    if medoids.is_empty() {
        return Err(Error::param("medoid list is empty"));
    }
    let mut seen = vec![false; z.rows()];
    for &m in medoids {
        if m >= z.rows() {
            return Err(Error::param(format!(
                "medoid index {m} out of range for {} samples",
                z.rows()
            )));
        }
        if std::mem::replace(&mut seen[m], true) {
            return Err(Error::param(format!("duplicate medoid index {m}")));
        }
    }
    Ok(z.row_iter()
        .map(|p| {
            medoids
                .iter()
                .map(|&m| euclidean(p, z.row(m)))
                .fold(T::infinity(), T::min)
        })
        .sum())
}

struct DistanceMatrix<T> {
    n: usize,
    d: Vec<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    fn new(z: &FeatureMatrix<T>) -> Self {
        let n = z.rows();
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = euclidean(z.row(i), z.row(j));
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    #[inline]
    fn row(&self, i: usize) -> &[T] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Greedy BUILD: the first medoid minimizes total distance, each next
    /// one maximizes the cost reduction. Lowest index wins ties.
    fn build(&self, k: usize) -> Vec<usize> {
        let n = self.n;
        let mut is_medoid = vec![false; n];
        let mut first = 0;
        let mut first_cost = T::infinity();
        for c in 0..n {
            let s: T = self.row(c).iter().copied().sum();
            if s < first_cost {
                first = c;
                first_cost = s;
            }
        }
        let mut medoids = vec![first];
        is_medoid[first] = true;
        let mut near: Vec<T> = self.row(first).to_vec();
        while medoids.len() < k {
            let mut best = None;
            let mut best_gain = -T::one();
            for c in (0..n).filter(|&c| !is_medoid[c]) {
                let gain: T = near
                    .iter()
                    .zip(self.row(c))
                    .map(|(&a, &b)| (a - b).max(T::zero()))
                    .sum();
                if gain > best_gain {
                    best = Some(c);
                    best_gain = gain;
                }
            }
            let c = best.expect("k <= n leaves a candidate");
            medoids.push(c);
            is_medoid[c] = true;
            for (v, &b) in near.iter_mut().zip(self.row(c)) {
                *v = v.min(b);
            }
        }
        medoids
    }

    /// Nearest and second-nearest medoid slot per sample.
    fn nearest(&self, medoids: &[usize]) -> (Vec<usize>, Vec<T>, Vec<T>) {
        let n = self.n;
        let mut slot = vec![0; n];
        let mut d1 = vec![T::infinity(); n];
        let mut d2 = vec![T::infinity(); n];
        for o in 0..n {
            for (c, &m) in medoids.iter().enumerate() {
                let v = self.d[o * n + m];
                if v < d1[o] {
                    d2[o] = d1[o];
                    d1[o] = v;
                    slot[o] = c;
                } else if v < d2[o] {
                    d2[o] = v;
                }
            }
        }
        for (c, &m) in medoids.iter().enumerate() {
            if slot[m] != c {
                // duplicate point: keep the medoid in its own cluster
                slot[m] = c;
            }
        }
        (slot, d1, d2)
    }

    /// Best-improvement SWAP.
    ///
    /// For each candidate `c`, the cost change of replacing medoid slot `i`
    /// is a term shared by all slots (points that move to `c` anyway) plus
    /// a slot-specific term (points that lose their medoid), giving the full
    /// `k × (n−k)` delta table in `O(n²)` per step. The first strictly
    /// improving minimum in (candidate, slot) order is taken.
    fn swap(&self, mut medoids: Vec<usize>, max_swaps: usize) -> Clustering<T> {
        let n = self.n;
        let k = medoids.len();
        let mut swaps = 0;
        let mut is_medoid = vec![false; n];
        for &m in &medoids {
            is_medoid[m] = true;
        }
        let mut delta = vec![T::zero(); k];
        while swaps < max_swaps {
            let (slot, d1, d2) = self.nearest(&medoids);
            let cost: T = d1.iter().copied().sum();
            let tol = T::lit(1e-12) * cost.max(T::one());
            let mut best: Option<(usize, usize)> = None;
            let mut best_delta = -tol;
            for c in (0..n).filter(|&c| !is_medoid[c]) {
                let dc = self.row(c);
                let mut shared = T::zero();
                delta.iter_mut().for_each(|v| *v = T::zero());
                for o in 0..n {
                    let doc = dc[o];
                    if doc < d1[o] {
                        shared += doc - d1[o];
                    } else {
                        delta[slot[o]] += doc.min(d2[o]) - d1[o];
                    }
                }
                for (i, &di) in delta.iter().enumerate() {
                    let total = shared + di;
                    if total < best_delta {
                        best_delta = total;
                        best = Some((c, i));
                    }
                }
            }
            let Some((c, i)) = best else { break };
            is_medoid[medoids[i]] = false;
            is_medoid[c] = true;
            medoids[i] = c;
            swaps += 1;
        }
        let (assignments, _, _) = self.nearest(&medoids);
        let total_cost = assignments
            .iter()
            .enumerate()
            .map(|(o, &c)| self.d[o * n + medoids[c]])
            .sum();
        Clustering {
            medoids,
            assignments,
            total_cost,
            swaps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(v: &[f64]) -> FeatureMatrix<f64> {
        FeatureMatrix::column_vector(v).unwrap()
    }

    #[test]
    fn two_groups_on_a_line() {
        let z = line(&[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let c = kmedoids_fit(&z, 2, 0, None).unwrap();
        let mut vals: Vec<f64> = c.medoids.iter().map(|&m| z.get(m, 0)).collect();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![1.0, 11.0]);
        assert_eq!(c.total_cost, 4.0);
    }

    #[test]
    fn single_medoid() {
        let z = line(&[0.0, 10.0, 11.0]);
        let c = kmedoids_fit(&z, 1, 0, None).unwrap();
        assert_eq!(c.medoids, vec![1]);
        assert_eq!(c.total_cost, 11.0);
    }

    #[test]
    fn k_equals_n() {
        let z = line(&[3.0, -1.0, 4.0, 1.5]);
        let c = kmedoids_fit(&z, 4, 0, None).unwrap();
        assert_eq!(c.total_cost, 0.0);
        for (i, &a) in c.assignments.iter().enumerate() {
            assert_eq!(c.medoids[a], i);
        }
    }

    #[test]
    fn duplicate_points_keep_clusters_non_empty() {
        let z = line(&[1.0, 1.0, 1.0]);
        let c = kmedoids_fit(&z, 3, 0, None).unwrap();
        assert_eq!(c.sizes(), vec![1, 1, 1]);
    }

    #[test]
    fn rejects_bad_k() {
        let z = line(&[0.0, 1.0]);
        assert!(kmedoids_fit(&z, 0, 0, None).is_err());
        assert!(kmedoids_fit(&z, 3, 0, None).is_err());
    }

    #[test]
    fn cost_helper() {
        let z = line(&[0.0, 1.0, 2.0]);
        assert_eq!(cluster_cost(&z, &[1]).unwrap(), 2.0);
        assert_eq!(cluster_cost(&z, &[0, 1, 2]).unwrap(), 0.0);
        assert!(cluster_cost(&z, &[1, 1]).is_err());
        assert!(cluster_cost(&z, &[3]).is_err());
    }

    #[test]
    fn default_k_heuristic() {
        assert_eq!(default_k(2), 2);
        assert_eq!(default_k(8), 2);
        assert_eq!(default_k(500), 16);
        assert_eq!(default_k(1), 1);
    }

    #[test]
    fn restarts_never_worse() {
        let z = FeatureMatrix::from_rows(&[
            [0.0, 0.0],
            [0.1, 0.3],
            [5.0, 5.0],
            [5.2, 4.9],
            [9.0, 0.0],
            [9.1, 0.4],
            [2.0, 8.0],
        ])
        .unwrap();
        let base = kmedoids_fit(&z, 3, 0, None).unwrap();
        let km = KMedoids {
            restarts: 5,
            seed: 11,
            ..KMedoids::new(3)
        };
        assert!(km.fit(&z).unwrap().total_cost <= base.total_cost);
    }
}
