#![allow(dead_code)]

use clusterda::{FeatureMatrix, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix<f64> {
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    FeatureMatrix::new(n, d, data).unwrap()
}

pub fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    loop {
        let y: Vec<Label> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if y.contains(&0) && y.contains(&1) {
            return y;
        }
    }
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

/// Σ over samples of the distance to the closest listed medoid.
pub fn naive_cost(z: &FeatureMatrix<f64>, medoids: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..z.rows() {
        let mut best = f64::INFINITY;
        for &m in medoids {
            best = best.min(dist(z.row(i), z.row(m)));
        }
        total += best;
    }
    total
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        subsets(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Exhaustive minimum-cost medoid set (first in lexicographic order on ties).
pub fn brute_force_medoids(z: &FeatureMatrix<f64>, k: usize) -> (Vec<usize>, f64) {
    let mut all = Vec::new();
    subsets(z.rows(), k, 0, &mut Vec::new(), &mut all);
    let mut best = (Vec::new(), f64::INFINITY);
    for s in all {
        let c = naive_cost(z, &s);
        if c < best.1 {
            best = (s, c);
        }
    }
    best
}

/// `(acc, precision, recall, f1)` by direct counting.
pub fn naive_metrics(pred: &[Label], truth: &[Label]) -> (f64, f64, f64, f64) {
    let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..pred.len() {
        if pred[i] == 1 && truth[i] == 1 {
            tp += 1;
        } else if pred[i] == 0 && truth[i] == 0 {
            tn += 1;
        } else if pred[i] == 1 {
            fp += 1;
        } else {
            fneg += 1;
        }
    }
    let acc = (tp + tn) as f64 / pred.len() as f64;
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fneg == 0 {
        0.0
    } else {
        tp as f64 / (tp + fneg) as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (acc, p, r, f1)
}

/// AUC by enumerating every positive/negative pair.
pub fn pairwise_auc(scores: &[f64], truth: &[Label]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if truth[i] == 1 && truth[j] == 0 {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Random `d × k` matrix with orthonormal columns (Gram–Schmidt).
pub fn orthonormal_frame(rng: &mut ChaCha8Rng, d: usize, k: usize) -> FeatureMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    let mut data = vec![0.0; d * k];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d {
            data[i * k + j] = c[i];
        }
    }
    FeatureMatrix::new(d, k, data).unwrap()
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Largest `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn to_nalgebra(m: &FeatureMatrix<f64>) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}
