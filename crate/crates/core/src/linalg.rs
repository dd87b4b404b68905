//! Dense symmetric eigensolvers.
//!
//! The standard problem is solved with cyclic Jacobi rotations, which are
//! slow for large matrices but accurate to working precision and fully
//! deterministic. Every dimension handled here is a feature count (tens at
//! most), so accuracy wins over asymptotic speed.

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues, non-increasing.
    pub values: Vec<T>,
    /// Eigenvectors stored as columns, in the order of `values`.
    pub vectors: FeatureMatrix<T>,
}

/// Flips each column so its entry of largest magnitude is positive.
/// Ties are decided by the lowest row index.
pub fn fix_column_signs<T: Scalar>(m: &mut FeatureMatrix<T>) {
    for j in 0..m.cols() {
        let mut best = 0;
        let mut best_abs = T::zero();
        for i in 0..m.rows() {
            let a = m.get(i, j).abs();
            if a > best_abs {
                best = i;
                best_abs = a;
            }
        }
        if m.get(best, j) < T::zero() {
            for i in 0..m.rows() {
                let v = m.get(i, j);
                m.set(i, j, -v);
            }
        }
    }
}

fn off_diagonal_norm<T: Scalar>(a: &FeatureMatrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a.get(i, j);
            s += v * v;
        }
    }
    (s + s).sqrt()
}

/// Eigenvalues and orthonormal eigenvectors of a symmetric matrix.
///
/// Output is sorted by non-increasing eigenvalue (stable with respect to
/// the diagonal position for exact ties) and column signs follow
/// [`fix_column_signs`], so repeated calls on the same input are
/// bit-identical.
pub fn symmetric_eigen<T: Scalar>(a: &FeatureMatrix<T>) -> Result<SymmetricEigen<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.cols(),
        });
    }
    let scale = a.frobenius_norm();
    if !scale.is_finite() {
        return Err(Error::Numeric("eigensolve input is not finite".into()));
    }
    let sym_tol = scale * T::epsilon() * T::lit(64.0);
    if !a.is_symmetric(sym_tol) {
        return Err(Error::Numeric("eigensolve input is not symmetric".into()));
    }

    let mut m = a.clone();
    let mut v = FeatureMatrix::identity(n);
    let tol = scale * T::epsilon();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&m);
        if off <= tol || off == T::zero() {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&m);
        if off > tol * T::lit(1e3) {
            return Err(Error::Numeric(format!(
                "Jacobi eigensolve did not converge after {MAX_SWEEPS} sweeps \
                 (off-diagonal norm {off}, matrix norm {scale})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(j, j)
            .partial_cmp(&m.get(i, i))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = v.select_columns(&order);
    fix_column_signs(&mut vectors);
    Ok(SymmetricEigen { values, vectors })
}

/// One Jacobi rotation annihilating `m[p][q]`.
fn rotate<T: Scalar>(m: &mut FeatureMatrix<T>, v: &mut FeatureMatrix<T>, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == T::zero() {
        return;
    }
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let two = T::lit(2.0);
    let theta = (aqq - app) / (two * apq);
    let t = if theta.is_infinite() {
        T::zero()
    } else {
        let sign = if theta >= T::zero() { T::one() } else { -T::one() };
        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
    };
    if t == T::zero() {
        m.set(p, q, T::zero());
        m.set(q, p, T::zero());
        return;
    }
    let c = T::one() / (t * t + T::one()).sqrt();
    let s = t * c;
    let n = m.rows();
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        let new_kp = c * mkp - s * mkq;
        let new_kq = s * mkp + c * mkq;
        m.set(k, p, new_kp);
        m.set(p, k, new_kp);
        m.set(k, q, new_kq);
        m.set(q, k, new_kq);
    }
    m.set(p, p, app - t * apq);
    m.set(q, q, aqq + t * apq);
    m.set(p, q, T::zero());
    m.set(q, p, T::zero());
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Lower-triangular Cholesky factor `L` with `a = L·Lᵀ`.
pub fn cholesky<T: Scalar>(a: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: a.cols(),
        });
    }
    let mut l = FeatureMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            let v = l.get(j, k);
            d -= v * v;
        }
        if !(d > T::zero()) {
            return Err(Error::Numeric(format!(
                "matrix is not positive definite (pivot {j} = {d})"
            )));
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// Solves `L·X = B` for lower-triangular `L`.
fn solve_lower<T: Scalar>(l: &FeatureMatrix<T>, b: &FeatureMatrix<T>) -> FeatureMatrix<T> {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x.get(i, c);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    x
}

/// Solves `Lᵀ·X = B` for lower-triangular `L`.
fn solve_lower_transpose<T: Scalar>(l: &FeatureMatrix<T>, b: &FeatureMatrix<T>) -> FeatureMatrix<T> {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in (0..n).rev() {
            let mut s = x.get(i, c);
            for k in (i + 1)..n {
                s -= l.get(k, i) * x.get(k, c);
            }
            x.set(i, c, s / l.get(i, i));
        }
    }
    x
}

/// Solution of the symmetric-definite pencil `A·x = η·B·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedEigen<T> {
    /// Eigenvalues η, non-increasing.
    pub values: Vec<T>,
    /// Eigenvectors as columns, each normalised so that `xᵀ·B·x = 1`.
    pub vectors: FeatureMatrix<T>,
}

/// Solves `A·x = η·B·x` for symmetric `A` and symmetric positive definite `B`.
///
/// Reduces to a standard problem through the Cholesky factor of `B`:
/// `C = L⁻¹·A·L⁻ᵀ`, `x = L⁻ᵀ·y`.
pub fn generalized_symmetric_eigen<T: Scalar>(
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
) -> Result<GeneralizedEigen<T>> {
    let n = a.rows();
    if a.cols() != n || b.rows() != n || b.cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: b.rows(),
        });
    }
    let l = cholesky(b)?;
    // C = L⁻¹ A L⁻ᵀ = (L⁻¹ (L⁻¹ A)ᵀ)ᵀ; A symmetric so (L⁻¹A)ᵀ = A L⁻ᵀ.
    let y = solve_lower(&l, a);
    let c = solve_lower(&l, &y.transpose());
    let c = symmetrize(&c);
    let eig = symmetric_eigen(&c)?;
    let mut vectors = solve_lower_transpose(&l, &eig.vectors);
    fix_column_signs(&mut vectors);
    Ok(GeneralizedEigen {
        values: eig.values,
        vectors,
    })
}

pub(crate) fn symmetrize<T: Scalar>(m: &FeatureMatrix<T>) -> FeatureMatrix<T> {
    let n = m.rows();
    let half = T::lit(0.5);
    let mut out = m.clone();
    for i in 0..n {
        for j in 0..i {
            let v = (m.get(i, j) + m.get(j, i)) * half;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}
