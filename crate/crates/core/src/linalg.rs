//! Dense kernels: Jacobi eigensolver, one-sided Jacobi SVD, Gram-Schmidt and
//! Haar-random orthonormal frames. Written against [`Scalar`] so every
//! precision shares one implementation.

use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::gaussian;
use crate::scalar::Scalar;

/// Norm below which a projected vector counts as linearly dependent.
pub const BREAKDOWN_TOL: f64 = 1e-10;

/// Redraw budget for randomized orthonormal constructions.
pub const MAX_REDRAWS: usize = 20;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `v` against the orthonormal set `basis` (two passes) and
/// normalizes it. Returns `false` if the residual norm falls below
/// [`BREAKDOWN_TOL`] times the input norm, leaving `v` unspecified.
pub fn orthonormalize_against<T: Scalar>(v: &mut [T], basis: &[Vec<T>]) -> bool {
    let start = norm(v);
    if start == T::zero() || !start.is_finite() {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
    let n = norm(v);
    if !(n > T::lit(BREAKDOWN_TOL) * start) {
        return false;
    }
    let inv = n.recip();
    v.iter_mut().for_each(|x| *x *= inv);
    true
}

/// Gram-Schmidt over `vectors` in order, each orthogonalized against
/// `fixed` and the previously processed ones. Returns the index of the first
/// vector that broke down.
pub fn gram_schmidt<T: Scalar>(
    vectors: &mut [Vec<T>],
    fixed: &[Vec<T>],
) -> std::result::Result<(), usize> {
    let mut done: Vec<Vec<T>> = fixed.to_vec();
    for (i, v) in vectors.iter_mut().enumerate() {
        if !orthonormalize_against(v, &done) {
            return Err(i);
        }
        done.push(v.clone());
    }
    Ok(())
}

pub fn columns<T: Scalar>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.columns().into_iter().map(|c| c.to_vec()).collect()
}

pub fn from_columns<T: Scalar>(rows: usize, cols: &[Vec<T>]) -> Array2<T> {
    Array2::from_shape_fn((rows, cols.len()), |(i, j)| cols[j][i])
}

pub fn gaussian_vector<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// `count` random orthonormal vectors of length `dim`, orthogonal to the
/// orthonormal set `fixed`. Gaussian draws followed by Gram-Schmidt, which is
/// QR with a positive-diagonal sign fix and hence Haar-distributed.
pub fn random_orthonormal_vectors<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    count: usize,
    fixed: &[Vec<T>],
) -> Result<Vec<Vec<T>>> {
    if count + fixed.len() > dim {
        return Err(Error::Precondition(format!(
            "cannot fit {count} orthonormal vectors beside {} fixed ones in dimension {dim}",
            fixed.len()
        )));
    }
    for _ in 0..MAX_REDRAWS {
        let mut vs: Vec<Vec<T>> = (0..count).map(|_| gaussian_vector(rng, dim)).collect();
        if gram_schmidt(&mut vs, fixed).is_ok() {
            return Ok(vs);
        }
    }
    Err(Error::Breakdown {
        attempts: MAX_REDRAWS,
    })
}

/// `rows × cols` matrix with Haar-random orthonormal columns.
pub fn random_orthonormal_columns<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> Result<Array2<T>> {
    let vs = random_orthonormal_vectors(rng, rows, cols, &[])?;
    Ok(from_columns(rows, &vs))
}

pub fn random_orthogonal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Array2<T>> {
    random_orthonormal_columns(rng, n, n)
}

/// Largest absolute entry of `AᵀA − I`.
pub fn orthonormality_defect<T: Scalar>(a: &Array2<T>) -> T {
    let g = a.t().dot(a);
    let mut worst = T::zero();
    for ((i, j), &x) in g.indexed_iter() {
        let target = if i == j { T::one() } else { T::zero() };
        worst = worst.max((x - target).abs());
    }
    worst
}

pub fn max_abs<T: Scalar>(a: ArrayView1<T>) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns. Only the symmetric part of `a` is used.
pub fn symmetric_eigen<T: Scalar>(a: &Array2<T>) -> (Vec<T>, Array2<T>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let half = T::lit(0.5);
    let mut m = Array2::from_shape_fn((n, n), |(i, j)| half * (a[[i, j]] + a[[j, i]]));
    let mut v = Array2::<T>::eye(n);
    let scale = m.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
    if scale > T::zero() {
        let tol = T::epsilon() * scale;
        for _ in 0..100 {
            let mut off = T::zero();
            for p in 0..n {
                for q in p + 1..n {
                    off += m[[p, q]] * m[[p, q]];
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[[p, q]];
                    if apq.abs() <= T::min_positive_value() {
                        continue;
                    }
                    let theta = (m[[q, q]] - m[[p, p]]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = (t * t + T::one()).sqrt().recip();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[[k, p]];
                        let mkq = m[[k, q]];
                        m[[k, p]] = c * mkp - s * mkq;
                        m[[k, q]] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[[p, k]];
                        let mqk = m[[q, k]];
                        m[[p, k]] = c * mpk - s * mqk;
                        m[[q, k]] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[[k, p]];
                        let vkq = v[[k, q]];
                        v[[k, p]] = c * vkp - s * vkq;
                        v[[k, q]] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Thin SVD of a wide matrix `a` (`rows ≤ cols`): `a = U·diag(S)·Vᵀ` with
/// `U` square orthogonal, `S` descending and `V` of shape `cols × rows` with
/// orthonormal columns.
///
/// One-sided Jacobi acting on the rows of `a`. Null directions of `V` are
/// completed to an orthonormal set.
pub fn svd_wide<T: Scalar>(a: &Array2<T>) -> Result<(Array2<T>, Vec<T>, Array2<T>)> {
    let (r, c) = a.dim();
    if r > c {
        return Err(Error::Precondition(format!(
            "svd_wide needs rows <= cols, got {r}x{c}"
        )));
    }
    let mut w: Vec<Vec<T>> = a.rows().into_iter().map(|row| row.to_vec()).collect();
    let mut u = Array2::<T>::eye(r);
    let tol = T::epsilon();
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..r {
            for q in p + 1..r {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = (T::one() + t * t).sqrt().recip();
                let sn = cs * t;
                let (lo, hi) = w.split_at_mut(q);
                for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let a_ = *xp;
                    let b_ = *xq;
                    *xp = cs * a_ - sn * b_;
                    *xq = sn * a_ + cs * b_;
                }
                for k in 0..r {
                    let ukp = u[[k, p]];
                    let ukq = u[[k, q]];
                    u[[k, p]] = cs * ukp - sn * ukq;
                    u[[k, q]] = sn * ukp + cs * ukq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = w.iter().map(|row| norm(row)).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let s: Vec<T> = order.iter().map(|&i| norms[i]).collect();
    let smax = s.first().copied().unwrap_or(T::zero());
    let null_cut = smax * T::epsilon() * T::from_count(c.max(1));

    let mut vcols: Vec<Vec<T>> = Vec::with_capacity(r);
    let mut fill = 0usize;
    for (&i, &si) in order.iter().zip(&s) {
        let mut v = w[i].clone();
        let ok = si > null_cut && orthonormalize_against(&mut v, &vcols);
        if !ok {
            loop {
                if fill >= c {
                    return Err(Error::Breakdown { attempts: fill });
                }
                let mut e = vec![T::zero(); c];
                e[fill] = T::one();
                fill += 1;
                if orthonormalize_against(&mut e, &vcols) {
                    v = e;
                    break;
                }
            }
        }
        vcols.push(v);
    }
    let u_sorted = Array2::from_shape_fn((r, r), |(k, j)| u[[k, order[j]]]);
    Ok((u_sorted, s, from_columns(c, &vcols)))
}
