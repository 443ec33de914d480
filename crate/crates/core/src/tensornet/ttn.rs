//! Binary tree tensor networks representing an isometry `T: D → χ`.

use ndarray::{Array2, Array3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// One node: an `(in₁·in₂) × out` matrix with orthonormal columns, rows
/// indexed by `(i₁, i₂)` with `i₁` slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeNode<T> {
    pub in_dims: (usize, usize),
    pub matrix: Array2<T>,
}

impl<T: Scalar> TreeNode<T> {
    pub fn out_dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// The node as a rank-3 tensor `(i₁, i₂, o)`.
    pub fn tensor(&self) -> Array3<T> {
        let (a, b) = self.in_dims;
        Array3::from_shape_fn((a, b, self.out_dim()), |(i, j, o)| self.matrix[[i * b + j, o]])
    }
}

/// Levels from the leaves up; level `ℓ` has `n_leaves / 2^{ℓ+1}` nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeIsometry<T> {
    pub n_leaves: usize,
    pub leaf_dim: usize,
    pub levels: Vec<Vec<TreeNode<T>>>,
}

/// Contracts modes `(p, p+1)` of a dense tensor with dims `dims` against an
/// `(dims[p]·dims[p+1]) × out` matrix (or expands with its transpose).
fn contract_pair<T: Scalar>(v: &[T], dims: &[usize], p: usize, mat: &Array2<T>, up: bool) -> Vec<T> {
    let pre: usize = dims[..p].iter().product();
    let post: usize = dims[p + 2..].iter().product();
    let (rows, cols) = mat.dim();
    let (n_in, n_out) = if up { (rows, cols) } else { (cols, rows) };
    let mut out = vec![T::zero(); pre * n_out * post];
    for a in 0..pre {
        for b in 0..post {
            for i in 0..n_in {
                let x = v[(a * n_in + i) * post + b];
                if x == T::zero() {
                    continue;
                }
                for o in 0..n_out {
                    let w = if up { mat[[i, o]] } else { mat[[o, i]] };
                    out[(a * n_out + o) * post + b] += w * x;
                }
            }
        }
    }
    out
}

impl<T: Scalar> TreeIsometry<T> {
    pub fn in_dim(&self) -> usize {
        self.leaf_dim.pow(self.n_leaves as u32)
    }

    pub fn out_dim(&self) -> usize {
        self.levels.last().map_or(self.in_dim(), |l| l[0].out_dim())
    }

    pub fn node_defect(&self) -> T {
        self.levels
            .iter()
            .flatten()
            .map(|n| linalg::orthonormality_defect(&n.matrix))
            .fold(T::zero(), T::max)
    }

    /// `Tᵀ v` for a dense vector of length `leaf_dim^{n_leaves}`.
    pub fn apply_transpose(&self, v: &[T]) -> Vec<T> {
        let mut dims = vec![self.leaf_dim; self.n_leaves];
        let mut cur = v.to_vec();
        for level in &self.levels {
            for (k, node) in level.iter().enumerate() {
                cur = contract_pair(&cur, &dims, k, &node.matrix, true);
                dims.splice(k..k + 2, [node.out_dim()]);
            }
        }
        cur
    }

    /// `T w` for `w` of length `out_dim`.
    pub fn apply(&self, w: &[T]) -> Vec<T> {
        let mut cur = w.to_vec();
        let mut dims = vec![self.out_dim()];
        for level in self.levels.iter().rev() {
            for (k, node) in level.iter().enumerate().rev() {
                cur = contract_pair_down(&cur, &dims, k, node);
                dims.splice(k..k + 1, [node.in_dims.0, node.in_dims.1]);
            }
        }
        cur
    }

    /// Dense `D × χ` isometry. Only for small `D`.
    pub fn densify(&self) -> Array2<T> {
        let (n, c) = (self.in_dim(), self.out_dim());
        let mut out = Array2::zeros((n, c));
        for j in 0..c {
            let mut e = vec![T::zero(); c];
            e[j] = T::one();
            out.column_mut(j).assign(&ndarray::Array1::from(self.apply(&e)));
        }
        out
    }

    /// Contracts an MPS with one physical leg per leaf into a vector of
    /// length `out_dim`.
    pub fn contract_mps(&self, mps: &[Array3<T>]) -> Vec<T> {
        let mut cur: Vec<Array3<T>> = mps.to_vec();
        for level in &self.levels {
            cur = cur
                .chunks(2)
                .zip(level)
                .map(|(pair, node)| merge_pair(&pair[0], &pair[1], &node.tensor()))
                .collect();
        }
        let last = &cur[0];
        (0..last.dim().1).map(|o| last[[0, o, 0]]).collect()
    }
}

fn contract_pair_down<T: Scalar>(v: &[T], dims: &[usize], p: usize, node: &TreeNode<T>) -> Vec<T> {
    // expand mode p (size out) into (in1, in2)
    let pre: usize = dims[..p].iter().product();
    let post: usize = dims[p + 1..].iter().product();
    let n_out = node.out_dim();
    let n_in = node.in_dims.0 * node.in_dims.1;
    let mut out = vec![T::zero(); pre * n_in * post];
    for a in 0..pre {
        for b in 0..post {
            for o in 0..n_out {
                let x = v[(a * n_out + o) * post + b];
                if x == T::zero() {
                    continue;
                }
                for i in 0..n_in {
                    out[(a * n_in + i) * post + b] += node.matrix[[i, o]] * x;
                }
            }
        }
    }
    out
}

fn merge_pair<T: Scalar>(a: &Array3<T>, b: &Array3<T>, node: &Array3<T>) -> Array3<T> {
    let (bl, i1n, bm) = a.dim();
    let (_, i2n, br) = b.dim();
    let on = node.dim().2;
    // ab[l, i1, i2, r]
    let mut ab = vec![T::zero(); bl * i1n * i2n * br];
    for l in 0..bl {
        for i1 in 0..i1n {
            for m in 0..bm {
                let x = a[[l, i1, m]];
                if x == T::zero() {
                    continue;
                }
                for i2 in 0..i2n {
                    for r in 0..br {
                        ab[((l * i1n + i1) * i2n + i2) * br + r] += x * b[[m, i2, r]];
                    }
                }
            }
        }
    }
    Array3::from_shape_fn((bl, on, br), |(l, o, r)| {
        let mut acc = T::zero();
        for i1 in 0..i1n {
            for i2 in 0..i2n {
                acc += node[[i1, i2, o]] * ab[((l * i1n + i1) * i2n + i2) * br + r];
            }
        }
        acc
    })
}

/// Random tree whose root outputs `chi`; inner nodes output
/// `min(chi, in₁·in₂)`.
pub fn random_tree_isometry<T: Scalar, R: Rng + ?Sized>(
    n_leaves: usize,
    leaf_dim: usize,
    chi: usize,
    rng: &mut R,
) -> Result<TreeIsometry<T>> {
    if n_leaves < 2 || !n_leaves.is_power_of_two() {
        return Err(Error::Precondition(format!(
            "tree isometry needs a power-of-two leaf count >= 2, got {n_leaves}"
        )));
    }
    let mut levels = Vec::new();
    let mut width = n_leaves;
    let mut dim = leaf_dim;
    while width > 1 {
        width /= 2;
        let fan_in = dim * dim;
        let out = if width == 1 {
            if fan_in < chi {
                return Err(Error::Precondition(format!(
                    "root fan-in {fan_in} is smaller than the output dimension {chi}"
                )));
            }
            chi
        } else {
            chi.min(fan_in)
        };
        let level = (0..width)
            .map(|_| {
                Ok(TreeNode {
                    in_dims: (dim, dim),
                    matrix: linalg::random_orthonormal_columns(rng, fan_in, out)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        levels.push(level);
        dim = out;
    }
    Ok(TreeIsometry {
        n_leaves,
        leaf_dim,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn isometry_by_contraction() {
        let t: TreeIsometry<f64> = random_tree_isometry(4, 3, 5, &mut substream(1, &[])).unwrap();
        let dense = t.densify();
        assert_eq!(dense.dim(), (81, 5));
        assert!(linalg::orthonormality_defect(&dense) < 1e-12);
        // Tᵀ T w = w
        let w = vec![0.3, -1.0, 0.2, 0.8, 0.0];
        let back = t.apply_transpose(&t.apply(&w));
        for (a, b) in back.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_leaves_is_one_matrix() {
        let t: TreeIsometry<f64> = random_tree_isometry(2, 3, 4, &mut substream(2, &[])).unwrap();
        assert_eq!(t.levels.len(), 1);
        assert_eq!(t.densify(), t.levels[0][0].matrix);
    }

    #[test]
    fn rejects_odd_leaf_counts() {
        assert!(random_tree_isometry::<f64, _>(3, 3, 4, &mut substream(3, &[])).is_err());
    }
}
