//! Staircase MPOs: orthogonal `U` as a product of two-site blocks.

use ndarray::{Array2, Array3, Array4};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// `U = G₁ G₂ ⋯ G_{N−1}` where `G_n` acts as the orthogonal block `B_n` on
/// sites `(n, n+1)`. Block rows are indexed by the input pair `(i_n, i_{n+1})`
/// and columns by the output pair, first index slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct StaircaseMpo<T> {
    pub n_sites: usize,
    pub local_dim: usize,
    pub blocks: Vec<Array2<T>>,
    /// Per block: left half `(i_n, o_n, a)` and right half `(a, i_{n+1}, o_{n+1})`
    /// from an SVD of the block regrouped by site.
    pub split: Vec<(Array3<T>, Array3<T>)>,
}

fn split_block<T: Scalar>(block: &Array2<T>, d: usize) -> Result<(Array3<T>, Array3<T>)> {
    let regrouped = Array2::from_shape_fn((d * d, d * d), |(r, c)| {
        let (i1, o1) = (r / d, r % d);
        let (i2, o2) = (c / d, c % d);
        block[[i1 * d + i2, o1 * d + o2]]
    });
    let (a, s, b) = linalg::svd_wide(&regrouped)?;
    let bond = s.len();
    let left = Array3::from_shape_fn((d, d, bond), |(i, o, k)| a[[i * d + o, k]] * s[k]);
    let right = Array3::from_shape_fn((bond, d, d), |(k, i, o)| b[[i * d + o, k]]);
    Ok((left, right))
}

/// Applies `block` (or its transpose) to sites `(site, site+1)` of a dense
/// vector over `n_sites` sites of dimension `d`.
fn apply_block<T: Scalar>(
    v: &[T],
    block: &Array2<T>,
    d: usize,
    n_sites: usize,
    site: usize,
    transpose: bool,
) -> Vec<T> {
    let pre = d.pow(site as u32);
    let post = d.pow((n_sites - site - 2) as u32);
    let pair = d * d;
    let mut out = vec![T::zero(); v.len()];
    for a in 0..pre {
        for b in 0..post {
            let idx = |p: usize| (a * pair + p) * post + b;
            for p in 0..pair {
                let x = v[idx(p)];
                if x == T::zero() {
                    continue;
                }
                for q in 0..pair {
                    let w = if transpose { block[[p, q]] } else { block[[q, p]] };
                    out[idx(q)] += w * x;
                }
            }
        }
    }
    out
}

impl<T: Scalar> StaircaseMpo<T> {
    pub fn identity(n_sites: usize, local_dim: usize) -> Self {
        Self {
            n_sites,
            local_dim,
            blocks: Vec::new(),
            split: Vec::new(),
        }
    }

    pub fn from_blocks(n_sites: usize, local_dim: usize, blocks: Vec<Array2<T>>) -> Result<Self> {
        let pair = local_dim * local_dim;
        if n_sites >= 2 && blocks.len() != n_sites - 1 {
            return Err(Error::DimensionMismatch {
                what: "staircase block count",
                expected: n_sites - 1,
                actual: blocks.len(),
            });
        }
        if blocks.iter().any(|b| b.dim() != (pair, pair)) {
            return Err(Error::Precondition(format!("staircase blocks must be {pair}x{pair}")));
        }
        let split = blocks
            .iter()
            .map(|b| split_block(b, local_dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_sites,
            local_dim,
            blocks,
            split,
        })
    }

    pub fn dim(&self) -> usize {
        self.local_dim.pow(self.n_sites as u32)
    }

    pub fn is_identity(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `Uᵀ v` for a dense vector of length `d^N`.
    pub fn apply_transpose(&self, v: &[T]) -> Vec<T> {
        let mut cur = v.to_vec();
        for (site, block) in self.blocks.iter().enumerate() {
            cur = apply_block(&cur, block, self.local_dim, self.n_sites, site, true);
        }
        cur
    }

    /// `U v` for a dense vector of length `d^N`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        let mut cur = v.to_vec();
        for (site, block) in self.blocks.iter().enumerate().rev() {
            cur = apply_block(&cur, block, self.local_dim, self.n_sites, site, false);
        }
        cur
    }

    /// Dense `D × D` operator. Only for small `D`.
    pub fn densify(&self) -> Array2<T> {
        let n = self.dim();
        let mut out = Array2::zeros((n, n));
        for c in 0..n {
            let mut e = vec![T::zero(); n];
            e[c] = T::one();
            out.column_mut(c).assign(&ndarray::Array1::from(self.apply(&e)));
        }
        out
    }

    pub fn block_defect(&self) -> T {
        self.blocks
            .iter()
            .map(linalg::orthonormality_defect)
            .fold(T::zero(), T::max)
    }

    /// Per-site MPO tensors `W[a_{n−1}, i_n, o_n, a_n]` obtained by joining
    /// the right half of block `n−1` with the left half of block `n`.
    pub fn site_cores(&self) -> Vec<Array4<T>> {
        let d = self.local_dim;
        if self.is_identity() {
            return (0..self.n_sites)
                .map(|_| Array4::from_shape_fn((1, d, d, 1), |(_, i, o, _)| if i == o { T::one() } else { T::zero() }))
                .collect();
        }
        let n = self.n_sites;
        let mut cores = Vec::with_capacity(n);
        for site in 0..n {
            let core = if site == 0 {
                let l = &self.split[0].0;
                Array4::from_shape_fn((1, d, d, l.dim().2), |(_, i, o, k)| l[[i, o, k]])
            } else if site == n - 1 {
                let r = &self.split[site - 1].1;
                Array4::from_shape_fn((r.dim().0, d, d, 1), |(k, i, o, _)| r[[k, i, o]])
            } else {
                let r = &self.split[site - 1].1;
                let l = &self.split[site].0;
                Array4::from_shape_fn((r.dim().0, d, d, l.dim().2), |(a, i, o, b)| {
                    (0..d).fold(T::zero(), |acc, p| acc + r[[a, i, p]] * l[[p, o, b]])
                })
            };
            cores.push(core);
        }
        cores
    }

    /// Matrix-product state for `Uᵀ (⊗ₙ wₙ)`, as tensors `(a_{n−1}, o_n, a_n)`.
    pub fn apply_transpose_product(&self, locals: &[Vec<T>]) -> Vec<Array3<T>> {
        self.site_cores()
            .iter()
            .zip(locals)
            .map(|(w, e)| {
                let (l, d, _, r) = w.dim();
                Array3::from_shape_fn((l, d, r), |(a, o, b)| {
                    (0..d).fold(T::zero(), |acc, i| acc + w[[a, i, o, b]] * e[i])
                })
            })
            .collect()
    }
}

/// Random staircase with Haar-orthogonal `d² × d²` blocks.
pub fn random_staircase_mpo<T: Scalar, R: Rng + ?Sized>(
    n_sites: usize,
    local_dim: usize,
    rng: &mut R,
) -> Result<StaircaseMpo<T>> {
    if n_sites < 2 {
        return Ok(StaircaseMpo::identity(n_sites, local_dim));
    }
    let pair = local_dim * local_dim;
    let blocks = (0..n_sites - 1)
        .map(|_| linalg::random_orthogonal(rng, pair))
        .collect::<Result<Vec<_>>>()?;
    StaircaseMpo::from_blocks(n_sites, local_dim, blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn two_sites_is_the_block() {
        let mpo: StaircaseMpo<f64> = random_staircase_mpo(2, 3, &mut substream(1, &[])).unwrap();
        let dense = mpo.densify();
        let diff = (&dense - &mpo.blocks[0]).mapv(f64::abs);
        assert!(diff.iter().all(|&x| x < 1e-14));
    }

    #[test]
    fn three_sites_is_orthogonal() {
        let mpo: StaircaseMpo<f64> = random_staircase_mpo(3, 3, &mut substream(2, &[])).unwrap();
        assert!(linalg::orthonormality_defect(&mpo.densify()) < 1e-12);
        assert!(mpo.block_defect() < 1e-12);
    }

    #[test]
    fn round_trip_by_contraction() {
        let mpo: StaircaseMpo<f64> = random_staircase_mpo(4, 3, &mut substream(3, &[])).unwrap();
        let v: Vec<f64> = (0..81).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let back = mpo.apply(&mpo.apply_transpose(&v));
        for (a, b) in back.iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn product_state_path_matches_dense_path() {
        let mpo: StaircaseMpo<f64> = random_staircase_mpo(3, 3, &mut substream(4, &[])).unwrap();
        let locals = vec![vec![1.0, 0.3, -0.2], vec![0.5, 1.1, 0.0], vec![-0.7, 0.2, 0.9]];
        let dense = mpo.apply_transpose(&crate::basis::kron(&locals));
        let mps = mpo.apply_transpose_product(&locals);
        let contracted = super::super::mps_to_dense(&mps);
        for (a, b) in dense.iter().zip(&contracted) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
