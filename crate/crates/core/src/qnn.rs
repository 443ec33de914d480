//! Static light-cone analysis of layered re-uploading circuits on a qubit chain.
//!
//! Layer `ℓ` encodes feature `q` on qubit `q`, applies one variational gate
//! per qubit (parameter index `ℓ·N + q`, zero-based) and then an entangling
//! block that couples lines up to `entangling_depth[ℓ]` apart. A final block of
//! depth `measurement_depth` precedes the measurement. Nothing is simulated;
//! only which gates can reach a measured qubit is tracked.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSpec, BasisTag};
use crate::error::{Error, Result};
use crate::rng::symmetric_unit;
use crate::scalar::Scalar;
use crate::structure::{dense_dims, StructureConstants};

const FREQ_TOL: f64 = 1e-9;
/// Inclusion–exclusion visits `2^q` subsets of measured qubits.
const MAX_UNION_QUBITS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitLayout {
    pub n_qubits: usize,
    pub n_layers: usize,
    /// One entry per layer.
    pub entangling_depth: Vec<usize>,
    pub measurement_depth: usize,
    pub encoding_eigenvalues: Vec<f64>,
    pub variational_eigenvalues: Vec<f64>,
    /// Qubits whose expectation values enter the output; all when empty.
    #[serde(default)]
    pub measured: Vec<usize>,
}

impl CircuitLayout {
    /// Same entangling depth in every layer, Pauli-type generators, all
    /// qubits measured.
    pub fn uniform(n_qubits: usize, n_layers: usize, depth: usize, measurement_depth: usize) -> Self {
        Self {
            n_qubits,
            n_layers,
            entangling_depth: vec![depth; n_layers],
            measurement_depth,
            encoding_eigenvalues: vec![-0.5, 0.5],
            variational_eigenvalues: vec![-0.5, 0.5],
            measured: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_layers == 0 {
            return Err(Error::InvalidSpec("layout needs at least one qubit and one layer".into()));
        }
        if self.entangling_depth.len() != self.n_layers {
            return Err(Error::DimensionMismatch {
                what: "entangling depths",
                expected: self.n_layers,
                actual: self.entangling_depth.len(),
            });
        }
        for eig in [&self.encoding_eigenvalues, &self.variational_eigenvalues] {
            if eig.is_empty() || eig.iter().any(|e| !e.is_finite()) {
                return Err(Error::InvalidSpec(
                    "generator eigenvalue lists must be nonempty and finite".into(),
                ));
            }
        }
        if let Some(&q) = self.measured.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::InvalidSpec(format!("measured qubit {q} out of range")));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.n_qubits * self.n_layers
    }

    pub fn param_index(&self, layer: usize, qubit: usize) -> usize {
        layer * self.n_qubits + qubit
    }

    pub fn measured_qubits(&self) -> Vec<usize> {
        if self.measured.is_empty() {
            (0..self.n_qubits).collect()
        } else {
            let mut m = self.measured.clone();
            m.sort_unstable();
            m.dedup();
            m
        }
    }
}

/// Nonnegative values of `multiplicity`-fold sums of eigenvalue differences,
/// ascending.
pub fn frequency_set(eigenvalues: &[f64], multiplicity: usize) -> Result<Vec<f64>> {
    if multiplicity == 0 {
        return Err(Error::Precondition("multiplicity must be >= 1".into()));
    }
    let mut diffs: Vec<f64> = Vec::new();
    for a in eigenvalues {
        for b in eigenvalues {
            diffs.push(a - b);
        }
    }
    dedup_sorted(&mut diffs);
    let mut sums = vec![0.0];
    for _ in 0..multiplicity {
        let mut next = Vec::with_capacity(sums.len() * diffs.len());
        for s in &sums {
            for d in &diffs {
                next.push(s + d);
            }
        }
        dedup_sorted(&mut next);
        sums = next;
    }
    Ok(sums.into_iter().filter(|&w| w > -FREQ_TOL).map(|w| w.max(0.0)).collect())
}

fn dedup_sorted(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() < FREQ_TOL);
}

/// Features and parameters that can influence one measured qubit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LightCone {
    pub qubit: usize,
    /// Encoding count per feature, each at most the number of layers.
    pub feature_multiplicity: Vec<usize>,
    /// Zero-based indices of the parameters in the cone, ascending.
    pub params: Vec<usize>,
    /// Support width after each backward step, starting from the measured line.
    pub widths: Vec<usize>,
}

pub fn backward_light_cone(layout: &CircuitLayout, qubit: usize) -> Result<LightCone> {
    layout.validate()?;
    if qubit >= layout.n_qubits {
        return Err(Error::Precondition(format!(
            "qubit {qubit} out of range for {} qubits",
            layout.n_qubits
        )));
    }
    let n = layout.n_qubits;
    let (mut lo, mut hi) = (qubit, qubit);
    let widen = |lo: &mut usize, hi: &mut usize, k: usize| {
        *lo = lo.saturating_sub(k);
        *hi = (*hi + k).min(n - 1);
    };
    let mut widths = vec![1];
    let mut mult = vec![0usize; n];
    let mut params = Vec::new();
    widen(&mut lo, &mut hi, layout.measurement_depth);
    for layer in (0..layout.n_layers).rev() {
        widen(&mut lo, &mut hi, layout.entangling_depth[layer]);
        widths.push(hi - lo + 1);
        for q in lo..=hi {
            mult[q] += 1;
            params.push(layout.param_index(layer, q));
        }
    }
    params.sort_unstable();
    Ok(LightCone {
        qubit,
        feature_multiplicity: mult,
        params,
        widths,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QubitCounts {
    pub qubit: usize,
    pub input_functions: u128,
    pub param_functions: u128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasisCounts {
    pub per_qubit: Vec<QubitCounts>,
    /// Size of the union of input basis sets over measured qubits.
    pub union_inputs: u128,
    pub union_params: u128,
    /// Size of the union of (input, parameter) pair sets, the mask support.
    pub union_pairs: u128,
}

/// Number of local functions (constant, cos, sin) reachable with the given
/// multiplicity.
fn local_count(eigenvalues: &[f64], multiplicity: usize) -> Result<u128> {
    if multiplicity == 0 {
        return Ok(1);
    }
    let nonzero = frequency_set(eigenvalues, multiplicity)?
        .into_iter()
        .filter(|&w| w > FREQ_TOL)
        .count();
    Ok(2 * nonzero as u128 + 1)
}

/// Per-qubit product-set sizes and their unions over measured qubits.
///
/// Per-qubit sets are products over features (resp. parameters), and a
/// smaller multiplicity gives a subset, so any intersection is again a product
/// set built from per-coordinate minima. Unions follow by inclusion–exclusion.
pub fn admissible_basis_counts(layout: &CircuitLayout) -> Result<BasisCounts> {
    let measured = layout.measured_qubits();
    if measured.len() > MAX_UNION_QUBITS {
        return Err(Error::TooLarge {
            what: "measured qubits for an exact union count",
            entries: measured.len() as u128,
            limit: MAX_UNION_QUBITS as u128,
        });
    }
    let cones = measured
        .iter()
        .map(|&q| backward_light_cone(layout, q))
        .collect::<Result<Vec<_>>>()?;
    let presence: Vec<Vec<usize>> = cones
        .iter()
        .map(|c| {
            let mut p = vec![0usize; layout.n_params()];
            for &j in &c.params {
                p[j] = 1;
            }
            p
        })
        .collect();
    let inputs = |mults: &[&Vec<usize>]| product_count(mults, &layout.encoding_eigenvalues);
    let params = |pres: &[&Vec<usize>]| product_count(pres, &layout.variational_eigenvalues);

    let mut per_qubit = Vec::with_capacity(cones.len());
    for (c, p) in cones.iter().zip(&presence) {
        per_qubit.push(QubitCounts {
            qubit: c.qubit,
            input_functions: inputs(&[&c.feature_multiplicity])?,
            param_functions: params(&[p])?,
        });
    }
    let (mut ux, mut ut, mut up) = (0i128, 0i128, 0i128);
    for mask in 1u32..(1u32 << cones.len()) {
        let idx: Vec<usize> = (0..cones.len()).filter(|i| mask >> i & 1 == 1).collect();
        let m: Vec<&Vec<usize>> = idx.iter().map(|&i| &cones[i].feature_multiplicity).collect();
        let p: Vec<&Vec<usize>> = idx.iter().map(|&i| &presence[i]).collect();
        let (x, t) = (inputs(&m)? as i128, params(&p)? as i128);
        let sign = if idx.len() % 2 == 1 { 1 } else { -1 };
        ux += sign * x;
        ut += sign * t;
        up += sign * x * t;
    }
    Ok(BasisCounts {
        per_qubit,
        union_inputs: ux as u128,
        union_params: ut as u128,
        union_pairs: up as u128,
    })
}

/// Size of the intersection of the product sets given by per-coordinate
/// multiplicities.
fn product_count(sets: &[&Vec<usize>], eigenvalues: &[f64]) -> Result<u128> {
    let len = sets[0].len();
    let mut total = 1u128;
    for k in 0..len {
        let m = sets.iter().map(|s| s[k]).min().unwrap_or(0);
        total = total.saturating_mul(local_count(eigenvalues, m)?);
    }
    Ok(total)
}

/// Largest frequency reachable per multiplicity, as integers.
fn integer_max_freqs(eigenvalues: &[f64], max_mult: usize) -> Result<Vec<u32>> {
    let mut out = vec![0u32];
    for m in 1..=max_mult {
        let set = frequency_set(eigenvalues, m)?;
        for &w in &set {
            if (w - w.round()).abs() > FREQ_TOL {
                return Err(Error::InvalidSpec(format!(
                    "frequency {w} is not an integer; masks need integer frequency sets"
                )));
            }
        }
        // Integer sets of this kind are contiguous from 0.
        let top = set.last().copied().unwrap_or(0.0).round() as u32;
        if set.len() != top as usize + 1 {
            return Err(Error::InvalidSpec("frequency set has gaps".into()));
        }
        out.push(top);
    }
    Ok(out)
}

fn tag_freq(tag: BasisTag) -> u32 {
    match tag {
        BasisTag::Constant => 0,
        BasisTag::Cos(w) | BasisTag::Sin(w) => w,
    }
}

/// Admissibility mask of the `D × K` structure-constant matrix: entry
/// `(μ, ν)` is allowed when some measured qubit's cone reaches every
/// frequency in `μ` and every nonconstant parameter function in `ν`.
pub fn admissible_mask(layout: &CircuitLayout, spec: &BasisSpec) -> Result<Array2<bool>> {
    layout.validate()?;
    if spec.n_features != layout.n_qubits || spec.n_params != layout.n_params() {
        return Err(Error::Precondition(format!(
            "basis spec (N={}, M={}) does not match the layout (N={}, M={})",
            spec.n_features,
            spec.n_params,
            layout.n_qubits,
            layout.n_params()
        )));
    }
    let (d, k) = dense_dims(spec)?;
    let in_max = integer_max_freqs(&layout.encoding_eigenvalues, layout.n_layers)?;
    let par_max = integer_max_freqs(&layout.variational_eigenvalues, 1)?;
    let in_ord = spec.input_local().ordering();
    let par_ord = spec.param_local().ordering();
    let (in_tags, par_tags) = (in_ord.tags(), par_ord.tags());
    let in_digits = digits_of(d, in_tags.len(), spec.n_features);
    let par_digits = digits_of(k, par_tags.len(), spec.n_params);

    let cones = layout
        .measured_qubits()
        .into_iter()
        .map(|q| backward_light_cone(layout, q))
        .collect::<Result<Vec<_>>>()?;
    let mut mask = Array2::from_elem((d, k), false);
    for cone in &cones {
        let mut in_cone = vec![false; layout.n_params()];
        for &j in &cone.params {
            in_cone[j] = true;
        }
        let rows: Vec<bool> = in_digits
            .iter()
            .map(|mu| {
                mu.iter().enumerate().all(|(f, &a)| {
                    tag_freq(in_tags[a]) <= in_max[cone.feature_multiplicity[f]]
                })
            })
            .collect();
        let cols: Vec<bool> = par_digits
            .iter()
            .map(|nu| {
                nu.iter().enumerate().all(|(p, &b)| {
                    tag_freq(par_tags[b]) <= par_max[usize::from(in_cone[p])]
                })
            })
            .collect();
        for (i, &r) in rows.iter().enumerate() {
            if !r {
                continue;
            }
            for (j, &c) in cols.iter().enumerate() {
                if c {
                    mask[[i, j]] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// Mixed-radix digits of every flat index, first digit slowest.
fn digits_of(total: usize, radix: usize, len: usize) -> Vec<Vec<usize>> {
    (0..total)
        .map(|mut i| {
            let mut dig = vec![0; len];
            for slot in (0..len).rev() {
                dig[slot] = i % radix;
                i /= radix;
            }
            dig
        })
        .collect()
}

/// Uniform `[−1, 1]` entries on the admissible set, exact zeros elsewhere.
pub fn masked_structure_constants<T: Scalar, R: Rng + ?Sized>(
    layout: &CircuitLayout,
    spec: &BasisSpec,
    rng: &mut R,
) -> Result<StructureConstants<T>> {
    let mask = admissible_mask(layout, spec)?;
    let gamma = mask.map(|&m| if m { symmetric_unit(rng) } else { T::zero() });
    StructureConstants::new(gamma, spec.clone())
}

/// `tr S⁴ / (tr S²)²` from the Frobenius norms of `Γ` and `ΓΓᵀ`, without an SVD.
pub fn gamma_purity<T: Scalar>(gamma: &Array2<T>) -> Result<T> {
    let g2: T = gamma.iter().map(|&x| x * x).sum();
    if !(g2 > T::zero()) {
        return Err(Error::ZeroSpectrum);
    }
    let ggt = gamma.dot(&gamma.t());
    let g4: T = ggt.iter().map(|&x| x * x).sum();
    Ok(g4 / (g2 * g2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_sets() {
        assert_eq!(frequency_set(&[-0.5, 0.5], 3).unwrap(), vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(frequency_set(&[-0.5, 0.5], 1).unwrap(), vec![0.0, 1.0]);
        assert_eq!(frequency_set(&[-1.0, 0.0, 1.0], 2).unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn cone_widths_on_a_chain() {
        let l = CircuitLayout::uniform(5, 2, 1, 0);
        let c = backward_light_cone(&l, 2).unwrap();
        assert_eq!(c.widths, vec![1, 3, 5]);
        let l = CircuitLayout::uniform(9, 2, 2, 0);
        let c = backward_light_cone(&l, 4).unwrap();
        assert_eq!(c.widths, vec![1, 5, 9]);
    }

    #[test]
    fn no_entanglement_keeps_own_wire() {
        let l = CircuitLayout::uniform(3, 4, 0, 0);
        let c = backward_light_cone(&l, 1).unwrap();
        assert_eq!(c.feature_multiplicity, vec![0, 4, 0]);
        assert_eq!(c.params, vec![1, 4, 7, 10]);
        let counts = admissible_basis_counts(&l).unwrap();
        assert!(counts.per_qubit.iter().all(|q| q.input_functions == 9));
    }

    #[test]
    fn maxima_at_half_chain_depth() {
        let l = CircuitLayout::uniform(4, 2, 2, 0);
        let c = admissible_basis_counts(&l).unwrap();
        assert_eq!(c.union_inputs, 625);
        assert_eq!(c.union_params, 6561);
    }

    #[test]
    fn purity_from_frobenius_matches_svd() {
        let g: Array2<f64> = ndarray::array![[1.0, 2.0, 0.0], [0.5, -1.0, 3.0]];
        let s = crate::linalg::svd_wide(&g).unwrap().1;
        let direct = crate::structure::purity(&s).unwrap();
        assert!((gamma_purity(&g).unwrap() - direct).abs() < 1e-12_f64);
    }
}
