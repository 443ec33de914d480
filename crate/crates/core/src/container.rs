//! Tagged little-endian binary container for factored models, generators and
//! tensor networks.
//!
//! Layout: magic `FEDC`, format version (u32), kind tag (u8), a kind-specific
//! header of u64 shape fields, then f64 arrays in row-major order.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Array3};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::structure::{DenseModel, SvdFactors};
use crate::tensornet::{StaircaseMpo, TensorTrain, TreeIsometry, TreeNode};

const MAGIC: &[u8; 4] = b"FEDC";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Kind {
    Factors = 1,
    Generator = 2,
    TensorTrain = 3,
    Mpo = 4,
    Tree = 5,
}

impl Kind {
    fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Kind::Factors,
            2 => Kind::Generator,
            3 => Kind::TensorTrain,
            4 => Kind::Mpo,
            5 => Kind::Tree,
            _ => return Err(Error::Format(format!("unknown container tag {b}"))),
        })
    }
}

/// Generator metadata stored next to its factors.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorRecord<T> {
    pub spec: BasisSpec,
    pub factors: SvdFactors<T>,
    pub theta_star: Vec<T>,
    pub rank: usize,
    pub epsilon: T,
    pub delta_data: T,
}

fn write_header<W: Write>(w: &mut W, kind: Kind) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u8(kind as u8)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R, expected: Kind) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let kind = Kind::from_u8(r.read_u8()?)?;
    if kind != expected {
        return Err(Error::Format(format!("expected {expected:?}, found {kind:?}")));
    }
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: usize) -> Result<()> {
    Ok(w.write_u64::<LE>(v as u64)?)
}

fn get_u64<R: Read>(r: &mut R) -> Result<usize> {
    let v = r.read_u64::<LE>()?;
    usize::try_from(v).map_err(|_| Error::Format(format!("size field {v} overflows")))
}

fn put_values<T: Scalar, W: Write>(w: &mut W, values: impl IntoIterator<Item = T>) -> Result<()> {
    for v in values {
        w.write_f64::<LE>(v.to_f64_lossy())?;
    }
    Ok(())
}

fn get_values<T: Scalar, R: Read>(r: &mut R, n: usize) -> Result<Vec<T>> {
    (0..n).map(|_| Ok(T::lit(r.read_f64::<LE>()?))).collect()
}

fn get_matrix<T: Scalar, R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<T>> {
    let v = get_values(r, rows * cols)?;
    Array2::from_shape_vec((rows, cols), v).map_err(|e| Error::Format(e.to_string()))
}

fn put_freqs<W: Write>(w: &mut W, freqs: &[u32]) -> Result<()> {
    put_u64(w, freqs.len())?;
    for &f in freqs {
        w.write_u32::<LE>(f)?;
    }
    Ok(())
}

fn get_freqs<R: Read>(r: &mut R) -> Result<Vec<u32>> {
    let n = get_u64(r)?;
    (0..n).map(|_| Ok(r.read_u32::<LE>()?)).collect()
}

fn write_factors_body<T: Scalar, W: Write>(
    w: &mut W,
    spec: &BasisSpec,
    f: &SvdFactors<T>,
) -> Result<()> {
    let (d, k) = (f.u.nrows(), f.v.nrows());
    for v in [d, k, spec.n_features, spec.n_params, spec.d(), spec.d_tilde()] {
        put_u64(w, v)?;
    }
    put_freqs(w, &spec.input_freqs)?;
    put_freqs(w, &spec.param_freqs)?;
    w.write_u8(spec.include_input_constant as u8)?;
    w.write_u8(spec.include_param_constant as u8)?;
    put_u64(w, f.s.len())?;
    put_u64(w, f.u.ncols())?;
    put_values(w, f.u.iter().copied())?;
    put_values(w, f.s.iter().copied())?;
    put_values(w, f.v.iter().copied())?;
    Ok(())
}

fn read_factors_body<T: Scalar, R: Read>(r: &mut R) -> Result<(BasisSpec, SvdFactors<T>)> {
    let mut shape = [0usize; 6];
    for s in shape.iter_mut() {
        *s = get_u64(r)?;
    }
    let [d, k, n, m, dl, dtl] = shape;
    let input_freqs = get_freqs(r)?;
    let param_freqs = get_freqs(r)?;
    let ic = r.read_u8()? != 0;
    let pc = r.read_u8()? != 0;
    let spec = BasisSpec::new(n, m, input_freqs, param_freqs, ic, pc)?;
    if spec.d() != dl || spec.d_tilde() != dtl {
        return Err(Error::Format("local dimensions disagree with frequency lists".into()));
    }
    let rank = get_u64(r)?;
    let u_cols = get_u64(r)?;
    let u = get_matrix(r, d, u_cols)?;
    let s = get_values(r, rank)?;
    let v = get_matrix(r, k, rank)?;
    let factors = SvdFactors { u, s, v };
    factors.check(&spec)?;
    Ok((spec, factors))
}

pub fn write_factors<T: Scalar, W: Write>(w: &mut W, model: &DenseModel<T>) -> Result<()> {
    write_header(w, Kind::Factors)?;
    write_factors_body(w, &model.spec, &model.factors)
}

pub fn read_factors<T: Scalar, R: Read>(r: &mut R) -> Result<DenseModel<T>> {
    read_header(r, Kind::Factors)?;
    let (spec, factors) = read_factors_body(r)?;
    DenseModel::new(spec, factors)
}

pub fn write_generator<T: Scalar, W: Write>(w: &mut W, g: &GeneratorRecord<T>) -> Result<()> {
    write_header(w, Kind::Generator)?;
    write_factors_body(w, &g.spec, &g.factors)?;
    put_u64(w, g.rank)?;
    put_values(w, g.theta_star.iter().copied())?;
    put_values(w, [g.epsilon, g.delta_data])?;
    Ok(())
}

pub fn read_generator<T: Scalar, R: Read>(r: &mut R) -> Result<GeneratorRecord<T>> {
    read_header(r, Kind::Generator)?;
    let (spec, factors) = read_factors_body(r)?;
    let rank = get_u64(r)?;
    let theta_star = get_values(r, spec.n_params)?;
    let tail: Vec<T> = get_values(r, 2)?;
    Ok(GeneratorRecord {
        spec,
        factors,
        theta_star,
        rank,
        epsilon: tail[0],
        delta_data: tail[1],
    })
}

pub fn write_tensor_train<T: Scalar, W: Write>(w: &mut W, tt: &TensorTrain<T>) -> Result<()> {
    write_header(w, Kind::TensorTrain)?;
    put_u64(w, tt.n_sites())?;
    put_u64(w, tt.local_dim())?;
    for b in tt.bond_dims() {
        put_u64(w, b)?;
    }
    for core in &tt.cores {
        put_values(w, core.iter().copied())?;
    }
    Ok(())
}

pub fn read_tensor_train<T: Scalar, R: Read>(r: &mut R) -> Result<TensorTrain<T>> {
    read_header(r, Kind::TensorTrain)?;
    let m = get_u64(r)?;
    let d = get_u64(r)?;
    let bonds = (0..=m).map(|_| get_u64(r)).collect::<Result<Vec<_>>>()?;
    let mut cores = Vec::with_capacity(m);
    for site in 0..m {
        let shape = (bonds[site], d, bonds[site + 1]);
        let v = get_values(r, shape.0 * shape.1 * shape.2)?;
        cores.push(Array3::from_shape_vec(shape, v).map_err(|e| Error::Format(e.to_string()))?);
    }
    let tt = TensorTrain { cores };
    tt.validate()?;
    Ok(tt)
}

pub fn write_mpo<T: Scalar, W: Write>(w: &mut W, mpo: &StaircaseMpo<T>) -> Result<()> {
    write_header(w, Kind::Mpo)?;
    put_u64(w, mpo.n_sites)?;
    put_u64(w, mpo.local_dim)?;
    put_u64(w, mpo.blocks.len())?;
    for b in &mpo.blocks {
        put_values(w, b.iter().copied())?;
    }
    Ok(())
}

pub fn read_mpo<T: Scalar, R: Read>(r: &mut R) -> Result<StaircaseMpo<T>> {
    read_header(r, Kind::Mpo)?;
    let n = get_u64(r)?;
    let d = get_u64(r)?;
    let count = get_u64(r)?;
    let blocks = (0..count)
        .map(|_| get_matrix(r, d * d, d * d))
        .collect::<Result<Vec<_>>>()?;
    if blocks.is_empty() {
        return Ok(StaircaseMpo::identity(n, d));
    }
    StaircaseMpo::from_blocks(n, d, blocks)
}

pub fn write_tree<T: Scalar, W: Write>(w: &mut W, tree: &TreeIsometry<T>) -> Result<()> {
    write_header(w, Kind::Tree)?;
    put_u64(w, tree.n_leaves)?;
    put_u64(w, tree.leaf_dim)?;
    put_u64(w, tree.levels.len())?;
    for level in &tree.levels {
        put_u64(w, level.len())?;
        for node in level {
            put_u64(w, node.in_dims.0)?;
            put_u64(w, node.in_dims.1)?;
            put_u64(w, node.out_dim())?;
            put_values(w, node.matrix.iter().copied())?;
        }
    }
    Ok(())
}

pub fn read_tree<T: Scalar, R: Read>(r: &mut R) -> Result<TreeIsometry<T>> {
    read_header(r, Kind::Tree)?;
    let n_leaves = get_u64(r)?;
    let leaf_dim = get_u64(r)?;
    let n_levels = get_u64(r)?;
    let mut levels = Vec::with_capacity(n_levels);
    for _ in 0..n_levels {
        let count = get_u64(r)?;
        let mut nodes = Vec::with_capacity(count);
        for _ in 0..count {
            let a = get_u64(r)?;
            let b = get_u64(r)?;
            let out = get_u64(r)?;
            nodes.push(TreeNode {
                in_dims: (a, b),
                matrix: get_matrix(r, a * b, out)?,
            });
        }
        levels.push(nodes);
    }
    Ok(TreeIsometry {
        n_leaves,
        leaf_dim,
        levels,
    })
}

/// Human-readable dump of a dense model.
pub fn text_dump<T: Scalar>(model: &DenseModel<T>) -> String {
    use std::fmt::Write as _;
    let f = &model.factors;
    let spec = &model.spec;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "D={} K={} N={} M={} d={} d~={} rank={}",
        f.u.nrows(),
        f.v.nrows(),
        spec.n_features,
        spec.n_params,
        spec.d(),
        spec.d_tilde(),
        f.s.len()
    );
    let row = |xs: &mut dyn Iterator<Item = T>| {
        xs.map(|x| format!("{:.6e}", x.to_f64_lossy()))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "S: {}", row(&mut f.s.iter().copied()));
    let _ = writeln!(out, "U:");
    for r in f.u.rows() {
        let _ = writeln!(out, "  {}", row(&mut r.iter().copied()));
    }
    let _ = writeln!(out, "V:");
    for r in f.v.rows() {
        let _ = writeln!(out, "  {}", row(&mut r.iter().copied()));
    }
    out
}
