//! Matrix product states in the mixed A/C representation and matrix product
//! operators.
//!
//! A state of length `L` stores left-canonical site tensors `A(n)` with
//! indices `(left(in), phys(in), right(out))` and one bond matrix `C(n)` per
//! bond, `(in, out)`, such that
//! `ψ = A(0) ⋯ A(n) C(n) B(n+1) ⋯ B(L−1)` for every `n`, with right-canonical
//! `B`. The last bond matrix `C(L−1)` carries the total charge on its outgoing
//! leg and holds the norm.

pub mod io;
mod mpo;
pub mod network;

pub use mpo::MpoOperator;
pub use network::MpsVars;

use ndarray::{ArrayD, IxDyn};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{
    contract, lq_positive, qr_positive, svd_truncated, BlockMatrix, BlockTensor, Charge, ChargeGroup,
    Direction, FusedSpace, IndexSpace, TruncationPolicy, C64,
};

/// Threshold on `s_min / s_max` below which a bond matrix is not inverted.
pub const PINV_THRESHOLD: f64 = 1e-12;

/// Largest dense vector produced by [`MpsState::to_dense`].
pub const DENSE_GUARD: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct MpsState {
    a: Vec<BlockTensor>,
    c: Vec<BlockTensor>,
    phys: IndexSpace,
    sector: Charge,
}

/// Local factor of a product state.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalState {
    Basis(usize),
    /// Arbitrary local vector (normalized on use). Its support must lie in a
    /// single charge sector.
    Vector(Vec<C64>),
}

impl MpsState {
    /// Assembles a state from parts; shapes and bond compatibility are checked.
    pub fn from_parts(
        a: Vec<BlockTensor>,
        c: Vec<BlockTensor>,
        phys: IndexSpace,
        sector: Charge,
    ) -> Result<Self> {
        let l = a.len();
        if l == 0 || c.len() != l {
            return Err(Error::Invalid(format!("{} site tensors and {} bond matrices", l, c.len())));
        }
        for n in 0..l {
            if a[n].rank() != 3 || c[n].rank() != 2 {
                return Err(Error::Invalid(format!("site {n}: wrong tensor rank")));
            }
            if a[n].space(1) != &phys {
                return Err(Error::Invalid(format!("site {n}: physical space differs")));
            }
            if !a[n].space(2).is_dual_of(c[n].space(0)) {
                return Err(Error::Invalid(format!("bond {n}: A and C do not match")));
            }
            if n + 1 < l && !a[n].space(2).is_dual_of(a[n + 1].space(0)) {
                return Err(Error::Invalid(format!("bond {n}: neighbouring site tensors do not match")));
            }
        }
        if a[0].space(0).dim() != 1 || c[l - 1].space(1).dim() != 1 {
            return Err(Error::Invalid("boundary bonds must be one-dimensional".into()));
        }
        Ok(MpsState { a, c, phys, sector })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn a(&self, n: usize) -> &BlockTensor {
        &self.a[n]
    }

    pub fn c(&self, n: usize) -> &BlockTensor {
        &self.c[n]
    }

    pub fn a_all(&self) -> &[BlockTensor] {
        &self.a
    }

    pub fn c_all(&self) -> &[BlockTensor] {
        &self.c
    }

    pub fn phys(&self) -> &IndexSpace {
        &self.phys
    }

    pub fn group(&self) -> ChargeGroup {
        self.phys.group()
    }

    pub fn sector(&self) -> Charge {
        self.sector
    }

    pub fn norm(&self) -> f64 {
        self.c[self.len() - 1].norm()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.a.iter().map(|t| t.space(2).dim()).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Multiplies the state by a constant; every bond matrix carries it.
    pub fn scaled(&self, z: C64) -> Self {
        let mut s = self.clone();
        for c in s.c.iter_mut() {
            *c = c.scale(z);
        }
        s
    }

    /// `ψ = A(0)…A(L−1) C(L−1)` as a dense vector, site 0 most significant.
    pub fn to_dense(&self) -> Result<ndarray::Array1<C64>> {
        let d = self.phys.dim();
        let total = (d as f64).powi(self.len() as i32);
        if total > DENSE_GUARD as f64 {
            return Err(Error::TooLarge(format!("dense vector of dimension {total}")));
        }
        let mut t = self.a[0].clone();
        for n in 1..self.len() {
            t = contract(&t, &self.a[n], &[(t.rank() - 1, 0)])?;
        }
        t = contract(&t, &self.c[self.len() - 1], &[(t.rank() - 1, 0)])?;
        let dense = t.to_dense();
        Ok(dense.into_shape_with_order(total as usize).expect("contiguous"))
    }

    /// Restores left-canonical form: LQ sweep right to left, then positive
    /// QR left to right; the `R` factors become the bond matrices.
    pub fn canonicalize(&self) -> Result<Self> {
        let l = self.len();
        let mut t = self.a.clone();
        t[l - 1] = contract(&t[l - 1], &self.c[l - 1], &[(2, 0)])?;
        for n in (1..l).rev() {
            let (lf, q) = lq_positive(&t[n], &[0])?;
            t[n] = q;
            t[n - 1] = contract(&t[n - 1], &lf, &[(2, 0)])?;
        }
        let mut a = Vec::with_capacity(l);
        let mut c = Vec::with_capacity(l);
        let mut m = t[0].clone();
        for n in 0..l {
            let (qa, r) = qr_positive(&m, &[0, 1])?;
            if n + 1 < l {
                m = contract(&r, &t[n + 1], &[(1, 0)])?;
            }
            a.push(qa);
            c.push(r);
        }
        MpsState::from_parts(a, c, self.phys.clone(), self.sector)
    }

    /// `C(n−1)⁻¹ A(n) C(n)`: the right-canonical tensor at site `n`.
    pub fn b_tensor(&self, n: usize) -> Result<BlockTensor> {
        let ac = contract(&self.a[n], &self.c[n], &[(2, 0)])?;
        if n == 0 {
            return Ok(ac);
        }
        let inv = bond_inverse(&self.c[n - 1], n - 1)?;
        Ok(contract(&inv, &ac, &[(1, 0)])?)
    }

    /// Registers all tensors as leaves on `tape`.
    pub fn to_tape(&self, tape: &mut Tape) -> MpsVars {
        MpsVars {
            a: self.a.iter().map(|t| tape.leaf(t.clone())).collect(),
            c: self.c.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Reads a state back from tape nodes.
    pub fn from_tape(tape: &Tape, vars: &MpsVars, phys: IndexSpace, sector: Charge) -> Result<Self> {
        MpsState::from_parts(
            vars.a.iter().map(|&v| tape.value(v).clone()).collect(),
            vars.c.iter().map(|&v| tape.value(v).clone()).collect(),
            phys,
            sector,
        )
    }
}

/// Inverse of a bond matrix `(X(in), Y(out))`, returned as `(Y*, X*)`.
pub fn bond_inverse(c: &BlockTensor, bond: usize) -> Result<BlockTensor> {
    let bm = BlockMatrix::from_tensor(c, &[0], &[1])?;
    let mut smax: f64 = 0.0;
    let mut smin = f64::INFINITY;
    let mut blocks = std::collections::BTreeMap::new();
    for (&q, m) in &bm.blocks {
        let (u, s, vh) = linalg::svd_thin(m)?;
        if s.len() < m.nrows().max(m.ncols()) {
            smin = 0.0;
        }
        for &x in &s {
            smax = smax.max(x);
            smin = smin.min(x);
        }
        let sinv = s.mapv(|x| C64::new(1.0 / x, 0.0));
        let inv = (linalg::dagger(&vh.view()) * &sinv.insert_axis(ndarray::Axis(0))).dot(&linalg::dagger(&u.view()));
        blocks.insert(q, inv);
    }
    let covered: usize = bm.blocks.values().map(|m| m.nrows()).sum();
    if covered < c.space(0).dim() {
        smin = 0.0;
    }
    if !(smax > 0.0) || smin / smax < PINV_THRESHOLD {
        return Err(Error::SingularBond { bond, ratio: if smax > 0.0 { smin / smax } else { 0.0 } });
    }
    let group = bm.group();
    let inv = BlockMatrix {
        rows: FusedSpace::new(vec![c.space(1).dual()], group),
        cols: FusedSpace::new(vec![c.space(0).dual()], group),
        blocks,
    };
    Ok(inv.to_tensor()?)
}

/// Product state from per-site local factors.
pub fn product_state(phys: &IndexSpace, config: &[LocalState], sector: Option<Charge>) -> Result<MpsState> {
    if phys.dir() != Direction::In {
        return Err(Error::Invalid("physical spaces point inwards".into()));
    }
    if config.is_empty() {
        return Err(Error::Invalid("empty configuration".into()));
    }
    let g = phys.group();
    let d = phys.dim();
    let mut q = g.identity();
    let mut a = Vec::with_capacity(config.len());
    let mut c = Vec::with_capacity(config.len());
    for (site, local) in config.iter().enumerate() {
        let v: Vec<C64> = match local {
            LocalState::Basis(i) => {
                if *i >= d {
                    return Err(Error::Invalid(format!("site {site}: basis index {i} ≥ {d}")));
                }
                (0..d).map(|k| if k == *i { C64::new(1.0, 0.0) } else { C64::default() }).collect()
            }
            LocalState::Vector(v) => {
                if v.len() != d {
                    return Err(Error::Invalid(format!("site {site}: vector of length {}", v.len())));
                }
                let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if n == 0.0 {
                    return Err(Error::Invalid(format!("site {site}: zero vector")));
                }
                v.iter().map(|z| z / n).collect()
            }
        };
        let support: Vec<Charge> = phys
            .sectors()
            .iter()
            .filter(|&&(ch, deg)| {
                let off = phys.offset(ch).unwrap();
                v[off..off + deg].iter().any(|z| z.norm() > 0.0)
            })
            .map(|s| s.0)
            .collect();
        if support.len() != 1 {
            return Err(Error::Invalid(format!("site {site}: local vector spans {} charge sectors", support.len())));
        }
        let ch = support[0];
        let off = phys.offset(ch).unwrap();
        let deg = phys.degeneracy(ch).unwrap();
        let next = g.fuse(q, ch);
        let left = IndexSpace::one(g, q, Direction::In);
        let right = IndexSpace::one(g, next, Direction::Out);
        let blk = ArrayD::from_shape_vec(IxDyn(&[1, deg, 1]), v[off..off + deg].to_vec()).expect("shape");
        a.push(BlockTensor::from_blocks(vec![left, phys.clone(), right.clone()], [(vec![q, ch, next], blk)])?);
        c.push(BlockTensor::identity(&right.dual()));
        q = next;
    }
    if let Some(s) = sector {
        if g.normalize(s) != q {
            return Err(Error::SectorMismatch { found: q, requested: s });
        }
    }
    MpsState::from_parts(a, c, phys.clone(), q)
}

/// Product state of basis indices.
pub fn basis_state(phys: &IndexSpace, config: &[usize]) -> Result<MpsState> {
    let cfg: Vec<LocalState> = config.iter().map(|&i| LocalState::Basis(i)).collect();
    product_state(phys, &cfg, None)
}

/// Compresses a dense vector in charge sector `sector` by sequential SVDs.
pub fn dense_to_mps(
    vector: &ndarray::Array1<C64>,
    l: usize,
    phys: &IndexSpace,
    sector: Charge,
    policy: &TruncationPolicy,
) -> Result<MpsState> {
    let d = phys.dim();
    if l == 0 || vector.len() as f64 != (d as f64).powi(l as i32) {
        return Err(Error::Invalid(format!("vector of length {} is not {d}^{l}", vector.len())));
    }
    let g = phys.group();
    let mut shape = vec![1];
    shape.extend(std::iter::repeat_n(d, l));
    shape.push(1);
    let mut spaces = vec![IndexSpace::one(g, 0, Direction::In)];
    spaces.extend(std::iter::repeat_n(phys.clone(), l));
    spaces.push(IndexSpace::one(g, sector, Direction::Out));
    let dense = vector.clone().into_shape_with_order(IxDyn(&shape)).expect("shape");
    let mut rest = BlockTensor::from_dense(&dense, spaces)?;
    let mut a = Vec::with_capacity(l);
    let mut c = Vec::with_capacity(l);
    for n in 0..l {
        let f = svd_truncated(&rest, &[0, 1], policy)?;
        a.push(f.u);
        if n + 1 < l {
            rest = contract(&f.s, &f.v, &[(1, 0)])?;
            c.push(f.s);
        } else {
            // remaining v is a 1×1 phase; keep it in the last bond matrix
            c.push(contract(&f.s, &f.v, &[(1, 0)])?);
        }
    }
    MpsState::from_parts(a, c, phys.clone(), g.normalize(sector))
}

/// `⟨bra|ket⟩`, zero when the total charges differ.
pub fn overlap(bra: &MpsState, ket: &MpsState) -> Result<C64> {
    let mut tape = Tape::no_grad();
    let b = bra.to_tape(&mut tape);
    let k = ket.to_tape(&mut tape);
    let v = network::overlap(&mut tape, &b, &k)?;
    Ok(tape.value(v).scalar_value()?)
}

/// `⟨ψ|O|ψ⟩` (unnormalized) for a Hermitian operator.
pub fn expectation(state: &MpsState, op: &MpoOperator) -> Result<f64> {
    let mut tape = Tape::no_grad();
    let k = state.to_tape(&mut tape);
    let w = op.to_tape(&mut tape);
    let v = network::expectation(&mut tape, &k, &w)?;
    let z = tape.value(v).scalar_value()?;
    let scale = z.norm().max(1.0);
    if op.is_hermitian() && z.im.abs() > 1e-10 * scale {
        return Err(Error::NonHermitian(z.im));
    }
    Ok(z.re)
}

/// `max_n ‖A(n)^† A(n) − 1‖` over sites.
pub fn left_canonical_defect(state: &MpsState) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in state.a_all() {
        let g = contract(&t.conj(), t, &[(0, 0), (1, 1)])?;
        let id = BlockTensor::identity(&t.space(2).dual());
        worst = worst.max(g.sub(&id)?.norm());
    }
    Ok(worst)
}

/// `‖B B^† − 1‖` for a right-canonical candidate `(left, phys, right)`.
pub fn right_canonical_defect(b: &BlockTensor) -> Result<f64> {
    let g = contract(b, &b.conj(), &[(1, 1), (2, 2)])?;
    let id = BlockTensor::identity(b.space(0));
    Ok(g.sub(&id)?.norm())
}
