//! Differentiable contractions of MPS networks on a [`Tape`].

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::{BlockTensor, Direction, IndexSpace, C64};

/// Tape handles of an MPS (see [`super::MpsState`]).
#[derive(Debug, Clone)]
pub struct MpsVars {
    pub a: Vec<Var>,
    pub c: Vec<Var>,
}

impl MpsVars {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// Left partial overlaps `E(i)` over sites `0..=i`, indices
/// `(bra right(in), ket right(out))`.
pub fn left_envs(tape: &mut Tape, bra: &[Var], ket: &[Var]) -> Result<Vec<Var>> {
    let mut envs = Vec::with_capacity(ket.len());
    let b0 = tape.conj(bra[0]);
    let mut e = tape.contract(b0, ket[0], &[(0, 0), (1, 1)])?;
    envs.push(e);
    for n in 1..ket.len() {
        let x = tape.contract(e, ket[n], &[(1, 0)])?;
        let bn = tape.conj(bra[n]);
        e = tape.contract(bn, x, &[(0, 0), (1, 1)])?;
        envs.push(e);
    }
    Ok(envs)
}

/// `conj(C_bra)^T · E · C_ket`, indices `(bra bond(in), ket bond(out))`.
pub fn cut_matrix(tape: &mut Tape, env: Var, bra_c: Var, ket_c: Var) -> Result<Var> {
    let ec = tape.contract(env, ket_c, &[(1, 0)])?;
    let bc = tape.conj(bra_c);
    Ok(tape.contract(bc, ec, &[(0, 0)])?)
}

/// `⟨bra|ket⟩` as a complex scalar node.
pub fn overlap(tape: &mut Tape, bra: &MpsVars, ket: &MpsVars) -> Result<Var> {
    let l = ket.len();
    let qb = tape.value(bra.c[l - 1]).space(1).clone();
    let qk = tape.value(ket.c[l - 1]).space(1).clone();
    if qb != qk {
        return Ok(tape.leaf(BlockTensor::scalar(C64::default())));
    }
    let envs = left_envs(tape, &bra.a, &ket.a)?;
    let m = cut_matrix(tape, envs[l - 1], bra.c[l - 1], ket.c[l - 1])?;
    Ok(tape.trace(m, &[(0, 1)])?)
}

/// `⟨ψ|W|ψ⟩` with environment layout `(ket, mpo, bra)`.
pub fn expectation(tape: &mut Tape, ket: &MpsVars, w: &[Var]) -> Result<Var> {
    let l = ket.len();
    let last = tape.contract(ket.a[l - 1], ket.c[l - 1], &[(2, 0)])?;
    let mut sites: Vec<Var> = ket.a[..l - 1].to_vec();
    sites.push(last);

    let left = tape.value(sites[0]).space(0).clone();
    let wl = tape.value(w[0]).space(0).clone();
    let g = left.group();
    let start = BlockTensor::from_blocks(
        vec![left.dual(), wl.dual(), left.clone()],
        [(vec![left.sectors()[0].0, wl.sectors()[0].0, left.sectors()[0].0], ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1, 1, 1]), C64::new(1.0, 0.0)))],
    )?;
    let mut f = tape.leaf(start);
    for n in 0..l {
        let x = tape.contract(f, sites[n], &[(0, 0)])?; // (w, b, p, kR)
        let y = tape.contract(x, w[n], &[(0, 0), (2, 2)])?; // (b, kR, out, wR)
        let bc = tape.conj(sites[n]);
        f = tape.contract(y, bc, &[(0, 0), (2, 1)])?; // (kR, wR, bR)
    }
    // close the ket/bra charge leg and the operator's right boundary
    let f = tape.trace(f, &[(0, 2)])?;
    let wr = tape.value(w[l - 1]).space(3).clone();
    let close = BlockTensor::from_blocks(
        vec![IndexSpace::one(g, wr.sectors()[0].0, Direction::In)],
        [(vec![wr.sectors()[0].0], ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1]), C64::new(1.0, 0.0)))],
    )?;
    let close = tape.leaf(close);
    Ok(tape.contract(f, close, &[(0, 0)])?)
}
