use ndarray::Array2;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{contract, BlockTensor, ChargeGroup, Direction, IndexSpace, C64};

/// Chain of rank-4 tensors `(left(in), out(in), in(out), right(out))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpoOperator {
    w: Vec<BlockTensor>,
    phys: IndexSpace,
    hermitian: bool,
}

impl MpoOperator {
    pub fn new(w: Vec<BlockTensor>, phys: IndexSpace, hermitian: bool) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Invalid("empty MPO".into()));
        }
        for (n, t) in w.iter().enumerate() {
            if t.rank() != 4 || t.space(1) != &phys || !t.space(2).is_dual_of(&phys) {
                return Err(Error::Invalid(format!("MPO site {n} has wrong index structure")));
            }
            if n + 1 < w.len() && !t.space(3).is_dual_of(w[n + 1].space(0)) {
                return Err(Error::Invalid(format!("MPO bond {n} does not match")));
            }
        }
        let l = w.len();
        let ok = |s: &IndexSpace| s.dim() == 1 && s.sectors()[0].0 == 0;
        if !ok(w[0].space(0)) || !ok(w[l - 1].space(3)) {
            return Err(Error::Invalid("MPO boundaries must be one-dimensional and neutral".into()));
        }
        Ok(MpoOperator { w, phys, hermitian })
    }

    /// Identity operator on `l` sites.
    pub fn identity(l: usize, phys: &IndexSpace) -> Result<Self> {
        let g = phys.group();
        let b = IndexSpace::one(g, 0, Direction::In);
        let id = BlockTensor::identity(phys);
        let mut w = Vec::with_capacity(l);
        for _ in 0..l {
            let blocks = id.blocks().iter().map(|(k, blk)| {
                let shape = [1, blk.shape()[0], blk.shape()[1], 1];
                (vec![0, k[0], k[1], 0], blk.clone().into_shape_with_order(ndarray::IxDyn(&shape)).unwrap())
            });
            w.push(BlockTensor::from_blocks(vec![b.clone(), phys.clone(), phys.dual(), b.dual()], blocks)?);
        }
        MpoOperator::new(w, phys.clone(), true)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn site(&self, n: usize) -> &BlockTensor {
        &self.w[n]
    }

    pub fn sites(&self) -> &[BlockTensor] {
        &self.w
    }

    pub fn phys(&self) -> &IndexSpace {
        &self.phys
    }

    pub fn group(&self) -> ChargeGroup {
        self.phys.group()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.w.iter().map(|t| t.space(3).dim()).collect()
    }

    pub fn to_tape(&self, tape: &mut Tape) -> Vec<Var> {
        self.w.iter().map(|t| tape.leaf(t.clone())).collect()
    }

    /// Dense `d^L × d^L` matrix (rows = outgoing physical indices).
    pub fn to_dense(&self) -> Result<Array2<C64>> {
        let l = self.len();
        let d = self.phys.dim();
        let n = (d as f64).powi(l as i32);
        if n > (1u64 << 14) as f64 {
            return Err(Error::TooLarge(format!("dense MPO of dimension {n}")));
        }
        let n = n as usize;
        let mut t = self.w[0].clone();
        for k in 1..l {
            t = contract(&t, &self.w[k], &[(t.rank() - 1, 0)])?;
        }
        // indices: left, (out_k, in_k) for k = 0..l, right
        let mut perm = vec![0];
        perm.extend((0..l).map(|k| 1 + 2 * k));
        perm.extend((0..l).map(|k| 2 + 2 * k));
        perm.push(2 * l + 1);
        let dense = t.permute(&perm)?.to_dense();
        Ok(dense
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((n, n))
            .expect("square"))
    }
}
