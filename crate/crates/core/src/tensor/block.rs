use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn, Slice};
use num_complex::Complex64;

use super::space::{Charge, ChargeGroup, IndexSpace};
use super::TensorError;

pub type C64 = Complex64;

/// Per-index charge assignment identifying a block.
pub type BlockKey = Vec<Charge>;

/// Magnitude below which dense entries violating charge conservation are
/// silently dropped by [`BlockTensor::from_dense`].
pub const DENSE_LEAK_TOL: f64 = 1e-12;

/// Block-sparse tensor graded by an abelian charge group.
///
/// Blocks are stored in a `BTreeMap`, so iteration (and every reduction
/// built on it) follows a fixed order of charge keys. Missing blocks are
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTensor {
    spaces: Vec<IndexSpace>,
    blocks: BTreeMap<BlockKey, ArrayD<C64>>,
}

impl BlockTensor {
    /// Tensor with no stored blocks (identically zero).
    pub fn zeros(spaces: Vec<IndexSpace>) -> Result<Self, TensorError> {
        check_groups(&spaces)?;
        Ok(BlockTensor { spaces, blocks: BTreeMap::new() })
    }

    /// Tensor with every symmetry-allowed block present and zero-filled.
    pub fn zeros_full(spaces: Vec<IndexSpace>) -> Result<Self, TensorError> {
        check_groups(&spaces)?;
        let mut blocks = BTreeMap::new();
        for key in allowed_keys(&spaces) {
            let shape = block_shape(&spaces, &key);
            blocks.insert(key, ArrayD::zeros(IxDyn(&shape)));
        }
        Ok(BlockTensor { spaces, blocks })
    }

    pub fn from_blocks(
        spaces: Vec<IndexSpace>,
        blocks: impl IntoIterator<Item = (BlockKey, ArrayD<C64>)>,
    ) -> Result<Self, TensorError> {
        let mut t = BlockTensor::zeros(spaces)?;
        for (k, b) in blocks {
            t.insert_block(k, b)?;
        }
        Ok(t)
    }

    /// Rank-0 tensor holding a single number.
    pub fn scalar(value: C64) -> Self {
        let mut blocks = BTreeMap::new();
        blocks.insert(Vec::new(), ArrayD::from_elem(IxDyn(&[]), value));
        BlockTensor { spaces: Vec::new(), blocks }
    }

    /// Identity map on `space`: indices `(space, space.dual())`.
    pub fn identity(space: &IndexSpace) -> Self {
        let spaces = vec![space.clone(), space.dual()];
        let blocks = space
            .sectors()
            .iter()
            .map(|&(q, d)| {
                let eye = ndarray::Array2::<C64>::eye(d).into_dyn();
                (vec![q, q], eye)
            })
            .collect();
        BlockTensor { spaces, blocks }
    }

    pub fn insert_block(&mut self, key: BlockKey, block: ArrayD<C64>) -> Result<(), TensorError> {
        if key.len() != self.spaces.len() {
            return Err(TensorError::Structure(format!(
                "block key {key:?} has wrong rank for tensor of rank {}",
                self.spaces.len()
            )));
        }
        if !self.key_allowed(&key) {
            return Err(TensorError::ChargeViolation { key });
        }
        let shape = block_shape(&self.spaces, &key);
        if block.shape() != shape.as_slice() {
            return Err(TensorError::Structure(format!(
                "block {key:?} has shape {:?}, expected {shape:?}",
                block.shape()
            )));
        }
        self.blocks.insert(key, block);
        Ok(())
    }

    /// Whether a key names existing sectors and fuses to the identity.
    pub fn key_allowed(&self, key: &[Charge]) -> bool {
        key_allowed(&self.spaces, key)
    }

    pub fn spaces(&self) -> &[IndexSpace] {
        &self.spaces
    }

    pub fn space(&self, i: usize) -> &IndexSpace {
        &self.spaces[i]
    }

    pub fn rank(&self) -> usize {
        self.spaces.len()
    }

    pub fn group(&self) -> Option<ChargeGroup> {
        self.spaces.first().map(|s| s.group())
    }

    pub fn blocks(&self) -> &BTreeMap<BlockKey, ArrayD<C64>> {
        &self.blocks
    }

    pub fn block(&self, key: &[Charge]) -> Option<&ArrayD<C64>> {
        self.blocks.get(key)
    }

    pub fn block_mut(&mut self, key: &[Charge]) -> Option<&mut ArrayD<C64>> {
        self.blocks.get_mut(key)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.spaces.iter().map(|s| s.dim()).collect()
    }

    /// Value of a rank-0 tensor (zero if no block is stored).
    pub fn scalar_value(&self) -> Result<C64, TensorError> {
        if !self.spaces.is_empty() {
            return Err(TensorError::Structure(format!(
                "expected a scalar, found rank {}",
                self.spaces.len()
            )));
        }
        Ok(self.blocks.get(&Vec::new()).map(|b| b[IxDyn(&[])]).unwrap_or_default())
    }

    /// Complex conjugate; every arrow is reversed so that `conj(t)` can be
    /// contracted against `t`.
    pub fn conj(&self) -> Self {
        BlockTensor {
            spaces: self.spaces.iter().map(|s| s.dual()).collect(),
            blocks: self.blocks.iter().map(|(k, b)| (k.clone(), b.mapv(|x| x.conj()))).collect(),
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        BlockTensor {
            spaces: self.spaces.clone(),
            blocks: self.blocks.iter().map(|(k, b)| (k.clone(), b * c)).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(C64::new(c, 0.0))
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        BlockTensor {
            spaces: self.spaces.clone(),
            blocks: self.blocks.iter().map(|(k, b)| (k.clone(), b.mapv(&f))).collect(),
        }
    }

    /// `self += alpha * other`, taking the union of stored blocks.
    pub fn axpy(&mut self, alpha: C64, other: &BlockTensor) -> Result<(), TensorError> {
        if self.spaces != other.spaces {
            return Err(TensorError::Structure("axpy on tensors with different spaces".into()));
        }
        for (k, b) in &other.blocks {
            match self.blocks.get_mut(k) {
                Some(mine) => mine.scaled_add(alpha, b),
                None => {
                    self.blocks.insert(k.clone(), b * alpha);
                }
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &BlockTensor) -> Result<Self, TensorError> {
        let mut out = self.clone();
        out.axpy(C64::new(1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &BlockTensor) -> Result<Self, TensorError> {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.blocks.values().flat_map(|b| b.iter()).map(|x| x.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Frobenius inner product `Σ conj(self) * other` over matching blocks.
    pub fn inner(&self, other: &BlockTensor) -> Result<C64, TensorError> {
        if self.spaces != other.spaces {
            return Err(TensorError::Structure("inner product of mismatched tensors".into()));
        }
        let mut acc = C64::default();
        for (k, b) in &self.blocks {
            if let Some(o) = other.blocks.get(k) {
                acc += b.iter().zip(o.iter()).map(|(x, y)| x.conj() * y).sum::<C64>();
            }
        }
        Ok(acc)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.values().flat_map(|b| b.iter()).fold(0.0, |m, x| m.max(x.norm()))
    }

    /// Largest entrywise deviation, treating missing blocks as zero.
    pub fn max_abs_diff(&self, other: &BlockTensor) -> Result<f64, TensorError> {
        Ok(self.sub(other)?.max_abs())
    }

    /// Reorders indices: output index `i` is input index `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, TensorError> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::Structure(format!("invalid permutation {perm:?} for rank {r}")));
        }
        let spaces = perm.iter().map(|&p| self.spaces[p].clone()).collect();
        let blocks = self
            .blocks
            .iter()
            .map(|(k, b)| {
                let key = perm.iter().map(|&p| k[p]).collect();
                let arr = b.clone().permuted_axes(IxDyn(perm)).as_standard_layout().into_owned();
                (key, arr)
            })
            .collect();
        Ok(BlockTensor { spaces, blocks })
    }

    /// Replaces the arrow/sectors description of index `i` by a dual-compatible
    /// relabeling. Used when a space must be reinterpreted with the opposite arrow.
    pub fn with_space(mut self, i: usize, space: IndexSpace) -> Result<Self, TensorError> {
        if space.sectors() != self.spaces[i].sectors() || space.group() != self.spaces[i].group() {
            return Err(TensorError::Structure("relabeling must keep sectors".into()));
        }
        self.spaces[i] = space;
        for k in self.blocks.keys() {
            if !key_allowed(&self.spaces, k) {
                return Err(TensorError::ChargeViolation { key: k.clone() });
            }
        }
        Ok(self)
    }

    /// Re-checks that every stored block is charge conserving and shaped correctly.
    pub fn verify(&self) -> Result<(), TensorError> {
        for (k, b) in &self.blocks {
            if !self.key_allowed(k) {
                return Err(TensorError::ChargeViolation { key: k.clone() });
            }
            if b.shape() != block_shape(&self.spaces, k).as_slice() {
                return Err(TensorError::Structure(format!("block {k:?} misshapen")));
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> ArrayD<C64> {
        let shape = self.shape();
        let mut out = ArrayD::zeros(IxDyn(&shape));
        for (k, b) in &self.blocks {
            let offs: Vec<usize> =
                k.iter().zip(&self.spaces).map(|(&q, s)| s.offset(q).unwrap()).collect();
            let mut view = out.slice_each_axis_mut(|ax| {
                let i = ax.axis.index();
                Slice::from(offs[i]..offs[i] + b.shape()[i])
            });
            view.assign(b);
        }
        out
    }

    /// Builds a graded tensor from a dense array. Entries outside the allowed
    /// blocks must not exceed [`DENSE_LEAK_TOL`] in magnitude.
    pub fn from_dense(dense: &ArrayD<C64>, spaces: Vec<IndexSpace>) -> Result<Self, TensorError> {
        check_groups(&spaces)?;
        let shape: Vec<usize> = spaces.iter().map(|s| s.dim()).collect();
        if dense.shape() != shape.as_slice() {
            return Err(TensorError::Structure(format!(
                "dense shape {:?} does not match spaces {shape:?}",
                dense.shape()
            )));
        }
        let mut leftover = dense.clone();
        let mut blocks = BTreeMap::new();
        for key in allowed_keys(&spaces) {
            let offs: Vec<usize> = key.iter().zip(&spaces).map(|(&q, s)| s.offset(q).unwrap()).collect();
            let dims = block_shape(&spaces, &key);
            let sel = |ax: ndarray::AxisDescription| {
                let i = ax.axis.index();
                Slice::from(offs[i]..offs[i] + dims[i])
            };
            let block = dense.slice_each_axis(sel).to_owned();
            leftover.slice_each_axis_mut(sel).fill(C64::default());
            blocks.insert(key, block);
        }
        let leak = leftover.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        if leak > DENSE_LEAK_TOL {
            return Err(TensorError::DenseLeak { magnitude: leak });
        }
        Ok(BlockTensor { spaces, blocks })
    }

    /// Drops blocks whose entries are all exactly zero.
    pub fn pruned(mut self) -> Self {
        self.blocks.retain(|_, b| b.iter().any(|x| *x != C64::default()));
        self
    }
}

fn check_groups(spaces: &[IndexSpace]) -> Result<(), TensorError> {
    if let Some(first) = spaces.first() {
        if spaces.iter().any(|s| s.group() != first.group()) {
            return Err(TensorError::Structure("indices carry different charge groups".into()));
        }
    }
    Ok(())
}

pub(crate) fn key_allowed(spaces: &[IndexSpace], key: &[Charge]) -> bool {
    if key.len() != spaces.len() {
        return false;
    }
    if spaces.is_empty() {
        return true;
    }
    let g = spaces[0].group();
    let mut total = g.identity();
    for (s, &q) in spaces.iter().zip(key) {
        if s.degeneracy(q).is_none() {
            return false;
        }
        total = g.fuse(total, s.signed(q));
    }
    total == g.identity()
}

pub(crate) fn block_shape(spaces: &[IndexSpace], key: &[Charge]) -> Vec<usize> {
    spaces.iter().zip(key).map(|(s, &q)| s.degeneracy(q).unwrap_or(0)).collect()
}

/// Every charge-conserving key over `spaces`, in lexicographic order.
pub(crate) fn allowed_keys(spaces: &[IndexSpace]) -> Vec<BlockKey> {
    if spaces.is_empty() {
        return vec![Vec::new()];
    }
    let g = spaces[0].group();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(spaces.len());
    fn rec(
        spaces: &[IndexSpace],
        g: ChargeGroup,
        acc: Charge,
        cur: &mut Vec<Charge>,
        out: &mut Vec<BlockKey>,
    ) {
        let i = cur.len();
        if i == spaces.len() {
            if acc == g.identity() {
                out.push(cur.clone());
            }
            return;
        }
        for &(q, _) in spaces[i].sectors() {
            cur.push(q);
            rec(spaces, g, g.fuse(acc, spaces[i].signed(q)), cur, out);
            cur.pop();
        }
    }
    rec(spaces, g, g.identity(), &mut cur, &mut out);
    out.sort();
    out
}
