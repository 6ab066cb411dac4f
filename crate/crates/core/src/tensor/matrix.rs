//! Charge-resolved matrix views of block tensors.
//!
//! Grouping a set of row indices against a set of column indices turns a
//! conserving tensor into a block-diagonal matrix, one dense block per fused
//! row charge. All factorizations operate on this view.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayD, IxDyn};

use super::block::{allowed_keys, BlockKey, BlockTensor, C64};
use super::space::{Charge, ChargeGroup, IndexSpace};
use super::TensorError;

#[derive(Debug, Clone)]
struct Slot {
    charges: BlockKey,
    offset: usize,
    dims: Vec<usize>,
}

/// Combinations of sectors on a group of indices, organized by fused charge.
#[derive(Debug, Clone)]
pub struct FusedSpace {
    spaces: Vec<IndexSpace>,
    group: ChargeGroup,
    slots: BTreeMap<Charge, Vec<Slot>>,
    dims: BTreeMap<Charge, usize>,
}

impl FusedSpace {
    pub fn new(spaces: Vec<IndexSpace>, group: ChargeGroup) -> Self {
        let mut slots: BTreeMap<Charge, Vec<Slot>> = BTreeMap::new();
        let mut dims: BTreeMap<Charge, usize> = BTreeMap::new();
        // Enumerate all sector combinations; fused charge is the signed sum.
        let mut combos: Vec<(BlockKey, Charge)> = vec![(Vec::new(), group.identity())];
        for sp in &spaces {
            let mut next = Vec::with_capacity(combos.len() * sp.sectors().len());
            for (key, q) in &combos {
                for &(c, _) in sp.sectors() {
                    let mut k = key.clone();
                    k.push(c);
                    next.push((k, group.fuse(*q, sp.signed(c))));
                }
            }
            combos = next;
        }
        combos.sort();
        for (key, q) in combos {
            let d: Vec<usize> = key.iter().zip(&spaces).map(|(&c, s)| s.degeneracy(c).unwrap()).collect();
            let size: usize = d.iter().product();
            let off = dims.entry(q).or_insert(0);
            slots.entry(q).or_default().push(Slot { charges: key, offset: *off, dims: d });
            *off += size;
        }
        FusedSpace { spaces, group, slots, dims }
    }

    pub fn spaces(&self) -> &[IndexSpace] {
        &self.spaces
    }

    pub fn dim(&self, q: Charge) -> usize {
        self.dims.get(&q).copied().unwrap_or(0)
    }

    pub fn charges(&self) -> impl Iterator<Item = Charge> + '_ {
        self.dims.keys().copied()
    }

    fn slot(&self, q: Charge, charges: &[Charge]) -> Option<&Slot> {
        self.slots.get(&q)?.iter().find(|s| s.charges == charges)
    }

    fn fused(&self, charges: &[Charge]) -> Charge {
        charges
            .iter()
            .zip(&self.spaces)
            .fold(self.group.identity(), |acc, (&c, s)| self.group.fuse(acc, s.signed(c)))
    }
}

/// A tensor viewed as a block-diagonal matrix between two groups of indices.
///
/// Block `q` maps the column combinations fusing to `-q` onto the row
/// combinations fusing to `q`.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    pub rows: FusedSpace,
    pub cols: FusedSpace,
    pub blocks: BTreeMap<Charge, Array2<C64>>,
}

impl BlockMatrix {
    /// Groups `row_axes` against `col_axes` (together a permutation of all indices).
    pub fn from_tensor(
        t: &BlockTensor,
        row_axes: &[usize],
        col_axes: &[usize],
    ) -> Result<Self, TensorError> {
        let mut all: Vec<usize> = row_axes.iter().chain(col_axes).copied().collect();
        all.sort_unstable();
        if all != (0..t.rank()).collect::<Vec<_>>() || row_axes.is_empty() || col_axes.is_empty() {
            return Err(TensorError::Structure(format!(
                "bad bipartition {row_axes:?} | {col_axes:?} of rank {}",
                t.rank()
            )));
        }
        let group = t.group().unwrap_or(ChargeGroup::Trivial);
        let rows = FusedSpace::new(row_axes.iter().map(|&i| t.space(i).clone()).collect(), group);
        let cols = FusedSpace::new(col_axes.iter().map(|&i| t.space(i).clone()).collect(), group);
        let mut blocks = BTreeMap::new();
        for q in rows.charges() {
            let nc = cols.dim(group.inverse(q));
            if nc > 0 {
                blocks.insert(q, Array2::zeros((rows.dim(q), nc)));
            }
        }
        let mut perm: Vec<usize> = row_axes.to_vec();
        perm.extend_from_slice(col_axes);
        for (key, blk) in t.blocks() {
            let rk: BlockKey = row_axes.iter().map(|&i| key[i]).collect();
            let ck: BlockKey = col_axes.iter().map(|&i| key[i]).collect();
            let q = rows.fused(&rk);
            let rs = rows.slot(q, &rk).expect("row slot");
            let cs = cols.slot(group.inverse(q), &ck).expect("col slot");
            let nr: usize = rs.dims.iter().product();
            let nc: usize = cs.dims.iter().product();
            let m = blk
                .view()
                .permuted_axes(IxDyn(&perm))
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((nr, nc))
                .expect("reshape");
            let target = blocks.get_mut(&q).expect("block present");
            target.slice_mut(s![rs.offset..rs.offset + nr, cs.offset..cs.offset + nc]).assign(&m);
        }
        Ok(BlockMatrix { rows, cols, blocks })
    }

    /// Rebuilds a tensor with indices `rows ++ cols`.
    pub fn to_tensor(&self) -> Result<BlockTensor, TensorError> {
        let group = self.rows.group;
        let spaces: Vec<IndexSpace> =
            self.rows.spaces.iter().chain(&self.cols.spaces).cloned().collect();
        let mut out = BlockTensor::zeros(spaces)?;
        for (&q, m) in &self.blocks {
            let (Some(rslots), Some(cslots)) =
                (self.rows.slots.get(&q), self.cols.slots.get(&group.inverse(q)))
            else {
                continue;
            };
            for rs in rslots {
                let nr: usize = rs.dims.iter().product();
                for cs in cslots {
                    let nc: usize = cs.dims.iter().product();
                    let sub = m.slice(s![rs.offset..rs.offset + nr, cs.offset..cs.offset + nc]);
                    let mut shape = rs.dims.clone();
                    shape.extend_from_slice(&cs.dims);
                    let blk: ArrayD<C64> =
                        sub.as_standard_layout().into_owned().into_shape_with_order(IxDyn(&shape)).expect("reshape");
                    let mut key = rs.charges.clone();
                    key.extend_from_slice(&cs.charges);
                    out.insert_block(key, blk)?;
                }
            }
        }
        Ok(out)
    }

    /// Same layout with replacement blocks (shapes must match).
    pub fn with_blocks(&self, blocks: BTreeMap<Charge, Array2<C64>>) -> Self {
        BlockMatrix { rows: self.rows.clone(), cols: self.cols.clone(), blocks }
    }

    pub fn group(&self) -> ChargeGroup {
        self.rows.group
    }
}

/// Whether `spaces` admit any conserving block at all.
pub fn has_allowed_blocks(spaces: &[IndexSpace]) -> bool {
    !allowed_keys(spaces).is_empty()
}
