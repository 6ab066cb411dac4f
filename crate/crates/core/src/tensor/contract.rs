use std::collections::BTreeMap;

use ndarray::{Array2, ArrayD, IxDyn};

use super::block::{BlockKey, BlockTensor, C64};
use super::TensorError;

/// Contracts index `p.0` of `a` with index `p.1` of `b` for every pair `p`.
///
/// The result carries the unpaired indices of `a` followed by those of `b`,
/// each in their original order. Paired spaces must be dual.
pub fn contract(
    a: &BlockTensor,
    b: &BlockTensor,
    pairs: &[(usize, usize)],
) -> Result<BlockTensor, TensorError> {
    for (n, &(i, j)) in pairs.iter().enumerate() {
        if i >= a.rank() || j >= b.rank() {
            return Err(TensorError::PairOutOfRange { pair: (i, j) });
        }
        if pairs[..n].iter().any(|&(x, y)| x == i || y == j) {
            return Err(TensorError::Structure(format!("index paired twice in {pairs:?}")));
        }
        if !a.space(i).is_dual_of(b.space(j)) {
            return Err(TensorError::SpaceMismatch { pair: (i, j) });
        }
    }
    let a_paired: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let b_paired: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let a_free: Vec<usize> = (0..a.rank()).filter(|i| !a_paired.contains(i)).collect();
    let b_free: Vec<usize> = (0..b.rank()).filter(|i| !b_paired.contains(i)).collect();

    let spaces = a_free
        .iter()
        .map(|&i| a.space(i).clone())
        .chain(b_free.iter().map(|&j| b.space(j).clone()))
        .collect();
    let mut out = BlockTensor::zeros(spaces)?;

    // b blocks as (paired, free) matrices grouped by their paired charges.
    let mut b_groups: BTreeMap<BlockKey, Vec<(BlockKey, Vec<usize>, Array2<C64>)>> = BTreeMap::new();
    for (key, blk) in b.blocks() {
        let ck: BlockKey = b_paired.iter().map(|&j| key[j]).collect();
        let fk: BlockKey = b_free.iter().map(|&j| key[j]).collect();
        let fdims: Vec<usize> = b_free.iter().map(|&j| blk.shape()[j]).collect();
        let mat = as_matrix(blk, &b_paired, &b_free);
        b_groups.entry(ck).or_default().push((fk, fdims, mat));
    }

    let mut acc: BTreeMap<BlockKey, ArrayD<C64>> = BTreeMap::new();
    for (key, blk) in a.blocks() {
        let ck: BlockKey = a_paired.iter().map(|&i| key[i]).collect();
        let Some(partners) = b_groups.get(&ck) else { continue };
        let fk: BlockKey = a_free.iter().map(|&i| key[i]).collect();
        let fdims: Vec<usize> = a_free.iter().map(|&i| blk.shape()[i]).collect();
        let amat = as_matrix(blk, &a_free, &a_paired);
        for (bfk, bfdims, bmat) in partners {
            let prod = amat.dot(bmat);
            let mut okey = fk.clone();
            okey.extend_from_slice(bfk);
            let mut odims = fdims.clone();
            odims.extend_from_slice(bfdims);
            let prod = prod.into_shape_with_order(IxDyn(&odims)).expect("contiguous product");
            match acc.get_mut(&okey) {
                Some(existing) => *existing += &prod,
                None => {
                    acc.insert(okey, prod);
                }
            }
        }
    }
    for (k, v) in acc {
        out.insert_block(k, v)?;
    }
    Ok(out)
}

/// Full trace of a tensor against its own dual index pairs, e.g. `tr(M)` for a
/// matrix with indices `(V, V*)`.
pub fn trace(t: &BlockTensor, pairs: &[(usize, usize)]) -> Result<BlockTensor, TensorError> {
    let mut used = vec![false; t.rank()];
    for &(i, j) in pairs {
        if i >= t.rank() || j >= t.rank() || i == j || used[i] || used[j] {
            return Err(TensorError::PairOutOfRange { pair: (i, j) });
        }
        used[i] = true;
        used[j] = true;
        if !t.space(i).is_dual_of(t.space(j)) {
            return Err(TensorError::SpaceMismatch { pair: (i, j) });
        }
    }
    // Contract with an identity for every traced pair.
    let mut current = t.clone();
    let mut remaining: Vec<usize> = (0..t.rank()).collect();
    for &(i, j) in pairs {
        let pi = remaining.iter().position(|&x| x == i).unwrap();
        let pj = remaining.iter().position(|&x| x == j).unwrap();
        let id = BlockTensor::identity(t.space(j));
        current = contract(&current, &id, &[(pi, 0), (pj, 1)])?;
        remaining.retain(|&x| x != i && x != j);
    }
    Ok(current)
}

fn as_matrix(blk: &ArrayD<C64>, rows: &[usize], cols: &[usize]) -> Array2<C64> {
    let mut perm: Vec<usize> = rows.to_vec();
    perm.extend_from_slice(cols);
    let nr: usize = rows.iter().map(|&i| blk.shape()[i]).product();
    let nc: usize = cols.iter().map(|&i| blk.shape()[i]).product();
    let v = blk.view().permuted_axes(IxDyn(&perm));
    let owned = v.as_standard_layout().into_owned();
    owned.into_shape_with_order((nr, nc)).expect("standard layout reshape")
}
