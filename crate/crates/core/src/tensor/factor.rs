//! Charge-resolved factorizations: truncated SVD, positive QR/LQ and random
//! unitaries close to the identity.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::block::{BlockTensor, C64};
use super::matrix::{BlockMatrix, FusedSpace};
use super::space::{Charge, Direction, IndexSpace};
use super::TensorError;
use crate::linalg;

/// Bond truncation rule for SVD splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationPolicy {
    pub chi_max: usize,
    /// Singular values at or below `cutoff * s_max` are discarded.
    pub cutoff: f64,
    /// Optional upper bound on the discarded weight of a single split.
    #[serde(default)]
    pub hard_error_budget: Option<f64>,
}

impl TruncationPolicy {
    pub fn new(chi_max: usize, cutoff: f64) -> Result<Self, TensorError> {
        let p = TruncationPolicy { chi_max, cutoff, hard_error_budget: None };
        p.validate()?;
        Ok(p)
    }

    /// Keeps every singular value, including exact zeros.
    pub fn exact() -> Self {
        TruncationPolicy { chi_max: usize::MAX, cutoff: 0.0, hard_error_budget: None }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.chi_max < 1 || !(0.0..1.0).contains(&self.cutoff) {
            return Err(TensorError::InvalidPolicy(format!(
                "chi_max = {}, cutoff = {} (need chi_max >= 1, 0 <= cutoff < 1)",
                self.chi_max, self.cutoff
            )));
        }
        Ok(())
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { chi_max: 64, cutoff: 1e-10, hard_error_budget: None }
    }
}

/// Full (untruncated) SVD of one charge block together with the number of
/// singular triplets that survived truncation.
#[derive(Debug, Clone)]
pub struct SvdBlock {
    pub u: Array2<C64>,
    pub s: Array1<f64>,
    pub vh: Array2<C64>,
    pub kept: usize,
}

/// Result of [`svd_truncated`].
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// Isometry with indices `left ++ [bond(out)]`.
    pub u: BlockTensor,
    /// Diagonal matrix of kept singular values, indices `(bond(in), bond(out))`.
    pub s: BlockTensor,
    /// Co-isometry with indices `[bond(in)] ++ right`.
    pub v: BlockTensor,
    pub discarded_weight: f64,
    /// Layout of the factorized matrix (blocks emptied).
    pub layout: BlockMatrix,
    /// Pre-truncation factors per charge block.
    pub full: BTreeMap<Charge, SvdBlock>,
}

impl SvdFactors {
    /// Kept singular values per charge, descending.
    pub fn singular_values(&self) -> BTreeMap<Charge, Vec<f64>> {
        self.full.iter().map(|(&q, b)| (q, b.s.iter().take(b.kept).copied().collect())).collect()
    }

    pub fn bond(&self) -> &IndexSpace {
        self.u.space(self.u.rank() - 1)
    }
}

fn complement(rank: usize, left: &[usize]) -> Result<Vec<usize>, TensorError> {
    if left.is_empty() || left.len() >= rank || left.iter().any(|&i| i >= rank) {
        return Err(TensorError::Structure(format!(
            "left partition {left:?} must be a nonempty proper subset of 0..{rank}"
        )));
    }
    Ok((0..rank).filter(|i| !left.contains(i)).collect())
}

/// Truncated SVD across the bipartition `left | rest`.
///
/// Singular values of all charge blocks are ranked together; the largest
/// `min(chi_max, #{s > cutoff * s_max})` survive.
pub fn svd_truncated(
    t: &BlockTensor,
    left: &[usize],
    policy: &TruncationPolicy,
) -> Result<SvdFactors, TensorError> {
    policy.validate()?;
    let right = complement(t.rank(), left)?;
    let bm = BlockMatrix::from_tensor(t, left, &right)?;
    let group = bm.group();

    let mut full = BTreeMap::new();
    let mut ranking: Vec<(f64, Charge, usize)> = Vec::new();
    for (&q, m) in &bm.blocks {
        let (u, sv, vh) = linalg::svd_thin(m)?;
        for (i, &x) in sv.iter().enumerate() {
            ranking.push((x, q, i));
        }
        full.insert(q, SvdBlock { u, s: sv, vh, kept: 0 });
    }
    // descending by value, ties broken by (charge, position) for determinism
    ranking.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let s_max = ranking.first().map(|r| r.0).unwrap_or(0.0);
    if !(s_max > 0.0) {
        return Err(TensorError::EmptyTruncation);
    }
    let above = if policy.cutoff > 0.0 {
        ranking.iter().filter(|r| r.0 > policy.cutoff * s_max).count()
    } else {
        ranking.len()
    };
    let keep = above.min(policy.chi_max);
    if keep == 0 {
        return Err(TensorError::EmptyTruncation);
    }
    let discarded_weight: f64 = ranking[keep..].iter().map(|r| r.0 * r.0).sum();
    if let Some(budget) = policy.hard_error_budget {
        if discarded_weight > budget {
            return Err(TensorError::TruncationBudget { discarded: discarded_weight, budget });
        }
    }
    for r in &ranking[..keep] {
        full.get_mut(&r.1).unwrap().kept += 1;
    }

    let sectors: Vec<(Charge, usize)> =
        full.iter().filter(|(_, b)| b.kept > 0).map(|(&q, b)| (q, b.kept)).collect();
    let bond_out = IndexSpace::new(group, sectors, Direction::Out)?;
    let bond_in = bond_out.dual();

    let mut ublocks = BTreeMap::new();
    let mut vblocks = BTreeMap::new();
    let mut sblocks = BTreeMap::new();
    for (&q, b) in &full {
        if b.kept == 0 {
            continue;
        }
        ublocks.insert(q, b.u.slice(s![.., ..b.kept]).to_owned());
        vblocks.insert(q, b.vh.slice(s![..b.kept, ..]).to_owned());
        let d = Array2::from_diag(&b.s.slice(s![..b.kept]).mapv(|x| C64::new(x, 0.0)));
        sblocks.insert(q, d);
    }
    let u = BlockMatrix {
        rows: bm.rows.clone(),
        cols: FusedSpace::new(vec![bond_out.clone()], group),
        blocks: ublocks,
    }
    .to_tensor()?;
    let v = BlockMatrix {
        rows: FusedSpace::new(vec![bond_in.clone()], group),
        cols: bm.cols.clone(),
        blocks: vblocks,
    }
    .to_tensor()?;
    let s = BlockMatrix {
        rows: FusedSpace::new(vec![bond_in.clone()], group),
        cols: FusedSpace::new(vec![bond_out.clone()], group),
        blocks: sblocks,
    }
    .to_tensor()?;
    let layout = bm.with_blocks(BTreeMap::new());
    Ok(SvdFactors { u, s, v, discarded_weight, layout, full })
}

/// Positive-diagonal QR across `left | rest`: `t = q · r` with `q` an isometry
/// (indices `left ++ [bond(out)]`) and `r` upper triangular per block
/// (indices `[bond(in)] ++ rest`).
pub fn qr_positive(t: &BlockTensor, left: &[usize]) -> Result<(BlockTensor, BlockTensor), TensorError> {
    let right = complement(t.rank(), left)?;
    let bm = BlockMatrix::from_tensor(t, left, &right)?;
    let group = bm.group();
    let mut qs = BTreeMap::new();
    let mut rs = BTreeMap::new();
    for (&q, m) in &bm.blocks {
        let (qq, rr) = linalg::qr_positive(m)?;
        if qq.ncols() > 0 {
            qs.insert(q, qq);
            rs.insert(q, rr);
        }
    }
    split_pair(&bm, group, qs, rs)
}

/// Positive-diagonal LQ across `left | rest`: `t = l · q` with `q` a
/// co-isometry (`q q^† = 1`).
pub fn lq_positive(t: &BlockTensor, left: &[usize]) -> Result<(BlockTensor, BlockTensor), TensorError> {
    let right = complement(t.rank(), left)?;
    let bm = BlockMatrix::from_tensor(t, left, &right)?;
    let group = bm.group();
    let mut ls = BTreeMap::new();
    let mut qs = BTreeMap::new();
    for (&q, m) in &bm.blocks {
        let (ll, qq) = linalg::lq_positive(m)?;
        if ll.ncols() > 0 {
            ls.insert(q, ll);
            qs.insert(q, qq);
        }
    }
    split_pair(&bm, group, ls, qs)
}

fn split_pair(
    bm: &BlockMatrix,
    group: super::ChargeGroup,
    lefts: BTreeMap<Charge, Array2<C64>>,
    rights: BTreeMap<Charge, Array2<C64>>,
) -> Result<(BlockTensor, BlockTensor), TensorError> {
    let sectors: Vec<(Charge, usize)> = lefts.iter().map(|(&q, m)| (q, m.ncols())).collect();
    let bond_out = IndexSpace::new(group, sectors, Direction::Out)?;
    let bond_in = bond_out.dual();
    let l = BlockMatrix { rows: bm.rows.clone(), cols: FusedSpace::new(vec![bond_out], group), blocks: lefts }
        .to_tensor()?;
    let r = BlockMatrix { rows: FusedSpace::new(vec![bond_in], group), cols: bm.cols.clone(), blocks: rights }
        .to_tensor()?;
    Ok((l, r))
}

/// Operator spaces `outs ++ duals(outs)` for a gate acting on `outs`.
pub fn operator_spaces(outs: &[IndexSpace]) -> Vec<IndexSpace> {
    outs.iter().cloned().chain(outs.iter().map(|s| s.dual())).collect()
}

/// Identity operator on the product of `outs`.
pub fn identity_operator(outs: &[IndexSpace]) -> Result<BlockTensor, TensorError> {
    let n = outs.len();
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (n..2 * n).collect();
    let t = BlockTensor::zeros_full(operator_spaces(outs))?;
    let bm = BlockMatrix::from_tensor(&t, &rows, &cols)?;
    let blocks = bm.blocks.iter().map(|(&q, m)| (q, Array2::eye(m.nrows()))).collect();
    bm.with_blocks(blocks).to_tensor()
}

/// Random skew-Hermitian generator `K = (G − G^†)/2` per charge block, `G`
/// with i.i.d. complex Gaussian entries.
pub fn random_skew<R: Rng + ?Sized>(outs: &[IndexSpace], rng: &mut R) -> Result<BlockTensor, TensorError> {
    let n = outs.len();
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (n..2 * n).collect();
    let t = BlockTensor::zeros_full(operator_spaces(outs))?;
    let bm = BlockMatrix::from_tensor(&t, &rows, &cols)?;
    let mut blocks = BTreeMap::new();
    for (&q, m) in &bm.blocks {
        let d = m.nrows();
        let g = Array2::from_shape_simple_fn((d, d), || {
            C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        blocks.insert(q, linalg::skew_part(&g));
    }
    bm.with_blocks(blocks).to_tensor()
}

/// `exp(t X)` per charge block for a skew-Hermitian operator `X` whose first
/// half of indices are the rows.
pub fn expm_operator(x: &BlockTensor, t: f64) -> Result<BlockTensor, TensorError> {
    let n = x.rank() / 2;
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (n..2 * n).collect();
    let full = BlockTensor::zeros_full(x.spaces().to_vec())?;
    let mut bm = BlockMatrix::from_tensor(&full, &rows, &cols)?;
    let xm = BlockMatrix::from_tensor(x, &rows, &cols)?;
    for (q, m) in bm.blocks.iter_mut() {
        *m = linalg::expm_skew(&xm.blocks[q], t)?;
    }
    bm.to_tensor()
}

/// `exp(epsilon * K)` with `K` from [`random_skew`]; `epsilon = 0` yields the
/// identity.
pub fn random_unitary<R: Rng + ?Sized>(
    outs: &[IndexSpace],
    epsilon: f64,
    rng: &mut R,
) -> Result<BlockTensor, TensorError> {
    expm_operator(&random_skew(outs, rng)?, epsilon)
}

/// Diagonal entries of a singular-value matrix `(bond(in), bond(out))`.
pub fn diag_values(s: &BlockTensor) -> BTreeMap<Charge, Vec<f64>> {
    s.blocks()
        .iter()
        .map(|(k, b)| {
            let m = b.view().into_dimensionality::<ndarray::Ix2>().expect("matrix");
            (k[0], m.diag().iter().map(|x| x.re).collect())
        })
        .collect()
}

/// `u · s · v` for SVD factors, reconstructing the (truncated) input.
pub fn reconstruct(f: &SvdFactors) -> Result<BlockTensor, TensorError> {
    let nu = f.u.rank();
    let us = super::contract(&f.u, &f.s, &[(nu - 1, 0)])?;
    super::contract(&us, &f.v, &[(nu - 1, 0)])
}
