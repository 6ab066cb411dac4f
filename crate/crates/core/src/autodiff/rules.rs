//! Reverse rules for the elementary operations, in the convention
//! `x̄ = ∂L/∂Re(x) + i ∂L/∂Im(x)`.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, Axis};

use super::Diagnostics;
use crate::linalg::dagger;
use crate::tensor::{contract, BlockMatrix, BlockTensor, SvdFactors, TensorError, C64};

/// Lorentzian broadening of `1/x` in the SVD reverse rule.
pub const SVD_BROADENING: f64 = 1e-12;

fn split_pairs(ra: usize, rb: usize, pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let a_free = (0..ra).filter(|i| !pairs.iter().any(|p| p.0 == *i)).collect();
    let b_free = (0..rb).filter(|j| !pairs.iter().any(|p| p.1 == *j)).collect();
    (a_free, b_free)
}

/// Adjoint of `x` in `c = contract(x, y, pairs)` (or with roles swapped via
/// `x_first = false`), i.e. `c̄ · conj(y)` contracted over the free indices
/// of `y` and permuted back into the index order of `x`.
fn contract_adjoint(
    c_bar: &BlockTensor,
    y: &BlockTensor,
    x_rank: usize,
    pairs: &[(usize, usize)],
    x_first: bool,
) -> Result<BlockTensor, TensorError> {
    // pairs as (x index, y index)
    let xy: Vec<(usize, usize)> =
        if x_first { pairs.to_vec() } else { pairs.iter().map(|&(a, b)| (b, a)).collect() };
    let (x_free, y_free) = split_pairs(x_rank, y.rank(), &xy);
    // c̄ carries a's free indices first, then b's
    let y_offset = if x_first { x_free.len() } else { 0 };
    let cpairs: Vec<(usize, usize)> = y_free.iter().enumerate().map(|(k, &j)| (y_offset + k, j)).collect();
    let raw = contract(c_bar, &y.conj(), &cpairs)?;
    // raw indices: remaining c̄ indices (x_free, in order), then y's paired indices ascending
    let mut y_paired: Vec<usize> = xy.iter().map(|p| p.1).collect();
    y_paired.sort_unstable();
    let mut perm = vec![0; x_rank];
    for (pos, &i) in x_free.iter().enumerate() {
        perm[i] = pos;
    }
    for &(i, j) in &xy {
        perm[i] = x_free.len() + y_paired.iter().position(|&q| q == j).unwrap();
    }
    raw.permute(&perm)
}

/// Pullback of `c = contract(a, b, pairs)`.
pub fn contract_pullback(
    a: &BlockTensor,
    b: &BlockTensor,
    pairs: &[(usize, usize)],
    c_bar: &BlockTensor,
) -> Result<(BlockTensor, BlockTensor), TensorError> {
    let a_bar = contract_adjoint(c_bar, b, a.rank(), pairs, true)?;
    let b_bar = contract_adjoint(c_bar, a, b.rank(), pairs, false)?;
    Ok((a_bar, b_bar))
}

/// Inverse of a permutation.
pub fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Pullback of `y = trace(x, pairs)`: `ȳ ⊗ δ ⊗ δ …` arranged like `x`.
pub fn trace_pullback(
    x: &BlockTensor,
    pairs: &[(usize, usize)],
    y_bar: &BlockTensor,
) -> Result<BlockTensor, TensorError> {
    let mut out = y_bar.clone();
    let mut order: Vec<usize> = (0..x.rank()).filter(|k| !pairs.iter().any(|p| p.0 == *k || p.1 == *k)).collect();
    for &(i, j) in pairs {
        let id = BlockTensor::identity(x.space(i));
        out = contract(&out, &id, &[])?;
        order.push(i);
        order.push(j);
    }
    // out index n corresponds to x index order[n]
    out.permute(&inverse_perm(&order))
}

/// Pullback of the truncated SVD through the saved full factors.
///
/// `u_bar`, `s_bar`, `v_bar` may be `None` for outputs that do not reach the
/// loss. Truncated-away directions enter through the full thin factors and
/// the projectors onto the complements of `U` and `V`.
pub fn svd_pullback(
    f: &SvdFactors,
    u_bar: Option<&BlockTensor>,
    s_bar: Option<&BlockTensor>,
    v_bar: Option<&BlockTensor>,
    diag: &mut Diagnostics,
) -> Result<BlockTensor, TensorError> {
    let nl = f.u.rank() - 1;
    let nr = f.v.rank() - 1;
    let ub = match u_bar {
        Some(t) => Some(BlockMatrix::from_tensor(t, &(0..nl).collect::<Vec<_>>(), &[nl])?.blocks),
        None => None,
    };
    let vb = match v_bar {
        Some(t) => Some(BlockMatrix::from_tensor(t, &[0], &(1..=nr).collect::<Vec<_>>())?.blocks),
        None => None,
    };
    let sb = s_bar.map(|t| {
        t.blocks()
            .iter()
            .map(|(k, b)| {
                let m = b.view().into_dimensionality::<ndarray::Ix2>().expect("matrix");
                (k[0], m.diag().iter().map(|z| z.re).collect::<Vec<f64>>())
            })
            .collect::<BTreeMap<_, _>>()
    });
    let dd = SVD_BROADENING * SVD_BROADENING;
    let mut out = BTreeMap::new();
    for (&q, blk) in &f.full {
        let (m, k) = blk.u.dim();
        let n = blk.vh.ncols();
        let kept = blk.kept;
        let s = &blk.s;
        let mut ubar = Array2::<C64>::zeros((m, k));
        let mut vhbar = Array2::<C64>::zeros((k, n));
        let mut sbar = Array1::<f64>::zeros(k);
        let mut any = false;
        if let Some(x) = ub.as_ref().and_then(|b| b.get(&q)) {
            ubar.slice_mut(s![.., ..kept]).assign(x);
            any = true;
        }
        if let Some(x) = vb.as_ref().and_then(|b| b.get(&q)) {
            vhbar.slice_mut(s![..kept, ..]).assign(x);
            any = true;
        }
        if let Some(x) = sb.as_ref().and_then(|b| b.get(&q)) {
            for (i, &v) in x.iter().enumerate() {
                sbar[i] = v;
            }
            any = true;
        }
        if !any {
            continue;
        }
        let u = &blk.u;
        let v = dagger(&blk.vh.view()); // n x k
        let vbar = dagger(&vhbar.view()); // adjoint of V
        let uhub = dagger(&u.view()).dot(&ubar);
        let vhvb = dagger(&v.view()).dot(&vbar);

        let mut core = Array2::<C64>::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let delta = s[j] * s[j] - s[i] * s[i];
                if delta.abs() <= SVD_BROADENING && (i < kept || j < kept) && i < j {
                    diag.degenerate_svd_events += 1;
                }
                let fij = delta / (delta * delta + dd);
                let jij = fij * uhub[[i, j]];
                let jji = -fij * uhub[[j, i]];
                let kij = fij * vhvb[[i, j]];
                let kji = -fij * vhvb[[j, i]];
                // (J + J†) S + S (K + K†)
                core[[i, j]] += (jij + jji.conj()) * s[j] + s[i] * (kij + kji.conj());
            }
        }
        for i in 0..k {
            let si = s[i];
            let inv2 = si / (si * si + dd) * 0.5;
            let g = uhub[[i, i]].im - vhvb[[i, i]].im;
            core[[i, i]] += C64::new(sbar[i], g * inv2);
        }
        let sinv = s.mapv(|x| x / (x * x + dd));
        let sinv_c = sinv.mapv(|x| C64::new(x, 0.0)).insert_axis(Axis(0));
        let vh = &blk.vh;
        let mut a_bar = u.dot(&core).dot(vh);
        if m > k {
            let proj_u = &ubar - &u.dot(&uhub);
            a_bar = a_bar + (&proj_u * &sinv_c).dot(vh);
        }
        if n > k {
            // (I - V V†) V̄ , transposed into the row space
            let proj_v = &vbar - &v.dot(&vhvb);
            a_bar = a_bar + (u * &sinv_c).dot(&dagger(&proj_v.view()));
        }
        out.insert(q, a_bar);
    }
    let bm = f.layout.with_blocks(out);
    bm.to_tensor()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{svd_truncated, ChargeGroup, Direction, IndexSpace, TruncationPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_tensor(spaces: Vec<IndexSpace>, rng: &mut ChaCha8Rng) -> BlockTensor {
        let mut t = BlockTensor::zeros_full(spaces).unwrap();
        let keys: Vec<_> = t.blocks().keys().cloned().collect();
        for k in keys {
            t.block_mut(&k)
                .unwrap()
                .mapv_inplace(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        }
        t
    }

    fn perturb(t: &BlockTensor, dir: &BlockTensor, h: C64) -> BlockTensor {
        let mut out = t.clone();
        out.axpy(h, dir).unwrap();
        out
    }

    /// Directional derivative of a real function by central differences along
    /// real and imaginary directions, compared with Re⟨x̄, dir⟩.
    fn fd_check(
        x: &BlockTensor,
        x_bar: &BlockTensor,
        f: impl Fn(&BlockTensor) -> f64,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let dir = random_tensor(x.spaces().to_vec(), rng);
        let h = 1e-5;
        let fd = (f(&perturb(x, &dir, C64::new(h, 0.0))) - f(&perturb(x, &dir, C64::new(-h, 0.0)))) / (2.0 * h);
        let ad = x_bar.inner(&dir).unwrap().re;
        (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-8)
    }

    #[test]
    fn identity_contraction_passes_adjoint_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = IndexSpace::new(ChargeGroup::z2(), vec![(0, 2), (1, 2)], Direction::In).unwrap();
        let a = random_tensor(vec![s.clone(), s.dual()], &mut rng);
        let id = BlockTensor::identity(&s);
        let c_bar = random_tensor(vec![s.clone(), s.dual()], &mut rng);
        let (a_bar, _) = contract_pullback(&a, &id, &[(1, 0)], &c_bar).unwrap();
        assert!(a_bar.max_abs_diff(&c_bar).unwrap() < 1e-15);
    }

    #[test]
    fn contraction_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ChargeGroup::U1;
        let p = IndexSpace::new(g, vec![(1, 1), (-1, 1)], Direction::In).unwrap();
        let b = IndexSpace::new(g, vec![(0, 2), (2, 1), (-2, 1)], Direction::In).unwrap();
        let x = random_tensor(vec![b.clone(), p.clone(), b.dual()], &mut rng);
        let y = random_tensor(vec![b.clone(), p.dual(), p.clone()], &mut rng);
        let w = random_tensor(vec![b.clone(), p.clone()], &mut rng);
        let pairs = [(2, 0), (1, 1)];
        // L = Re <w, contract(x, y)>
        let loss = |x: &BlockTensor, y: &BlockTensor| w.inner(&contract(x, y, &pairs).unwrap()).unwrap().re;
        let (xb, yb) = contract_pullback(&x, &y, &pairs, &w).unwrap();
        assert!(fd_check(&x, &xb, |t| loss(t, &y), &mut rng) < 1e-7);
        assert!(fd_check(&y, &yb, |t| loss(&x, t), &mut rng) < 1e-7);
    }

    #[test]
    fn trace_adjoint_is_identity_scaled() {
        let s = IndexSpace::new(ChargeGroup::z2(), vec![(0, 2), (1, 1)], Direction::In).unwrap();
        let x = BlockTensor::zeros_full(vec![s.clone(), s.dual()]).unwrap();
        let yb = BlockTensor::scalar(C64::new(2.0, 1.0));
        let xb = trace_pullback(&x, &[(0, 1)], &yb).unwrap();
        let want = BlockTensor::identity(&s).scale(C64::new(2.0, 1.0));
        assert!(xb.max_abs_diff(&want).unwrap() < 1e-15);
    }

    fn sum_sq(f: &SvdFactors) -> BlockTensor {
        f.s.scale_real(2.0)
    }

    #[test]
    fn sum_of_squared_singular_values_gives_twice_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_tensor(vec![IndexSpace::trivial(6, Direction::In), IndexSpace::trivial(4, Direction::Out)], &mut rng);
        let f = svd_truncated(&t, &[0], &TruncationPolicy::exact()).unwrap();
        let mut d = Diagnostics::default();
        let tb = svd_pullback(&f, None, Some(&sum_sq(&f)), None, &mut d).unwrap();
        assert!(tb.max_abs_diff(&t.scale_real(2.0)).unwrap() < 1e-12);
    }

    #[test]
    fn diagonal_seed_on_values_only() {
        let m = Array2::from_diag(&ndarray::arr1(&[4.0, 2.0, 1.0]).mapv(|x| C64::new(x, 0.0)));
        let t = BlockTensor::from_dense(
            &m.into_dyn(),
            vec![IndexSpace::trivial(3, Direction::In), IndexSpace::trivial(3, Direction::Out)],
        )
        .unwrap();
        let f = svd_truncated(&t, &[0], &TruncationPolicy::exact()).unwrap();
        let seed = f.s.map(|z| if z.norm() > 0.0 { C64::new(0.5, 0.0) } else { z });
        let mut d = Diagnostics::default();
        let tb = svd_pullback(&f, None, Some(&seed), None, &mut d).unwrap();
        let dense = tb.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((dense[[i, j]] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    /// Gauge-invariant loss touching u, s and v: Re tr(W1 u s v) + Σ s + |u|-weighted terms.
    fn svd_loss(f: &SvdFactors, w: &BlockTensor, wu: &BlockTensor) -> f64 {
        let nl = f.u.rank() - 1;
        let us = contract(&f.u, &f.s, &[(nl, 0)]).unwrap();
        let usv = contract(&us, &f.v, &[(nl, 0)]).unwrap();
        let a = w.inner(&usv).unwrap().re;
        // u u† is gauge invariant (projector)
        let pu = contract(&f.u, &f.u.conj(), &[(nl, nl)]).unwrap();
        let b = wu.inner(&pu).unwrap().re;
        let c: f64 = f.singular_values().values().flatten().map(|x| x.sqrt()).sum();
        a + b + c
    }

    fn svd_loss_bar(f: &SvdFactors, w: &BlockTensor, wu: &BlockTensor) -> (BlockTensor, BlockTensor, BlockTensor) {
        // adjoints of u, s, v for svd_loss
        let nl = f.u.rank() - 1;
        let us = contract(&f.u, &f.s, &[(nl, 0)]).unwrap();
        let (us_bar, v_bar) = contract_pullback(&us, &f.v, &[(nl, 0)], w).unwrap();
        let (mut u_bar, mut s_bar) = contract_pullback(&f.u, &f.s, &[(nl, 0)], &us_bar).unwrap();
        let (pu_a, pu_b) = contract_pullback(&f.u, &f.u.conj(), &[(nl, nl)], wu).unwrap();
        u_bar.axpy(C64::new(1.0, 0.0), &pu_a).unwrap();
        u_bar.axpy(C64::new(1.0, 0.0), &pu_b.conj()).unwrap();
        let ds = f.s.map(|z| if z.norm() > 0.0 { C64::new(0.5 / z.re.sqrt(), 0.0) } else { z });
        s_bar.axpy(C64::new(1.0, 0.0), &ds).unwrap();
        (u_bar, s_bar, v_bar)
    }

    #[test]
    fn svd_pullback_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = ChargeGroup::z2();
        let a = IndexSpace::new(g, vec![(0, 3), (1, 2)], Direction::In).unwrap();
        let p = IndexSpace::new(g, vec![(0, 1), (1, 1)], Direction::In).unwrap();
        let b = IndexSpace::new(g, vec![(0, 2), (1, 2)], Direction::Out).unwrap();
        for (policy, tol) in [(TruncationPolicy::exact(), 1e-6), (TruncationPolicy::new(5, 0.0).unwrap(), 1e-5)] {
            for _ in 0..5 {
                let t = random_tensor(vec![a.clone(), p.clone(), b.clone()], &mut rng);
                let f = svd_truncated(&t, &[0, 1], &policy).unwrap();
                let w = random_tensor(t.spaces().to_vec(), &mut rng);
                let wu = random_tensor(vec![a.clone(), p.clone(), a.dual(), p.dual()], &mut rng);
                let (ub, sb, vb) = svd_loss_bar(&f, &w, &wu);
                let mut d = Diagnostics::default();
                let tb = svd_pullback(&f, Some(&ub), Some(&sb), Some(&vb), &mut d).unwrap();
                let loss = |x: &BlockTensor| svd_loss(&svd_truncated(x, &[0, 1], &policy).unwrap(), &w, &wu);
                let err = fd_check(&t, &tb, loss, &mut rng);
                assert!(err < tol, "relative error {err}");
            }
        }
    }
}
