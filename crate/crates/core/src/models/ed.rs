//! Exact diagonalization within charge sectors.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sparse::{sector_hamiltonian, SparseMatrix};
use super::{ModelSpec, Symmetry};
use crate::error::{Error, Result};
use crate::linalg::eigh;
use crate::mps::{dense_to_mps, MpsState};
use crate::tensor::{Charge, TruncationPolicy, C64};

/// Sectors up to this dimension are diagonalized densely; larger ones by
/// Lanczos (which resolves one vector per degenerate level).
pub const DENSE_EIG_LIMIT: usize = 512;

const LANCZOS_MAX_KRYLOV: usize = 300;
const LANCZOS_TOL: f64 = 1e-11;
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub energy: f64,
    /// Normalized eigenvector in the full product basis.
    pub vector: Array1<C64>,
}

fn resolve_sector(spec: &ModelSpec, sector: Option<Charge>) -> Result<Option<Charge>> {
    match (spec.symmetry, sector) {
        (Symmetry::None, None | Some(0)) => Ok(None),
        (Symmetry::None, Some(q)) => Err(Error::Config(format!("sector {q} requested for a model without symmetry"))),
        (_, Some(q)) => Ok(Some(spec.group().normalize(q))),
        (_, None) => Ok(Some(spec.default_sector())),
    }
}

/// Rotates every degenerate cluster of columns onto the projections of the
/// basis states in index order, and fixes phases so that the first sizable
/// entry is real positive.
fn canonicalize(w: &[f64], v: &mut Array2<C64>) {
    let n = w.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (w[end] - w[start]).abs() < DEGENERACY_TOL * w[start].abs().max(1.0) {
            end += 1;
        }
        if end - start > 1 {
            let block = v.slice(ndarray::s![.., start..end]).to_owned();
            let mut chosen: Vec<Array1<C64>> = Vec::new();
            for i in 0..block.nrows() {
                if chosen.len() == end - start {
                    break;
                }
                let coeff = block.row(i).mapv(|x| x.conj());
                let mut p = block.dot(&coeff);
                for c in &chosen {
                    let ov: C64 = c.iter().zip(&p).map(|(a, b)| a.conj() * b).sum();
                    p = p - c.mapv(|x| x * ov);
                }
                let nrm = p.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                if nrm > 1e-6 {
                    chosen.push(p.mapv(|x| x / nrm));
                }
            }
            for (k, c) in chosen.into_iter().enumerate() {
                v.column_mut(start + k).assign(&c);
            }
        }
        start = end;
    }
    for mut col in v.axis_iter_mut(Axis(1)) {
        let top = col.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        if let Some(x) = col.iter().find(|x| x.norm() > 1e-3 * top).copied() {
            let ph = x.conj() / x.norm();
            col.mapv_inplace(|y| y * ph);
        }
    }
}

fn dense_eigs(h: &SparseMatrix, k: usize) -> Result<(Vec<f64>, Array2<C64>)> {
    let (w, mut v) = eigh(&h.to_dense())?;
    let w = w.to_vec();
    canonicalize(&w, &mut v);
    let k = k.min(w.len());
    Ok((w[..k].to_vec(), v.slice(ndarray::s![.., ..k]).to_owned()))
}

fn dot(a: &Array1<C64>, b: &Array1<C64>) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Lanczos with full reorthogonalization and a fixed pseudo-random start.
fn lanczos(h: &SparseMatrix, k: usize) -> Result<(Vec<f64>, Array2<C64>)> {
    let n = h.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v0 = Array1::from_shape_fn(n, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let nrm = dot(&v0, &v0).re.sqrt();
    v0.mapv_inplace(|x| x / nrm);
    let mut basis = vec![v0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let m_max = LANCZOS_MAX_KRYLOV.min(n);
    loop {
        let j = basis.len() - 1;
        let mut w = h.matvec(&basis[j]);
        alpha.push(dot(&basis[j], &w).re);
        for _ in 0..2 {
            for b in &basis {
                let ov = dot(b, &w);
                w.zip_mut_with(b, |x, y| *x -= y * ov);
            }
        }
        let bj = dot(&w, &w).re.sqrt();
        let m = alpha.len();
        let exhausted = bj < 1e-12 || m == m_max;
        if m >= k && (m.is_multiple_of(5) || exhausted) {
            let mut t = Array2::<C64>::zeros((m, m));
            for i in 0..m {
                t[[i, i]] = C64::new(alpha[i], 0.0);
                if i + 1 < m {
                    t[[i, i + 1]] = C64::new(beta[i], 0.0);
                    t[[i + 1, i]] = C64::new(beta[i], 0.0);
                }
            }
            let (theta, y) = eigh(&t)?;
            let converged =
                (0..k).all(|i| bj * y[[m - 1, i]].norm() < LANCZOS_TOL * theta[i].abs().max(1.0));
            if converged || exhausted {
                if !converged && bj >= 1e-12 {
                    return Err(Error::NoConvergence(format!("Lanczos did not converge in {m} steps")));
                }
                let mut vecs = Array2::<C64>::zeros((n, k));
                for i in 0..k {
                    let mut col = Array1::<C64>::zeros(n);
                    for (jj, b) in basis.iter().enumerate() {
                        let c = y[[jj, i]];
                        col.zip_mut_with(b, |x, y| *x += y * c);
                    }
                    let nr = dot(&col, &col).re.sqrt();
                    vecs.column_mut(i).assign(&col.mapv(|x| x / nr));
                }
                let w: Vec<f64> = theta.iter().take(k).copied().collect();
                canonicalize(&w, &mut vecs);
                return Ok((w, vecs));
            }
        }
        if exhausted {
            return Err(Error::NoConvergence(format!("Krylov space exhausted after {m} steps with fewer than {k} states")));
        }
        beta.push(bj);
        basis.push(w.mapv(|x| x / bj));
    }
}

/// The `k` lowest eigenpairs in `sector` (ignored without symmetry; the
/// default sector of the model when `None`), ascending in energy.
pub fn exact_eigs(spec: &ModelSpec, sector: Option<Charge>, k: usize) -> Result<Vec<Eigenpair>> {
    let sector = resolve_sector(spec, sector)?;
    let (h, basis) = sector_hamiltonian(spec, sector)?;
    if k == 0 || basis.is_empty() {
        return Ok(Vec::new());
    }
    if k > basis.len() {
        return Err(Error::Invalid(format!("requested {k} states from a sector of dimension {}", basis.len())));
    }
    let (w, v) = if basis.len() <= DENSE_EIG_LIMIT { dense_eigs(&h, k)? } else { lanczos(&h, k)? };
    let full = (spec.local_dim() as f64).powi(spec.l as i32) as usize;
    Ok(w.into_iter()
        .zip(v.axis_iter(Axis(1)))
        .map(|(energy, col)| {
            let mut vector = Array1::zeros(full);
            for (i, &b) in basis.iter().enumerate() {
                vector[b] = col[i];
            }
            Eigenpair { energy, vector }
        })
        .collect())
}

/// Eigenstate `n` (0 = ground) of `sector` as an MPS, with its energy.
pub fn target_mps(spec: &ModelSpec, sector: Option<Charge>, n: usize, policy: &TruncationPolicy) -> Result<(MpsState, f64)> {
    let q = resolve_sector(spec, sector)?;
    let pairs = exact_eigs(spec, q, n + 1)?;
    let pair = pairs.get(n).ok_or_else(|| Error::Invalid(format!("sector has fewer than {} states", n + 1)))?;
    let state = dense_to_mps(&pair.vector, spec.l, &spec.phys(), q.unwrap_or(0), policy)?;
    let norm = state.norm();
    if 1.0 - norm * norm > 1e-10 {
        return Err(Error::Invalid(format!("target compression lost weight {:.3e}; raise chi_max", 1.0 - norm * norm)));
    }
    Ok((state.scaled(C64::new(1.0 / norm, 0.0)), pair.energy))
}
