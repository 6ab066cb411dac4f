//! Hamiltonians as sparse matrices over (sector-restricted) product bases,
//! built term by term from the basis-state action of each local operator.
//! Basis index `Σ s_n d^(L−1−n)`: site 0 is the most significant digit.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use super::{Model, ModelSpec};
use crate::error::{Error, Result};
use crate::tensor::{Charge, C64};

/// Largest Hilbert space handled by the sparse builders.
pub const SPARSE_GUARD: usize = 1 << 20;

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub dim: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<C64>,
}

impl SparseMatrix {
    fn from_rows(rows: Vec<Vec<(usize, C64)>>) -> Self {
        let dim = rows.len();
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (j, v) in r {
                if last == Some(j) {
                    *data.last_mut().expect("entry") += v;
                } else {
                    indices.push(j);
                    data.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        SparseMatrix { dim, indptr, indices, data }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn matvec(&self, x: &Array1<C64>) -> Array1<C64> {
        let xs = x.as_slice().expect("contiguous vector");
        let out: Vec<C64> = (0..self.dim)
            .into_par_iter()
            .with_min_len(1024)
            .map(|i| {
                (self.indptr[i]..self.indptr[i + 1]).map(|p| self.data[p] * xs[self.indices[p]]).sum()
            })
            .collect();
        Array1::from(out)
    }

    pub fn to_dense(&self) -> Array2<C64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for i in 0..self.dim {
            for p in self.indptr[i]..self.indptr[i + 1] {
                m[[i, self.indices[p]]] += self.data[p];
            }
        }
        m
    }

    /// Largest `|H_ij − conj(H_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.to_dense();
        let mut worst: f64 = 0.0;
        for ((i, j), v) in d.indexed_iter() {
            worst = worst.max((v - d[[j, i]].conj()).norm());
        }
        worst
    }
}

fn digits(mut b: usize, d: usize, l: usize) -> Vec<usize> {
    let mut s = vec![0; l];
    for n in (0..l).rev() {
        s[n] = b % d;
        b /= d;
    }
    s
}

fn index(s: &[usize], d: usize) -> usize {
    s.iter().fold(0, |acc, &x| acc * d + x)
}

/// Images `(coefficient, state)` of `H |s⟩`.
fn apply(spec: &ModelSpec, s: &[usize]) -> Vec<(C64, Vec<usize>)> {
    let l = s.len();
    let mut out = Vec::new();
    let mut diag = 0.0;
    let flip = |s: &[usize], sites: &[(usize, usize)], coef: C64, out: &mut Vec<(C64, Vec<usize>)>| {
        let mut t = s.to_vec();
        for &(n, v) in sites {
            t[n] = v;
        }
        out.push((coef, t));
    };
    match spec.model {
        Model::Ising { g, h } => {
            for n in 0..l {
                diag -= g * if s[n] == 0 { 1.0 } else { -1.0 };
                if h != 0.0 {
                    flip(s, &[(n, 1 - s[n])], C64::new(-h, 0.0), &mut out);
                }
                if n + 1 < l {
                    flip(s, &[(n, 1 - s[n]), (n + 1, 1 - s[n + 1])], C64::new(-1.0, 0.0), &mut out);
                }
            }
        }
        Model::Potts3 { g, h } => {
            // σ|k⟩ = |k−1⟩, σ^†|k⟩ = |k+1⟩, τ|k⟩ = ω^k |k⟩
            let down = |k: usize| (k + 2) % 3;
            let up = |k: usize| (k + 1) % 3;
            for n in 0..l {
                diag -= 2.0 * g * (2.0 * std::f64::consts::PI * s[n] as f64 / 3.0).cos();
                if h != 0.0 {
                    flip(s, &[(n, down(s[n]))], C64::new(-h, 0.0), &mut out);
                    flip(s, &[(n, up(s[n]))], C64::new(-h, 0.0), &mut out);
                }
                if n + 1 < l {
                    flip(s, &[(n, down(s[n])), (n + 1, up(s[n + 1]))], C64::new(-1.0, 0.0), &mut out);
                    flip(s, &[(n, up(s[n])), (n + 1, down(s[n + 1]))], C64::new(-1.0, 0.0), &mut out);
                }
            }
        }
        Model::Schwinger { m, g } => {
            // Z|0⟩ = |0⟩; P(k) = (1 + (−1)^k Z)/2 with k = n + 1
            let mut field = 0.0;
            for n in 0..l {
                let k = n + 1;
                let z = if s[n] == 0 { 1.0 } else { -1.0 };
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let p = 0.5 * (1.0 + sign * z);
                diag += m * p;
                field += sign * p;
                if k < l {
                    diag += 0.5 * g * g * field * field;
                }
                // (XX + YY)/2 exchanges antiparallel neighbours
                if n + 1 < l && s[n] != s[n + 1] {
                    flip(s, &[(n, s[n + 1]), (n + 1, s[n])], C64::new(1.0, 0.0), &mut out);
                }
            }
        }
    }
    out.push((C64::new(diag, 0.0), s.to_vec()));
    out
}

fn check_size(spec: &ModelSpec) -> Result<usize> {
    let d = spec.local_dim();
    let n = (d as f64).powi(spec.l as i32);
    if n > SPARSE_GUARD as f64 {
        return Err(Error::TooLarge(format!("Hilbert space of dimension {n} exceeds {SPARSE_GUARD}")));
    }
    Ok(n as usize)
}

/// Full-space basis indices with total charge `sector` (all states if `None`
/// or the model carries no symmetry), ascending.
pub fn sector_basis(spec: &ModelSpec, sector: Option<Charge>) -> Result<Vec<usize>> {
    let n = check_size(spec)?;
    let d = spec.local_dim();
    let g = spec.group();
    let charges: Vec<Charge> = (0..d).map(|s| spec.local_charge(s)).collect();
    Ok(match sector {
        None => (0..n).collect(),
        Some(q) => {
            let q = g.normalize(q);
            (0..n)
                .filter(|&b| g.normalize(digits(b, d, spec.l).iter().map(|&s| charges[s]).sum()) == q)
                .collect()
        }
    })
}

/// Hamiltonian restricted to [`sector_basis`], with that basis.
pub fn sector_hamiltonian(spec: &ModelSpec, sector: Option<Charge>) -> Result<(SparseMatrix, Vec<usize>)> {
    let basis = sector_basis(spec, sector)?;
    let d = spec.local_dim();
    // column b holds the images H|b⟩; scatter them into rows
    let cols: Result<Vec<Vec<(usize, C64)>>> = basis
        .par_iter()
        .map(|&b| {
            apply(spec, &digits(b, d, spec.l))
                .into_iter()
                .map(|(v, t)| {
                    let i = basis.binary_search(&index(&t, d)).map_err(|_| {
                        Error::Invalid(format!("Hamiltonian leaves the requested sector ({:?})", spec.symmetry))
                    })?;
                    Ok((i, v))
                })
                .collect()
        })
        .collect();
    let mut rows = vec![Vec::new(); basis.len()];
    for (j, col) in cols?.into_iter().enumerate() {
        for (i, v) in col {
            rows[i].push((j, v));
        }
    }
    Ok((SparseMatrix::from_rows(rows), basis))
}

/// Full Hamiltonian as a sparse matrix (guard `d^L ≤ 2^20`).
pub fn dense_hamiltonian(spec: &ModelSpec) -> Result<SparseMatrix> {
    Ok(sector_hamiltonian(spec, None)?.0)
}
