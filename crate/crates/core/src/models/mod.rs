//! Lattice models: MPO builders, an independent sparse-matrix construction of
//! the same Hamiltonians, and exact-diagonalization targets.


mod ed;
mod mpo;
mod sparse;


pub use ed::{exact_eigs, target_mps, Eigenpair, DENSE_EIG_LIMIT};
pub use mpo::{ising_mpo, potts3_mpo, schwinger_mpo};
pub use sparse::{dense_hamiltonian, sector_basis, sector_hamiltonian, SparseMatrix, SPARSE_GUARD};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps::MpoOperator;
use crate::tensor::{Charge, ChargeGroup, Direction, IndexSpace, C64};

/// Hamiltonian family and couplings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    /// `−Σ X X − Σ (g Z + h X)`
    Ising { g: f64, h: f64 },
    /// `−Σ (σ σ'^† + h.c.) − g Σ (τ + τ^†) − h Σ (σ + σ^†)`
    Potts3 { g: f64, h: f64 },
    /// Staggered-fermion massive Schwinger chain with couplings `m`, `g`.
    Schwinger { m: f64, g: f64 },
}

/// Conserved charge used to grade tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    #[default]
    None,
    /// Spin-flip parity `Π Z` of the Ising chain (`h = 0`).
    Z2,
    /// Total `Z` of the Schwinger chain.
    U1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model: Model,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default)]
    pub symmetry: Symmetry,
}

impl ModelSpec {
    pub fn new(model: Model, l: usize, symmetry: Symmetry) -> Result<Self> {
        let s = ModelSpec { model, l, symmetry };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::Config("L must be positive".into()));
        }
        match (self.model, self.symmetry) {
            (_, Symmetry::None) => {}
            (Model::Ising { h, .. }, Symmetry::Z2) if h == 0.0 => {}
            (Model::Ising { .. }, Symmetry::Z2) => {
                return Err(Error::Config("Z2 parity is only conserved for the Ising model at h = 0".into()))
            }
            (Model::Schwinger { .. }, Symmetry::U1) => {}
            (m, s) => return Err(Error::Config(format!("symmetry {s:?} is not available for {m:?}"))),
        }
        Ok(())
    }

    pub fn local_dim(&self) -> usize {
        match self.model {
            Model::Potts3 { .. } => 3,
            _ => 2,
        }
    }

    pub fn group(&self) -> ChargeGroup {
        match self.symmetry {
            Symmetry::None => ChargeGroup::Trivial,
            Symmetry::Z2 => ChargeGroup::z2(),
            Symmetry::U1 => ChargeGroup::U1,
        }
    }

    /// Local basis with its charges: Ising `|0⟩, |1⟩ → 0, 1` (parity of
    /// `Z = ±1`); Schwinger `|0⟩, |1⟩ → +1, −1` (`Z` eigenvalue).
    pub fn phys(&self) -> IndexSpace {
        let sectors = match self.symmetry {
            Symmetry::None => vec![(0, self.local_dim())],
            Symmetry::Z2 => vec![(0, 1), (1, 1)],
            Symmetry::U1 => vec![(1, 1), (-1, 1)],
        };
        IndexSpace::new(self.group(), sectors, Direction::In).expect("valid physical space")
    }

    /// Charge of local basis state `s`.
    pub fn local_charge(&self, s: usize) -> Charge {
        self.phys().locate(s).expect("basis index in range").0
    }

    /// Default sector of ground-state searches: even parity, `Z_tot = 0`.
    pub fn default_sector(&self) -> Charge {
        match self.symmetry {
            Symmetry::U1 => (self.l % 2) as Charge,
            _ => 0,
        }
    }

    pub fn mpo(&self) -> Result<MpoOperator> {
        match self.model {
            Model::Ising { g, h } => ising_mpo(self, g, h),
            Model::Potts3 { g, h } => potts3_mpo(self, g, h),
            Model::Schwinger { m, g } => schwinger_mpo(self, m, g),
        }
    }
}

/// `|E − E_T| / |E_T|`.
pub fn rel_energy_error(e: f64, e_target: f64) -> f64 {
    (e - e_target).abs() / e_target.abs()
}

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Pauli `X`, `Y`, `Z` and `σ^±` (`σ^+ = |0⟩⟨1|`).
pub mod ops {
    use super::*;

    fn m2(a: [[C64; 2]; 2]) -> Array2<C64> {
        Array2::from_shape_fn((2, 2), |(i, j)| a[i][j])
    }

    pub fn id(d: usize) -> Array2<C64> {
        Array2::eye(d)
    }

    pub fn x() -> Array2<C64> {
        m2([[c(0.0), c(1.0)], [c(1.0), c(0.0)]])
    }

    pub fn y() -> Array2<C64> {
        m2([[c(0.0), C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), c(0.0)]])
    }

    pub fn z() -> Array2<C64> {
        m2([[c(1.0), c(0.0)], [c(0.0), c(-1.0)]])
    }

    pub fn sigma_plus() -> Array2<C64> {
        m2([[c(0.0), c(1.0)], [c(0.0), c(0.0)]])
    }

    pub fn sigma_minus() -> Array2<C64> {
        m2([[c(0.0), c(0.0)], [c(1.0), c(0.0)]])
    }

    pub fn omega() -> C64 {
        C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0)
    }

    /// Potts shift `σ`: ones at `(0,1), (1,2), (2,0)`.
    pub fn potts_sigma() -> Array2<C64> {
        let mut s = Array2::zeros((3, 3));
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            s[[i, j]] = c(1.0);
        }
        s
    }

    /// Potts clock `τ = diag(1, ω, ω²)`.
    pub fn potts_tau() -> Array2<C64> {
        let w = omega();
        Array2::from_diag(&ndarray::arr1(&[c(1.0), w, w * w]))
    }

    pub fn dagger(m: &Array2<C64>) -> Array2<C64> {
        crate::linalg::dagger(&m.view())
    }
}
