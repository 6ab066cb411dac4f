//! Brick-wall circuits of two-site gates and their application to MPS.
//!
//! Each layer consists of an odd sublayer acting on bonds `(0,1), (2,3), …`
//! followed by an even sublayer on `(1,2), (3,4), …` (0-based sites). With
//! inversion symmetry, the gate on bond `k` and the gate on its mirror bond
//! `L−2−k` share one parameter; the mirrored copy is the swap-conjugate. A gate
//! sitting on its own mirror bond is restricted to commute with the swap.

pub mod io;
mod tebd;

pub use crate::tensor::TruncationPolicy;
pub use tebd::{
    apply_circuit, apply_circuit_tape, step_forward, tebd_layer, tebd_step, tebd_step_tape, StepData,
    StepLog, StepResult,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{expm_operator, operator_spaces, random_skew, BlockMatrix, BlockTensor, IndexSpace, C64};

/// Sublayer label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Bonds `(0,1), (2,3), …`
    Odd,
    /// Bonds `(1,2), (3,4), …`
    Even,
}

impl Parity {
    pub fn first_site(self) -> usize {
        match self {
            Parity::Odd => 0,
            Parity::Even => 1,
        }
    }
}

/// How a placement materializes its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    AsIs,
    Mirrored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub layer: usize,
    pub parity: Parity,
    /// Left site of the bond.
    pub site: usize,
    pub param: usize,
    pub transform: Transform,
}

/// `S · U · S` with `S` the two-site swap; legs `(out1, out2, in1, in2)`.
pub fn mirror_transform(gate: &BlockTensor) -> Result<BlockTensor> {
    Ok(gate.permute(&[1, 0, 3, 2])?)
}

/// Gate spaces `(out1, out2, in1, in2)` over `phys`.
pub fn gate_spaces(phys: &IndexSpace) -> Vec<IndexSpace> {
    operator_spaces(&[phys.clone(), phys.clone()])
}

/// Largest `‖U^†U − 1‖_F` over the charge blocks of a gate.
pub fn unitarity_defect(gate: &BlockTensor) -> Result<f64> {
    let bm = BlockMatrix::from_tensor(gate, &[0, 1], &[2, 3])?;
    let mut total = 0.0;
    for m in bm.blocks.values() {
        total += linalg::unitarity_defect(m).powi(2);
    }
    Ok(total.sqrt())
}

/// Whether every stored block of `gate` is an allowed (charge-conserving) block.
pub fn is_charge_structured(gate: &BlockTensor) -> bool {
    gate.verify().is_ok()
}

/// Projects a gate-shaped tensor onto the swap-symmetric part `(X + S X S)/2`.
pub fn symmetrize(x: &BlockTensor) -> Result<BlockTensor> {
    Ok(x.add(&mirror_transform(x)?)?.scale_real(0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    l: usize,
    phys: IndexSpace,
    inversion: bool,
    depth: usize,
    placements: Vec<Placement>,
    params: Vec<BlockTensor>,
    /// Parameters constrained to commute with the swap.
    symmetric: Vec<bool>,
}

impl Circuit {
    /// Empty circuit (depth 0).
    pub fn new(l: usize, phys: IndexSpace, inversion: bool) -> Result<Self> {
        if l < 2 {
            return Err(Error::Invalid("circuits need at least two sites".into()));
        }
        if inversion && l % 2 == 1 {
            return Err(Error::Invalid(
                "inversion symmetry needs an even number of sites (odd L maps odd bonds onto even ones)".into(),
            ));
        }
        Ok(Circuit { l, phys, inversion, depth: 0, placements: Vec::new(), params: Vec::new(), symmetric: Vec::new() })
    }

    /// Assembles a circuit from stored parts (used by deserialization).
    pub fn from_parts(
        l: usize,
        phys: IndexSpace,
        inversion: bool,
        depth: usize,
        placements: Vec<Placement>,
        params: Vec<BlockTensor>,
        symmetric: Vec<bool>,
    ) -> Result<Self> {
        let c = Circuit { l, phys, inversion, depth, placements, params, symmetric };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if self.symmetric.len() != self.params.len() {
            return Err(Error::Invalid("symmetry flags do not match parameters".into()));
        }
        let spaces = gate_spaces(&self.phys);
        for (i, g) in self.params.iter().enumerate() {
            if g.spaces() != spaces.as_slice() {
                return Err(Error::Invalid(format!("parameter {i} has wrong index spaces")));
            }
        }
        for p in &self.placements {
            if p.param >= self.params.len() || p.site + 1 >= self.l || p.layer >= self.depth {
                return Err(Error::Invalid(format!("bad placement {p:?}")));
            }
            if p.site % 2 != p.parity.first_site() {
                return Err(Error::Invalid(format!("placement {p:?} has the wrong parity")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    pub fn phys(&self) -> &IndexSpace {
        &self.phys
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn inversion(&self) -> bool {
        self.inversion
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn params(&self) -> &[BlockTensor] {
        &self.params
    }

    pub fn param(&self, id: usize) -> &BlockTensor {
        &self.params[id]
    }

    pub fn is_symmetric(&self, id: usize) -> bool {
        self.symmetric[id]
    }

    pub fn symmetric_flags(&self) -> &[bool] {
        &self.symmetric
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<BlockTensor>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Invalid("parameter count changed".into()));
        }
        self.params = params;
        self.validate()
    }

    /// Physical gate of a placement.
    pub fn gate(&self, p: &Placement) -> Result<BlockTensor> {
        let g = &self.params[p.param];
        match p.transform {
            Transform::AsIs => Ok(g.clone()),
            Transform::Mirrored => mirror_transform(g),
        }
    }

    /// Placements of one sublayer in site order.
    pub fn sublayer(&self, layer: usize, parity: Parity) -> Vec<Placement> {
        self.placements.iter().filter(|p| p.layer == layer && p.parity == parity).copied().collect()
    }

    fn push_gate(&mut self, gate: BlockTensor, symmetric: bool) -> usize {
        self.params.push(gate);
        self.symmetric.push(symmetric);
        self.params.len() - 1
    }

    /// Appends a layer with gates `exp(ε K)`; previous parameters are untouched.
    pub fn grow<R: Rng + ?Sized>(&mut self, epsilon: f64, rng: &mut R) -> Result<()> {
        let layer = self.depth;
        self.depth += 1;
        let pair = [self.phys.clone(), self.phys.clone()];
        for parity in [Parity::Odd, Parity::Even] {
            let mut k = parity.first_site();
            while k + 1 < self.l {
                let mirror = self.l - 2 - k;
                if self.inversion && mirror < k {
                    let twin = self
                        .placements
                        .iter()
                        .find(|p| p.layer == layer && p.site == mirror)
                        .copied()
                        .expect("mirror placement created first");
                    self.placements.push(Placement { layer, parity, site: k, param: twin.param, transform: Transform::Mirrored });
                } else {
                    let centre = self.inversion && mirror == k;
                    let mut gen = random_skew(&pair, rng)?;
                    if centre {
                        gen = symmetrize(&gen)?;
                    }
                    let g = expm_operator(&gen, epsilon)?;
                    let id = self.push_gate(g, centre);
                    self.placements.push(Placement { layer, parity, site: k, param: id, transform: Transform::AsIs });
                }
                k += 2;
            }
        }
        Ok(())
    }

    /// Total number of gate applications.
    pub fn num_steps(&self) -> usize {
        self.placements.len()
    }
}

/// Dense two-site gate matrix `4×4` (or `d²×d²`) for oracles.
pub fn gate_matrix(gate: &BlockTensor) -> ndarray::Array2<C64> {
    let d = gate.space(0).dim();
    gate.to_dense().into_shape_with_order((d * d, d * d)).expect("square gate")
}
