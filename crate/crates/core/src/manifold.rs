//! Riemannian optimization on products of charge-conserving unitary groups.
//!
//! Gates are handled as block-diagonal matrices `(out1 out2) × (in1 in2)`; a
//! tangent vector at `U` is written `U X` with `X` skew-Hermitian per block.

use std::collections::BTreeMap;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::circuit::symmetrize;
use crate::error::{Error, Result};
use crate::linalg::{self, dagger};
use crate::tensor::{BlockMatrix, BlockTensor, Charge, C64};

fn as_matrix(t: &BlockTensor) -> Result<BlockMatrix> {
    let n = t.rank() / 2;
    let rows: Vec<usize> = (0..n).collect();
    let cols: Vec<usize> = (n..2 * n).collect();
    Ok(BlockMatrix::from_tensor(t, &rows, &cols)?)
}

/// Largest `‖X + X^†‖_F` over blocks.
pub fn skew_defect(x: &BlockTensor) -> Result<f64> {
    let bm = as_matrix(x)?;
    Ok(bm.blocks.values().map(|m| linalg::frobenius(&(m + &dagger(&m.view())).view())).fold(0.0, f64::max))
}

/// Riemannian gradient `½(U^†∇ − ∇^†U)` from the Euclidean adjoint `∇`.
pub fn lift(u: &BlockTensor, grad: &BlockTensor) -> Result<BlockTensor> {
    if u.spaces() != grad.spaces() {
        return Err(Error::Invalid("gradient and gate have different index spaces".into()));
    }
    let um = as_matrix(u)?;
    let gm = as_matrix(grad)?;
    let blocks = um
        .blocks
        .iter()
        .map(|(&q, a)| {
            let g = &gm.blocks[&q];
            let x = dagger(&a.view()).dot(g) - dagger(&g.view()).dot(a);
            (q, x.mapv(|v| v * 0.5))
        })
        .collect();
    Ok(um.with_blocks(blocks).to_tensor()?)
}

/// Geodesic step `U exp(−η X)`.
pub fn retract(u: &BlockTensor, x: &BlockTensor, eta: f64) -> Result<BlockTensor> {
    if u.spaces() != x.spaces() {
        return Err(Error::Invalid("tangent vector and gate have different index spaces".into()));
    }
    if eta == 0.0 {
        return Ok(u.clone());
    }
    let xm = as_matrix(x)?;
    let um = as_matrix(u)?;
    let blocks = um
        .blocks
        .iter()
        .map(|(&q, a)| {
            let xb = &xm.blocks[&q];
            if xb.iter().all(|v| *v == C64::default()) {
                return Ok((q, a.clone()));
            }
            Ok((q, a.dot(&linalg::expm_skew(xb, -eta)?)))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(um.with_blocks(blocks).to_tensor()?)
}

/// ADAM hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, learning_rate: 0.01 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite();
        if !ok {
            return Err(Error::Config(format!("invalid ADAM hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Moments of one parameter, per charge block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub m: BTreeMap<Charge, Array2<C64>>,
    pub v_re: BTreeMap<Charge, Array2<f64>>,
    pub v_im: BTreeMap<Charge, Array2<f64>>,
}

impl Moments {
    fn zeros_like(gate: &BlockTensor) -> Result<Self> {
        let bm = as_matrix(gate)?;
        let m = bm.blocks.iter().map(|(&q, a)| (q, Array2::zeros(a.raw_dim()))).collect();
        let v: BTreeMap<_, _> = bm.blocks.iter().map(|(&q, a)| (q, Array2::zeros(a.raw_dim()))).collect();
        Ok(Moments { m, v_re: v.clone(), v_im: v })
    }
}

/// ADAM with separate second moments for real and imaginary parts.
/// Moments live in the fixed matrix coordinates of the lifted gradients and
/// are not transported along retractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub moments: BTreeMap<usize, Moments>,
}

impl AdamState {
    /// Fresh state for every parameter in `params`.
    pub fn new(config: AdamConfig, params: &[BlockTensor]) -> Result<Self> {
        config.validate()?;
        let moments = params.iter().enumerate().map(|(i, g)| Ok((i, Moments::zeros_like(g)?))).collect::<Result<_>>()?;
        Ok(AdamState { config, t: 0, moments })
    }

    /// Advances the moments with the Riemannian gradients `grads` and returns
    /// the skew-Hermitian update directions. Parameters flagged in `symmetric`
    /// have their direction projected onto the swap-commuting subalgebra.
    pub fn directions(
        &mut self,
        grads: &BTreeMap<usize, BlockTensor>,
        symmetric: &[bool],
    ) -> Result<BTreeMap<usize, BlockTensor>> {
        for &id in grads.keys() {
            if !self.moments.contains_key(&id) {
                return Err(Error::Invalid(format!("parameter {id} has no optimizer state (reinitialize after growth)")));
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let mut out = BTreeMap::new();
        for (&id, x) in grads {
            let mom = self.moments.get_mut(&id).expect("checked");
            let xm = as_matrix(x)?;
            let mut dir = BTreeMap::new();
            for (q, g) in &xm.blocks {
                let (Some(m), Some(vr), Some(vi)) = (mom.m.get_mut(q), mom.v_re.get_mut(q), mom.v_im.get_mut(q)) else {
                    return Err(Error::Invalid(format!("parameter {id} changed its block structure")));
                };
                Zip::from(&mut *m).and(g).for_each(|m, g| *m = *m * beta1 + *g * (1.0 - beta1));
                Zip::from(&mut *vr).and(g).for_each(|v, g| *v = *v * beta2 + g.re * g.re * (1.0 - beta2));
                Zip::from(&mut *vi).and(g).for_each(|v, g| *v = *v * beta2 + g.im * g.im * (1.0 - beta2));
                let mut d = Array2::<C64>::zeros(g.raw_dim());
                Zip::from(&mut d).and(&*m).and(&*vr).and(&*vi).for_each(|d, m, vr, vi| {
                    *d = C64::new(m.re / c1 / ((vr / c2).sqrt() + eps), m.im / c1 / ((vi / c2).sqrt() + eps))
                });
                dir.insert(*q, linalg::skew_part(&d));
            }
            let mut d = xm.with_blocks(dir).to_tensor()?;
            if symmetric.get(id).copied().unwrap_or(false) {
                d = symmetrize(&d)?;
            }
            out.insert(id, d);
        }
        Ok(out)
    }

    /// One ADAM step followed by retraction of every parameter in `grads`.
    pub fn step(
        &mut self,
        grads: &BTreeMap<usize, BlockTensor>,
        params: &mut [BlockTensor],
        symmetric: &[bool],
    ) -> Result<()> {
        if let Some(&id) = grads.keys().find(|&&id| id >= params.len()) {
            return Err(Error::Invalid(format!("gradient for unknown parameter {id}")));
        }
        let dirs = self.directions(grads, symmetric)?;
        for (id, d) in dirs {
            params[id] = retract(&params[id], &d, self.config.learning_rate)?;
        }
        Ok(())
    }
}

/// Lifts Euclidean adjoints for every parameter, projecting constrained ones.
pub fn riemann_gradients(
    params: &[BlockTensor],
    euclidean: &[BlockTensor],
    symmetric: &[bool],
) -> Result<BTreeMap<usize, BlockTensor>> {
    params
        .iter()
        .zip(euclidean)
        .enumerate()
        .map(|(i, (u, g))| {
            let x = lift(u, g)?;
            let x = if symmetric.get(i).copied().unwrap_or(false) { symmetrize(&x)? } else { x };
            Ok((i, x))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{gate_spaces, is_charge_structured, mirror_transform, unitarity_defect};
    use crate::tensor::{random_skew, random_unitary, BlockTensor, ChargeGroup, Direction, IndexSpace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn u1() -> IndexSpace {
        IndexSpace::new(ChargeGroup::U1, vec![(1, 1), (-1, 1)], Direction::In).unwrap()
    }

    fn pair() -> [IndexSpace; 2] {
        [u1(), u1()]
    }

    fn eye() -> BlockTensor {
        random_unitary(&pair(), 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn lift_of_gate_itself_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_unitary(&pair(), 1.0, &mut rng).unwrap();
        assert!(lift(&u, &u).unwrap().max_abs() < 1e-15);
        let zero = BlockTensor::zeros(gate_spaces(&u1())).unwrap();
        assert_eq!(lift(&u, &zero).unwrap().max_abs(), 0.0);
        let g = random_unitary(&pair(), 2.0, &mut rng).unwrap().scale(C64::new(0.3, -1.2));
        assert!(skew_defect(&lift(&u, &g).unwrap()).unwrap() < 1e-14);
    }

    #[test]
    fn retraction_of_diagonal_generator_gives_phases() {
        let theta = 0.7;
        let eta = 0.3;
        let x = eye().scale(C64::new(0.0, theta));
        let u = retract(&eye(), &x, eta).unwrap();
        let want = eye().scale(C64::from_polar(1.0, -eta * theta));
        assert!(u.max_abs_diff(&want).unwrap() < 1e-14);
        let v = random_unitary(&pair(), 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(retract(&v, &x, 0.0).unwrap(), v);
    }

    #[test]
    fn repeated_retractions_stay_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut u = eye();
        for _ in 0..1000 {
            let x = random_skew(&pair(), &mut rng).unwrap();
            u = retract(&u, &x, 0.5).unwrap();
        }
        assert!(unitarity_defect(&u).unwrap() < 1e-10);
        assert!(is_charge_structured(&u));
        assert_eq!(u.num_blocks(), eye().num_blocks().max(u.num_blocks()));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ps = vec![random_unitary(&pair(), 1.0, &mut rng).unwrap()];
        let before = ps.clone();
        let mut st = AdamState::new(AdamConfig::default(), &ps).unwrap();
        let grads = BTreeMap::from([(0, BlockTensor::zeros(gate_spaces(&u1())).unwrap())]);
        st.step(&grads, &mut ps, &[false]).unwrap();
        assert_eq!(ps, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let mut ps = vec![eye()];
        let mut st = AdamState::new(AdamConfig::default(), &ps).unwrap();
        let grads = BTreeMap::from([(1, eye())]);
        ps.push(eye());
        assert!(st.step(&grads, &mut ps, &[false, false]).is_err());
    }

    #[test]
    fn direction_is_skew_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AdamConfig { beta1: 0.0, beta2: 0.0, eps: 1e-3, learning_rate: 0.1 };
        let ps = vec![random_unitary(&pair(), 1.0, &mut rng).unwrap()];
        let mut st = AdamState::new(cfg, &ps).unwrap();
        let x = random_skew(&pair(), &mut rng).unwrap().scale_real(1e-4);
        let d = st.directions(&BTreeMap::from([(0, x.clone())]), &[false]).unwrap().remove(&0).unwrap();
        assert!(skew_defect(&d).unwrap() < 1e-12);
        assert!(d.norm() <= x.norm() / cfg.eps * (1.0 + 1e-12));
    }

    #[test]
    fn symmetric_parameters_stay_swap_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut ps = vec![eye()];
        let mut st = AdamState::new(AdamConfig { learning_rate: 0.2, ..Default::default() }, &ps).unwrap();
        for _ in 0..20 {
            let g = random_unitary(&pair(), 1.0, &mut rng).unwrap();
            let grads = riemann_gradients(&ps, &[g], &[true]).unwrap();
            st.step(&grads, &mut ps, &[true]).unwrap();
        }
        assert!(ps[0].max_abs_diff(&mirror_transform(&ps[0]).unwrap()).unwrap() < 1e-13);
        assert!(ps[0].max_abs_diff(&eye()).unwrap() > 1e-2);
    }

    /// Maximizes `Re⟨A, U⟩` (Euclidean adjoint of the loss `−Re⟨A, U⟩` is `−A`).
    fn chase(seed: u64, steps: usize) -> (Vec<BlockTensor>, BlockTensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_unitary(&pair(), 1.5, &mut rng).unwrap();
        let mut ps = vec![random_unitary(&pair(), 1.0, &mut rng).unwrap()];
        let mut st = AdamState::new(AdamConfig { learning_rate: 0.02, ..Default::default() }, &ps).unwrap();
        let mut traj = Vec::new();
        for _ in 0..steps {
            let grads = riemann_gradients(&ps, &[a.scale_real(-1.0)], &[false]).unwrap();
            st.step(&grads, &mut ps, &[false]).unwrap();
            traj.push(ps[0].clone());
        }
        (traj, a)
    }

    #[test]
    fn replay_is_bit_identical() {
        assert_eq!(chase(7, 50).0, chase(7, 50).0);
    }

    #[test]
    fn adam_converges_to_target_unitary() {
        let (traj, a) = chase(8, 600);
        let u = traj.last().unwrap();
        assert!(u.max_abs_diff(&a).unwrap() < 1e-3, "{}", u.max_abs_diff(&a).unwrap());
        assert!(unitarity_defect(u).unwrap() < 1e-12);
    }

    #[test]
    fn state_serializes() {
        let ps = vec![eye()];
        let st = AdamState::new(AdamConfig::default(), &ps).unwrap();
        let back: AdamState = serde_json::from_str(&serde_json::to_string(&st).unwrap()).unwrap();
        assert_eq!(back, st);
    }
}
