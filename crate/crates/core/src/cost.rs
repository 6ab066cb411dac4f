//! Scalar objectives on circuit output states: energy, total fidelity and
//! the profile of bipartite (Uhlmann) subspace fidelities.
//!
//! The subspace fidelity at cut `i` is computed from the left partial overlap
//! `E(i)` and the bond matrices of both states: `M = C_T^† E(i) C`, and
//! `F(i) = (Σ_k s_k(M))²`, which is the Uhlmann fidelity of the two reduced
//! density operators on sites `0..=i`.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::mps::{network, MpoOperator, MpsState, MpsVars};
use crate::tensor::{BlockTensor, TruncationPolicy, C64};

/// Fidelities at or below this are treated as vanishing before taking logs.
pub const FIDELITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub enum CostKind {
    Energy(MpoOperator),
    NegLogTotalFidelity(MpsState),
    MeanNegLogSubspaceFidelity(MpsState),
}

impl CostKind {
    pub fn name(&self) -> &'static str {
        match self {
            CostKind::Energy(_) => "energy",
            CostKind::NegLogTotalFidelity(_) => "neg_log_total_fidelity",
            CostKind::MeanNegLogSubspaceFidelity(_) => "mean_neg_log_subspace_fidelity",
        }
    }

    /// Records the cost of `ket` on the tape; the target enters as constants.
    pub fn record(&self, tape: &mut Tape, ket: &MpsVars) -> Result<Var> {
        match self {
            CostKind::Energy(h) => {
                let w = h.to_tape(tape);
                energy_tape(tape, ket, &w)
            }
            CostKind::NegLogTotalFidelity(t) => {
                let t = t.to_tape(tape);
                neg_log_total_fidelity_tape(tape, &t, ket)
            }
            CostKind::MeanNegLogSubspaceFidelity(t) => {
                let t = t.to_tape(tape);
                mean_neg_log_subspace_tape(tape, &t, ket)
            }
        }
    }

    pub fn evaluate(&self, state: &MpsState) -> Result<f64> {
        let mut tape = Tape::no_grad();
        let k = state.to_tape(&mut tape);
        let v = self.record(&mut tape, &k)?;
        Ok(tape.value(v).scalar_value()?.re)
    }
}

fn scalar(tape: &Tape, v: Var) -> Result<C64> {
    Ok(tape.value(v).scalar_value()?)
}

/// `Re ⟨ψ|H|ψ⟩` (unnormalized).
pub fn energy_tape(tape: &mut Tape, ket: &MpsVars, w: &[Var]) -> Result<Var> {
    let z = network::expectation(tape, ket, w)?;
    Ok(tape.real(z)?)
}

/// `|⟨T|ψ⟩|²`.
pub fn total_fidelity_tape(tape: &mut Tape, target: &MpsVars, ket: &MpsVars) -> Result<Var> {
    let o = network::overlap(tape, target, ket)?;
    Ok(tape.abs2(o)?)
}

fn neg_log(tape: &mut Tape, f: Var) -> Result<Var> {
    let x = scalar(tape, f)?.re;
    if !(x > FIDELITY_FLOOR) {
        return Err(Error::VanishingOverlap { fidelity: x });
    }
    let l = tape.ln(f)?;
    Ok(tape.scale(l, C64::new(-1.0, 0.0)))
}

/// `−log |⟨T|ψ⟩|²`.
pub fn neg_log_total_fidelity_tape(tape: &mut Tape, target: &MpsVars, ket: &MpsVars) -> Result<Var> {
    let f = total_fidelity_tape(tape, target, ket)?;
    neg_log(tape, f)
}

/// Subspace fidelities for the cuts after sites `0, 1, …, L−1`; the last
/// entry is the total fidelity.
pub fn subspace_fidelities_tape(tape: &mut Tape, target: &MpsVars, ket: &MpsVars) -> Result<Vec<Var>> {
    let l = ket.len();
    if target.len() != l {
        return Err(Error::Invalid(format!("target has {} sites, state {l}", target.len())));
    }
    let envs = network::left_envs(tape, &target.a, &ket.a)?;
    let mut out = Vec::with_capacity(l);
    for i in 0..l {
        let m = network::cut_matrix(tape, envs[i], target.c[i], ket.c[i])?;
        let mv = tape.value(m);
        if mv.num_blocks() == 0 || mv.max_abs() == 0.0 {
            out.push(tape.leaf(BlockTensor::scalar(C64::default())));
            continue;
        }
        let (_, s, _) = tape.svd(m, &[0], &TruncationPolicy::exact())?;
        let tr = tape.trace(s, &[(0, 1)])?;
        out.push(tape.abs2(tr)?);
    }
    Ok(out)
}

/// `−(1/(L−1)) Σ_{i=1..L} log F(i)`. The full-chain cut (the total fidelity)
/// is kept: without it the state is only fixed up to a unitary on the last
/// site. For `L = 1` the prefactor is 1.
pub fn mean_neg_log_subspace_tape(tape: &mut Tape, target: &MpsVars, ket: &MpsVars) -> Result<Var> {
    let fs = subspace_fidelities_tape(tape, target, ket)?;
    let w = 1.0 / fs.len().saturating_sub(1).max(1) as f64;
    let mut terms = Vec::with_capacity(fs.len());
    for &f in &fs {
        terms.push((neg_log(tape, f)?, w));
    }
    Ok(tape.weighted_sum(&terms)?)
}

fn on_pair<T>(target: &MpsState, state: &MpsState, f: impl FnOnce(&mut Tape, &MpsVars, &MpsVars) -> Result<T>) -> Result<(Tape, T)> {
    let mut tape = Tape::no_grad();
    let t = target.to_tape(&mut tape);
    let k = state.to_tape(&mut tape);
    let out = f(&mut tape, &t, &k)?;
    Ok((tape, out))
}

pub fn energy(state: &MpsState, h: &MpoOperator) -> Result<f64> {
    crate::mps::expectation(state, h)
}

pub fn total_fidelity(target: &MpsState, state: &MpsState) -> Result<f64> {
    let (tape, v) = on_pair(target, state, total_fidelity_tape)?;
    Ok(scalar(&tape, v)?.re)
}

pub fn neg_log_total_fidelity(target: &MpsState, state: &MpsState) -> Result<f64> {
    let (tape, v) = on_pair(target, state, neg_log_total_fidelity_tape)?;
    Ok(scalar(&tape, v)?.re)
}

pub fn subspace_fidelity_profile(target: &MpsState, state: &MpsState) -> Result<Vec<f64>> {
    let (tape, vs) = on_pair(target, state, subspace_fidelities_tape)?;
    vs.into_iter().map(|v| Ok(scalar(&tape, v)?.re)).collect()
}

pub fn mean_neg_log_subspace(target: &MpsState, state: &MpsState) -> Result<f64> {
    let (tape, v) = on_pair(target, state, mean_neg_log_subspace_tape)?;
    Ok(scalar(&tape, v)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, eigh, svd_thin};
    use crate::mps::{basis_state, dense_to_mps, product_state, LocalState};
    use crate::tensor::{ChargeGroup, Direction, IndexSpace};
    use ndarray::{Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn qubit() -> IndexSpace {
        IndexSpace::trivial(2, Direction::In)
    }

    fn random_state(l: usize, rng: &mut ChaCha8Rng) -> (Array1<C64>, MpsState) {
        let mut v = Array1::from_shape_fn(1 << l, |_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.mapv_inplace(|x| x / n);
        let s = dense_to_mps(&v, l, &qubit(), 0, &TruncationPolicy::exact()).unwrap();
        (v, s)
    }

    fn reduced(v: &Array1<C64>, left: usize) -> Array2<C64> {
        let m = v.clone().into_shape_with_order((1 << left, v.len() >> left)).unwrap();
        m.dot(&dagger(&m.view()))
    }

    fn psd_sqrt(m: &Array2<C64>) -> Array2<C64> {
        let (w, u) = eigh(m).unwrap();
        // rank-deficient: treat rounding-level eigenvalues as exact zeros
        let d = Array2::from_diag(&w.mapv(|x| C64::new(if x > 1e-14 { x.sqrt() } else { 0.0 }, 0.0)));
        u.dot(&d).dot(&dagger(&u.view()))
    }

    /// `(Tr √(√ρ σ √ρ))² = ‖√ρ √σ‖_*²`.
    fn uhlmann(rho: &Array2<C64>, sigma: &Array2<C64>) -> f64 {
        let (_, s, _) = svd_thin(&psd_sqrt(rho).dot(&psd_sqrt(sigma))).unwrap();
        s.sum().powi(2)
    }

    #[test]
    fn identical_states_have_unit_fidelities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, s) = random_state(5, &mut rng);
        assert!((total_fidelity(&s, &s).unwrap() - 1.0).abs() < 1e-12);
        for f in subspace_fidelity_profile(&s, &s).unwrap() {
            assert!((f - 1.0).abs() < 1e-12);
        }
        assert!(mean_neg_log_subspace(&s, &s).unwrap().abs() < 1e-12);
        assert!(neg_log_total_fidelity(&s, &s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn profile_matches_dense_uhlmann_fidelity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = 6;
        let (vt, t) = random_state(l, &mut rng);
        let (vs, s) = random_state(l, &mut rng);
        let prof = subspace_fidelity_profile(&t, &s).unwrap();
        for (i, &f) in prof.iter().enumerate().take(l - 1) {
            let want = uhlmann(&reduced(&vt, i + 1), &reduced(&vs, i + 1));
            assert!((f - want).abs() < 1e-9, "cut {i}: {f} vs {want}");
            assert!(f <= 1.0 + 1e-10);
        }
        let total = vt.iter().zip(&vs).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr();
        assert!((prof[l - 1] - total).abs() < 1e-12);
        assert!((total_fidelity(&t, &s).unwrap() - total).abs() < 1e-12);
    }

    #[test]
    fn flipped_site_zeroes_later_cuts() {
        let p = qubit();
        let t = basis_state(&p, &[0, 0, 0, 0, 0]).unwrap();
        let s = basis_state(&p, &[0, 0, 1, 0, 0]).unwrap();
        let prof = subspace_fidelity_profile(&t, &s).unwrap();
        assert_eq!(prof.iter().map(|f| (f * 1e6).round() / 1e6).collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(mean_neg_log_subspace(&t, &s), Err(Error::VanishingOverlap { .. })));
        let z2 = IndexSpace::new(ChargeGroup::z2(), vec![(0, 1), (1, 1)], Direction::In).unwrap();
        let t = basis_state(&z2, &[0, 0, 0]).unwrap();
        let s = basis_state(&z2, &[0, 1, 0]).unwrap();
        assert_eq!(subspace_fidelity_profile(&t, &s).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(total_fidelity(&t, &s).unwrap(), 0.0);
    }

    #[test]
    fn product_state_log_fidelity() {
        // per-site overlap c = cos(θ/2) between |0> and cos(θ/2)|0> + sin(θ/2)|1>
        let th: f64 = 0.8;
        let l = 7;
        let p = qubit();
        let t = basis_state(&p, &vec![0; l]).unwrap();
        let loc = LocalState::Vector(vec![C64::new((th / 2.0).cos(), 0.0), C64::new((th / 2.0).sin(), 0.0)]);
        let s = product_state(&p, &vec![loc; l], None).unwrap();
        let c2 = (th / 2.0).cos().powi(2);
        assert!((neg_log_total_fidelity(&t, &s).unwrap() + l as f64 * c2.ln()).abs() < 1e-12);
        // cut i keeps i+1 sites
        let mean = -(1..=l).map(|i| (i as f64) * c2.ln()).sum::<f64>() / (l - 1) as f64;
        assert!((mean_neg_log_subspace(&t, &s).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn costs_ignore_global_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, t) = random_state(5, &mut rng);
        let (_, s) = random_state(5, &mut rng);
        let r = s.scaled(C64::from_polar(1.0, 1.1));
        for c in [CostKind::NegLogTotalFidelity(t.clone()), CostKind::MeanNegLogSubspaceFidelity(t.clone())] {
            assert!((c.evaluate(&s).unwrap() - c.evaluate(&r).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_site_chain_sums_both_cuts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, t) = random_state(2, &mut rng);
        let (_, s) = random_state(2, &mut rng);
        let f = subspace_fidelity_profile(&t, &s).unwrap();
        assert!((mean_neg_log_subspace(&t, &s).unwrap() + f[0].ln() + f[1].ln()).abs() < 1e-12);
    }
}
