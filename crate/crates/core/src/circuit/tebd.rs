//! TEBD steps with a fused reverse rule.
//!
//! A step on bond `(k, k+1)` of a left-canonical MPS contracts
//! `Φ = U · A(k) A(k+1)`, splits `Θ = Φ C(k+1)` by truncated SVD into
//! `u S v`, and sets `Ã(k) = u`, `C̃(k) = S`, `Ã(k+1) = u^† Φ`. The last
//! identity replaces `S v C(k+1)⁻¹`, so no bond matrix is ever inverted;
//! `C(k+1)` is left untouched. One tape record covers the whole step.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mirror_transform, Circuit, Parity, Transform};
use crate::autodiff::{contract_pullback, inverse_perm, svd_pullback, Diagnostics, Pullback, Tape, Var};
use crate::error::{Error, Result};
use crate::mps::{MpsState, MpsVars};
use crate::tensor::{contract, svd_truncated, BlockTensor, SvdFactors, TruncationPolicy, C64};

const PHI_PERM: [usize; 4] = [2, 0, 1, 3];

/// Per-step record of an evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub layer: usize,
    pub parity: Parity,
    pub site: usize,
    pub discarded_weight: f64,
}

/// Forward pass of one step with the primals its pullback needs.
pub struct StepData {
    a_k: Arc<BlockTensor>,
    a_k1: Arc<BlockTensor>,
    c_k1: Arc<BlockTensor>,
    gate: BlockTensor,
    mirror: bool,
    aa: BlockTensor,
    phi: BlockTensor,
    svd: SvdFactors,
    pub new_a_k1: BlockTensor,
}

impl StepData {
    pub fn new_a_k(&self) -> &BlockTensor {
        &self.svd.u
    }

    pub fn new_c_k(&self) -> &BlockTensor {
        &self.svd.s
    }

    pub fn discarded_weight(&self) -> f64 {
        self.svd.discarded_weight
    }

    /// Adjoints of `(A(k), A(k+1), C(k+1), parameter)` from the adjoints of
    /// `(Ã(k), C̃(k), Ã(k+1))`.
    pub fn pullback(
        &self,
        a_k_bar: &BlockTensor,
        c_k_bar: &BlockTensor,
        a_k1_bar: &BlockTensor,
        diag: &mut Diagnostics,
    ) -> Result<[BlockTensor; 4]> {
        let u = &self.svd.u;
        // Ã(k+1) = contract(conj(u), Φ, [(0,0),(1,1)])
        let uc = u.conj();
        let (uc_bar, phi_bar1) = contract_pullback(&uc, &self.phi, &[(0, 0), (1, 1)], a_k1_bar)?;
        let mut u_bar = a_k_bar.clone();
        u_bar.axpy(C64::new(1.0, 0.0), &uc_bar.conj())?;
        let theta_bar = svd_pullback(&self.svd, Some(&u_bar), Some(c_k_bar), None, diag)?;
        let (mut phi_bar, c_k1_bar) = contract_pullback(&self.phi, &self.c_k1, &[(3, 0)], &theta_bar)?;
        phi_bar.axpy(C64::new(1.0, 0.0), &phi_bar1)?;
        let phi0_bar = phi_bar.permute(&inverse_perm(&PHI_PERM))?;
        let (gate_bar, aa_bar) = contract_pullback(&self.gate, &self.aa, &[(2, 1), (3, 2)], &phi0_bar)?;
        let (a_k_in, a_k1_in) = contract_pullback(&self.a_k, &self.a_k1, &[(2, 0)], &aa_bar)?;
        let param_bar = if self.mirror { mirror_transform(&gate_bar)? } else { gate_bar };
        Ok([a_k_in, a_k1_in, c_k1_bar, param_bar])
    }
}

/// Forward TEBD step; `mirror` applies the swap-conjugate of `param`.
pub fn step_forward(
    a_k: Arc<BlockTensor>,
    a_k1: Arc<BlockTensor>,
    c_k1: Arc<BlockTensor>,
    param: &BlockTensor,
    mirror: bool,
    policy: &TruncationPolicy,
) -> Result<StepData> {
    let gate = if mirror { mirror_transform(param)? } else { param.clone() };
    let aa = contract(&a_k, &a_k1, &[(2, 0)])?;
    let phi = contract(&gate, &aa, &[(2, 1), (3, 2)])?.permute(&PHI_PERM)?;
    let theta = contract(&phi, &c_k1, &[(3, 0)])?;
    let svd = svd_truncated(&theta, &[0, 1], policy)?;
    let new_a_k1 = contract(&svd.u.conj(), &phi, &[(0, 0), (1, 1)])?;
    Ok(StepData { a_k, a_k1, c_k1, gate, mirror, aa, phi, svd, new_a_k1 })
}

/// Outputs of [`tebd_step`].
#[derive(Debug, Clone)]
pub struct StepResult {
    pub a_k: BlockTensor,
    pub c_k: BlockTensor,
    pub a_k1: BlockTensor,
    pub c_k1: BlockTensor,
    pub discarded_weight: f64,
}

/// One gate on bond `(k, k+1)`. `C(k)` is superseded by the new singular
/// values and `C(k+1)` passes through unchanged.
pub fn tebd_step(
    a_k: &BlockTensor,
    _c_k: &BlockTensor,
    a_k1: &BlockTensor,
    c_k1: &BlockTensor,
    gate: &BlockTensor,
    policy: &TruncationPolicy,
) -> Result<StepResult> {
    let d = step_forward(Arc::new(a_k.clone()), Arc::new(a_k1.clone()), Arc::new(c_k1.clone()), gate, false, policy)?;
    Ok(StepResult {
        a_k: d.svd.u.clone(),
        c_k: d.svd.s.clone(),
        a_k1: d.new_a_k1.clone(),
        c_k1: c_k1.clone(),
        discarded_weight: d.svd.discarded_weight,
    })
}

fn record_step(tape: &mut Tape, inputs: [Var; 4], data: StepData) -> (Var, Var, Var) {
    let outs = vec![data.svd.u.clone(), data.svd.s.clone(), data.new_a_k1.clone()];
    let data = Arc::new(data);
    let pb: Pullback = Box::new(move |g, diag| {
        let [a, b, c, p] = data.pullback(&g[0], &g[1], &g[2], diag).map_err(|e| match e {
            Error::Tensor(t) => t,
            other => crate::tensor::TensorError::Structure(other.to_string()),
        })?;
        Ok(vec![Some(a), Some(b), Some(c), Some(p)])
    });
    let o = tape.record("tebd_step", &inputs, outs, pb);
    (o[0], o[1], o[2])
}

/// Records one step on the tape.
pub fn tebd_step_tape(
    tape: &mut Tape,
    a_k: Var,
    a_k1: Var,
    c_k1: Var,
    param: Var,
    mirror: bool,
    policy: &TruncationPolicy,
) -> Result<(Var, Var, Var, f64)> {
    let data = step_forward(tape.shared(a_k), tape.shared(a_k1), tape.shared(c_k1), tape.value(param), mirror, policy)?;
    let w = data.discarded_weight();
    let (x, y, z) = record_step(tape, [a_k, a_k1, c_k1, param], data);
    Ok((x, y, z, w))
}

/// Applies every layer of `circuit` to the state on the tape. `params[i]` is
/// the node of parameter `i`. Steps of one sublayer act on disjoint bonds and
/// run concurrently when `parallel` is set; recording order is fixed.
pub fn apply_circuit_tape(
    tape: &mut Tape,
    state: &MpsVars,
    circuit: &Circuit,
    params: &[Var],
    policy: &TruncationPolicy,
    parallel: bool,
) -> Result<(MpsVars, f64, Vec<StepLog>)> {
    if state.len() != circuit.len() {
        return Err(Error::Invalid(format!("state has {} sites, circuit {}", state.len(), circuit.len())));
    }
    let mut cur = state.clone();
    let mut total = 0.0;
    let mut log = Vec::with_capacity(circuit.num_steps());
    for layer in 0..circuit.depth() {
        for parity in [Parity::Odd, Parity::Even] {
            let steps = circuit.sublayer(layer, parity);
            let jobs: Vec<_> = steps
                .iter()
                .map(|p| {
                    (
                        tape.shared(cur.a[p.site]),
                        tape.shared(cur.a[p.site + 1]),
                        tape.shared(cur.c[p.site + 1]),
                        tape.shared(params[p.param]),
                        p.transform == Transform::Mirrored,
                    )
                })
                .collect();
            let run = |j: &(Arc<BlockTensor>, Arc<BlockTensor>, Arc<BlockTensor>, Arc<BlockTensor>, bool)| {
                step_forward(j.0.clone(), j.1.clone(), j.2.clone(), &j.3, j.4, policy)
            };
            let results: Vec<Result<StepData>> =
                if parallel && jobs.len() > 1 { jobs.par_iter().map(run).collect() } else { jobs.iter().map(run).collect() };
            for (p, r) in steps.iter().zip(results) {
                let data = r?;
                let w = data.discarded_weight();
                let k = p.site;
                let (x, y, z) = record_step(tape, [cur.a[k], cur.a[k + 1], cur.c[k + 1], params[p.param]], data);
                cur.a[k] = x;
                cur.c[k] = y;
                cur.a[k + 1] = z;
                total += w;
                log.push(StepLog { layer, parity, site: k, discarded_weight: w });
            }
        }
    }
    Ok((cur, total, log))
}

/// Evolves `state` through `circuit` without recording gradients.
pub fn apply_circuit(
    state: &MpsState,
    circuit: &Circuit,
    policy: &TruncationPolicy,
) -> Result<(MpsState, f64, Vec<StepLog>)> {
    let mut tape = Tape::no_grad();
    let vars = state.to_tape(&mut tape);
    let params: Vec<Var> = circuit.params().iter().map(|g| tape.leaf(g.clone())).collect();
    let (out, total, log) = apply_circuit_tape(&mut tape, &vars, circuit, &params, policy, true)?;
    let s = MpsState::from_tape(&tape, &out, state.phys().clone(), state.sector())?;
    Ok((s, total, log))
}

/// Applies one sublayer of gates given as `(left site, gate)`.
pub fn tebd_layer(
    state: &MpsState,
    gates: &[(usize, BlockTensor)],
    parity: Parity,
    policy: &TruncationPolicy,
    parallel: bool,
) -> Result<(MpsState, f64)> {
    for (k, _) in gates {
        if k % 2 != parity.first_site() || k + 1 >= state.len() {
            return Err(Error::Invalid(format!("bond ({k}, {}) is not in the {parity:?} sublayer", k + 1)));
        }
    }
    let mut a = state.a_all().to_vec();
    let mut c = state.c_all().to_vec();
    let run = |(k, g): &(usize, BlockTensor)| {
        step_forward(Arc::new(a[*k].clone()), Arc::new(a[k + 1].clone()), Arc::new(c[k + 1].clone()), g, false, policy)
    };
    let results: Vec<Result<StepData>> =
        if parallel { gates.par_iter().map(run).collect() } else { gates.iter().map(run).collect() };
    let mut total = 0.0;
    for ((k, _), r) in gates.iter().zip(results) {
        let d = r?;
        total += d.discarded_weight();
        a[*k] = d.svd.u.clone();
        c[*k] = d.svd.s.clone();
        a[k + 1] = d.new_a_k1;
    }
    Ok((MpsState::from_parts(a, c, state.phys().clone(), state.sector())?, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{gate_matrix, gate_spaces};
    use crate::mps::{basis_state, dense_to_mps, network, overlap, left_canonical_defect};
    use crate::tensor::{random_unitary, ChargeGroup, Direction, IndexSpace};
    use ndarray::{Array1, Array2, Axis, IxDyn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z2() -> IndexSpace {
        IndexSpace::new(ChargeGroup::z2(), vec![(0, 1), (1, 1)], Direction::In).unwrap()
    }

    /// Random vector of even total parity on `l` qubits.
    fn random_even(l: usize, rng: &mut ChaCha8Rng) -> Array1<C64> {
        let mut v = Array1::from_shape_fn(1 << l, |i| {
            if (i as u32).count_ones().is_multiple_of(2) {
                C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            } else {
                C64::default()
            }
        });
        let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        v.mapv_inplace(|x| x / n);
        v
    }

    fn apply_dense(v: &Array1<C64>, l: usize, k: usize, u: &Array2<C64>) -> Array1<C64> {
        let d: usize = 2;
        let (left, right) = (d.pow(k as u32), d.pow((l - k - 2) as u32));
        let t = v.clone().into_shape_with_order((left, d * d, right)).unwrap();
        let mut out = ndarray::Array3::<C64>::zeros((left, d * d, right));
        for a in 0..left {
            out.index_axis_mut(Axis(0), a).assign(&u.dot(&t.index_axis(Axis(0), a)));
        }
        out.into_shape_with_order(v.len()).unwrap()
    }

    fn circuit_dense(c: &Circuit, v: &Array1<C64>) -> Array1<C64> {
        let mut v = v.clone();
        for layer in 0..c.depth() {
            for parity in [Parity::Odd, Parity::Even] {
                for p in c.sublayer(layer, parity) {
                    v = apply_dense(&v, c.len(), p.site, &gate_matrix(&c.gate(&p).unwrap()));
                }
            }
        }
        v
    }

    fn max_diff(a: &Array1<C64>, b: &Array1<C64>) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
    }

    fn reflect(v: &Array1<C64>, l: usize) -> Array1<C64> {
        let t = v.clone().into_shape_with_order(IxDyn(&vec![2; l])).unwrap();
        let perm: Vec<usize> = (0..l).rev().collect();
        t.permuted_axes(IxDyn(&perm)).as_standard_layout().into_owned().into_shape_with_order(v.len()).unwrap()
    }

    fn random_circuit(l: usize, depth: usize, inversion: bool, seed: u64) -> Circuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Circuit::new(l, z2(), inversion).unwrap();
        for _ in 0..depth {
            c.grow(0.8, &mut rng).unwrap();
        }
        c
    }

    #[test]
    fn identity_gates_leave_state_unchanged() {
        let p = z2();
        let s = basis_state(&p, &[1, 0, 1, 1]).unwrap();
        let mut c = Circuit::new(4, p.clone(), false).unwrap();
        c.grow(0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (out, w, log) = apply_circuit(&s, &c, &TruncationPolicy::default()).unwrap();
        assert_eq!(log.len(), 3);
        assert!(w < 1e-28);
        assert!((overlap(&s, &out).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn swap_moves_excitation() {
        let p = z2();
        let mut swap = Array2::<C64>::zeros((4, 4));
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap[[i, j]] = C64::new(1.0, 0.0);
        }
        let g = BlockTensor::from_dense(&swap.into_shape_with_order((2, 2, 2, 2)).unwrap().into_dyn(), gate_spaces(&p)).unwrap();
        let s = basis_state(&p, &[0, 1]).unwrap();
        let r = tebd_step(s.a(0), s.c(0), s.a(1), s.c(1), &g, &TruncationPolicy::default()).unwrap();
        let out = MpsState::from_parts(vec![r.a_k, r.a_k1], vec![r.c_k, r.c_k1], p.clone(), s.sector()).unwrap();
        let want = basis_state(&p, &[1, 0]).unwrap();
        assert!((overlap(&want, &out).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_dense_statevector() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = 6;
        let v = random_even(l, &mut rng);
        let s = dense_to_mps(&v, l, &z2(), 0, &TruncationPolicy::exact()).unwrap();
        let c = random_circuit(l, 2, false, 12);
        let (out, w, _) = apply_circuit(&s, &c, &TruncationPolicy::exact()).unwrap();
        assert!(w < 1e-24);
        assert!(max_diff(&out.to_dense().unwrap(), &circuit_dense(&c, &v)) < 1e-12);
        assert!(left_canonical_defect(&out).unwrap() < 1e-12);
        assert!((out.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_loss_is_discarded_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let l = 8;
        let v = random_even(l, &mut rng);
        let s = dense_to_mps(&v, l, &z2(), 0, &TruncationPolicy::exact()).unwrap();
        let c = random_circuit(l, 1, false, 14);
        let policy = TruncationPolicy::new(4, 0.0).unwrap();
        let (out, w, log) = apply_circuit(&s, &c, &policy).unwrap();
        assert!(w > 1e-6);
        assert!((log.iter().map(|x| x.discarded_weight).sum::<f64>() - w).abs() < 1e-15);
        assert!(out.max_bond() <= 4);
        assert!(out.norm() < 1.0);
    }

    #[test]
    fn layer_commutes_with_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let l = 6;
        let v = random_even(l, &mut rng);
        let c = random_circuit(l, 2, true, 16);
        let policy = TruncationPolicy::exact();
        let run = |x: &Array1<C64>| {
            let s = dense_to_mps(x, l, &z2(), 0, &policy).unwrap();
            apply_circuit(&s, &c, &policy).unwrap().0.to_dense().unwrap()
        };
        assert!(max_diff(&run(&reflect(&v, l)), &reflect(&run(&v), l)) < 1e-12);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let l = 8;
        let s = dense_to_mps(&random_even(l, &mut rng), l, &z2(), 0, &TruncationPolicy::exact()).unwrap();
        let c = random_circuit(l, 2, true, 18);
        let policy = TruncationPolicy::new(6, 1e-10).unwrap();
        let go = |par: bool| {
            let mut tape = Tape::new();
            let vars = s.to_tape(&mut tape);
            let ps: Vec<Var> = c.params().iter().map(|g| tape.leaf(g.clone())).collect();
            let before = tape.num_records();
            let (out, w, _) = apply_circuit_tape(&mut tape, &vars, &c, &ps, &policy, par).unwrap();
            assert_eq!(tape.num_records() - before, c.num_steps());
            (MpsState::from_tape(&tape, &out, s.phys().clone(), 0).unwrap(), w)
        };
        let (a, wa) = go(true);
        let (b, wb) = go(false);
        assert_eq!(a, b);
        assert_eq!(wa, wb);
    }

    /// The same step assembled from primitive tape operations.
    fn unfused_step(tape: &mut Tape, a_k: Var, a_k1: Var, c_k1: Var, param: Var, mirror: bool, policy: &TruncationPolicy) -> (Var, Var, Var) {
        let g = if mirror { tape.permute(param, &[1, 0, 3, 2]).unwrap() } else { param };
        let aa = tape.contract(a_k, a_k1, &[(2, 0)]).unwrap();
        let phi0 = tape.contract(g, aa, &[(2, 1), (3, 2)]).unwrap();
        let phi = tape.permute(phi0, &PHI_PERM).unwrap();
        let theta = tape.contract(phi, c_k1, &[(3, 0)]).unwrap();
        let (u, s, _) = tape.svd(theta, &[0, 1], policy).unwrap();
        let uc = tape.conj(u);
        let b = tape.contract(uc, phi, &[(0, 0), (1, 1)]).unwrap();
        (u, s, b)
    }

    /// `|⟨target|C ψ⟩|²` and gradients with respect to the circuit parameters.
    fn fidelity_grad(s: &MpsState, target: &MpsState, c: &Circuit, policy: &TruncationPolicy, fused: bool) -> (f64, Vec<BlockTensor>) {
        let mut tape = Tape::new();
        let mut cur = s.to_tape(&mut tape);
        let t = target.to_tape(&mut tape);
        let ps: Vec<Var> = c.params().iter().map(|g| tape.leaf(g.clone())).collect();
        for layer in 0..c.depth() {
            for parity in [Parity::Odd, Parity::Even] {
                for p in c.sublayer(layer, parity) {
                    let k = p.site;
                    let m = p.transform == Transform::Mirrored;
                    let (x, y, z) = if fused {
                        let r = tebd_step_tape(&mut tape, cur.a[k], cur.a[k + 1], cur.c[k + 1], ps[p.param], m, policy).unwrap();
                        (r.0, r.1, r.2)
                    } else {
                        unfused_step(&mut tape, cur.a[k], cur.a[k + 1], cur.c[k + 1], ps[p.param], m, policy)
                    };
                    cur.a[k] = x;
                    cur.c[k] = y;
                    cur.a[k + 1] = z;
                }
            }
        }
        let o = network::overlap(&mut tape, &t, &cur).unwrap();
        let f = tape.abs2(o).unwrap();
        let g = tape.backward(f).unwrap();
        let grads = ps.iter().zip(c.params()).map(|(&v, x)| g.get_or_zero(v, x)).collect();
        (tape.value(f).scalar_value().unwrap().re, grads)
    }

    fn setup(seed: u64) -> (MpsState, MpsState, Circuit) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = 6;
        let s = dense_to_mps(&random_even(l, &mut rng), l, &z2(), 0, &TruncationPolicy::exact()).unwrap();
        let t = dense_to_mps(&random_even(l, &mut rng), l, &z2(), 0, &TruncationPolicy::exact()).unwrap();
        (s, t, random_circuit(l, 2, true, seed + 1))
    }

    #[test]
    fn fused_rule_matches_primitive_chain() {
        let (s, t, c) = setup(19);
        for policy in [TruncationPolicy::exact(), TruncationPolicy::new(3, 0.0).unwrap()] {
            let (fa, ga) = fidelity_grad(&s, &t, &c, &policy, true);
            let (fb, gb) = fidelity_grad(&s, &t, &c, &policy, false);
            assert!((fa - fb).abs() < 1e-13);
            for (x, y) in ga.iter().zip(&gb) {
                assert!(x.max_abs_diff(y).unwrap() < 1e-10, "{}", x.max_abs_diff(y).unwrap());
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (s, t, c) = setup(21);
        let policy = TruncationPolicy::exact();
        let (_, grads) = fidelity_grad(&s, &t, &c, &policy, true);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let h = 1e-6;
        for id in 0..c.num_params() {
            let dir = random_unitary(&[z2(), z2()], 1.0, &mut rng).unwrap();
            let shifted = |sign: f64| {
                let mut cc = c.clone();
                let mut ps = c.params().to_vec();
                ps[id].axpy(C64::new(sign * h, 0.0), &dir).unwrap();
                cc.set_params(ps).unwrap();
                fidelity_grad(&s, &t, &cc, &policy, true).0
            };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
            let an = grads[id].inner(&dir).unwrap().re;
            assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "param {id}: fd {fd} vs {an}");
        }
    }
}
