use brickopt::models::{
    dense_hamiltonian, exact_eigs, ops, rel_energy_error, sector_basis, target_mps, Model, ModelSpec, Symmetry,
};
use brickopt::mps::expectation;
use brickopt::tensor::{TruncationPolicy, C64};
use ndarray::{linalg::kron, Array2};

fn spec(model: Model, l: usize, sym: Symmetry) -> ModelSpec {
    ModelSpec::new(model, l, sym).unwrap()
}

fn max_abs(m: &Array2<C64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.norm()))
}

/// `op` acting on site `n` of `l` (site 0 most significant).
fn embed(op: &Array2<C64>, n: usize, l: usize) -> Array2<C64> {
    let d = op.nrows();
    let mut m = Array2::<C64>::eye(1);
    for k in 0..l {
        m = kron(&m, &if k == n { op.clone() } else { Array2::eye(d) });
    }
    m
}

fn spectrum(m: &Array2<C64>) -> Vec<f64> {
    brickopt::linalg::eigh(m).unwrap().0.to_vec()
}

#[test]
fn mpo_matches_sparse_construction() {
    let cases = [
        (Model::Ising { g: 1.3, h: 0.4 }, Symmetry::None),
        (Model::Ising { g: 0.7, h: 0.0 }, Symmetry::Z2),
        (Model::Potts3 { g: 0.8, h: 0.3 }, Symmetry::None),
        (Model::Schwinger { m: 0.5, g: 0.3 }, Symmetry::None),
        (Model::Schwinger { m: -0.2, g: 1.1 }, Symmetry::U1),
    ];
    for (model, sym) in cases {
        for l in [1, 2, 4] {
            let s = spec(model, l, sym);
            let from_mpo = s.mpo().unwrap().to_dense().unwrap();
            let h = dense_hamiltonian(&s).unwrap();
            assert!(h.hermiticity_defect() < 1e-13);
            assert!(max_abs(&(&from_mpo - &h.to_dense())) < 1e-12, "{model:?} {sym:?} L={l}");
        }
    }
}

#[test]
fn ising_small_cases() {
    let (g, h) = (0.6, 0.8);
    let e = spectrum(&dense_hamiltonian(&spec(Model::Ising { g, h }, 1, Symmetry::None)).unwrap().to_dense());
    assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    let s = spec(Model::Ising { g: 1.0, h: 0.0 }, 2, Symmetry::Z2);
    let e0 = exact_eigs(&s, Some(0), 1).unwrap()[0].energy;
    assert!((e0 + 5f64.sqrt()).abs() < 1e-12);
    assert!(s.mpo().unwrap().bond_dims()[0] == 3);
}

#[test]
fn ising_parity_commutes() {
    let l = 6;
    let h = dense_hamiltonian(&spec(Model::Ising { g: 0.9, h: 0.0 }, l, Symmetry::None)).unwrap().to_dense();
    let mut p = Array2::<C64>::eye(1);
    for _ in 0..l {
        p = kron(&p, &ops::z());
    }
    assert!(max_abs(&(h.dot(&p) - p.dot(&h))) < 1e-12);
    assert!(ModelSpec::new(Model::Ising { g: 1.0, h: 0.1 }, 4, Symmetry::Z2).is_err());
    assert!(ModelSpec::new(Model::Potts3 { g: 1.0, h: 0.0 }, 4, Symmetry::U1).is_err());
}

#[test]
fn potts_algebra_and_single_site() {
    let s = ops::potts_sigma();
    let t = ops::potts_tau();
    let w = ops::omega();
    assert!(max_abs(&(s.dot(&t) - t.dot(&s).mapv(|x| x * w))) < 1e-15);
    let s3 = s.dot(&s).dot(&s);
    let t3 = t.dot(&t).dot(&t);
    assert!(max_abs(&(s3 - Array2::<C64>::eye(3))) < 1e-15);
    assert!(max_abs(&(t3 - Array2::<C64>::eye(3))) < 1e-14);
    let g = 0.7;
    let e = spectrum(&dense_hamiltonian(&spec(Model::Potts3 { g, h: 0.0 }, 1, Symmetry::None)).unwrap().to_dense());
    for (a, b) in e.iter().zip([-2.0 * g, g, g]) {
        assert!((a - b).abs() < 1e-14);
    }
    assert_eq!(spec(Model::Potts3 { g, h: 0.1 }, 3, Symmetry::None).mpo().unwrap().bond_dims()[0], 4);
}

#[test]
fn schwinger_conserves_charge_and_matches_direct_form() {
    let l = 6;
    let h = dense_hamiltonian(&spec(Model::Schwinger { m: 0.5, g: 0.3 }, l, Symmetry::None)).unwrap().to_dense();
    let mut ztot = Array2::<C64>::zeros((1 << l, 1 << l));
    for n in 0..l {
        ztot = ztot + embed(&ops::z(), n, l);
    }
    assert!(max_abs(&(h.dot(&ztot) - ztot.dot(&h))) < 1e-12);

    // two sites written out from Pauli matrices
    let (m, g) = (0.37, 1.3);
    let p = |k: usize| {
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        (Array2::<C64>::eye(4) + embed(&ops::z(), k - 1, 2).mapv(|x| x * sign)).mapv(|x| x * 0.5)
    };
    let hop = (embed(&ops::x(), 0, 2).dot(&embed(&ops::x(), 1, 2)) + embed(&ops::y(), 0, 2).dot(&embed(&ops::y(), 1, 2)))
        .mapv(|x| x * 0.5);
    let e1 = p(1).mapv(|x| -x);
    let direct = (p(1) + p(2)).mapv(|x| x * m) + hop + e1.dot(&e1).mapv(|x| x * (0.5 * g * g));
    let built = dense_hamiltonian(&spec(Model::Schwinger { m, g }, 2, Symmetry::U1)).unwrap().to_dense();
    assert!(max_abs(&(built - &direct)) < 1e-14);
}

#[test]
fn xy_chain_matches_free_fermions() {
    let l = 8;
    let e0 = exact_eigs(&spec(Model::Schwinger { m: 0.0, g: 0.0 }, l, Symmetry::None), None, 1).unwrap()[0].energy;
    let want: f64 = (1..=l)
        .map(|j| 2.0 * (std::f64::consts::PI * j as f64 / (l + 1) as f64).cos())
        .filter(|e| *e < 0.0)
        .sum();
    assert!((e0 - want).abs() < 1e-10, "{e0} vs {want}");
}

#[test]
fn sectors_partition_the_spectrum() {
    let l = 4;
    let s = spec(Model::Schwinger { m: 0.4, g: 0.9 }, l, Symmetry::U1);
    assert_eq!(sector_basis(&s, Some(0)).unwrap().len(), 6);
    let mut merged = Vec::new();
    for q in [-4, -2, 0, 2, 4] {
        let n = sector_basis(&s, Some(q)).unwrap().len();
        let e: Vec<f64> = exact_eigs(&s, Some(q), n).unwrap().iter().map(|p| p.energy).collect();
        assert!(e.windows(2).all(|w| w[0] <= w[1]));
        merged.extend(e);
    }
    merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let full = spectrum(&dense_hamiltonian(&s).unwrap().to_dense());
    assert_eq!(merged.len(), full.len());
    assert!(merged.iter().zip(&full).all(|(a, b)| (a - b).abs() < 1e-10));

    let z = spec(Model::Ising { g: 0.8, h: 0.0 }, l, Symmetry::Z2);
    let mut merged: Vec<f64> = [0, 1].iter().flat_map(|&q| exact_eigs(&z, Some(q), 8).unwrap()).map(|p| p.energy).collect();
    merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let full = spectrum(&dense_hamiltonian(&z).unwrap().to_dense());
    assert!(merged.iter().zip(&full).all(|(a, b)| (a - b).abs() < 1e-10));
}

#[test]
fn cat_state_ground_in_even_sector() {
    let l = 4;
    let s = spec(Model::Ising { g: 0.0, h: 0.0 }, l, Symmetry::Z2);
    let pair = &exact_eigs(&s, Some(0), 1).unwrap()[0];
    assert!((pair.energy + (l - 1) as f64).abs() < 1e-12);
    // (|++++⟩ + |−−−−⟩)/√2 has amplitude 2/(√2·4) on every even-parity basis state
    let amp = 2.0 / (2f64.sqrt() * 4.0);
    for (b, x) in pair.vector.iter().enumerate() {
        let want = if (b as u32).count_ones().is_multiple_of(2) { amp } else { 0.0 };
        assert!((x - C64::new(want, 0.0)).norm() < 1e-12);
    }
    let (mps, e) = target_mps(&s, Some(0), 0, &TruncationPolicy::new(2, 1e-12).unwrap()).unwrap();
    assert!(mps.max_bond() <= 2);
    assert!((e + 3.0).abs() < 1e-12);
}

#[test]
fn target_state_reproduces_energy() {
    let s = spec(Model::Ising { g: 1.2, h: 0.0 }, 8, Symmetry::Z2);
    let (t, e) = target_mps(&s, Some(0), 0, &TruncationPolicy::default()).unwrap();
    assert!((expectation(&t, &s.mpo().unwrap()).unwrap() - e).abs() < 1e-10);
    let (t1, e1) = target_mps(&s, Some(0), 1, &TruncationPolicy::default()).unwrap();
    assert!(e1 > e);
    assert!((expectation(&t1, &s.mpo().unwrap()).unwrap() - e1).abs() < 1e-10);
    let plain = spec(Model::Ising { g: 1.2, h: 0.0 }, 8, Symmetry::None);
    assert!(target_mps(&plain, Some(1), 0, &TruncationPolicy::default()).is_err());
}

#[test]
fn relative_error() {
    assert_eq!(rel_energy_error(-2.0, -2.0), 0.0);
    assert_eq!(rel_energy_error(-1.0, -2.0), 0.5);
    assert_eq!(rel_energy_error(1.0, 3.0), rel_energy_error(-1.0, -3.0));
}

#[test]
fn schwinger_mpo_long_chain() {
    for sym in [Symmetry::None, Symmetry::U1] {
        let s = spec(Model::Schwinger { m: 0.7, g: 0.9 }, 10, sym);
        let mpo = s.mpo().unwrap();
        assert!(mpo.bond_dims().iter().all(|&b| b <= 5));
        let diff = &mpo.to_dense().unwrap() - &dense_hamiltonian(&s).unwrap().to_dense();
        assert!(max_abs(&diff) < 1e-10);
    }
}
