//! MPOs as finite-state automata: channel `start` has not placed an operator
//! yet, `done` has completed the term; other channels carry a pending
//! operator together with its charge.

use ndarray::{Array2, Array4};

use super::{c, ops, ModelSpec};
use crate::error::{Error, Result};
use crate::mps::MpoOperator;
use crate::tensor::{BlockTensor, Charge, Direction, IndexSpace, C64};

struct Automaton {
    /// Charge of each channel.
    channels: Vec<Charge>,
    start: usize,
    done: usize,
}

/// Transitions `(from, to, operator)` of one site.
type Site = Vec<(usize, usize, Array2<C64>)>;

impl Automaton {
    fn build(&self, spec: &ModelSpec, sites: Vec<Site>) -> Result<MpoOperator> {
        let phys = spec.phys();
        let g = phys.group();
        let d = phys.dim();
        let l = sites.len();
        // group channels into contiguous charge sectors
        let mut order: Vec<usize> = (0..self.channels.len()).collect();
        order.sort_by_key(|&i| (g.normalize(self.channels[i]), i));
        let mut pos = vec![0; order.len()];
        for (p, &i) in order.iter().enumerate() {
            pos[i] = p;
        }
        let mut sectors: Vec<(Charge, usize)> = Vec::new();
        for &i in &order {
            let q = g.normalize(self.channels[i]);
            match sectors.last_mut() {
                Some((c, n)) if *c == q => *n += 1,
                _ => sectors.push((q, 1)),
            }
        }
        let bond = IndexSpace::new(g, sectors, Direction::In)?;
        let edge = IndexSpace::one(g, 0, Direction::In);
        let k = self.channels.len();
        let mut w = Vec::with_capacity(l);
        for (n, site) in sites.into_iter().enumerate() {
            let mut dense = Array4::<C64>::zeros((k, d, d, k));
            for (a, b, op) in site {
                let mut v = dense.slice_mut(ndarray::s![pos[a], .., .., pos[b]]);
                v += &op;
            }
            let rows = if n == 0 { pos[self.start]..pos[self.start] + 1 } else { 0..k };
            let cols = if n + 1 == l { pos[self.done]..pos[self.done] + 1 } else { 0..k };
            let t = dense.slice(ndarray::s![rows, .., .., cols]).to_owned().into_dyn();
            let left = if n == 0 { edge.clone() } else { bond.clone() };
            let right = if n + 1 == l { edge.dual() } else { bond.dual() };
            let bt = BlockTensor::from_dense(&t, vec![left, phys.clone(), phys.dual(), right])
                .map_err(|e| Error::Invalid(format!("MPO site {n} breaks the {g:?} symmetry: {e}")))?;
            w.push(bt);
        }
        MpoOperator::new(w, phys, true)
    }
}

fn with_identities(a: &Automaton, d: usize, mut site: Site) -> Site {
    site.push((a.start, a.start, ops::id(d)));
    site.push((a.done, a.done, ops::id(d)));
    site
}

pub fn ising_mpo(spec: &ModelSpec, g: f64, h: f64) -> Result<MpoOperator> {
    // channels: start, X pending, done
    let a = Automaton { channels: vec![0, 1, 0], start: 0, done: 2 };
    let x = ops::x();
    let onsite = ops::z().mapv(|v| v * -g) + x.mapv(|v| v * -h);
    let site = with_identities(&a, 2, vec![(0, 1, x.clone()), (1, 2, x.mapv(|v| -v)), (0, 2, onsite)]);
    a.build(spec, vec![site; spec.l])
}

pub fn potts3_mpo(spec: &ModelSpec, g: f64, h: f64) -> Result<MpoOperator> {
    // channels: start, σ pending, σ† pending, done
    let a = Automaton { channels: vec![0, 0, 0, 0], start: 0, done: 3 };
    let s = ops::potts_sigma();
    let sd = ops::dagger(&s);
    let t = ops::potts_tau();
    let onsite = (&t + &ops::dagger(&t)).mapv(|v| v * -g) + (&s + &sd).mapv(|v| v * -h);
    let site = with_identities(
        &a,
        3,
        vec![(0, 1, s.clone()), (1, 3, sd.mapv(|v| -v)), (0, 2, sd.clone()), (2, 3, s.mapv(|v| -v)), (0, 3, onsite)],
    );
    a.build(spec, vec![site; spec.l])
}

/// With `Q(k) = (−1)^k P(k)` (sites `k = 1..L`), the electric energy expands as
/// `Σ_{i<L} (Σ_{k≤i} Q(k))² = Σ_k (L−k) P(k) + 2 Σ_{k<k'} (L−k') Q(k) Q(k')`,
/// so a single accumulator channel carrying `Σ Q` suffices.
pub fn schwinger_mpo(spec: &ModelSpec, m: f64, g: f64) -> Result<MpoOperator> {
    // channels: start, charge accumulator, σ+ pending, σ− pending, done
    let a = Automaton { channels: vec![0, 0, 2, -2, 0], start: 0, done: 4 };
    let l = spec.l;
    let sp = ops::sigma_plus();
    let sm = ops::sigma_minus();
    let mut sites = Vec::with_capacity(l);
    for k in 1..=l {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let p = (ops::id(2) + ops::z().mapv(|v| v * sign)).mapv(|v| v * 0.5);
        let q = p.mapv(|v| v * sign);
        let rest = (l - k) as f64;
        let onsite = p.mapv(|v| v * (m + 0.5 * g * g * rest));
        sites.push(with_identities(
            &a,
            2,
            vec![
                (0, 1, q.clone()),
                (1, 1, ops::id(2)),
                (1, 4, q.mapv(|v| v * c(g * g * rest))),
                (0, 2, sp.clone()),
                (2, 4, sm.clone()),
                (0, 3, sm.clone()),
                (3, 4, sp.clone()),
                (0, 4, onsite),
            ],
        ));
    }
    a.build(spec, sites)
}
