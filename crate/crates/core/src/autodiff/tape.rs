use std::collections::HashMap;
use std::sync::Arc;

use super::rules::{contract_pullback, inverse_perm, svd_pullback, trace_pullback};
use super::Diagnostics;
use crate::tensor::{contract, svd_truncated, trace, BlockTensor, TensorError, TruncationPolicy, C64};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Reverse map from output adjoints (zero tensors for outputs that never
/// received one) to input adjoints (`None` = no contribution).
pub type Pullback =
    Box<dyn Fn(&[BlockTensor], &mut Diagnostics) -> Result<Vec<Option<BlockTensor>>, TensorError>>;

struct Record {
    name: &'static str,
    inputs: Vec<Var>,
    outputs: Vec<Var>,
    pullback: Pullback,
}

/// Per-evaluation computational graph. Records are appended in execution
/// order, which is a topological order by construction.
pub struct Tape {
    values: Vec<Arc<BlockTensor>>,
    records: Vec<Record>,
    grad: bool,
}

/// Adjoints keyed by node.
pub struct Gradients {
    adj: HashMap<usize, BlockTensor>,
    pub diagnostics: Diagnostics,
}

impl Gradients {
    /// Adjoint of `v`; `None` when no path from `v` reaches the loss.
    pub fn get(&self, v: Var) -> Option<&BlockTensor> {
        self.adj.get(&v.0)
    }

    /// Adjoint of `v`, or a zero tensor shaped like `like`.
    pub fn get_or_zero(&self, v: Var, like: &BlockTensor) -> BlockTensor {
        self.adj.get(&v.0).cloned().unwrap_or_else(|| {
            BlockTensor::zeros(like.spaces().to_vec()).expect("spaces of an existing tensor")
        })
    }

    pub fn take(&mut self, v: Var) -> Option<BlockTensor> {
        self.adj.remove(&v.0)
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { values: Vec::new(), records: Vec::new(), grad: true }
    }

    /// A tape that only evaluates; nothing is recorded for backward.
    pub fn no_grad() -> Self {
        Tape { values: Vec::new(), records: Vec::new(), grad: false }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    pub fn record_names(&self) -> Vec<&'static str> {
        self.records.iter().map(|r| r.name).collect()
    }

    /// Registers an input (parameter or constant).
    pub fn leaf(&mut self, t: BlockTensor) -> Var {
        self.push(Arc::new(t))
    }

    pub fn leaf_shared(&mut self, t: Arc<BlockTensor>) -> Var {
        self.push(t)
    }

    fn push(&mut self, t: Arc<BlockTensor>) -> Var {
        self.values.push(t);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &BlockTensor {
        &self.values[v.0]
    }

    pub fn shared(&self, v: Var) -> Arc<BlockTensor> {
        self.values[v.0].clone()
    }

    /// Appends already-computed outputs of an operation together with its
    /// reverse rule.
    pub fn record(
        &mut self,
        name: &'static str,
        inputs: &[Var],
        outputs: Vec<BlockTensor>,
        pullback: Pullback,
    ) -> Vec<Var> {
        let outs: Vec<Var> = outputs.into_iter().map(|t| self.push(Arc::new(t))).collect();
        if self.grad {
            self.records.push(Record { name, inputs: inputs.to_vec(), outputs: outs.clone(), pullback });
        }
        outs
    }

    fn record1(&mut self, name: &'static str, inputs: &[Var], out: BlockTensor, pb: Pullback) -> Var {
        self.record(name, inputs, vec![out], pb)[0]
    }

    pub fn contract(&mut self, a: Var, b: Var, pairs: &[(usize, usize)]) -> Result<Var, TensorError> {
        let (av, bv) = (self.shared(a), self.shared(b));
        let out = contract(&av, &bv, pairs)?;
        let pairs = pairs.to_vec();
        let pb: Pullback = Box::new(move |g, _| {
            let (ab, bb) = contract_pullback(&av, &bv, &pairs, &g[0])?;
            Ok(vec![Some(ab), Some(bb)])
        });
        Ok(self.record1("contract", &[a, b], out, pb))
    }

    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var, TensorError> {
        let out = self.value(a).permute(perm)?;
        let inv = inverse_perm(perm);
        let pb: Pullback = Box::new(move |g, _| Ok(vec![Some(g[0].permute(&inv)?)]));
        Ok(self.record1("permute", &[a], out, pb))
    }

    pub fn conj(&mut self, a: Var) -> Var {
        let out = self.value(a).conj();
        let pb: Pullback = Box::new(|g, _| Ok(vec![Some(g[0].conj())]));
        self.record1("conj", &[a], out, pb)
    }

    pub fn trace(&mut self, a: Var, pairs: &[(usize, usize)]) -> Result<Var, TensorError> {
        let av = self.shared(a);
        let out = trace(&av, pairs)?;
        let pairs = pairs.to_vec();
        let pb: Pullback = Box::new(move |g, _| Ok(vec![Some(trace_pullback(&av, &pairs, &g[0])?)]));
        Ok(self.record1("trace", &[a], out, pb))
    }

    /// Truncated SVD; returns `(u, s, v)` nodes.
    pub fn svd(
        &mut self,
        a: Var,
        left: &[usize],
        policy: &TruncationPolicy,
    ) -> Result<(Var, Var, Var), TensorError> {
        let f = svd_truncated(self.value(a), left, policy)?;
        let outs = vec![f.u.clone(), f.s.clone(), f.v.clone()];
        let f = Arc::new(f);
        let pb: Pullback = Box::new(move |g, d| {
            Ok(vec![Some(svd_pullback(&f, Some(&g[0]), Some(&g[1]), Some(&g[2]), d)?)])
        });
        let o = self.record("svd", &[a], outs, pb);
        Ok((o[0], o[1], o[2]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).add(self.value(b))?;
        let pb: Pullback = Box::new(|g, _| Ok(vec![Some(g[0].clone()), Some(g[0].clone())]));
        Ok(self.record1("add", &[a, b], out, pb))
    }

    /// `c · a` for a complex constant `c`.
    pub fn scale(&mut self, a: Var, c: C64) -> Var {
        let out = self.value(a).scale(c);
        let pb: Pullback = Box::new(move |g, _| Ok(vec![Some(g[0].scale(c.conj()))]));
        self.record1("scale", &[a], out, pb)
    }

    fn scalar_of(&self, a: Var) -> Result<C64, TensorError> {
        self.value(a).scalar_value()
    }

    /// Real part of a scalar.
    pub fn real(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.scalar_of(a)?;
        let pb: Pullback = Box::new(|g, _| Ok(vec![Some(BlockTensor::scalar(C64::new(scalar(&g[0]).re, 0.0)))]));
        Ok(self.record1("real", &[a], BlockTensor::scalar(C64::new(x.re, 0.0)), pb))
    }

    /// `|a|²` of a scalar.
    pub fn abs2(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.scalar_of(a)?;
        let pb: Pullback =
            Box::new(move |g, _| Ok(vec![Some(BlockTensor::scalar(x * (2.0 * scalar(&g[0]).re)))]));
        Ok(self.record1("abs2", &[a], BlockTensor::scalar(C64::new(x.norm_sqr(), 0.0)), pb))
    }

    /// Natural log of a real positive scalar.
    pub fn ln(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.scalar_of(a)?.re;
        let pb: Pullback =
            Box::new(move |g, _| Ok(vec![Some(BlockTensor::scalar(C64::new(scalar(&g[0]).re / x, 0.0)))]));
        Ok(self.record1("ln", &[a], BlockTensor::scalar(C64::new(x.ln(), 0.0)), pb))
    }

    /// Sum of scalars with real weights.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var, TensorError> {
        let mut acc = C64::new(0.0, 0.0);
        for &(v, w) in terms {
            acc += self.scalar_of(v)? * w;
        }
        let ws: Vec<f64> = terms.iter().map(|t| t.1).collect();
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let pb: Pullback = Box::new(move |g, _| {
            let gv = scalar(&g[0]);
            Ok(ws.iter().map(|&w| Some(BlockTensor::scalar(gv * w))).collect())
        });
        Ok(self.record1("sum", &vars, BlockTensor::scalar(acc), pb))
    }

    /// Reverse sweep from the real scalar `out` seeded with 1.
    pub fn backward(&self, out: Var) -> Result<Gradients, TensorError> {
        if !self.grad {
            return Err(TensorError::Structure("backward on a no-grad tape".into()));
        }
        let v = self.value(out);
        if v.rank() != 0 {
            return Err(TensorError::Structure(format!(
                "backward needs a scalar output, got rank {}",
                v.rank()
            )));
        }
        let mut adj: HashMap<usize, BlockTensor> = HashMap::new();
        adj.insert(out.0, BlockTensor::scalar(C64::new(1.0, 0.0)));
        let mut diagnostics = Diagnostics::default();
        for rec in self.records.iter().rev() {
            if !rec.outputs.iter().any(|o| adj.contains_key(&o.0)) {
                continue;
            }
            let gs: Vec<BlockTensor> = rec
                .outputs
                .iter()
                .map(|o| match adj.get(&o.0) {
                    Some(g) => g.clone(),
                    None => BlockTensor::zeros(self.values[o.0].spaces().to_vec()).expect("valid spaces"),
                })
                .collect();
            let ins = (rec.pullback)(&gs, &mut diagnostics)?;
            for (v, g) in rec.inputs.iter().zip(ins) {
                let Some(g) = g else { continue };
                diagnostics.max_adjoint_norm = diagnostics.max_adjoint_norm.max(g.norm());
                match adj.get_mut(&v.0) {
                    Some(existing) => existing.axpy(C64::new(1.0, 0.0), &g)?,
                    None => {
                        adj.insert(v.0, g);
                    }
                }
            }
        }
        Ok(Gradients { adj, diagnostics })
    }
}

fn scalar(t: &BlockTensor) -> C64 {
    t.scalar_value().unwrap_or_default()
}
