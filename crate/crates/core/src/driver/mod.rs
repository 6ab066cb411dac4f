//! The layer-growing optimization loop: evaluate the cost of the circuit
//! output, back-propagate, lift to the unitary manifold and take a manifold
//! ADAM step; when progress stalls, append a near-identity layer, keep the old
//! gates and restart ADAM.

mod config;

pub use config::{CostConfig, CostName, OutputConfig, RunConfig};

use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::circuit::io::CircuitRecord;
use crate::circuit::{apply_circuit, apply_circuit_tape, Circuit};
use crate::cost::{self, CostKind};
use crate::error::{Error, Result};
use crate::manifold::{riemann_gradients, AdamState};
use crate::models::{target_mps, ModelSpec};
use crate::mps::{dense_to_mps, expectation, product_state, LocalState, MpoOperator, MpsState};
use crate::tensor::{BlockTensor, Charge, C64};

pub const CHECKPOINT_FORMAT: &str = "chk1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxdepthExhausted,
    /// The total iteration budget ran out.
    Stalled,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => 0,
            Status::MaxdepthExhausted => 2,
            Status::Stalled => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Converged,
    Stalled,
    Continue,
}

/// `converged` once the last entry is below `tol`; `stalled` when the mean
/// absolute change over the last `window` steps is below `subtol`.
pub fn convergence_check(history: &[f64], tol: f64, subtol: f64, window: usize) -> Convergence {
    let Some(&last) = history.last() else {
        return Convergence::Continue;
    };
    if last < tol {
        return Convergence::Converged;
    }
    if window > 0 && history.len() > window {
        let tail = &history[history.len() - window - 1..];
        let mean = tail.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / window as f64;
        if mean < subtol {
            return Convergence::Stalled;
        }
    }
    Convergence::Continue
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub depth: usize,
    pub cost: f64,
    pub rel_energy_error: Option<f64>,
    pub total_infidelity: Option<f64>,
    pub discarded_weight: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEvent {
    /// First iteration evaluated at the new depth.
    pub iteration: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cost: String,
    pub target_energy: Option<f64>,
    pub status: Option<Status>,
    pub records: Vec<IterationRecord>,
    pub growth_events: Vec<GrowthEvent>,
    #[serde(default)]
    pub final_circuit: Option<String>,
}

impl RunReport {
    pub fn final_depth(&self) -> usize {
        self.records.last().map_or(0, |r| r.depth)
    }

    pub fn cost_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

/// Everything the loop needs that is fixed by the configuration.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ModelSpec,
    pub hamiltonian: MpoOperator,
    pub cost: CostKind,
    pub initial: MpsState,
    pub target_energy: Option<f64>,
    pub target_state: Option<MpsState>,
}

fn superposition_state(spec: &ModelSpec, configs: &[Vec<usize>], sector: Option<Charge>, config: &RunConfig) -> Result<MpsState> {
    let d = spec.local_dim();
    let mut v = Array1::<C64>::zeros(d.pow(spec.l as u32));
    for c in configs {
        let idx = c.iter().fold(0, |acc, &s| acc * d + s);
        v[idx] += C64::new(1.0, 0.0);
    }
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|x| x / n);
    dense_to_mps(&v, spec.l, &spec.phys(), sector.unwrap_or(0), &config.truncation)
}

impl Problem {
    pub fn build(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.spec()?;
        let hamiltonian = spec.mpo()?;
        let sector = config.resolved_sector()?;
        let phys = spec.phys();
        let local: Vec<LocalState> = config.initial_configuration().into_iter().map(LocalState::Basis).collect();
        let initial = product_state(&phys, &local, sector)?;
        let reference = |n: usize| match target_mps(&spec, sector, n, &config.truncation) {
            Ok(t) => Ok(Some(t)),
            Err(Error::TooLarge(msg)) => {
                log::warn!("no exact reference: {msg}");
                Ok(None)
            }
            Err(e) => Err(e),
        };
        let (target_state, ed_energy) = match (&config.cost.superposition, config.cost.kind) {
            (Some(s), _) => {
                let t = superposition_state(&spec, s, sector, config)?;
                let e = expectation(&t, &hamiltonian)?;
                (Some(t), Some(e))
            }
            (None, config::CostName::Energy) if config.target_energy.is_some() => (None, None),
            (None, kind) => {
                let level = if kind == config::CostName::Energy { 0 } else { config.cost.level };
                match reference(level)? {
                    Some((t, e)) => (Some(t), Some(e)),
                    None => (None, None),
                }
            }
        };
        let target_energy = config.target_energy.or(ed_energy);
        let cost = match config.cost.kind {
            config::CostName::Energy => CostKind::Energy(hamiltonian.clone()),
            kind => {
                let t = target_state
                    .clone()
                    .ok_or_else(|| Error::Config("fidelity costs need an exactly diagonalizable target".into()))?;
                if kind == config::CostName::TotalFidelity {
                    CostKind::NegLogTotalFidelity(t)
                } else {
                    CostKind::MeanNegLogSubspaceFidelity(t)
                }
            }
        };
        Ok(Problem { spec, hamiltonian, cost, initial, target_energy, target_state })
    }
}

/// Metrics of one circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cost: f64,
    pub energy: f64,
    pub rel_energy_error: Option<f64>,
    pub total_fidelity: Option<f64>,
    pub subspace_profile: Option<Vec<f64>>,
    pub discarded_weight: f64,
}

struct Forward {
    tape: Tape,
    params: Vec<Var>,
    cost_var: Var,
    cost: f64,
    state: MpsState,
    discarded: f64,
}

fn forward(problem: &Problem, circuit: &Circuit, config: &RunConfig, grad: bool) -> Result<Forward> {
    let mut tape = if grad { Tape::new() } else { Tape::no_grad() };
    let vars = problem.initial.to_tape(&mut tape);
    let params: Vec<Var> = circuit.params().iter().map(|g| tape.leaf(g.clone())).collect();
    let (out, discarded, _) = apply_circuit_tape(&mut tape, &vars, circuit, &params, &config.truncation, true)?;
    let cost_var = problem.cost.record(&mut tape, &out)?;
    let cost = tape.value(cost_var).scalar_value()?.re;
    let state = MpsState::from_tape(&tape, &out, problem.initial.phys().clone(), problem.initial.sector())?;
    Ok(Forward { tape, params, cost_var, cost, state, discarded })
}

/// `(ΔE/|E_T|, 1 − F_T)` where references exist.
fn figures(problem: &Problem, cost: f64, state: &MpsState) -> Result<(Option<f64>, Option<f64>)> {
    let rel = match problem.target_energy {
        Some(et) => {
            let e = match problem.cost {
                CostKind::Energy(_) => cost,
                _ => expectation(state, &problem.hamiltonian)?,
            };
            Some(crate::models::rel_energy_error(e, et))
        }
        None => None,
    };
    let infid = match &problem.target_state {
        Some(t) => Some(1.0 - cost::total_fidelity(t, state)?),
        None => None,
    };
    Ok((rel, infid))
}

/// Evaluates `circuit` on the initial state of `config`.
pub fn evaluate(circuit: &Circuit, config: &RunConfig) -> Result<Metrics> {
    let problem = Problem::build(config)?;
    evaluate_problem(&problem, circuit, config)
}

pub fn evaluate_problem(problem: &Problem, circuit: &Circuit, config: &RunConfig) -> Result<Metrics> {
    if circuit.len() != config.l || circuit.phys() != problem.initial.phys() {
        return Err(Error::Invalid("circuit does not match the configured model".into()));
    }
    let (state, discarded, _) = apply_circuit(&problem.initial, circuit, &config.truncation)?;
    let cost = problem.cost.evaluate(&state)?;
    let energy = expectation(&state, &problem.hamiltonian)?;
    let (rel, infid) = figures(problem, cost, &state)?;
    let profile = match &problem.target_state {
        Some(t) => Some(cost::subspace_fidelity_profile(t, &state)?),
        None => None,
    };
    Ok(Metrics {
        cost,
        energy,
        rel_energy_error: rel,
        total_fidelity: infid.map(|x| 1.0 - x),
        subspace_profile: profile,
        discarded_weight: discarded,
    })
}

/// A resumable optimization.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub problem: Problem,
    pub circuit: Circuit,
    pub adam: AdamState,
    rng: ChaCha8Rng,
    pub report: RunReport,
    /// Cost trace since the last depth change.
    since_growth: Vec<f64>,
}

impl Run {
    pub fn new(config: RunConfig) -> Result<Self> {
        let problem = Problem::build(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut circuit = Circuit::new(config.l, problem.spec.phys(), config.inversion_symmetry)?;
        circuit.grow(config.init_epsilon, &mut rng)?;
        let adam = AdamState::new(config.adam, circuit.params())?;
        let report = RunReport {
            cost: problem.cost.name().into(),
            target_energy: problem.target_energy,
            status: None,
            records: Vec::new(),
            growth_events: Vec::new(),
            final_circuit: None,
        };
        Ok(Run { config, problem, circuit, adam, rng, report, since_growth: Vec::new() })
    }

    pub fn status(&self) -> Option<Status> {
        self.report.status
    }

    /// One optimizer iteration; returns the final status once the run ends.
    pub fn step(&mut self) -> Result<Option<Status>> {
        if let Some(s) = self.report.status {
            return Ok(Some(s));
        }
        let start = Instant::now();
        let fw = forward(&self.problem, &self.circuit, &self.config, true)?;
        let (rel, infid) = figures(&self.problem, fw.cost, &fw.state)?;
        let iteration = self.report.records.len();
        self.since_growth.push(fw.cost);
        let merit = match self.config.cost.kind {
            CostName::Energy => rel,
            _ => infid,
        };
        let verdict = if merit.is_some_and(|m| m < self.config.tol) {
            Convergence::Converged
        } else if self.since_growth.len() >= self.config.max_iterations_per_depth {
            Convergence::Stalled
        } else {
            convergence_check(&self.since_growth, f64::NEG_INFINITY, self.config.subtol, self.config.window)
        };
        let mut record = IterationRecord {
            iteration,
            depth: self.circuit.depth(),
            cost: fw.cost,
            rel_energy_error: rel,
            total_infidelity: infid,
            discarded_weight: fw.discarded,
            wall_ms: 0.0,
        };
        let out_of_budget = iteration + 1 >= self.config.max_iterations;
        let status = match verdict {
            _ if out_of_budget && verdict != Convergence::Converged => Some(Status::Stalled),
            Convergence::Converged => Some(Status::Converged),
            Convergence::Stalled if self.circuit.depth() >= self.config.maxdepth => Some(Status::MaxdepthExhausted),
            Convergence::Stalled => {
                self.circuit.grow(self.config.init_epsilon, &mut self.rng)?;
                self.adam = AdamState::new(self.config.adam, self.circuit.params())?;
                self.since_growth.clear();
                self.report.growth_events.push(GrowthEvent { iteration: iteration + 1, depth: self.circuit.depth() });
                log::info!("iteration {iteration}: cost {:.6e}, growing to depth {}", fw.cost, self.circuit.depth());
                None
            }
            Convergence::Continue => {
                let grads = fw.tape.backward(fw.cost_var)?;
                let euclid: Vec<BlockTensor> =
                    fw.params.iter().zip(self.circuit.params()).map(|(&v, p)| grads.get_or_zero(v, p)).collect();
                let riemann = riemann_gradients(self.circuit.params(), &euclid, self.circuit.symmetric_flags())?;
                let mut params = self.circuit.params().to_vec();
                self.adam.step(&riemann, &mut params, self.circuit.symmetric_flags())?;
                self.circuit.set_params(params)?;
                None
            }
        };
        record.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        self.report.records.push(record);
        self.report.status = status;
        Ok(status)
    }

    /// Iterates until the run ends; `after_step` sees the run after every
    /// iteration (checkpointing, progress output).
    pub fn run_with(&mut self, mut after_step: impl FnMut(&Run) -> Result<()>) -> Result<Status> {
        loop {
            let s = self.step()?;
            after_step(self)?;
            if let Some(s) = s {
                return Ok(s);
            }
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            circuit: CircuitRecord::from_circuit(&self.circuit),
            adam: self.adam.clone(),
            rng: self.rng.clone(),
            report: self.report.clone(),
            since_growth: self.since_growth.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("expected format tag {CHECKPOINT_FORMAT:?}, found {:?}", ck.format)));
        }
        let problem = Problem::build(&ck.config)?;
        let circuit = ck.circuit.to_circuit()?;
        if circuit.len() != ck.config.l || circuit.phys() != problem.initial.phys() {
            return Err(Error::Format("checkpoint circuit does not match its configuration".into()));
        }
        Ok(Run {
            config: ck.config,
            problem,
            circuit,
            adam: ck.adam,
            rng: ck.rng,
            report: ck.report,
            since_growth: ck.since_growth,
        })
    }
}

/// Runs the layer-growing loop to completion.
pub fn optimize(config: RunConfig) -> Result<(RunReport, Circuit)> {
    let mut run = Run::new(config)?;
    run.run_with(|_| Ok(()))?;
    Ok((run.report, run.circuit))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub config: RunConfig,
    pub circuit: CircuitRecord,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub report: RunReport,
    pub since_growth: Vec<f64>,
}

pub fn checkpoint_save(path: &Path, run: &Run) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string(&run.checkpoint())?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn checkpoint_load(path: &Path) -> Result<Run> {
    let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Run::from_checkpoint(ck)
}
