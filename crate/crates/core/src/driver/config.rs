//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::AdamConfig;
use crate::models::{Model, ModelSpec, Symmetry};
use crate::tensor::{Charge, TruncationPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostName {
    #[default]
    Energy,
    TotalFidelity,
    SubspaceFidelity,
}

/// Objective and, for fidelity costs, the target state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub kind: CostName,
    /// Eigenstate index inside the target sector (0 = ground state).
    #[serde(default)]
    pub level: usize,
    /// Instead of an eigenstate: equal-weight superposition of these basis
    /// configurations (one local index per site).
    #[serde(default)]
    pub superposition: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Iterations between checkpoints (0 = only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
}

mod defaults {
    pub fn tol() -> f64 {
        1e-4
    }
    pub fn subtol() -> f64 {
        1e-7
    }
    pub fn window() -> usize {
        10
    }
    pub fn maxdepth() -> usize {
        16
    }
    pub fn init_epsilon() -> f64 {
        0.05
    }
    pub fn max_iterations_per_depth() -> usize {
        2000
    }
    pub fn max_iterations() -> usize {
        100_000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default)]
    pub symmetry: Symmetry,
    /// Target charge sector; defaults to the ground-state sector of the model.
    #[serde(default)]
    pub sector: Option<Charge>,
    #[serde(default)]
    pub cost: CostConfig,
    /// Local basis index per site of the initial product state.
    #[serde(default)]
    pub initial_state: Option<Vec<usize>>,
    #[serde(default)]
    pub truncation: TruncationPolicy,
    /// On `ΔE/|E_T|` for the energy cost, on `1 − F_T` for fidelity costs.
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    /// Mean absolute cost change over `window` iterations that counts as a stall.
    #[serde(default = "defaults::subtol")]
    pub subtol: f64,
    #[serde(default = "defaults::window")]
    pub window: usize,
    #[serde(default = "defaults::maxdepth")]
    pub maxdepth: usize,
    #[serde(default)]
    pub inversion_symmetry: bool,
    /// Generator scale of freshly added gates `exp(ε K)`.
    #[serde(default = "defaults::init_epsilon")]
    pub init_epsilon: f64,
    /// A depth that has not stalled after this many iterations is grown anyway.
    #[serde(default = "defaults::max_iterations_per_depth")]
    pub max_iterations_per_depth: usize,
    #[serde(default = "defaults::max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the exact-diagonalization reference energy.
    #[serde(default)]
    pub target_energy: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Defaults for everything but the model.
    pub fn new(model: Model, l: usize, symmetry: Symmetry) -> Self {
        RunConfig {
            model,
            l,
            symmetry,
            sector: None,
            cost: CostConfig::default(),
            initial_state: None,
            truncation: TruncationPolicy::default(),
            tol: defaults::tol(),
            subtol: defaults::subtol(),
            window: defaults::window(),
            maxdepth: defaults::maxdepth(),
            inversion_symmetry: false,
            init_epsilon: defaults::init_epsilon(),
            max_iterations_per_depth: defaults::max_iterations_per_depth(),
            max_iterations: defaults::max_iterations(),
            adam: AdamConfig::default(),
            seed: 0,
            target_energy: None,
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.model, self.l, self.symmetry)
    }

    /// Target sector, or `None` without a conserved charge.
    pub fn resolved_sector(&self) -> Result<Option<Charge>> {
        let spec = self.spec()?;
        Ok(match spec.symmetry {
            Symmetry::None => None,
            _ => Some(self.sector.unwrap_or_else(|| spec.default_sector())),
        })
    }

    /// Initial basis configuration: all `|0⟩`, or Néel `|0101…⟩` for the
    /// Schwinger chain.
    pub fn initial_configuration(&self) -> Vec<usize> {
        match (&self.initial_state, self.model) {
            (Some(c), _) => c.clone(),
            (None, Model::Schwinger { .. }) => (0..self.l).map(|k| k % 2).collect(),
            (None, _) => vec![0; self.l],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.l < 2 {
            return bad("circuits need L >= 2");
        }
        if !(self.tol > 0.0) || !(self.subtol > 0.0) {
            return bad("tol and subtol must be positive");
        }
        if self.maxdepth < 1 || self.window < 1 || self.max_iterations_per_depth < 1 {
            return bad("maxdepth, window and max_iterations_per_depth must be at least 1");
        }
        if !(self.init_epsilon >= 0.0 && self.init_epsilon.is_finite()) {
            return bad("init_epsilon must be finite and non-negative");
        }
        if self.inversion_symmetry && self.l % 2 == 1 {
            return bad("inversion symmetry needs an even number of sites");
        }
        self.adam.validate()?;
        self.truncation.validate()?;
        let d = spec.local_dim();
        let check_conf = |c: &[usize], what: &str| {
            if c.len() != self.l || c.iter().any(|&s| s >= d) {
                return Err(Error::Config(format!("{what} needs {} local indices below {d}", self.l)));
            }
            Ok(())
        };
        check_conf(&self.initial_configuration(), "initial_state")?;
        match (&self.cost.superposition, self.cost.kind) {
            (Some(_), CostName::Energy) => return bad("superposition targets need a fidelity cost"),
            (Some(s), _) if s.is_empty() => return bad("empty superposition"),
            (Some(s), _) => s.iter().try_for_each(|c| check_conf(c, "superposition entry"))?,
            _ => {}
        }
        if let Some(q) = self.resolved_sector()? {
            let found = self.initial_configuration().iter().fold(spec.group().identity(), |acc, &s| {
                spec.group().fuse(acc, spec.local_charge(s))
            });
            if found != q {
                return Err(Error::SectorMismatch { found, requested: q });
            }
        } else if self.sector.is_some_and(|q| q != 0) {
            return bad("a sector needs a conserved symmetry");
        }
        Ok(())
    }

    /// Replaces one (dotted) key, e.g. `model.g = 1.1` or `L = 12`.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| Error::Config(format!("{key} is not a table path")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parsed.clone());
                break;
            }
            node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let c: RunConfig = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}
