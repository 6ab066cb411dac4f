//! JSON manifest for circuits (format tag `ckt1`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Circuit, Placement};
use crate::error::{Error, Result};
use crate::tensor::io::TensorRecord;
use crate::tensor::{Charge, ChargeGroup, Direction, IndexSpace};

pub const CIRCUIT_FORMAT: &str = "ckt1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitRecord {
    pub format: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub d: usize,
    #[serde(rename = "D")]
    pub depth: usize,
    pub group: ChargeGroup,
    pub phys_sectors: Vec<(Charge, usize)>,
    pub inversion: bool,
    pub placements: Vec<Placement>,
    pub symmetric: Vec<bool>,
    pub gates: Vec<TensorRecord>,
}

impl CircuitRecord {
    pub fn from_circuit(c: &Circuit) -> Self {
        CircuitRecord {
            format: CIRCUIT_FORMAT.into(),
            l: c.len(),
            d: c.phys().dim(),
            depth: c.depth(),
            group: c.phys().group(),
            phys_sectors: c.phys().sectors().to_vec(),
            inversion: c.inversion(),
            placements: c.placements().to_vec(),
            symmetric: c.symmetric_flags().to_vec(),
            gates: c.params().iter().map(TensorRecord::from_tensor).collect(),
        }
    }

    pub fn to_circuit(&self) -> Result<Circuit> {
        if self.format != CIRCUIT_FORMAT {
            return Err(Error::Format(format!("expected format tag {CIRCUIT_FORMAT:?}, found {:?}", self.format)));
        }
        let phys = IndexSpace::new(self.group, self.phys_sectors.clone(), Direction::In)?;
        if phys.dim() != self.d {
            return Err(Error::Format("physical dimension does not match sectors".into()));
        }
        let gates = self.gates.iter().map(|r| r.to_tensor()).collect::<Result<Vec<_>, _>>()?;
        Circuit::from_parts(self.l, phys, self.inversion, self.depth, self.placements.clone(), gates, self.symmetric.clone())
            .map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn save_circuit(path: &Path, c: &Circuit) -> Result<()> {
    std::fs::write(path, serde_json::to_string(&CircuitRecord::from_circuit(c))?)?;
    Ok(())
}

pub fn load_circuit(path: &Path) -> Result<Circuit> {
    let rec: CircuitRecord = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    rec.to_circuit()
}
