//! JSON manifest for MPS and MPO files (format tag `mps1`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MpoOperator, MpsState};
use crate::error::{Error, Result};
use crate::tensor::io::TensorRecord;
use crate::tensor::{Charge, ChargeGroup, Direction, IndexSpace};

pub const MPS_FORMAT: &str = "mps1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpsRecord {
    pub format: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub d: usize,
    pub group: ChargeGroup,
    pub phys_sectors: Vec<(Charge, usize)>,
    pub sector: Charge,
    pub a: Vec<TensorRecord>,
    pub c: Vec<TensorRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpoRecord {
    pub format: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub d: usize,
    pub group: ChargeGroup,
    pub phys_sectors: Vec<(Charge, usize)>,
    pub hermitian: bool,
    pub w: Vec<TensorRecord>,
}

fn check_tag(found: &str) -> Result<()> {
    if found != MPS_FORMAT {
        return Err(Error::Format(format!("expected format tag {MPS_FORMAT:?}, found {found:?}")));
    }
    Ok(())
}

impl MpsRecord {
    pub fn from_state(s: &MpsState) -> Self {
        MpsRecord {
            format: MPS_FORMAT.into(),
            l: s.len(),
            d: s.phys().dim(),
            group: s.group(),
            phys_sectors: s.phys().sectors().to_vec(),
            sector: s.sector(),
            a: s.a_all().iter().map(TensorRecord::from_tensor).collect(),
            c: s.c_all().iter().map(TensorRecord::from_tensor).collect(),
        }
    }

    pub fn to_state(&self) -> Result<MpsState> {
        check_tag(&self.format)?;
        let phys = IndexSpace::new(self.group, self.phys_sectors.clone(), Direction::In)?;
        let a = self.a.iter().map(|r| r.to_tensor()).collect::<Result<Vec<_>, _>>()?;
        let c = self.c.iter().map(|r| r.to_tensor()).collect::<Result<Vec<_>, _>>()?;
        if a.len() != self.l || phys.dim() != self.d {
            return Err(Error::Format("manifest does not match tensors".into()));
        }
        MpsState::from_parts(a, c, phys, self.sector)
    }
}

impl MpoRecord {
    pub fn from_operator(o: &MpoOperator) -> Self {
        MpoRecord {
            format: MPS_FORMAT.into(),
            l: o.len(),
            d: o.phys().dim(),
            group: o.group(),
            phys_sectors: o.phys().sectors().to_vec(),
            hermitian: o.is_hermitian(),
            w: o.sites().iter().map(TensorRecord::from_tensor).collect(),
        }
    }

    pub fn to_operator(&self) -> Result<MpoOperator> {
        check_tag(&self.format)?;
        let phys = IndexSpace::new(self.group, self.phys_sectors.clone(), Direction::In)?;
        let w = self.w.iter().map(|r| r.to_tensor()).collect::<Result<Vec<_>, _>>()?;
        if w.len() != self.l || phys.dim() != self.d {
            return Err(Error::Format("manifest does not match tensors".into()));
        }
        MpoOperator::new(w, phys, self.hermitian)
    }
}

pub fn save_mps(path: &Path, s: &MpsState) -> Result<()> {
    std::fs::write(path, serde_json::to_string(&MpsRecord::from_state(s))?)?;
    Ok(())
}

pub fn load_mps(path: &Path) -> Result<MpsState> {
    let rec: MpsRecord = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    rec.to_state()
}
