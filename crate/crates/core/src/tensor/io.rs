//! JSON container for block tensors (format tag `gt1`).
//!
//! Each block is stored as its key, shape and a flat row-major array of
//! interleaved real/imaginary `f64` values.

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use super::{BlockTensor, ChargeGroup, Charge, Direction, IndexSpace, TensorError, C64};

pub const TENSOR_FORMAT: &str = "gt1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceRecord {
    pub sectors: Vec<(Charge, usize)>,
    pub dir: Direction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRecord {
    pub key: Vec<Charge>,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub format: String,
    pub group: ChargeGroup,
    pub spaces: Vec<SpaceRecord>,
    pub blocks: Vec<BlockRecord>,
}

impl TensorRecord {
    pub fn from_tensor(t: &BlockTensor) -> Self {
        let group = t.group().unwrap_or(ChargeGroup::Trivial);
        let spaces = t
            .spaces()
            .iter()
            .map(|s| SpaceRecord { sectors: s.sectors().to_vec(), dir: s.dir() })
            .collect();
        let blocks = t
            .blocks()
            .iter()
            .map(|(k, b)| BlockRecord {
                key: k.clone(),
                shape: b.shape().to_vec(),
                data: b.iter().flat_map(|z| [z.re, z.im]).collect(),
            })
            .collect();
        TensorRecord { format: TENSOR_FORMAT.into(), group, spaces, blocks }
    }

    pub fn to_tensor(&self) -> Result<BlockTensor, TensorError> {
        if self.format != TENSOR_FORMAT {
            return Err(TensorError::Format(format!(
                "expected format tag {TENSOR_FORMAT:?}, found {:?}",
                self.format
            )));
        }
        let spaces = self
            .spaces
            .iter()
            .map(|s| IndexSpace::new(self.group, s.sectors.clone(), s.dir))
            .collect::<Result<Vec<_>, _>>()?;
        let mut t = BlockTensor::zeros(spaces)?;
        for b in &self.blocks {
            let n: usize = b.shape.iter().product();
            if b.data.len() != 2 * n {
                return Err(TensorError::Format(format!(
                    "block {:?}: {} values for shape {:?}",
                    b.key,
                    b.data.len(),
                    b.shape
                )));
            }
            let vals: Vec<C64> = b.data.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
            let arr = ArrayD::from_shape_vec(IxDyn(&b.shape), vals)
                .map_err(|e| TensorError::Format(e.to_string()))?;
            t.insert_block(b.key.clone(), arr)?;
        }
        Ok(t)
    }
}

pub fn to_json(t: &BlockTensor) -> String {
    serde_json::to_string(&TensorRecord::from_tensor(t)).expect("tensor record serializes")
}

pub fn from_json(s: &str) -> Result<BlockTensor, TensorError> {
    let rec: TensorRecord = serde_json::from_str(s).map_err(|e| TensorError::Format(e.to_string()))?;
    rec.to_tensor()
}
