//! Parameter checkpoints: learned compensation logits and window widths,
//! stored as versioned JSON with a provenance block.

use std::fs;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::apf::{apf_sigma, ApfParams};
use crate::error::{Error, Result};
use crate::lpc::LpcParams;

use super::atomic_write;

pub const CHECKPOINT_FORMAT: &str = "nlos-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct CheckpointProvenance {
    pub argv: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub nx: usize,
    pub ny: usize,
    /// Flattened (3, nx, ny) selection logits, channel-major.
    pub logits: Vec<f64>,
    pub bin_width_s: f64,
    /// Per-sample unconstrained window parameters.
    pub apf_s: Vec<f64>,
    /// Mapped widths, for human consumption.
    pub sigma_s: Vec<f64>,
    pub provenance: CheckpointProvenance,
}

impl Checkpoint {
    pub fn from_params(
        lpc: &LpcParams,
        apf: &[ApfParams],
        bin_width_s: f64,
        provenance: CheckpointProvenance,
    ) -> Self {
        let (nx, ny) = lpc.scan_shape();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            nx,
            ny,
            logits: lpc.logits.iter().cloned().collect(),
            bin_width_s,
            apf_s: apf.iter().map(|p| p.s).collect(),
            sigma_s: apf.iter().map(apf_sigma).collect(),
            provenance,
        }
    }

    pub fn lpc_params(&self) -> Result<LpcParams> {
        let expect = 3 * self.nx * self.ny;
        if self.logits.len() != expect {
            return Err(Error::InvalidParameter(format!(
                "checkpoint holds {} logits but declares {}x{} scan points",
                self.logits.len(),
                self.nx,
                self.ny
            )));
        }
        let logits =
            Array3::from_shape_vec((3, self.nx, self.ny), self.logits.clone()).map_err(|e| {
                Error::InvalidParameter(format!("checkpoint logits are malformed: {e}"))
            })?;
        Ok(LpcParams { logits })
    }

    pub fn apf_params(&self) -> Vec<ApfParams> {
        self.apf_s
            .iter()
            .map(|&s| ApfParams::new(s, self.bin_width_s))
            .collect()
    }

    /// Representative window width: the mean of the per-sample widths.
    pub fn mean_sigma(&self) -> Option<f64> {
        if self.sigma_s.is_empty() {
            None
        } else {
            Some(self.sigma_s.iter().sum::<f64>() / self.sigma_s.len() as f64)
        }
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string_pretty(ckpt)
        .map_err(|e| Error::InvalidParameter(format!("checkpoint serialization failed: {e}")))?;
    atomic_write(path, json.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidParameter(format!("not a parameter checkpoint: {e}")))?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::BadMagic);
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::VersionUnsupported {
            version: ckpt.version,
        });
    }
    Ok(ckpt)
}
