//! Run configuration for the loss pipeline, read from TOML.
//!
//! ```toml
//! seed = 7
//! [weights]
//! lambda = [1.0, 1.0, 0.15]
//! alpha = 0.1
//! [patches]
//! count = 64
//! [eg_ssi]
//! min_valid = 16
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{EgSsiConfig, LossWeights, PatchSelection};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Patch-selection seed; a command-line seed takes precedence.
    pub seed: Option<u64>,
    pub weights: LossWeights,
    pub patches: PatchSelection,
    pub eg_ssi: EgSsiConfig,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.weights.is_finite() {
            return Err(Error::field("weights", "all weights must be finite"));
        }
        let p = &self.patches;
        if !(0.0 < p.min_frac && p.min_frac <= p.max_frac && p.max_frac <= 1.0) {
            return Err(Error::field("patches", "need 0 < min_frac <= max_frac <= 1"));
        }
        if !(0.0..=1.0).contains(&p.quantile) {
            return Err(Error::field("patches.quantile", "must lie in [0, 1]"));
        }
        if !(self.eg_ssi.mad_floor >= 0.0) {
            return Err(Error::field("eg_ssi.mad_floor", "must be non-negative"));
        }
        Ok(())
    }
}

pub fn parse_loss_config(text: &str) -> Result<LossConfig> {
    let cfg: LossConfig = toml::from_str(text).map_err(|e| {
        Error::parse(e.span().map_or(0, |s| s.start), e.message().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_loss_config(path: &Path) -> Result<LossConfig> {
    parse_loss_config(&fs::read_to_string(path).map_err(Error::io(path))?)
}
