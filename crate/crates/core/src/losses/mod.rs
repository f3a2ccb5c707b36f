//! Training losses with analytic gradients.
//!
//! Every loss returns a [`LossValue`]. Gradients are only computed when asked for,
//! are keyed by the input they differentiate, and are exactly zero at masked pixels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

mod consistency;
mod eg_ssi;
mod lambda_mse;
mod patches;
mod uncertainty;

pub use consistency::{consistency_loss, consistency_loss_bidirectional, warp_depth};
pub use eg_ssi::{eg_ssi_loss, EgSsiConfig};
pub(crate) use eg_ssi::{check_inputs, finish_patch, PatchGather};
pub use lambda_mse::{error_stats, lambda_mse, ErrorStats, OutputMaps};
pub use patches::{gradient_magnitude, luma, select_patches, PatchSelection};
pub use uncertainty::uncertainty_l1;

/// Differentiable input a gradient refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wrt {
    Theta,
    Phi,
    ZLog,
    /// First-view depth of the consistency loss.
    Depth1,
    /// Second-view depth of the consistency loss (detached).
    Depth2,
    InvDepth,
    Sigma,
    /// Predicted log-depth as seen by the uncertainty loss (detached).
    ZLogTarget,
}

impl Wrt {
    pub fn name(self) -> &'static str {
        match self {
            Wrt::Theta => "theta",
            Wrt::Phi => "phi",
            Wrt::ZLog => "z_log",
            Wrt::Depth1 => "depth_view1",
            Wrt::Depth2 => "depth_view2",
            Wrt::InvDepth => "inv_depth",
            Wrt::Sigma => "sigma",
            Wrt::ZLogTarget => "z_log_target",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grads: BTreeMap<Wrt, Grid<f64>>,
}

impl LossValue {
    pub fn scalar(value: f64) -> Self {
        Self {
            value,
            grads: BTreeMap::new(),
        }
    }

    pub fn grad(&self, wrt: Wrt) -> Option<&Grid<f64>> {
        self.grads.get(&wrt)
    }
}

/// Per-dimension λ of the λMSE loss and the (α, β, γ) mixing weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// (λθ, λφ, λz)
    pub lambda: [f64; 3],
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: [1.0, 1.0, 0.15],
            alpha: 0.1,
            beta: 1.0,
            gamma: 0.1,
        }
    }
}

impl LossWeights {
    pub fn is_finite(&self) -> bool {
        self.lambda.iter().all(|v| v.is_finite())
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.gamma.is_finite()
    }
}

/// The four loss terms of one training step. Missing terms contribute nothing.
#[derive(Clone, Debug, Default)]
pub struct LossComponents {
    pub lambda_mse: Option<LossValue>,
    pub consistency: Option<LossValue>,
    pub eg_ssi: Option<LossValue>,
    pub uncertainty: Option<LossValue>,
}

/// `L = L_λMSE + α·L_con + β·L_EG-SSI + γ·L_L1`; gradients combine with the same weights.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> LossValue {
    let mut out = LossValue::default();
    for (term, weight) in [
        (&c.lambda_mse, 1.0),
        (&c.consistency, w.alpha),
        (&c.eg_ssi, w.beta),
        (&c.uncertainty, w.gamma),
    ] {
        let Some(term) = term else { continue };
        out.value += weight * term.value;
        for (k, g) in &term.grads {
            let scaled = g.map(|v| weight * v);
            match out.grads.get_mut(k) {
                Some(acc) => {
                    for (a, b) in acc.as_mut_slice().iter_mut().zip(scaled.as_slice()) {
                        *a += b;
                    }
                }
                None => {
                    out.grads.insert(*k, scaled);
                }
            }
        }
    }
    out
}
