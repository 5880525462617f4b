//! The five continual-learning strategies, their losses and the training loop.
//!
//! | variant | initialization            | trainable                         | loss          |
//! |---------|---------------------------|-----------------------------------|---------------|
//! | `F`     | previous model            | everything                        | CE            |
//! | `E_F`   | previous model            | decoder                           | CE            |
//! | `D_F`   | previous model            | encoder + rows added by expansion | CE            |
//! | `P`     | previous model            | everything                        | CE + β·CE(pseudo) |
//! | `FD`    | fresh weights             | everything (teacher frozen)       | CE + λ‖f_t − f_s‖² |

mod losses;
mod optim;
mod pseudo;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use losses::{ce_logit_grad, loss_ce, loss_distill, loss_pseudo, total_distill_loss, total_pseudo_loss, LOG_FLOOR};
pub use optim::Adam;
pub use pseudo::{generate_pseudo_labels, model_checksum, PseudoLabels};
pub use train::{apply_variant_mask, train_task, CaptionBatch, StepLoss, TrainContext, TrainOutcome, Trainer};

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "F")]
    FineTune,
    #[serde(rename = "E_F")]
    FreezeEncoder,
    #[serde(rename = "D_F")]
    FreezeDecoder,
    #[serde(rename = "P")]
    PseudoLabel,
    #[serde(rename = "FD")]
    FeatureDistill,
}

impl Variant {
    /// Table row order.
    pub const ALL: [Variant; 5] = [
        Variant::FineTune,
        Variant::FreezeEncoder,
        Variant::FreezeDecoder,
        Variant::PseudoLabel,
        Variant::FeatureDistill,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::FineTune => "F",
            Variant::FreezeEncoder => "E_F",
            Variant::FreezeDecoder => "D_F",
            Variant::PseudoLabel => "P",
            Variant::FeatureDistill => "FD",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?} (expected F, E_F, D_F, P or FD)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    pub variant: Variant,
    /// Pseudo-label loss weight (P only).
    pub beta: f64,
    /// Feature distillation weight (FD only).
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Early stopping on validation CIDEr; `None` trains every epoch.
    pub patience: Option<usize>,
    /// Global gradient-norm clip over trainable elements.
    pub clip_norm: Option<f64>,
    /// Caption length cap for greedy decoding.
    pub max_len: usize,
    /// FD only: re-initialize the student decoder too (otherwise it starts
    /// from the expanded previous decoder).
    pub fd_reinit_decoder: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            variant: Variant::FineTune,
            beta: 1.0,
            lambda: 1.0,
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 8,
            seed: 0,
            patience: Some(20),
            clip_norm: Some(5.0),
            max_len: 20,
            fd_reinit_decoder: true,
        }
    }
}

impl StrategyConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) || !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("beta and lambda must be finite and non-negative".into()));
        }
        if self.batch_size == 0 || self.max_len == 0 {
            return Err(Error::Config("batch_size and max_len must be positive".into()));
        }
        if self.learning_rate.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}
