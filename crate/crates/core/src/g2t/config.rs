use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// Compute rows for unseen clusters only.
    Update,
    /// Recompute rows for every cluster, training ones included.
    Recalc,
    /// Random unit rows for unseen clusters; learned rows untouched.
    Frozen,
    /// As `Frozen`, for a model trained without the definition task.
    NoDefFrozen,
}

impl InferenceMode {
    pub fn uses_definition_task(self) -> bool {
        matches!(self, InferenceMode::Update | InferenceMode::Recalc)
    }

    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::Update => "update",
            InferenceMode::Recalc => "recalc",
            InferenceMode::Frozen => "frozen",
            InferenceMode::NoDefFrozen => "nodef-frozen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Hidden dimension of every embedding and layer.
    pub h: usize,
    pub hops: usize,
    pub dropout: f64,
    pub beam_width: usize,
    pub max_nodes: usize,
    /// Count the self edge in the 1/deg(n) averaging.
    pub deg_includes_self: bool,
    /// Concatenate a character-level name embedding in the definition head.
    pub use_names: bool,
    /// Train the definition task (off for the no-definition baseline).
    pub definition_task: bool,
    /// Weight of the definition loss in the combined loss.
    pub def_loss_weight: f64,
    /// Initial definition-table capacity (grown on demand).
    pub def_capacity: usize,
    pub batch_defs: usize,
    pub batch_states: usize,
    /// Base tactics seen fewer times than this in training are masked.
    pub min_tactic_count: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            h: 16,
            hops: 8,
            dropout: 0.1,
            beam_width: 256,
            max_nodes: 1024,
            deg_includes_self: true,
            use_names: false,
            definition_task: true,
            def_loss_weight: 1000.0,
            def_capacity: 1024,
            batch_defs: 512,
            batch_states: 512,
            min_tactic_count: 6,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}
