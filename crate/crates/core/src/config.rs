use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::init::HeadInit;

/// Default share-ratio floor.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Per-round protocol parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Total payload budget `B` in channel blocks per round.
    pub budget_blocks: u64,
    /// Temperature of the spatial budget softmax.
    pub tau_s: f64,
    /// Floor added to the share denominator.
    pub epsilon: f64,
    pub patch_size: usize,
    pub experts: usize,
    pub seed: u64,
    /// Independent protocol cycles (one per scenario frame).
    pub rounds: usize,
    pub head_init: HeadInit,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            budget_blocks: 0,
            tau_s: 1.0,
            epsilon: DEFAULT_EPSILON,
            patch_size: 1,
            experts: 4,
            seed: 0,
            rounds: 1,
            head_init: HeadInit::default(),
        }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.patch_size, 1 | 2 | 4) {
            return Err(invalid(format!("patch size must be 1, 2 or 4, got {}", self.patch_size)));
        }
        if self.experts == 0 {
            return Err(invalid("expert count must be at least 1"));
        }
        if !(self.tau_s > 0.0) || !self.tau_s.is_finite() {
            return Err(invalid(format!("tau_s must be positive, got {}", self.tau_s)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.rounds == 0 {
            return Err(invalid("at least one round is required"));
        }
        Ok(())
    }
}
