//! Synthetic scenes with known channel roles, reference fusion and the
//! quality measurements built on them.

mod experiment;
mod metrics;
mod scene;

pub use experiment::{
    full_exchange, prepare, pruning_experiment, run_scenario, AuditStatus, Budget, FrameOutcome,
    PreparedFrame, PreparedRun, ProtocolConfig, RunOutcome, RunRecord, Scenario,
};
pub use metrics::{
    fidelity, prune_channels, pruned_count, pruning_curve, reference_fuse, FidelityReport,
    PruningCurve,
};
pub use scene::{generate_scene, SceneConfig, SyntheticScene, OBJECT_THRESHOLD};

use crate::coordinator::{random_allocation, AllocationPlan};
use crate::feature::PatchGrid;
use crate::BudgetConfig;

/// Random-allocation baseline plan for collaborators `agent_ids` over
/// `grid` with `channels` channels per agent.
pub fn baseline_random_allocation(
    config: &BudgetConfig,
    agent_ids: &[u16],
    grid: &PatchGrid,
    channels: usize,
    round_id: u32,
) -> AllocationPlan {
    random_allocation(round_id, agent_ids, grid.count(), channels, config.budget_blocks, config.seed)
}
