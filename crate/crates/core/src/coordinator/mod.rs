//! Receiver-side budget coordination at the ego agent.

mod apportion;
mod baseline;
mod budget;
mod merit;

pub use apportion::largest_remainder;
pub use baseline::random_allocation;
pub use budget::{
    allocate, compute_shares, spatial_distribution, AllocationPlan, ResidualEntry, ResidualKind,
    ShareMatrix, SpatialBudget,
};
pub use merit::{MeritDistributor, RefinedSaliency};

use crate::config::BudgetConfig;
use crate::error::{invalid, Result};
use crate::feature::PatchGrid;
use crate::sender::ImportanceBundle;

/// Where per-patch collaborator shares come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareSource {
    /// Refined channel saliency ratios.
    Saliency,
    /// Equal split across collaborators, ignoring channel saliency.
    Uniform,
}

/// The ego agent's planner for one scenario.
#[derive(Debug, Clone)]
pub struct Coordinator {
    pub config: BudgetConfig,
    pub grid: PatchGrid,
    pub channels: usize,
    pub merit: MeritDistributor,
}

impl Coordinator {
    pub fn new(config: BudgetConfig, grid: PatchGrid, channels: usize) -> Result<Self> {
        config.validate()?;
        if grid.patch_size() != config.patch_size {
            return Err(invalid(format!(
                "grid patch size {} differs from configured {}",
                grid.patch_size(),
                config.patch_size
            )));
        }
        let merit = MeritDistributor::new(config.seed, config.head_init);
        Ok(Self { config, grid, channels, merit })
    }

    /// Refine → share → spatial budget → allocate.
    pub fn plan_round(&self, round_id: u32, bundles: &[ImportanceBundle]) -> Result<AllocationPlan> {
        self.plan_round_with(round_id, bundles, ShareSource::Saliency)
    }

    pub fn plan_round_with(
        &self,
        round_id: u32,
        bundles: &[ImportanceBundle],
        source: ShareSource,
    ) -> Result<AllocationPlan> {
        let mut bundles: Vec<&ImportanceBundle> = bundles.iter().collect();
        bundles.sort_by_key(|b| b.agent_id);
        if bundles.windows(2).any(|w| w[0].agent_id == w[1].agent_id) {
            return Err(invalid("duplicate collaborator id in metadata round"));
        }
        let ids: Vec<u16> = bundles.iter().map(|b| b.agent_id).collect();
        let q = self.grid.count();
        if bundles.is_empty() || self.config.budget_blocks == 0 {
            return Ok(AllocationPlan::empty(round_id, ids, q));
        }
        let shares = match source {
            ShareSource::Saliency => {
                let maps: Vec<_> = bundles.iter().map(|b| b.saliency.clone()).collect();
                let refined = self.merit.refine(&maps)?;
                if refined.patches() != q {
                    return Err(crate::error::Error::Shape(format!(
                        "saliency maps have {} patches, grid has {q}",
                        refined.patches()
                    )));
                }
                compute_shares(&refined, self.config.epsilon)
            }
            ShareSource::Uniform => ShareMatrix::uniform(bundles.len(), q),
        };
        let spatial: Vec<_> = bundles.iter().map(|b| b.spatial.clone()).collect();
        let budget = spatial_distribution(
            &spatial,
            &self.grid,
            self.config.tau_s,
            self.config.budget_blocks,
        )?;
        allocate(round_id, &ids, &shares, &budget, self.channels)
    }
}
