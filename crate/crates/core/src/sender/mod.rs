//! Sender-side importance estimation.
//!
//! A sender scores its own feature map, transmits a spatial importance map
//! and a per-patch channel saliency map, keeps its channel weights local,
//! and answers an allocation row with a priority-ordered sparse payload.

mod heads;
mod importance;
mod message;

pub use heads::{ClassifierHead, SpatialHead, SPATIAL_HIDDEN};
pub use importance::{
    channel_saliency, classify_groups, predict_spatial, score_patches, sort_channels,
    ChannelGroup, ChannelSaliencyMap, ChannelWeights, GroupAssignment, GroupWeights, PatchScoreTable,
    PatchStats, SpatialImportanceMap, SALIENCY_EPSILON,
};
pub use message::{
    build_message, message_from_selection, ordering_violations, priority_order, FeatureMessage,
    PayloadBlock,
};


pub(crate) use heads::sigmoid;

use crate::error::Result;
use crate::feature::{FeatureMap, PatchGrid};
use crate::init::HeadInit;

/// The transmitted half of a sender's analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceBundle {
    pub agent_id: u16,
    pub spatial: SpatialImportanceMap,
    pub saliency: ChannelSaliencyMap,
}

/// Weights shared by every sender in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SenderParams {
    pub spatial: SpatialHead,
    pub classifier: ClassifierHead,
    pub group_weights: GroupWeights,
}

impl SenderParams {
    pub fn new(seed: u64, channels: usize, init: HeadInit) -> Self {
        let (spatial, classifier) = match init {
            HeadInit::Seeded => (SpatialHead::seeded(seed, channels), ClassifierHead::seeded(seed)),
            HeadInit::Prior => (SpatialHead::prior(channels), ClassifierHead::prior()),
        };
        Self {
            spatial,
            classifier,
            group_weights: GroupWeights::default(),
        }
    }
}

/// Everything a sender computes from one feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct SenderAnalysis {
    pub agent_id: u16,
    pub grid: PatchGrid,
    pub spatial: SpatialImportanceMap,
    pub scores: PatchScoreTable,
    pub groups: GroupAssignment,
    pub saliency: ChannelSaliencyMap,
    pub weights: ChannelWeights,
}

impl SenderAnalysis {
    pub fn bundle(&self) -> ImportanceBundle {
        ImportanceBundle {
            agent_id: self.agent_id,
            spatial: self.spatial.clone(),
            saliency: self.saliency.clone(),
        }
    }

    /// Payload answering `grants` (one entry per patch).
    pub fn respond(&self, x: &FeatureMap, grants: &[u32]) -> Result<FeatureMessage> {
        build_message(x, grants, &self.groups, &self.weights, &self.grid)
    }
}

pub fn analyze(
    agent_id: u16,
    x: &FeatureMap,
    grid: &PatchGrid,
    params: &SenderParams,
) -> Result<SenderAnalysis> {
    let spatial = predict_spatial(agent_id, x, &params.spatial)?;
    let scores = score_patches(x, grid)?;
    let stats = PatchStats::compute(x, grid)?;
    let groups = classify_groups(&scores, &stats, &params.classifier, params.group_weights)?;
    let saliency = channel_saliency(agent_id, &scores, &groups, grid)?;
    let weights = sort_channels(&scores)?;
    Ok(SenderAnalysis { agent_id, grid: *grid, spatial, scores, groups, saliency, weights })
}
