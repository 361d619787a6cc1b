use super::importance::{ChannelWeights, GroupAssignment};
use crate::error::{shape_err, Error, Result};
use crate::feature::{FeatureMap, PatchGrid};

/// One `P × P` tile of one channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PayloadBlock {
    pub patch: usize,
    pub channel: usize,
    pub values: Vec<f32>,
}

/// Priority-ordered sparse payload of one sender.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMessage {
    pub blocks: Vec<PayloadBlock>,
}

impl FeatureMessage {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Transmission order of channels at patch `k`: primary, then secondary,
/// then marginal; within a group by descending weight, ties by channel index.
pub fn priority_order(groups: &GroupAssignment, weights: &ChannelWeights, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..groups.channels()).collect();
    order.sort_by(|&a, &b| {
        groups
            .label(k, a)
            .rank()
            .cmp(&groups.label(k, b).rank())
            .then(weights.get(k, b).total_cmp(&weights.get(k, a)))
            .then(a.cmp(&b))
    });
    order
}

/// Cuts the selected `(patch, channel)` tiles out of `x`, in the given order.
pub fn message_from_selection(
    x: &FeatureMap,
    grid: &PatchGrid,
    selection: impl IntoIterator<Item = (usize, usize)>,
) -> Result<FeatureMessage> {
    let mut blocks = Vec::new();
    for (k, c) in selection {
        if k >= grid.count() || c >= x.channels() {
            return Err(shape_err(format!("block ({k}, {c}) outside the feature map")));
        }
        let ch = x.channel(c);
        let values = grid.pixels(k).map(|(h, w)| ch[h * x.width() + w] as f32).collect();
        blocks.push(PayloadBlock { patch: k, channel: c, values });
    }
    Ok(FeatureMessage { blocks })
}

/// Answers an allocation row: for every patch `k`, the first `grants[k]`
/// channels of [`priority_order`].
pub fn build_message(
    x: &FeatureMap,
    grants: &[u32],
    groups: &GroupAssignment,
    weights: &ChannelWeights,
    grid: &PatchGrid,
) -> Result<FeatureMessage> {
    if grants.len() != grid.count() {
        return Err(shape_err(format!(
            "allocation row has {} patches, grid has {}",
            grants.len(),
            grid.count()
        )));
    }
    let channels = x.channels();
    if let Some((k, &b)) = grants.iter().enumerate().find(|(_, &b)| b as usize > channels) {
        return Err(Error::Allocation(format!(
            "patch {k} granted {b} blocks but only {channels} channels exist"
        )));
    }
    let mut selection = Vec::with_capacity(grants.iter().map(|&b| b as usize).sum());
    for (k, &b) in grants.iter().enumerate() {
        if b == 0 {
            continue;
        }
        selection.extend(priority_order(groups, weights, k).into_iter().take(b as usize).map(|c| (k, c)));
    }
    message_from_selection(x, grid, selection)
}

/// Counts blocks that break the priority rule: a block whose group is
/// sent while a strictly higher-priority channel at the same patch is not,
/// or that appears after a lower-priority block of the same patch.
pub fn ordering_violations(message: &FeatureMessage, groups: &GroupAssignment) -> usize {
    let mut violations = 0;
    let mut sent = vec![false; groups.patches() * groups.channels()];
    let mut last_rank: Vec<Option<usize>> = vec![None; groups.patches()];
    for b in &message.blocks {
        if b.patch >= groups.patches() || b.channel >= groups.channels() {
            violations += 1;
            continue;
        }
        let rank = groups.label(b.patch, b.channel).rank();
        if last_rank[b.patch].is_some_and(|r| r > rank) {
            violations += 1;
        }
        last_rank[b.patch] = Some(rank);
        sent[b.patch * groups.channels() + b.channel] = true;
    }
    for b in &message.blocks {
        if b.patch >= groups.patches() || b.channel >= groups.channels() {
            continue;
        }
        let rank = groups.label(b.patch, b.channel).rank();
        let skipped_higher = (0..groups.channels()).any(|c| {
            !sent[b.patch * groups.channels() + c] && groups.label(b.patch, c).rank() < rank
        });
        if skipped_higher {
            violations += 1;
        }
    }
    violations
}
