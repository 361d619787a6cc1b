use serde::{Deserialize, Serialize};

use super::scene::SyntheticScene;
use crate::error::{invalid, shape_err, Result};
use crate::feature::{l1_norm_per_channel, FeatureMap};
use crate::harness::Planner;
use crate::routing::RoutedTensor;
use crate::sender::ChannelGroup;

/// Mean over agents of the received positions of each `(h, w, c)`. The ego
/// row is always present, so every position has at least one contributor.
pub fn reference_fuse(routed: &RoutedTensor) -> Result<FeatureMap> {
    let (n, c, h, w) = routed.data.shape();
    let mut data = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                let mut sum = 0.0;
                let mut count = 0usize;
                for a in 0..n {
                    if a == 0 || routed.present_at(a, ch, r, col) {
                        sum += routed.data.get(a, ch, r, col);
                        count += 1;
                    }
                }
                data.push(sum / count as f64);
            }
        }
    }
    FeatureMap::from_channel_major(h, w, c, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// MSE on primary channels over object-mask pixels.
    pub salient_mse: f64,
    pub global_mse: f64,
    pub rate: f64,
    pub baseline: Planner,
}

/// Distortion of `fused` relative to the full-exchange fusion.
pub fn fidelity(scene: &SyntheticScene, fused: &FeatureMap, oracle: &FeatureMap) -> Result<FidelityReport> {
    if fused.shape() != oracle.shape() {
        return Err(shape_err("fused and oracle maps differ in shape"));
    }
    let (h, w, c) = fused.shape();
    if scene.object_mask.len() != h * w || scene.roles.len() != c {
        return Err(shape_err("scene ground truth does not match the fused map"));
    }
    let mut global = 0.0;
    for (a, b) in fused.as_slice().iter().zip(oracle.as_slice()) {
        global += (a - b) * (a - b);
    }
    let mut salient = 0.0;
    let mut count = 0usize;
    for ch in scene.channels_with(ChannelGroup::Primary) {
        for (i, (a, b)) in fused.channel(ch).iter().zip(oracle.channel(ch)).enumerate() {
            if scene.object_mask[i] {
                salient += (a - b) * (a - b);
                count += 1;
            }
        }
    }
    Ok(FidelityReport {
        salient_mse: if count == 0 { 0.0 } else { salient / count as f64 },
        global_mse: global / (h * w * c) as f64,
        rate: 0.0,
        baseline: Planner::Coordinated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruningCurve {
    /// Channels by descending fused L1 norm, ties to the lower index.
    pub ranking: Vec<usize>,
    pub fractions: Vec<f64>,
    pub pruned_channels: Vec<usize>,
    pub retained_l1_mass: Vec<f64>,
    pub fused_output_mse: Vec<f64>,
    /// Mean squared value of the unpruned fused map.
    pub signal_energy: f64,
}

/// Number of channels removed at `fraction`.
pub fn pruned_count(fraction: f64, channels: usize) -> usize {
    ((fraction * channels as f64).round() as usize).min(channels)
}

/// Zeroes the lowest-L1 channels of `fused` at each fraction and measures
/// what is lost.
pub fn pruning_curve(fused: &FeatureMap, fractions: &[f64]) -> Result<PruningCurve> {
    if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(invalid(format!("prune fraction {f} outside [0, 1]")));
    }
    let (h, w, c) = fused.shape();
    let l1 = l1_norm_per_channel(fused);
    let mut ranking: Vec<usize> = (0..c).collect();
    ranking.sort_by(|&a, &b| l1[b].total_cmp(&l1[a]).then(a.cmp(&b)));
    let energy: Vec<f64> = (0..c).map(|ch| fused.channel(ch).iter().map(|v| v * v).sum()).collect();

    // Prefix sums in ranking order keep the retained mass exactly monotone.
    let mut kept_l1 = vec![0.0; c + 1];
    for (i, &ch) in ranking.iter().enumerate() {
        kept_l1[i + 1] = kept_l1[i] + l1[ch];
    }
    let mut lost_energy = vec![0.0; c + 1];
    for (i, &ch) in ranking.iter().rev().enumerate() {
        lost_energy[i + 1] = lost_energy[i] + energy[ch];
    }
    let total_l1 = kept_l1[c];
    let size = (h * w * c) as f64;

    let pruned_channels: Vec<usize> = fractions.iter().map(|&f| pruned_count(f, c)).collect();
    Ok(PruningCurve {
        retained_l1_mass: pruned_channels
            .iter()
            .map(|&p| if total_l1 > 0.0 { kept_l1[c - p] / total_l1 } else { 1.0 })
            .collect(),
        fused_output_mse: pruned_channels.iter().map(|&p| lost_energy[p] / size).collect(),
        signal_energy: lost_energy[c] / size,
        ranking,
        fractions: fractions.to_vec(),
        pruned_channels,
    })
}

/// Applies the ranking of a curve: zeroes the `pruned` lowest channels.
pub fn prune_channels(fused: &FeatureMap, ranking: &[usize], pruned: usize) -> FeatureMap {
    let mut out = fused.clone();
    for &ch in ranking.iter().rev().take(pruned) {
        out.channel_mut(ch).fill(0.0);
    }
    out
}
