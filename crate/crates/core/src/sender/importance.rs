use super::heads::{ClassifierHead, SpatialHead};
use crate::error::{shape_err, Result};
use crate::feature::{conv2d, softmax, FeatureMap, Kernel2D, PatchGrid, Plane};

/// Normalization floor for the channel saliency ratio.
pub const SALIENCY_EPSILON: f64 = 1e-6;

/// Channel group at a patch, in transmission priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelGroup {
    Primary = 0,
    Secondary = 1,
    Marginal = 2,
}

impl ChannelGroup {
    pub const ALL: [ChannelGroup; 3] =
        [ChannelGroup::Primary, ChannelGroup::Secondary, ChannelGroup::Marginal];

    /// 0 is sent first.
    pub fn rank(self) -> usize {
        self as usize
    }

    pub fn from_rank(rank: usize) -> Option<Self> {
        Self::ALL.get(rank).copied()
    }
}

/// Learnable-role group weights `ω = [primary, secondary, marginal]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupWeights(pub [f64; 3]);

impl Default for GroupWeights {
    fn default() -> Self {
        Self([1.0, 0.5, 0.1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialImportanceMap {
    pub agent_id: u16,
    pub values: Plane,
}

/// Per-patch group-weighted saliency, one scalar per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSaliencyMap {
    pub agent_id: u16,
    pub patch_size: usize,
    /// `rows × cols` patch grid.
    pub values: Plane,
}

/// Laplacian magnitude score per `(patch, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScoreTable {
    patches: usize,
    channels: usize,
    values: Vec<f64>,
}

impl PatchScoreTable {
    pub fn from_vec(patches: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != patches * channels {
            return Err(shape_err("score table size mismatch"));
        }
        Ok(Self { patches, channels, values })
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, k: usize, c: usize) -> f64 {
        self.values[k * self.channels + c]
    }

    /// The score vector `s_k` over channels.
    pub fn patch(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }
}

/// Mean and max activation per `(patch, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchStats {
    channels: usize,
    mean: Vec<f64>,
    max: Vec<f64>,
}

impl PatchStats {
    pub fn compute(x: &FeatureMap, grid: &PatchGrid) -> Result<Self> {
        check_grid(x, grid)?;
        let c_count = x.channels();
        let q = grid.count();
        let mut mean = vec![0.0; q * c_count];
        let mut max = vec![f64::NEG_INFINITY; q * c_count];
        for c in 0..c_count {
            let ch = x.channel(c);
            for k in 0..q {
                let i = k * c_count + c;
                for (h, w) in grid.pixels(k) {
                    let v = ch[h * x.width() + w];
                    mean[i] += v;
                    max[i] = max[i].max(v);
                }
                mean[i] /= grid.area() as f64;
            }
        }
        Ok(Self { channels: c_count, mean, max })
    }

    pub fn mean(&self, k: usize, c: usize) -> f64 {
        self.mean[k * self.channels + c]
    }

    pub fn max(&self, k: usize, c: usize) -> f64 {
        self.max[k * self.channels + c]
    }
}

/// Group probabilities and hard labels per `(patch, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    patches: usize,
    channels: usize,
    probs: Vec<[f64; 3]>,
    labels: Vec<ChannelGroup>,
    pub group_weights: GroupWeights,
}

impl GroupAssignment {
    /// Builds an assignment from explicit labels, with one-hot probabilities.
    pub fn from_labels(
        patches: usize,
        channels: usize,
        labels: Vec<ChannelGroup>,
        group_weights: GroupWeights,
    ) -> Result<Self> {
        if labels.len() != patches * channels {
            return Err(shape_err("label table size mismatch"));
        }
        let probs = labels
            .iter()
            .map(|g| {
                let mut p = [0.0; 3];
                p[g.rank()] = 1.0;
                p
            })
            .collect();
        Ok(Self { patches, channels, probs, labels, group_weights })
    }

    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn probs(&self, k: usize, c: usize) -> [f64; 3] {
        self.probs[k * self.channels + c]
    }

    pub fn label(&self, k: usize, c: usize) -> ChannelGroup {
        self.labels[k * self.channels + c]
    }

    /// `ω · π` for `(k, c)`.
    pub fn weighted(&self, k: usize, c: usize) -> f64 {
        let p = self.probs(k, c);
        self.group_weights.0.iter().zip(&p).map(|(w, p)| w * p).sum()
    }
}

/// Retained per-patch channel weights `w_k = softmax(s_k)`. Never serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelWeights {
    patches: usize,
    channels: usize,
    weights: Vec<f64>,
}

impl ChannelWeights {
    pub fn patches(&self) -> usize {
        self.patches
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, k: usize, c: usize) -> f64 {
        self.weights[k * self.channels + c]
    }

    pub fn patch(&self, k: usize) -> &[f64] {
        &self.weights[k * self.channels..(k + 1) * self.channels]
    }
}

fn check_grid(x: &FeatureMap, grid: &PatchGrid) -> Result<()> {
    if (x.height(), x.width()) != (grid.height(), grid.width()) {
        return Err(shape_err(format!(
            "patch grid {}x{} does not cover a {}x{} feature map",
            grid.height(),
            grid.width(),
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

pub fn predict_spatial(
    agent_id: u16,
    x: &FeatureMap,
    head: &SpatialHead,
) -> Result<SpatialImportanceMap> {
    Ok(SpatialImportanceMap { agent_id, values: head.forward(x)? })
}

/// `S(k, c) = Σ_{(u,v) ∈ patch k} |(L * X_c)(u, v)|` with the Laplacian
/// applied once over the whole channel slice.
pub fn score_patches(x: &FeatureMap, grid: &PatchGrid) -> Result<PatchScoreTable> {
    check_grid(x, grid)?;
    let lap = Kernel2D::laplacian();
    let c_count = x.channels();
    let q = grid.count();
    let mut values = vec![0.0; q * c_count];
    for c in 0..c_count {
        let response = conv2d(&x.channel_plane(c), &lap);
        for k in 0..q {
            values[k * c_count + c] =
                grid.pixels(k).map(|(h, w)| response.get(h, w).abs()).sum::<f64>();
        }
    }
    Ok(PatchScoreTable { patches: q, channels: c_count, values })
}

/// Softmax over the classifier logits; the hard label is the argmax with
/// ties going to the lower-priority group.
pub fn classify_groups(
    scores: &PatchScoreTable,
    stats: &PatchStats,
    head: &ClassifierHead,
    group_weights: GroupWeights,
) -> Result<GroupAssignment> {
    if stats.channels != scores.channels || stats.mean.len() != scores.values.len() {
        return Err(shape_err("patch statistics and scores are not aligned"));
    }
    let n = scores.values.len();
    let mut probs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..scores.patches {
        for c in 0..scores.channels {
            let logits = head.logits([scores.get(k, c), stats.mean(k, c), stats.max(k, c)]);
            let p = softmax(&logits, 1.0)?;
            let mut best = 2;
            for g in (0..2).rev() {
                if p[g] > p[best] {
                    best = g;
                }
            }
            probs.push([p[0], p[1], p[2]]);
            labels.push(ChannelGroup::from_rank(best).unwrap());
        }
    }
    Ok(GroupAssignment {
        patches: scores.patches,
        channels: scores.channels,
        probs,
        labels,
        group_weights,
    })
}

/// Normalized maximum of `(ω·π)·S` over channels at every patch:
/// `max_c / (Σ_c + ε)`, which lies in `[0, 1]`.
pub fn channel_saliency(
    agent_id: u16,
    scores: &PatchScoreTable,
    groups: &GroupAssignment,
    grid: &PatchGrid,
) -> Result<ChannelSaliencyMap> {
    if groups.patches != scores.patches
        || groups.channels != scores.channels
        || grid.count() != scores.patches
    {
        return Err(shape_err("saliency inputs are not aligned"));
    }
    let values: Vec<f64> = (0..scores.patches)
        .map(|k| {
            let mut max = 0.0f64;
            let mut sum = 0.0;
            for c in 0..scores.channels {
                let v = groups.weighted(k, c) * scores.get(k, c);
                max = max.max(v);
                sum += v;
            }
            max / (sum + SALIENCY_EPSILON)
        })
        .collect();
    Ok(ChannelSaliencyMap {
        agent_id,
        patch_size: grid.patch_size(),
        values: Plane::from_vec(grid.rows(), grid.cols(), values)?,
    })
}

pub fn sort_channels(scores: &PatchScoreTable) -> Result<ChannelWeights> {
    let mut weights = Vec::with_capacity(scores.values.len());
    for k in 0..scores.patches {
        weights.extend(softmax(scores.patch(k), 1.0)?);
    }
    Ok(ChannelWeights { patches: scores.patches, channels: scores.channels, weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(seed: u64, h: usize, w: usize, c: usize) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn constant_channel_scores_only_on_border_patches() {
        let x = FeatureMap::from_fn(8, 8, 1, |_, _, _| 3.0).unwrap();
        let grid = PatchGrid::new(8, 8, 2).unwrap();
        let s = score_patches(&x, &grid).unwrap();
        for k in 0..grid.count() {
            let (r, c) = (k / grid.cols(), k % grid.cols());
            let border = r == 0 || c == 0 || r == grid.rows() - 1 || c == grid.cols() - 1;
            if border {
                assert!(s.get(k, 0) > 0.0);
            } else {
                assert_eq!(s.get(k, 0), 0.0);
            }
        }
        // corner patch: corner pixel misses two neighbours, its two edge
        // neighbours miss one each: 3·(2 + 1 + 1) = 12
        assert_eq!(s.get(0, 0), 12.0);
    }

    #[test]
    fn impulse_single_patch_score_is_eight() {
        let x = FeatureMap::from_fn(5, 5, 1, |h, w, _| if h == 2 && w == 2 { 1.0 } else { 0.0 })
            .unwrap();
        let s = score_patches(&x, &PatchGrid::new(5, 5, 5).unwrap()).unwrap();
        assert_eq!(s.get(0, 0), 8.0);
    }

    #[test]
    fn scores_are_homogeneous() {
        let x = random_map(1, 8, 8, 3);
        let grid = PatchGrid::new(8, 8, 4).unwrap();
        let s = score_patches(&x, &grid).unwrap();
        let s2 = score_patches(&x.scaled(2.5), &grid).unwrap();
        for (a, b) in s.values.iter().zip(&s2.values) {
            assert!((2.5 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_classifier_is_uniform_and_labels_marginal() {
        let x = random_map(2, 4, 4, 3);
        let grid = PatchGrid::new(4, 4, 2).unwrap();
        let s = score_patches(&x, &grid).unwrap();
        let st = PatchStats::compute(&x, &grid).unwrap();
        let g = classify_groups(&s, &st, &ClassifierHead::zeros(), GroupWeights::default())
            .unwrap();
        for k in 0..grid.count() {
            for c in 0..3 {
                for p in g.probs(k, c) {
                    assert!((p - 1.0 / 3.0).abs() < 1e-15);
                }
                assert_eq!(g.label(k, c), ChannelGroup::Marginal);
            }
        }
    }

    #[test]
    fn identical_channels_get_identical_groups() {
        let base = random_map(3, 4, 4, 1);
        let x = FeatureMap::from_fn(4, 4, 2, |h, w, _| base.get(h, w, 0)).unwrap();
        let grid = PatchGrid::new(4, 4, 2).unwrap();
        let s = score_patches(&x, &grid).unwrap();
        let st = PatchStats::compute(&x, &grid).unwrap();
        let g = classify_groups(&s, &st, &ClassifierHead::seeded(5), GroupWeights::default())
            .unwrap();
        for k in 0..grid.count() {
            assert_eq!(g.probs(k, 0), g.probs(k, 1));
            let sum: f64 = g.probs(k, 0).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn saliency_examples() {
        let grid = PatchGrid::new(2, 2, 1).unwrap();
        let groups =
            GroupAssignment::from_labels(4, 3, vec![ChannelGroup::Primary; 12], GroupWeights::default())
                .unwrap();
        let zero = PatchScoreTable::from_vec(4, 3, vec![0.0; 12]).unwrap();
        let m = channel_saliency(0, &zero, &groups, &grid).unwrap();
        assert!(m.values.as_slice().iter().all(|&v| v == 0.0));

        // one dominant channel per patch
        let mut v = vec![0.0; 12];
        for k in 0..4 {
            v[k * 3 + 1] = 2.0;
        }
        let s = PatchScoreTable::from_vec(4, 3, v).unwrap();
        let m = channel_saliency(0, &s, &groups, &grid).unwrap();
        for &x in m.values.as_slice() {
            assert!((x - 2.0 / (2.0 + SALIENCY_EPSILON)).abs() < 1e-15);
        }
    }

    #[test]
    fn saliency_is_channel_permutation_invariant() {
        let x = random_map(4, 8, 8, 5);
        let perm = [3, 0, 4, 1, 2];
        let y = FeatureMap::from_fn(8, 8, 5, |h, w, c| x.get(h, w, perm[c])).unwrap();
        let grid = PatchGrid::new(8, 8, 2).unwrap();
        let head = ClassifierHead::seeded(8);
        let run = |m: &FeatureMap| {
            let s = score_patches(m, &grid).unwrap();
            let st = PatchStats::compute(m, &grid).unwrap();
            let g = classify_groups(&s, &st, &head, GroupWeights::default()).unwrap();
            channel_saliency(0, &s, &g, &grid).unwrap()
        };
        let a = run(&x);
        let b = run(&y);
        for (p, q) in a.values.as_slice().iter().zip(b.values.as_slice()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_weights_examples() {
        let s = PatchScoreTable::from_vec(1, 4, vec![0.7; 4]).unwrap();
        let w = sort_channels(&s).unwrap();
        assert!(w.patch(0).iter().all(|&v| (v - 0.25).abs() < 1e-15));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let vals: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..5.0)).collect();
        let s = PatchScoreTable::from_vec(3, 10, vals.clone()).unwrap();
        let w = sort_channels(&s).unwrap();
        for k in 0..3 {
            let row = &vals[k * 10..(k + 1) * 10];
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            for c in 0..10 {
                assert!((w.get(k, c) - row[c].exp() / z).abs() < 1e-12);
            }
            let mut by_w: Vec<usize> = (0..10).collect();
            by_w.sort_by(|&a, &b| w.get(k, a).total_cmp(&w.get(k, b)));
            let mut by_s: Vec<usize> = (0..10).collect();
            by_s.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            assert_eq!(by_w, by_s);
        }
    }
}
