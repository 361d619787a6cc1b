use crate::feature::{global_avg_pool, AgentTensor};
use crate::init::{fan_in_bound, stream_rng, uniform, STREAM_SE};
use crate::sender::sigmoid;

pub const SE_REDUCTION: usize = 4;

/// Squeeze-and-excitation: pooled channel descriptor → `C → C/4 → C` MLP →
/// sigmoid channel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SeBlock {
    pub channels: usize,
    pub hidden: usize,
    /// `hidden × channels`.
    pub reduce: Vec<f64>,
    pub reduce_bias: Vec<f64>,
    /// `channels × hidden`.
    pub expand: Vec<f64>,
    pub expand_bias: Vec<f64>,
}

impl SeBlock {
    pub fn hidden_width(channels: usize) -> usize {
        (channels / SE_REDUCTION).max(1)
    }

    pub fn seeded(seed: u64, channels: usize) -> Self {
        let hidden = Self::hidden_width(channels);
        let mut rng = stream_rng(seed, STREAM_SE);
        Self {
            channels,
            hidden,
            reduce: uniform(&mut rng, fan_in_bound(channels), hidden * channels),
            reduce_bias: vec![0.0; hidden],
            expand: uniform(&mut rng, fan_in_bound(hidden), channels * hidden),
            expand_bias: vec![0.0; channels],
        }
    }

    pub fn zeros(channels: usize) -> Self {
        let hidden = Self::hidden_width(channels);
        Self {
            channels,
            hidden,
            reduce: vec![0.0; hidden * channels],
            reduce_bias: vec![0.0; hidden],
            expand: vec![0.0; channels * hidden],
            expand_bias: vec![0.0; channels],
        }
    }

    /// Per-channel scale in `(0, 1)` for a pooled descriptor.
    pub fn scales(&self, pooled: &[f64]) -> Vec<f64> {
        let c = self.channels;
        let z: Vec<f64> = (0..self.hidden)
            .map(|i| {
                let row = &self.reduce[i * c..(i + 1) * c];
                (self.reduce_bias[i] + row.iter().zip(pooled).map(|(w, p)| w * p).sum::<f64>())
                    .max(0.0)
            })
            .collect();
        (0..c)
            .map(|j| {
                let row = &self.expand[j * self.hidden..(j + 1) * self.hidden];
                sigmoid(self.expand_bias[j] + row.iter().zip(&z).map(|(w, h)| w * h).sum::<f64>())
            })
            .collect()
    }
}

pub fn se_branch(x: &AgentTensor, se: &SeBlock) -> AgentTensor {
    let scales = se.scales(&global_avg_pool(x));
    let mut out = x.clone();
    for n in 0..x.agents() {
        for (c, s) in scales.iter().enumerate() {
            out.slice_mut(n, c).iter_mut().for_each(|v| *v *= s);
        }
    }
    out
}
