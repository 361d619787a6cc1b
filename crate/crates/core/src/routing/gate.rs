use crate::feature::{global_avg_pool, softmax, AgentTensor};
use crate::init::{fan_in_bound, stream_rng, uniform, STREAM_GATE};

pub const GATE_HIDDEN: usize = 16;

/// Channel-shared `1 → 16 → m` MLP scoring expert affinity from a channel's
/// pooled activation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMlp {
    pub first: Vec<f64>,
    pub first_bias: Vec<f64>,
    /// `experts × GATE_HIDDEN`.
    pub second: Vec<f64>,
    pub second_bias: Vec<f64>,
}

impl GateMlp {
    pub fn seeded(seed: u64, experts: usize) -> Self {
        let mut rng = stream_rng(seed, STREAM_GATE);
        Self {
            first: uniform(&mut rng, fan_in_bound(1), GATE_HIDDEN),
            first_bias: vec![0.0; GATE_HIDDEN],
            second: uniform(&mut rng, fan_in_bound(GATE_HIDDEN), experts * GATE_HIDDEN),
            second_bias: vec![0.0; experts],
        }
    }

    pub fn zeros(experts: usize) -> Self {
        Self {
            first: vec![0.0; GATE_HIDDEN],
            first_bias: vec![0.0; GATE_HIDDEN],
            second: vec![0.0; experts * GATE_HIDDEN],
            second_bias: vec![0.0; experts],
        }
    }

    pub fn experts(&self) -> usize {
        self.second_bias.len()
    }

    pub fn logits(&self, pooled: f64) -> Vec<f64> {
        let hidden: Vec<f64> = self
            .first
            .iter()
            .zip(&self.first_bias)
            .map(|(w, b)| (w * pooled + b).max(0.0))
            .collect();
        (0..self.experts())
            .map(|e| {
                let row = &self.second[e * GATE_HIDDEN..(e + 1) * GATE_HIDDEN];
                self.second_bias[e] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect()
    }
}

/// Soft expert affinities and the hard dispatch derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingGates {
    /// One probability vector of length `m` per channel.
    pub gates: Vec<Vec<f64>>,
    /// Argmax expert per channel, ties to the lowest index.
    pub assignment: Vec<usize>,
}

impl RoutingGates {
    pub fn experts(&self) -> usize {
        self.gates.first().map_or(0, Vec::len)
    }

    /// Channels dispatched to expert `e`, ascending.
    pub fn channels_of(&self, e: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &a)| a == e).map(|(c, _)| c).collect()
    }
}

pub fn gate(x: &AgentTensor, mlp: &GateMlp) -> RoutingGates {
    let pooled = global_avg_pool(x);
    let mut gates = Vec::with_capacity(pooled.len());
    let mut assignment = Vec::with_capacity(pooled.len());
    for p in pooled {
        let g = softmax(&mlp.logits(p), 1.0).expect("at least one expert");
        let best = (1..g.len()).fold(0, |best, e| if g[e] > g[best] { e } else { best });
        gates.push(g);
        assignment.push(best);
    }
    RoutingGates { gates, assignment }
}
