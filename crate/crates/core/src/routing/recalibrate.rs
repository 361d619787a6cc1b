use crate::feature::AgentTensor;
use crate::init::{fan_in_bound, stream_rng, uniform, STREAM_RECAL};

/// Context dimension: the 3×3 neighbourhood of a pixel within one channel.
pub const CONTEXT_DIM: usize = 9;

/// Scaled dot-product attention along the agent axis.
///
/// At every `(channel, h, w)` each agent contributes a context vector (its
/// zero-padded 3×3 neighbourhood in that channel). Queries and keys are
/// shared linear maps of the context; the value is the agent's own
/// activation, so the value map is the identity. Agent `a`'s output is the
/// attention-weighted mix over all agents using agent `a`'s query; row 0 is
/// the ego-attended output.
#[derive(Debug, Clone, PartialEq)]
pub struct Recalibrator {
    /// `CONTEXT_DIM × CONTEXT_DIM`, row-major.
    pub query: Vec<f64>,
    pub key: Vec<f64>,
}

impl Recalibrator {
    pub fn seeded(seed: u64, index: usize) -> Self {
        let mut rng = stream_rng(seed.wrapping_add(index as u64), STREAM_RECAL);
        let bound = fan_in_bound(CONTEXT_DIM);
        Self {
            query: uniform(&mut rng, bound, CONTEXT_DIM * CONTEXT_DIM),
            key: uniform(&mut rng, bound, CONTEXT_DIM * CONTEXT_DIM),
        }
    }

    /// Zero projections: every agent gets the same attention weight.
    pub fn uniform() -> Self {
        Self {
            query: vec![0.0; CONTEXT_DIM * CONTEXT_DIM],
            key: vec![0.0; CONTEXT_DIM * CONTEXT_DIM],
        }
    }
}

fn context(x: &AgentTensor, n: usize, c: usize, h: usize, w: usize) -> [f64; CONTEXT_DIM] {
    let (_, _, rows, cols) = x.shape();
    let slice = x.slice(n, c);
    let mut ctx = [0.0; CONTEXT_DIM];
    for dr in 0..3 {
        for dc in 0..3 {
            let r = h as isize + dr as isize - 1;
            let col = w as isize + dc as isize - 1;
            if r >= 0 && r < rows as isize && col >= 0 && col < cols as isize {
                ctx[dr * 3 + dc] = slice[r as usize * cols + col as usize];
            }
        }
    }
    ctx
}

fn project(m: &[f64], v: &[f64; CONTEXT_DIM]) -> [f64; CONTEXT_DIM] {
    let mut out = [0.0; CONTEXT_DIM];
    for (i, o) in out.iter_mut().enumerate() {
        *o = m[i * CONTEXT_DIM..(i + 1) * CONTEXT_DIM].iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

fn dot(a: &[f64; CONTEXT_DIM], b: &[f64; CONTEXT_DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scores of every key against `queries[a]`, in agent order.
fn scores(queries: &[[f64; CONTEXT_DIM]], keys: &[[f64; CONTEXT_DIM]], a: usize) -> Vec<f64> {
    let scale = 1.0 / (CONTEXT_DIM as f64).sqrt();
    keys.iter().map(|k| dot(&queries[a], k) * scale).collect()
}

/// Softmax-weighted sum over agents, accumulated in a canonical order so the
/// result does not depend on how keys are numbered.
fn attend(scores: &[f64], values: &[f64]) -> f64 {
    let mut pairs: Vec<(f64, f64)> = scores.iter().copied().zip(values.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let max = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let mut norm = 0.0;
    let mut acc = 0.0;
    for (s, v) in &pairs {
        let e = (s - max).exp();
        norm += e;
        acc += e * v;
    }
    acc / norm
}

fn projections(
    x: &AgentTensor,
    recal: &Recalibrator,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<[f64; CONTEXT_DIM]>, Vec<[f64; CONTEXT_DIM]>) {
    (0..x.agents())
        .map(|n| {
            let ctx = context(x, n, c, h, w);
            (project(&recal.query, &ctx), project(&recal.key, &ctx))
        })
        .unzip()
}

/// Attention weights of query agent `a` over all agents at one position.
pub fn attention_weights(
    x: &AgentTensor,
    recal: &Recalibrator,
    c: usize,
    h: usize,
    w: usize,
    a: usize,
) -> Vec<f64> {
    let (q, k) = projections(x, recal, c, h, w);
    let s = scores(&q, &k, a);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn recalibrate_agents(x: &AgentTensor, recal: &Recalibrator) -> AgentTensor {
    let (n, c, h, w) = x.shape();
    if n == 1 {
        return x.clone();
    }
    let mut out = AgentTensor::zeros(n, c, h, w);
    let mut values = vec![0.0; n];
    for ch in 0..c {
        for r in 0..h {
            for col in 0..w {
                let (q, k) = projections(x, recal, ch, r, col);
                for (a, v) in values.iter_mut().enumerate() {
                    *v = x.get(a, ch, r, col);
                }
                for a in 0..n {
                    out.set(a, ch, r, col, attend(&scores(&q, &k, a), &values));
                }
            }
        }
    }
    out
}
