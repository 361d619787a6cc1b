//! Seeded parameter initialization.
//!
//! Every head draws its weights from its own ChaCha stream of the scenario
//! seed, so adding a head never perturbs the weights of another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub(crate) const STREAM_SPATIAL: u64 = 1;
pub(crate) const STREAM_CLASSIFIER: u64 = 2;
pub(crate) const STREAM_MERIT: u64 = 3;
pub(crate) const STREAM_GATE: u64 = 4;
pub(crate) const STREAM_EXPERT: u64 = 5;
pub(crate) const STREAM_RECAL: u64 = 6;
pub(crate) const STREAM_SE: u64 = 7;
pub(crate) const STREAM_BASELINE: u64 = 8;
pub(crate) const STREAM_SCENE: u64 = 16;
pub(crate) const STREAM_NOISE: u64 = 17;

/// How the untrained heads that shape the plan are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    /// Uniform `±sqrt(1/fan_in)` draws for every weight.
    Seeded,
    /// Structured initialization: an activation-energy spatial detector, an
    /// ordinal group classifier, an identity-centred merit distributor and
    /// expert kernels shrunk towards their identity skip.
    #[default]
    Prior,
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn fan_in_bound(fan_in: usize) -> f64 {
    (1.0 / fan_in.max(1) as f64).sqrt()
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, bound: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}
