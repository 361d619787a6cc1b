use super::recalibrate::Recalibrator;
use crate::feature::{conv2d, AgentTensor, Kernel2D};
use crate::init::{fan_in_bound, stream_rng, uniform, STREAM_EXPERT};

/// Multi-scale depthwise block: parallel 3×3, 5×5 and 7×7 kernels shared by
/// every channel routed to this expert, plus an identity skip, followed by
/// inter-agent recalibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Expert {
    pub kernels: [Kernel2D; 3],
    pub recalibrator: Recalibrator,
}

impl Expert {
    pub fn seeded(seed: u64, index: usize) -> Self {
        let mut rng = stream_rng(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), STREAM_EXPERT);
        let mut kernel = |size: usize, label: &str| {
            Kernel2D::new(size, uniform(&mut rng, fan_in_bound(size * size), size * size), label)
                .unwrap()
        };
        Self {
            kernels: [kernel(3, "expert.3x3"), kernel(5, "expert.5x5"), kernel(7, "expert.7x7")],
            recalibrator: Recalibrator::seeded(seed, index),
        }
    }

    /// Seeded kernels shrunk to a tenth, so the block starts close to its
    /// identity skip.
    pub fn prior(seed: u64, index: usize) -> Self {
        let mut expert = Self::seeded(seed, index);
        for k in expert.kernels.iter_mut() {
            let taps = k.taps().iter().map(|t| 0.1 * t).collect();
            *k = Kernel2D::new(k.size(), taps, k.label()).unwrap();
        }
        expert
    }

    /// Centre taps of `scale`, zeros elsewhere.
    pub fn centered(scale: f64, recalibrator: Recalibrator) -> Self {
        Self {
            kernels: [3, 5, 7].map(|k| Kernel2D::centered(k, scale).unwrap()),
            recalibrator,
        }
    }

    pub fn zeros(recalibrator: Recalibrator) -> Self {
        Self { kernels: [3, 5, 7].map(|k| Kernel2D::zeros(k).unwrap()), recalibrator }
    }
}

/// Multi-scale refinement of the selected channels of `x`.
///
/// Returns an `N × channels.len() × H × W` tensor whose channel `i` holds
/// `Σ_kernels conv(x[:, channels[i]]) + x[:, channels[i]]`.
pub fn expert_forward(x: &AgentTensor, channels: &[usize], expert: &Expert) -> AgentTensor {
    let (n, _, h, w) = x.shape();
    let mut out = AgentTensor::zeros(n, channels.len(), h, w);
    for (i, &c) in channels.iter().enumerate() {
        for a in 0..n {
            let input = x.plane(a, c);
            let mut acc = input.clone();
            for k in &expert.kernels {
                acc.add_scaled(&conv2d(&input, k), 1.0);
            }
            out.slice_mut(a, i).copy_from_slice(acc.as_slice());
        }
    }
    out
}
