use crate::error::{shape_err, Result};
use crate::feature::{conv2d, gaussian_smooth, Kernel2D, Plane, GAUSSIAN_SIGMA};
use crate::init::{fan_in_bound, stream_rng, uniform, HeadInit, STREAM_MERIT};
use crate::sender::ChannelSaliencyMap;

/// Saliency maps after inter-agent refinement, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSaliency {
    pub agent_ids: Vec<u16>,
    pub maps: Vec<Plane>,
}

impl RefinedSaliency {
    pub fn agents(&self) -> usize {
        self.maps.len()
    }

    pub fn patches(&self) -> usize {
        self.maps.first().map_or(0, |m| m.as_slice().len())
    }
}

/// 3×3 convolution over the stack of collaborator maps followed by a
/// Gaussian blur.
///
/// Each output map mixes its own input through `self_kernel` and the mean of
/// every other collaborator's input through `cross_kernel`, so the layer is
/// defined for any collaborator count and is equivariant under reordering.
#[derive(Debug, Clone, PartialEq)]
pub struct MeritDistributor {
    pub self_kernel: Kernel2D,
    pub cross_kernel: Kernel2D,
    pub bias: f64,
}

impl MeritDistributor {
    pub fn new(seed: u64, init: HeadInit) -> Self {
        match init {
            HeadInit::Seeded => Self::seeded(seed),
            HeadInit::Prior => Self::prior(seed),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        let mut rng = stream_rng(seed, STREAM_MERIT);
        let bound = fan_in_bound(18);
        Self {
            self_kernel: Kernel2D::new(3, uniform(&mut rng, bound, 9), "merit.self").unwrap(),
            cross_kernel: Kernel2D::new(3, uniform(&mut rng, bound, 9), "merit.cross").unwrap(),
            bias: 0.0,
        }
    }

    /// Identity self kernel, zero cross kernel.
    pub fn identity() -> Self {
        Self {
            self_kernel: Kernel2D::centered(3, 1.0).unwrap(),
            cross_kernel: Kernel2D::zeros(3).unwrap(),
            bias: 0.0,
        }
    }

    /// Identity plus a seeded perturbation at a tenth of the uniform bound.
    pub fn prior(seed: u64) -> Self {
        let seeded = Self::seeded(seed);
        let mut self_taps: Vec<f64> = seeded.self_kernel.taps().iter().map(|t| 0.1 * t).collect();
        self_taps[4] += 1.0;
        let cross_taps = seeded.cross_kernel.taps().iter().map(|t| 0.1 * t).collect();
        Self {
            self_kernel: Kernel2D::new(3, self_taps, "merit.self").unwrap(),
            cross_kernel: Kernel2D::new(3, cross_taps, "merit.cross").unwrap(),
            bias: 0.0,
        }
    }

    pub fn refine(&self, maps: &[ChannelSaliencyMap]) -> Result<RefinedSaliency> {
        let Some(first) = maps.first() else {
            return Err(shape_err("refinement needs at least one saliency map"));
        };
        let shape = first.values.shape();
        if let Some(m) = maps.iter().find(|m| m.values.shape() != shape) {
            return Err(shape_err(format!(
                "saliency map of agent {} is {:?}, expected {:?}",
                m.agent_id,
                m.values.shape(),
                shape
            )));
        }
        let n = maps.len();
        let mut total = Plane::zeros(shape.0, shape.1);
        for m in maps {
            total.add_scaled(&m.values, 1.0);
        }
        let mut refined = Vec::with_capacity(n);
        for m in maps {
            let mut mixed = conv2d(&m.values, &self.self_kernel);
            if n > 1 {
                let mut others = total.clone();
                others.add_scaled(&m.values, -1.0);
                let others = others.map(|v| v / (n - 1) as f64);
                mixed.add_scaled(&conv2d(&others, &self.cross_kernel), 1.0);
            }
            let mixed = mixed.map(|v| v + self.bias);
            refined.push(gaussian_smooth(&mixed, GAUSSIAN_SIGMA)?.map(|v| v.max(0.0)));
        }
        Ok(RefinedSaliency { agent_ids: maps.iter().map(|m| m.agent_id).collect(), maps: refined })
    }
}
