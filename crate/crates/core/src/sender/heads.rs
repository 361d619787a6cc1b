use crate::error::{shape_err, Result};
use crate::feature::{conv2d, FeatureMap, Kernel2D, Plane};
use crate::init::{fan_in_bound, stream_rng, uniform, STREAM_CLASSIFIER, STREAM_SPATIAL};

/// Hidden width of the spatial predictor.
pub const SPATIAL_HIDDEN: usize = 16;

/// Two-layer 3×3 convolutional head producing a `[0, 1]` spatial map.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialHead {
    channels: usize,
    /// `SPATIAL_HIDDEN × channels` kernels, hidden-major.
    first: Vec<Kernel2D>,
    first_bias: Vec<f64>,
    second: Vec<Kernel2D>,
    second_bias: f64,
}

impl SpatialHead {
    pub fn seeded(seed: u64, channels: usize) -> Self {
        let mut rng = stream_rng(seed, STREAM_SPATIAL);
        let b1 = fan_in_bound(channels * 9);
        let first = (0..SPATIAL_HIDDEN * channels)
            .map(|_| Kernel2D::new(3, uniform(&mut rng, b1, 9), "spatial.1").unwrap())
            .collect();
        let b2 = fan_in_bound(SPATIAL_HIDDEN * 9);
        let second = (0..SPATIAL_HIDDEN)
            .map(|_| Kernel2D::new(3, uniform(&mut rng, b2, 9), "spatial.2").unwrap())
            .collect();
        Self {
            channels,
            first,
            first_bias: vec![0.0; SPATIAL_HIDDEN],
            second,
            second_bias: 0.0,
        }
    }

    pub fn zeros(channels: usize) -> Self {
        let z = Kernel2D::zeros(3).unwrap();
        Self {
            channels,
            first: vec![z.clone(); SPATIAL_HIDDEN * channels],
            first_bias: vec![0.0; SPATIAL_HIDDEN],
            second: vec![z; SPATIAL_HIDDEN],
            second_bias: 0.0,
        }
    }

    /// Activation-energy detector: one hidden unit averages the centre taps
    /// of all channels, the output fires once that mean passes 0.1.
    pub fn prior(channels: usize) -> Self {
        let mut head = Self::zeros(channels);
        let mean = Kernel2D::centered(3, 1.0 / channels as f64).unwrap();
        for ch in 0..channels {
            head.first[ch] = mean.clone();
        }
        head.second[0] = Kernel2D::centered(3, 30.0).unwrap();
        head.second_bias = -3.0;
        head
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward(&self, x: &FeatureMap) -> Result<Plane> {
        if x.channels() != self.channels {
            return Err(shape_err(format!(
                "spatial head expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        let (h, w, c) = x.shape();
        let inputs: Vec<Plane> = (0..c).map(|ch| x.channel_plane(ch)).collect();
        let mut out = Plane::filled(h, w, self.second_bias);
        for o in 0..SPATIAL_HIDDEN {
            let mut hidden = Plane::filled(h, w, self.first_bias[o]);
            for (ch, input) in inputs.iter().enumerate() {
                hidden.add_scaled(&conv2d(input, &self.first[o * c + ch]), 1.0);
            }
            let hidden = hidden.map(|v| v.max(0.0));
            out.add_scaled(&conv2d(&hidden, &self.second[o]), 1.0);
        }
        Ok(out.map(sigmoid))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Shared 1×1 head mapping per-(patch, channel) statistics
/// `[laplacian score, patch mean, patch max]` to three group logits
/// ordered `[primary, secondary, marginal]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub weights: [[f64; 3]; 3],
    pub bias: [f64; 3],
}

impl ClassifierHead {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = stream_rng(seed, STREAM_CLASSIFIER);
        let w = uniform(&mut rng, fan_in_bound(3), 9);
        Self {
            weights: [[w[0], w[1], w[2]], [w[3], w[4], w[5]], [w[6], w[7], w[8]]],
            bias: [0.0; 3],
        }
    }

    pub fn zeros() -> Self {
        Self { weights: [[0.0; 3]; 3], bias: [0.0; 3] }
    }

    /// Ordinal prior on the patch peak activation: secondary overtakes
    /// marginal at a peak of 0.1, primary overtakes secondary at 0.6.
    pub fn prior() -> Self {
        Self {
            weights: [[0.0, 0.0, 8.0], [0.0, 0.0, 4.0], [0.0, 0.0, 0.0]],
            bias: [-2.8, -0.4, 0.0],
        }
    }

    pub fn logits(&self, features: [f64; 3]) -> [f64; 3] {
        let mut out = self.bias;
        for (g, row) in self.weights.iter().enumerate() {
            out[g] += row.iter().zip(&features).map(|(w, x)| w * x).sum::<f64>();
        }
        out
    }
}
