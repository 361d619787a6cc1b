use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::feature::{gaussian_smooth, FeatureMap, Plane};
use crate::init::{stream_rng, STREAM_NOISE, STREAM_SCENE};
use crate::sender::ChannelGroup;

/// Object-signal level above which a pixel belongs to the object mask.
pub const OBJECT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub agents: usize,
    pub objects: usize,
    pub primary_channels: usize,
    pub secondary_channels: usize,
    pub blob_sigma_min: f64,
    pub blob_sigma_max: f64,
    pub primary_peak: f64,
    pub secondary_peak: f64,
    pub secondary_blur: f64,
    pub noise_rms: f64,
    pub occlusion: bool,
    /// Blob displacement per frame, in pixels.
    pub drift: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            channels: 16,
            agents: 4,
            objects: 6,
            primary_channels: 4,
            secondary_channels: 4,
            blob_sigma_min: 1.0,
            blob_sigma_max: 2.5,
            primary_peak: 1.0,
            secondary_peak: 0.4,
            secondary_blur: 2.0,
            noise_rms: 0.05,
            occlusion: true,
            drift: 0.5,
        }
    }
}

impl SceneConfig {
    pub fn marginal_channels(&self) -> usize {
        self.channels.saturating_sub(self.primary_channels + self.secondary_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 || self.agents == 0 {
            return Err(invalid("scene dimensions and agent count must be positive"));
        }
        if self.agents > usize::from(u16::MAX) {
            return Err(invalid("too many agents"));
        }
        if self.primary_channels + self.secondary_channels > self.channels {
            return Err(invalid("primary + secondary channels exceed the channel count"));
        }
        if !(self.blob_sigma_min > 0.0 && self.blob_sigma_min <= self.blob_sigma_max) {
            return Err(invalid("blob sigma range must satisfy 0 < min <= max"));
        }
        if !(self.secondary_blur > 0.0) {
            return Err(invalid("secondary blur must be positive"));
        }
        let amplitudes = [self.primary_peak, self.secondary_peak, self.noise_rms, self.drift];
        if amplitudes.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("amplitudes must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Blob {
    row: f64,
    col: f64,
    sigma: f64,
    heading: f64,
}

/// Half-plane occluder: pixels with `(p - origin) · normal < 0` are hidden.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Occluder {
    row: f64,
    col: f64,
    angle: f64,
}

impl Occluder {
    fn visible(&self, h: usize, w: usize) -> bool {
        (h as f64 - self.row) * self.angle.cos() + (w as f64 - self.col) * self.angle.sin() >= 0.0
    }
}

/// Per-agent feature maps with known object locations and channel roles.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub seed: u64,
    pub frame: u32,
    /// One map per agent; agent 0 is the ego agent.
    pub features: Vec<FeatureMap>,
    /// `H × W`, row-major.
    pub object_mask: Vec<bool>,
    pub roles: Vec<ChannelGroup>,
    /// Per agent, `H × W` row-major.
    pub visibility: Vec<Vec<bool>>,
    /// Noise-free object signal, `H × W`.
    pub signal: Plane,
}

impl SyntheticScene {
    pub fn channels_with(&self, role: ChannelGroup) -> Vec<usize> {
        self.roles.iter().enumerate().filter(|(_, &r)| r == role).map(|(c, _)| c).collect()
    }

    pub fn object_pixels(&self) -> usize {
        self.object_mask.iter().filter(|&&m| m).count()
    }
}

/// Rounds through `f32` so that the wire carries features without loss.
fn wire_exact(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Deterministic scene for `(seed, frame)`. Geometry, roles and occluders
/// depend on the seed only; noise is redrawn every frame.
pub fn generate_scene(config: &SceneConfig, seed: u64, frame: u32) -> Result<SyntheticScene> {
    config.validate()?;
    let (h, w, c) = (config.height, config.width, config.channels);
    let mut rng = stream_rng(seed, STREAM_SCENE);

    let blobs: Vec<Blob> = (0..config.objects)
        .map(|_| Blob {
            row: rng.random_range(0.0..h as f64),
            col: rng.random_range(0.0..w as f64),
            sigma: rng.random_range(config.blob_sigma_min..=config.blob_sigma_max),
            heading: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();

    let mut roles = Vec::with_capacity(c);
    roles.extend(std::iter::repeat_n(ChannelGroup::Primary, config.primary_channels));
    roles.extend(std::iter::repeat_n(ChannelGroup::Secondary, config.secondary_channels));
    roles.extend(std::iter::repeat_n(ChannelGroup::Marginal, config.marginal_channels()));
    roles.shuffle(&mut rng);

    let occluders: Vec<Option<Occluder>> = (0..config.agents)
        .map(|_| {
            config.occlusion.then(|| Occluder {
                row: rng.random_range(h as f64 * 0.25..=h as f64 * 0.75),
                col: rng.random_range(w as f64 * 0.25..=w as f64 * 0.75),
                angle: rng.random_range(0.0..std::f64::consts::TAU),
            })
        })
        .collect();

    let shift = config.drift * frame as f64;
    let signal = Plane::from_fn(h, w, |r, col| {
        blobs
            .iter()
            .map(|b| {
                let dr = r as f64 - (b.row + shift * b.heading.sin());
                let dc = col as f64 - (b.col + shift * b.heading.cos());
                (-(dr * dr + dc * dc) / (2.0 * b.sigma * b.sigma)).exp()
            })
            .fold(0.0, f64::max)
    });
    let object_mask: Vec<bool> = signal.as_slice().iter().map(|&v| v >= OBJECT_THRESHOLD).collect();
    let blurred = gaussian_smooth(&signal, config.secondary_blur)?;
    let blur_peak = blurred.as_slice().iter().copied().fold(0.0, f64::max);
    let context = if blur_peak > 0.0 { blurred.map(|v| v / blur_peak) } else { blurred };

    let noise = Normal::new(0.0, config.noise_rms).map_err(|e| invalid(e.to_string()))?;
    let mut noise_rng = stream_rng(seed ^ u64::from(frame).wrapping_mul(0x2545_f491_4f6c_dd1d), STREAM_NOISE);
    let mut features = Vec::with_capacity(config.agents);
    let mut visibility = Vec::with_capacity(config.agents);
    for occluder in &occluders {
        let vis: Vec<bool> = (0..h * w)
            .map(|i| occluder.is_none_or(|o| o.visible(i / w, i % w)))
            .collect();
        let mut data = Vec::with_capacity(h * w * c);
        for role in &roles {
            for i in 0..h * w {
                let base = match (role, vis[i]) {
                    (ChannelGroup::Primary, true) => config.primary_peak * signal.as_slice()[i],
                    (ChannelGroup::Secondary, true) => config.secondary_peak * context.as_slice()[i],
                    _ => 0.0,
                };
                data.push(wire_exact(base + noise.sample(&mut noise_rng)));
            }
        }
        features.push(FeatureMap::from_channel_major(h, w, c, data)?);
        visibility.push(vis);
    }

    Ok(SyntheticScene {
        config: config.clone(),
        seed,
        frame,
        features,
        object_mask,
        roles,
        visibility,
        signal,
    })
}
