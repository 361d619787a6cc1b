//! Dense tensor containers and the fixed numeric primitives the rest of the
//! pipeline is built from.
//!
//! Everything here computes in `f64`. Values are immutable after
//! construction except through explicit `*_mut` accessors used by builders.

mod kernel;
mod ops;
mod patch;

pub use kernel::Kernel2D;
pub use ops::{
    conv2d, gaussian_smooth, global_avg_pool, l1_norm_per_channel, softmax, GAUSSIAN_SIGMA,
};
pub use patch::PatchGrid;

use crate::error::{shape_err, Result};

/// A single `rows × cols` scalar grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err(format!(
                "plane {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Plane, scale: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Dense `H × W × C` activation map of one agent.
///
/// Indexed `(h, w, c)`; stored channel-major so each channel slice is a
/// contiguous `H × W` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        check_dims(height, width, channels)?;
        Ok(Self { height, width, channels, data: vec![0.0; height * width * channels] })
    }

    /// Builds a map from a channel-major buffer (`c`, then `h`, then `w`).
    pub fn from_channel_major(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(shape_err(format!(
                "feature map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(shape_err(format!("non-finite activation at flat index {i}")));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(h, w, c));
                }
            }
        }
        Self::from_channel_major(height, width, channels, data)
    }

    pub fn from_planes(planes: Vec<Plane>) -> Result<Self> {
        let first = planes.first().ok_or_else(|| shape_err("feature map needs a channel"))?;
        let (h, w) = first.shape();
        let c = planes.len();
        let mut data = Vec::with_capacity(h * w * c);
        for p in &planes {
            if p.shape() != (h, w) {
                return Err(shape_err("channel planes differ in shape"));
            }
            data.extend_from_slice(p.as_slice());
        }
        Self::from_channel_major(h, w, c, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(H, W, C)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, v: f64) {
        self.data[(c * self.height + h) * self.width + w] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn channel_plane(&self, c: usize) -> Plane {
        Plane { rows: self.height, cols: self.width, data: self.channel(c).to_vec() }
    }

    /// Channel-major view of the whole buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, alpha: f64) -> FeatureMap {
        FeatureMap { data: self.data.iter().map(|v| v * alpha).collect(), ..self.clone() }
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(shape_err(format!(
            "feature dimensions must be positive, got {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

/// Dense `N × C × H × W` tensor stacking the views of several agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTensor {
    agents: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl AgentTensor {
    pub fn zeros(agents: usize, channels: usize, height: usize, width: usize) -> Self {
        Self { agents, channels, height, width, data: vec![0.0; agents * channels * height * width] }
    }

    pub fn from_vec(
        agents: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != agents * channels * height * width {
            return Err(shape_err(format!(
                "agent tensor {agents}x{channels}x{height}x{width} needs {} values, got {}",
                agents * channels * height * width,
                data.len()
            )));
        }
        Ok(Self { agents, channels, height, width, data })
    }

    /// Stacks feature maps along the agent axis; all maps must share a shape.
    pub fn stack(maps: &[&FeatureMap]) -> Result<Self> {
        let first = maps.first().ok_or_else(|| shape_err("cannot stack zero agents"))?;
        let (h, w, c) = first.shape();
        let mut data = Vec::with_capacity(maps.len() * h * w * c);
        for m in maps {
            if m.shape() != (h, w, c) {
                return Err(shape_err("stacked feature maps differ in shape"));
            }
            data.extend_from_slice(m.as_slice());
        }
        Ok(Self { agents: maps.len(), channels: c, height: h, width: w, data })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(N, C, H, W)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.agents, self.channels, self.height, self.width)
    }

    #[inline]
    fn offset(&self, n: usize, c: usize) -> usize {
        (n * self.channels + c) * self.height * self.width
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c) + h * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let o = self.offset(n, c);
        self.data[o + h * self.width + w] = v;
    }

    /// The `H × W` slice of agent `n`, channel `c`.
    pub fn slice(&self, n: usize, c: usize) -> &[f64] {
        let o = self.offset(n, c);
        &self.data[o..o + self.height * self.width]
    }

    pub fn slice_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let o = self.offset(n, c);
        let len = self.height * self.width;
        &mut self.data[o..o + len]
    }

    pub fn plane(&self, n: usize, c: usize) -> Plane {
        Plane { rows: self.height, cols: self.width, data: self.slice(n, c).to_vec() }
    }

    /// Feature map of agent `n`.
    pub fn agent(&self, n: usize) -> FeatureMap {
        let len = self.channels * self.height * self.width;
        FeatureMap {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data[n * len..(n + 1) * len].to_vec(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
