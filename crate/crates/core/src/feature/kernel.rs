use crate::error::{invalid, Result};

/// Square odd-sized convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    size: usize,
    taps: Vec<f64>,
    label: String,
}

impl Kernel2D {
    /// Builds a kernel from row-major taps. `size` must be 1, 3, 5 or 7.
    pub fn new(size: usize, taps: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if !matches!(size, 1 | 3 | 5 | 7) {
            return Err(invalid(format!("kernel size must be 1, 3, 5 or 7, got {size}")));
        }
        if taps.len() != size * size {
            return Err(invalid(format!(
                "{size}x{size} kernel needs {} taps, got {}",
                size * size,
                taps.len()
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(invalid("kernel taps must be finite"));
        }
        Ok(Self { size, taps, label: label.into() })
    }

    /// 4-neighbour discrete Laplacian `[[0,1,0],[1,-4,1],[0,1,0]]`.
    pub fn laplacian() -> Self {
        Self {
            size: 3,
            taps: vec![0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0],
            label: "laplacian".into(),
        }
    }

    /// All-zero kernel except a centre tap of `scale`.
    pub fn centered(size: usize, scale: f64) -> Result<Self> {
        let mut taps = vec![0.0; size * size];
        if let Some(t) = taps.get_mut(size * size / 2) {
            *t = scale;
        }
        Self::new(size, taps, "centered")
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![0.0; size * size], "zeros")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, r: usize, c: usize) -> f64 {
        self.taps[r * self.size + c]
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}
