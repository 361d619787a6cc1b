use crate::error::{invalid, Result};

/// Partition of an `H × W` grid into `P × P` tiles, numbered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchGrid {
    height: usize,
    width: usize,
    patch_size: usize,
}

impl PatchGrid {
    /// `patch_size` must divide both `height` and `width`.
    pub fn new(height: usize, width: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || height == 0 || width == 0 {
            return Err(invalid("patch grid dimensions must be positive"));
        }
        if !height.is_multiple_of(patch_size) || !width.is_multiple_of(patch_size) {
            return Err(invalid(format!(
                "patch size {patch_size} does not divide a {height}x{width} grid"
            )));
        }
        Ok(Self { height, width, patch_size })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.height / self.patch_size
    }

    pub fn cols(&self) -> usize {
        self.width / self.patch_size
    }

    /// Number of patches `Q`.
    pub fn count(&self) -> usize {
        self.rows() * self.cols()
    }

    /// Pixels per patch, `P²`.
    pub fn area(&self) -> usize {
        self.patch_size * self.patch_size
    }

    #[inline]
    pub fn patch_of(&self, h: usize, w: usize) -> usize {
        (h / self.patch_size) * self.cols() + w / self.patch_size
    }

    /// Top-left pixel of patch `k`.
    pub fn origin(&self, k: usize) -> (usize, usize) {
        ((k / self.cols()) * self.patch_size, (k % self.cols()) * self.patch_size)
    }

    /// Pixel index set of patch `k`, row-major within the tile.
    pub fn pixels(&self, k: usize) -> impl Iterator<Item = (usize, usize)> {
        let (h0, w0) = self.origin(k);
        let p = self.patch_size;
        (0..p).flat_map(move |dh| (0..p).map(move |dw| (h0 + dh, w0 + dw)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patches_partition_the_grid() {
        for &(h, w, p) in &[(4, 4, 1), (8, 4, 2), (16, 12, 4), (6, 6, 3)] {
            let g = PatchGrid::new(h, w, p).unwrap();
            let mut seen = vec![0u32; h * w];
            for k in 0..g.count() {
                for (r, c) in g.pixels(k) {
                    assert_eq!(g.patch_of(r, c), k);
                    seen[r * w + c] += 1;
                }
            }
            assert!(seen.iter().all(|&n| n == 1));
            assert_eq!(g.count(), (h / p) * (w / p));
        }
    }

    #[test]
    fn rejects_non_dividing_patch() {
        assert!(PatchGrid::new(10, 8, 4).is_err());
        assert!(PatchGrid::new(8, 8, 0).is_err());
    }
}
