use super::{AgentTensor, FeatureMap, Kernel2D, Plane};
use crate::error::{invalid, shape_err, Result};

/// Gaussian width used by the saliency smoothing stage.
pub const GAUSSIAN_SIGMA: f64 = 1.0;

/// Same-size 2-D convolution with zero padding.
///
/// This is true convolution (the kernel is flipped), so for a kernel `K`
/// with radius `r`: `out[u][v] = Σ K[a][b] · x[u + r - a][v + r - b]`.
pub fn conv2d(input: &Plane, kernel: &Kernel2D) -> Plane {
    let (rows, cols) = input.shape();
    let k = kernel.size();
    let r = kernel.radius() as isize;
    let x = input.as_slice();
    let taps = kernel.taps();
    let mut out = vec![0.0; rows * cols];
    for u in 0..rows as isize {
        for v in 0..cols as isize {
            let mut acc = 0.0;
            for a in 0..k as isize {
                let src_r = u + r - a;
                if src_r < 0 || src_r >= rows as isize {
                    continue;
                }
                let row = &x[src_r as usize * cols..(src_r as usize + 1) * cols];
                let krow = &taps[a as usize * k..(a as usize + 1) * k];
                for b in 0..k as isize {
                    let src_c = v + r - b;
                    if src_c < 0 || src_c >= cols as isize {
                        continue;
                    }
                    acc += krow[b as usize] * row[src_c as usize];
                }
            }
            out[u as usize * cols + v as usize] = acc;
        }
    }
    Plane { rows, cols, data: out }
}

/// Softmax of `v / temperature` with max subtraction.
pub fn softmax(v: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(shape_err("softmax of an empty vector"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(invalid(format!("softmax temperature must be positive, got {temperature}")));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Separable truncated Gaussian blur.
///
/// The kernel radius is `ceil(2σ)` (five taps at σ = 1). Near borders only
/// in-bounds taps contribute and they are renormalized to sum to one, so a
/// constant grid is a fixed point.
pub fn gaussian_smooth(grid: &Plane, sigma: f64) -> Result<Plane> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (2.0 * sigma).ceil().max(1.0) as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let (rows, cols) = grid.shape();

    let blur_1d = |get: &dyn Fn(usize) -> f64, len: usize, i: usize| -> f64 {
        let mut acc = 0.0;
        let mut norm = 0.0;
        for (t, d) in (-radius..=radius).enumerate() {
            let j = i as isize + d;
            if j < 0 || j >= len as isize {
                continue;
            }
            acc += taps[t] * get(j as usize);
            norm += taps[t];
        }
        acc / norm
    };

    let src = grid.as_slice();
    let mut horiz = vec![0.0; rows * cols];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for c in 0..cols {
            horiz[r * cols + c] = blur_1d(&|j| row[j], cols, c);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for c in 0..cols {
        for r in 0..rows {
            out[r * cols + c] = blur_1d(&|j| horiz[j * cols + c], rows, r);
        }
    }
    Ok(Plane { rows, cols, data: out })
}

/// Mean of each channel over every `(agent, h, w)` position.
pub fn global_avg_pool(t: &AgentTensor) -> Vec<f64> {
    let (n, c, h, w) = t.shape();
    let count = (n * h * w) as f64;
    (0..c)
        .map(|ch| {
            let total: f64 = (0..n).map(|a| t.slice(a, ch).iter().sum::<f64>()).sum();
            if count > 0.0 {
                total / count
            } else {
                0.0
            }
        })
        .collect()
}

/// `Σ_{h,w} |x(h, w, c)|` for every channel.
pub fn l1_norm_per_channel(t: &FeatureMap) -> Vec<f64> {
    (0..t.channels()).map(|c| t.channel(c).iter().map(|v| v.abs()).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: explicit zero-padded copy, then correlation with
    /// the flipped kernel.
    fn conv_oracle(x: &Plane, k: &Kernel2D) -> Plane {
        let (rows, cols) = x.shape();
        let n = k.size();
        let r = k.radius();
        let mut padded = vec![vec![0.0; cols + 2 * r]; rows + 2 * r];
        for i in 0..rows {
            for j in 0..cols {
                padded[i + r][j + r] = x.get(i, j);
            }
        }
        let flipped: Vec<Vec<f64>> =
            (0..n).map(|a| (0..n).map(|b| k.tap(n - 1 - a, n - 1 - b)).collect()).collect();
        Plane::from_fn(rows, cols, |i, j| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += flipped[a][b] * padded[i + a][j + b];
                }
            }
            s
        })
    }

    fn random_plane(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Plane {
        Plane::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn laplacian_of_constant_is_zero_inside_and_negative_on_corners() {
        let x = Plane::filled(5, 5, 2.0);
        let y = conv2d(&x, &Kernel2D::laplacian());
        for i in 1..4 {
            for j in 1..4 {
                assert_eq!(y.get(i, j), 0.0);
            }
        }
        assert_eq!(y.get(0, 0), -4.0);
        // edge (non-corner) cell misses one neighbour
        assert_eq!(y.get(0, 2), -2.0);
    }

    #[test]
    fn laplacian_of_centered_impulse() {
        let mut x = Plane::zeros(5, 5);
        x.set(2, 2, 1.0);
        let y = conv2d(&x, &Kernel2D::laplacian());
        assert_eq!(y, conv_oracle(&x, &Kernel2D::laplacian()));
        assert_eq!(y.get(2, 2), -4.0);
        for (i, j) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(y.get(i, j), 1.0);
        }
        assert_eq!(y.as_slice().iter().filter(|v| **v != 0.0).count(), 5);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let k = Kernel2D::new(3, (0..9).map(|i| i as f64).collect(), "ramp").unwrap();
        let y = conv2d(&Plane::zeros(4, 6), &k);
        assert!(y.as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn asymmetric_kernel_is_flipped() {
        // impulse response of a true convolution reproduces the kernel itself
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let taps: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = Kernel2D::new(5, taps, "rand").unwrap();
        let mut x = Plane::zeros(9, 9);
        x.set(4, 4, 1.0);
        let y = conv2d(&x, &k);
        for a in 0..5 {
            for b in 0..5 {
                assert_eq!(y.get(2 + a, 2 + b), k.tap(a, b));
            }
        }
    }

    #[test]
    fn conv_matches_oracle_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for size in [1, 3, 5, 7] {
            for _ in 0..10 {
                let rows = rng.random_range(1..12);
                let cols = rng.random_range(1..12);
                let x = random_plane(&mut rng, rows, cols);
                let taps = (0..size * size).map(|_| rng.random_range(-1.0..1.0)).collect();
                let k = Kernel2D::new(size, taps, "rand").unwrap();
                let y = conv2d(&x, &k);
                let o = conv_oracle(&x, &k);
                for (a, b) in y.as_slice().iter().zip(o.as_slice()) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn softmax_closed_forms() {
        assert_eq!(softmax(&[0.0; 4], 1.0).unwrap(), vec![0.25; 4]);
        let p = softmax(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(softmax(&[], 1.0).is_err());
        assert!(softmax(&[1.0], 0.0).is_err());
    }

    #[test]
    fn gaussian_impulse_center_weight() {
        let taps: Vec<f64> = (-2i32..=2).map(|d| (-(d * d) as f64 / 2.0).exp()).collect();
        let center = 1.0 / taps.iter().sum::<f64>();
        let mut x = Plane::zeros(15, 15);
        x.set(7, 7, 1.0);
        let y = gaussian_smooth(&x, 1.0).unwrap();
        assert!((y.get(7, 7) - center * center).abs() < 1e-15);
        assert!((y.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        assert!(gaussian_smooth(&Plane::zeros(2, 2), 0.0).is_err());
        assert!(gaussian_smooth(&Plane::zeros(2, 2), -1.0).is_err());
    }

    #[test]
    fn pooling_examples() {
        let ones = AgentTensor::from_vec(2, 3, 4, 4, vec![1.0; 96]).unwrap();
        assert_eq!(global_avg_pool(&ones), vec![1.0; 3]);

        let half: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let t = AgentTensor::from_vec(2, 1, 4, 4, half).unwrap();
        assert_eq!(global_avg_pool(&t), vec![1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..2 * 3 * 16).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = AgentTensor::from_vec(2, 3, 4, 4, data.clone()).unwrap();
        let pooled = global_avg_pool(&t);
        for c in 0..3 {
            let mut naive = 0.0;
            for n in 0..2 {
                for i in 0..16 {
                    naive += data[(n * 3 + c) * 16 + i];
                }
            }
            assert!((pooled[c] - naive / 32.0).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_examples() {
        let z = FeatureMap::zeros(3, 3, 2).unwrap();
        assert_eq!(l1_norm_per_channel(&z), vec![0.0, 0.0]);
        let m = FeatureMap::from_fn(4, 4, 2, |_, _, c| if c == 1 { -1.0 } else { 0.0 }).unwrap();
        assert_eq!(l1_norm_per_channel(&m), vec![0.0, 16.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = FeatureMap::from_fn(5, 7, 3, |_, _, _| rng.random_range(-2.0..2.0)).unwrap();
        let l1 = l1_norm_per_channel(&m);
        for c in 0..3 {
            let mut s = 0.0;
            for h in 0..5 {
                for w in 0..7 {
                    s += m.get(h, w, c).abs();
                }
            }
            assert!((l1[c] - s).abs() < 1e-9);
        }
    }

    fn plane_strategy() -> impl Strategy<Value = Plane> {
        (1usize..10, 1usize..10).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-5.0..5.0f64, r * c)
                .prop_map(move |d| Plane::from_vec(r, c, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn conv_is_linear(x in plane_strategy(), a in -3.0..3.0f64, b in -3.0..3.0f64, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = random_plane(&mut rng, x.rows(), x.cols());
            let taps = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let k = Kernel2D::new(3, taps, "rand").unwrap();
            let mut combo = x.map(|v| a * v);
            combo.add_scaled(&y, b);
            let lhs = conv2d(&combo, &k);
            let mut rhs = conv2d(&x, &k).map(|v| a * v);
            rhs.add_scaled(&conv2d(&y, &k), b);
            for (l, r) in lhs.as_slice().iter().zip(rhs.as_slice()) {
                prop_assert!((l - r).abs() < 1e-9);
            }
        }

        #[test]
        fn softmax_is_a_shift_invariant_distribution(
            v in proptest::collection::vec(-50.0..50.0f64, 1..40),
            shift in -100.0..100.0f64,
            tau in 0.05..20.0f64,
        ) {
            let p = softmax(&v, tau).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted, tau).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let arg = |xs: &[f64]| xs.iter().enumerate().fold(0, |best, (i, x)| if *x > xs[best] { i } else { best });
            prop_assert_eq!(arg(&p), arg(&v));
        }

        #[test]
        fn gaussian_preserves_constants(r in 1usize..12, c in 1usize..12, value in -10.0..10.0f64, sigma in 0.3..3.0f64) {
            let y = gaussian_smooth(&Plane::filled(r, c, value), sigma).unwrap();
            for v in y.as_slice() {
                prop_assert!((v - value).abs() < 1e-9);
            }
        }
    }
}
