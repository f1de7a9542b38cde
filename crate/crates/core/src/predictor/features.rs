use crate::error::{Error, Result};
use crate::imaging::{od_lut, RgbImage};
use crate::scalar::Scalar;

pub const FEATURE_NAMES: [&str; 9] = [
    "od_r", "od_g", "od_b", "mean_r", "mean_g", "mean_b", "std_r", "std_g", "std_b",
];
pub const FEATURE_COUNT: usize = FEATURE_NAMES.len();
pub const DEFAULT_WINDOW: usize = 9;

/// Per-pixel features, `FEATURE_COUNT` values per pixel in `FEATURE_NAMES` order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    #[inline]
    pub fn pixel(&self, i: usize) -> &[T] {
        &self.data[i * FEATURE_COUNT..(i + 1) * FEATURE_COUNT]
    }
}

/// Mirror index without repeating the edge: -1 → 1, n → n - 2.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// OD per channel plus the mean and population standard deviation of each OD
/// channel over the reflect-padded `k x k` window.
pub fn extract_features<T: Scalar>(he: &RgbImage, k: usize, i0: u32) -> Result<FeatureMap<T>> {
    if k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("window size must be odd, got {k}")));
    }
    let lut = od_lut::<T>(i0)?;
    let (w, h) = (he.width(), he.height());
    let od: Vec<T> = he.data().iter().map(|&v| lut[v as usize]).collect();
    let r = (k / 2) as isize;
    let inv = T::one() / T::from_usize_lossy(k * k);

    // separable box sums of x and x² per channel: horizontal then vertical
    let mut hsum = vec![T::zero(); w * h * 6];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [T::zero(); 6];
            for dx in -r..=r {
                let sx = reflect(x as isize + dx, w);
                let p = &od[(y * w + sx) * 3..(y * w + sx) * 3 + 3];
                for c in 0..3 {
                    acc[c] = acc[c] + p[c];
                    acc[3 + c] = acc[3 + c] + p[c] * p[c];
                }
            }
            hsum[(y * w + x) * 6..(y * w + x) * 6 + 6].copy_from_slice(&acc);
        }
    }
    let mut data = Vec::with_capacity(w * h * FEATURE_COUNT);
    for y in 0..h {
        for x in 0..w {
            let mut acc = [T::zero(); 6];
            for dy in -r..=r {
                let sy = reflect(y as isize + dy, h);
                let p = &hsum[(sy * w + x) * 6..(sy * w + x) * 6 + 6];
                for c in 0..6 {
                    acc[c] = acc[c] + p[c];
                }
            }
            let i = y * w + x;
            data.extend_from_slice(&od[i * 3..i * 3 + 3]);
            let mean: [T; 3] = std::array::from_fn(|c| acc[c] * inv);
            data.extend_from_slice(&mean);
            for c in 0..3 {
                let var = acc[3 + c] * inv - mean[c] * mean[c];
                data.push(var.max(T::zero()).sqrt());
            }
        }
    }
    Ok(FeatureMap { width: w, height: h, data })
}
