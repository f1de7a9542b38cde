use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 8-bit RGB tile, row-major, interleaved R,G,B.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "rgb data length {} != {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Sub-rectangle of `cw x ch` pixels with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, cw: usize, ch: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(cw * ch * 3);
        for r in crop_rows((self.width, self.height), (x, y, cw, ch))? {
            data.extend_from_slice(&self.data[r.start * 3..r.end * 3]);
        }
        Ok(Self { width: cw, height: ch, data })
    }

    pub fn same_dims<A: Dims>(&self, other: &A) -> bool {
        self.width == other.width() && self.height == other.height()
    }
}

/// Anything with a pixel grid.
pub trait Dims {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
}

impl Dims for RgbImage {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

/// Multi-channel optical density image. A single-channel instance doubles as the
/// grayscale image used by registration.
#[derive(Clone, Debug, PartialEq)]
pub struct OdImage<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> OdImage<T> {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "od data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidArgument(
                "optical densities must be finite and non-negative".into(),
            ));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Builds without the non-negativity check. Registration works on intensity-like
    /// grayscale data (noise phantoms, zero-mean windows) that may dip below zero.
    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height * channels);
        Self { width, height, channels, data }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![T::zero(); width * height * channels] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, i: usize) -> &[T] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    /// Mean over channels, as a single-channel image.
    pub fn mean_gray(&self) -> OdImage<T> {
        let inv = T::one() / T::from_usize_lossy(self.channels);
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|p| p.iter().copied().sum::<T>() * inv)
            .collect();
        OdImage::from_raw(self.width, self.height, 1, data)
    }
}

impl<T: Scalar> Dims for OdImage<T> {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn full(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

impl Dims for BinaryMask {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

/// Per-pixel stain densities, row-major with `stains` interleaved values per pixel.
///
/// `scale` holds, per stain, the divisor that was applied during normalization
/// (1 when the map is in raw optical-density units).
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationMap<T> {
    width: usize,
    height: usize,
    stains: usize,
    data: Vec<T>,
    scale: Vec<T>,
}

impl<T: Scalar> ConcentrationMap<T> {
    pub fn new(width: usize, height: usize, stains: usize, data: Vec<T>, scale: Vec<T>) -> Result<Self> {
        if data.len() != width * height * stains {
            return Err(Error::DimensionMismatch(format!(
                "cmap data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                stains
            )));
        }
        if scale.len() != stains {
            return Err(Error::DimensionMismatch(format!(
                "cmap has {} stains but {} scales",
                stains,
                scale.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidArgument(
                "concentrations must be finite and non-negative".into(),
            ));
        }
        Ok(Self { width, height, stains, data, scale })
    }

    /// Unnormalized (scale 1) map.
    pub fn unscaled(width: usize, height: usize, stains: usize, data: Vec<T>) -> Result<Self> {
        Self::new(width, height, stains, data, vec![T::one(); stains])
    }

    pub fn zeros(width: usize, height: usize, stains: usize) -> Self {
        Self {
            width,
            height,
            stains,
            data: vec![T::zero(); width * height * stains],
            scale: vec![T::one(); stains],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn stains(&self) -> usize {
        self.stains
    }

    pub fn len_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn scale(&self) -> &[T] {
        &self.scale
    }

    #[inline]
    pub fn get(&self, pixel: usize, stain: usize) -> T {
        self.data[pixel * self.stains + stain]
    }

    /// Values of one stain, in pixel order.
    pub fn channel_values(&self, stain: usize) -> Vec<T> {
        self.data.iter().skip(stain).step_by(self.stains).copied().collect()
    }

    /// Single-stain map holding one channel, keeping its scale.
    pub fn channel(&self, stain: usize) -> ConcentrationMap<T> {
        ConcentrationMap {
            width: self.width,
            height: self.height,
            stains: 1,
            data: self.channel_values(stain),
            scale: vec![self.scale[stain]],
        }
    }

    /// Same data with the scale vector replaced. Values are not touched.
    pub fn with_scale(mut self, scale: Vec<T>) -> Result<Self> {
        if scale.len() != self.stains {
            return Err(Error::DimensionMismatch("scale length".into()));
        }
        self.scale = scale;
        Ok(self)
    }

    /// Divides every stain by `divisor` and multiplies the recorded scale by it, so
    /// `value * scale` stays in raw optical-density units. A zero or non-finite
    /// divisor is replaced by 1.
    pub fn rescaled(&self, divisor: &[T]) -> Result<Self> {
        if divisor.len() != self.stains {
            return Err(Error::DimensionMismatch("divisor length".into()));
        }
        let divisor: Vec<T> = divisor
            .iter()
            .map(|&d| if d > T::zero() && d.is_finite() { d } else { T::one() })
            .collect();
        let data = self
            .data
            .chunks_exact(self.stains)
            .flat_map(|p| p.iter().zip(&divisor).map(|(&v, &d)| v / d))
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            stains: self.stains,
            data,
            scale: self.scale.iter().zip(&divisor).map(|(&s, &d)| s * d).collect(),
        })
    }

    /// Sub-rectangle of `cw x ch` pixels with top-left corner `(x, y)`; keeps the scale.
    pub fn crop(&self, x: usize, y: usize, cw: usize, ch: usize) -> Result<Self> {
        let r = self.stains;
        let mut data = Vec::with_capacity(cw * ch * r);
        for row in crop_rows((self.width, self.height), (x, y, cw, ch))? {
            data.extend_from_slice(&self.data[row.start * r..row.end * r]);
        }
        Ok(Self { width: cw, height: ch, stains: r, data, scale: self.scale.clone() })
    }

    pub fn same_dims<A: Dims>(&self, other: &A) -> bool {
        self.width == other.width() && self.height == other.height()
    }

    /// Converts the scalar type.
    pub fn cast<U: Scalar>(&self) -> ConcentrationMap<U> {
        ConcentrationMap {
            width: self.width,
            height: self.height,
            stains: self.stains,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            scale: self.scale.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T: Scalar> Dims for ConcentrationMap<T> {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
}

/// Row-major pixel index ranges of a crop rectangle, after bounds checking.
fn crop_rows(
    (w, h): (usize, usize),
    (x, y, cw, ch): (usize, usize, usize, usize),
) -> Result<impl Iterator<Item = std::ops::Range<usize>>> {
    if cw == 0 || ch == 0 || x + cw > w || y + ch > h {
        return Err(Error::InvalidArgument(format!("crop {cw}x{ch}+{x}+{y} outside {w}x{h}")));
    }
    Ok((y..y + ch).map(move |r| r * w + x..r * w + x + cw))
}

pub(crate) fn check_dims<A: Dims, B: Dims>(a: &A, b: &B, what: &str) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "{}: {}x{} vs {}x{}",
            what,
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crops_pick_the_right_pixels() {
        let img = RgbImage::new(3, 2, (0..18).collect()).unwrap();
        let c = img.crop(1, 1, 2, 1).unwrap();
        assert_eq!(c.data(), &[12, 13, 14, 15, 16, 17]);
        assert!(img.crop(2, 0, 2, 1).is_err());
        let m = ConcentrationMap::<f64>::new(3, 2, 2, (0..12).map(f64::from).collect(), vec![1.0, 2.0]).unwrap();
        let mc = m.crop(0, 1, 2, 1).unwrap();
        assert_eq!(mc.data(), &[6.0, 7.0, 8.0, 9.0]);
        assert_eq!(mc.scale(), &[1.0, 2.0]);
    }
}
