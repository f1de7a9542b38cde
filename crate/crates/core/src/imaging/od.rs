use crate::error::{Error, Result};
use crate::imaging::types::{BinaryMask, OdImage, RgbImage};
use crate::scalar::Scalar;

pub const DEFAULT_ILLUMINANT: u32 = 255;
pub const DEFAULT_TISSUE_THRESHOLD: f64 = 0.15;

fn check_illuminant(i0: u32) -> Result<()> {
    if !(1..=255).contains(&i0) {
        return Err(Error::InvalidIlluminant(i0));
    }
    Ok(())
}

/// Lookup table of `-ln(max(I, 1) / i0)` for every 8-bit intensity.
/// Intensities brighter than the illuminant map to 0.
pub fn od_lut<T: Scalar>(i0: u32) -> Result<[T; 256]> {
    check_illuminant(i0)?;
    let i0 = T::lit(i0 as f64);
    let mut lut = [T::zero(); 256];
    for (i, v) in lut.iter_mut().enumerate() {
        let intensity = T::lit(i.max(1) as f64);
        *v = (-(intensity / i0).ln()).max(T::zero());
    }
    Ok(lut)
}

/// Beer-Lambert optical density per channel. Zero intensities are clamped to 1.
pub fn rgb_to_od<T: Scalar>(img: &RgbImage, i0: u32) -> Result<OdImage<T>> {
    let lut = od_lut::<T>(i0)?;
    let data = img.data().iter().map(|&v| lut[v as usize]).collect();
    Ok(OdImage::from_raw(img.width(), img.height(), 3, data))
}

#[inline]
pub(crate) fn od_to_intensity<T: Scalar>(v: T, i0: T) -> u8 {
    let i = (i0 * (-v).exp()).round();
    i.max(T::zero()).min(T::lit(255.0)).to_u8().unwrap_or(255)
}

/// Inverse transform: `I = round(i0 * exp(-V))`, clamped to [0, 255].
pub fn od_to_rgb<T: Scalar>(od: &OdImage<T>, i0: u32) -> Result<RgbImage> {
    check_illuminant(i0)?;
    if od.channels() != 3 {
        return Err(Error::ChannelCount { expected: 3, actual: od.channels() });
    }
    let i0 = T::lit(i0 as f64);
    let data = od.data().iter().map(|&v| od_to_intensity(v, i0)).collect();
    RgbImage::new(od.width(), od.height(), data)
}

/// A pixel is tissue when its mean optical density over channels exceeds `threshold`.
pub fn tissue_mask<T: Scalar>(od: &OdImage<T>, threshold: T) -> Result<BinaryMask> {
    if !(threshold >= T::zero()) {
        return Err(Error::InvalidArgument("tissue threshold must be >= 0".into()));
    }
    let c = od.channels();
    let inv = T::one() / T::from_usize_lossy(c);
    let data = od
        .data()
        .chunks_exact(c)
        .map(|p| p.iter().copied().sum::<T>() * inv > threshold)
        .collect();
    BinaryMask::new(od.width(), od.height(), data)
}

/// Grayscale mean optical density of an RGB tile; the registration working image.
pub fn gray_od<T: Scalar>(img: &RgbImage, i0: u32) -> Result<OdImage<T>> {
    Ok(rgb_to_od::<T>(img, i0)?.mean_gray())
}
