//! Restained tile-pair alignment: phase-correlation translation, exhaustive
//! rotation search, then coarse-to-fine affine refinement on the sum of squared
//! differences. The primitives work on single-channel images, normally mean OD.

mod affine;
mod phase;
mod refine;
mod rigid;
mod warp;

pub use affine::{AffineTransform, DET_MAX, DET_MIN};
pub use phase::{estimate_translation, Translation};
pub use refine::{refine_affine, CONVERGENCE_RTOL};
pub use rigid::estimate_rigid;
pub use warp::{warp_affine, Interpolation, Warp};

use crate::error::{Error, Result};
use crate::imaging::{gray_od, rgb_to_od, OdImage, RgbImage, StainMatrix, HEMATOXYLIN};
use crate::scalar::Scalar;
use crate::stain::{solve_concentrations, SolveMode};

pub const DEFAULT_ANGLE_RANGE: f64 = 10.0;
pub const DEFAULT_ANGLE_STEP: f64 = 0.5;
pub const DEFAULT_LEVELS: usize = 3;
pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult<T> {
    /// Maps moving coordinates to fixed coordinates.
    pub transform: AffineTransform<T>,
    /// Normalized correlation of fixed and aligned moving over their overlap.
    pub score: T,
    pub converged: bool,
    /// Iterations spent per pyramid level, coarse to fine (empty for rigid).
    pub iterations: Vec<usize>,
    /// Mean squared difference after initialization and after every accepted
    /// step, per pyramid level, coarse to fine.
    pub ssd_trace: Vec<Vec<T>>,
}

/// Bilinear sample of a single-channel image; `None` outside the pixel grid.
#[inline]
pub(crate) fn sample<T: Scalar>(img: &OdImage<T>, x: T, y: T) -> Option<T> {
    let (w, h) = (img.width(), img.height());
    let (wm, hm) = (T::from_usize_lossy(w - 1), T::from_usize_lossy(h - 1));
    if !(x >= T::zero() && y >= T::zero() && x <= wm && y <= hm) {
        return None;
    }
    let x0 = x.floor().to_usize().unwrap().min(w.saturating_sub(2));
    let y0 = y.floor().to_usize().unwrap().min(h.saturating_sub(2));
    let fx = x - T::from_usize_lossy(x0);
    let fy = y - T::from_usize_lossy(y0);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let d = img.data();
    let top = d[y0 * w + x0] * (T::one() - fx) + d[y0 * w + x1] * fx;
    let bot = d[y1 * w + x0] * (T::one() - fx) + d[y1 * w + x1] * fx;
    Some(top * (T::one() - fy) + bot * fy)
}

/// Pearson correlation between `fixed` and `moving` resampled through
/// `transform` (moving → fixed), over the overlap. 0 without overlap or variance.
pub fn normalized_correlation<T: Scalar>(fixed: &OdImage<T>, moving: &OdImage<T>, transform: &AffineTransform<T>) -> T {
    let Some(inv) = transform.inverse() else {
        return T::zero();
    };
    let mut pairs = Vec::with_capacity(fixed.width() * fixed.height());
    for y in 0..fixed.height() {
        for x in 0..fixed.width() {
            let (sx, sy) = inv.apply(T::from_usize_lossy(x), T::from_usize_lossy(y));
            if let Some(m) = sample(moving, sx, sy) {
                pairs.push((fixed.get(x, y, 0), m));
            }
        }
    }
    if pairs.len() < 2 {
        return T::zero();
    }
    let n = T::from_usize_lossy(pairs.len());
    let (ma, mb) = pairs.iter().fold((T::zero(), T::zero()), |(a, b), p| (a + p.0, b + p.1));
    let (ma, mb) = (ma / n, mb / n);
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for &(a, b) in &pairs {
        sab = sab + (a - ma) * (b - mb);
        saa = saa + (a - ma) * (a - ma);
        sbb = sbb + (b - mb) * (b - mb);
    }
    let d = (saa * sbb).sqrt();
    if d > T::zero() {
        (sab / d).max(-T::one()).min(T::one())
    } else {
        T::zero()
    }
}

/// Full pair registration with default parameters: rigid search on mean-OD
/// images, then affine refinement from the rigid estimate.
pub fn register_pair<T: Scalar>(fixed: &RgbImage, moving: &RgbImage, i0: u32) -> Result<RegistrationResult<T>> {
    let f = gray_od::<T>(fixed, i0)?;
    let m = gray_od::<T>(moving, i0)?;
    let rigid = estimate_rigid(&f, &m, T::lit(DEFAULT_ANGLE_RANGE), T::lit(DEFAULT_ANGLE_STEP))?;
    refine_affine(&f, &m, &rigid.transform, DEFAULT_LEVELS, DEFAULT_MAX_ITERS)
}

fn hematoxylin<T: Scalar>(img: &RgbImage, w: &StainMatrix<T>) -> Result<OdImage<T>> {
    let idx = w
        .position(HEMATOXYLIN)
        .ok_or_else(|| Error::InvalidStainMatrix("matrix has no Hematoxylin column".into()))?;
    let h = solve_concentrations(&rgb_to_od::<T>(img, w.illuminant())?, w, SolveMode::Pinv)?;
    Ok(OdImage::from_raw(img.width(), img.height(), 1, h.channel_values(idx)))
}

/// Registration of differently stained tiles of the same section (HE vs HES).
/// The rigid search runs on mean-OD images; the affine refinement runs on the
/// Hematoxylin density, which both stainings share, so Saffron/Eosin tone
/// differences do not pull the SSD optimum.
pub fn register_stained_pair<T: Scalar>(
    fixed: &RgbImage,
    moving: &RgbImage,
    w_fixed: &StainMatrix<T>,
    w_moving: &StainMatrix<T>,
) -> Result<RegistrationResult<T>> {
    let f = gray_od::<T>(fixed, w_fixed.illuminant())?;
    let m = gray_od::<T>(moving, w_moving.illuminant())?;
    let rigid = estimate_rigid(&f, &m, T::lit(DEFAULT_ANGLE_RANGE), T::lit(DEFAULT_ANGLE_STEP))?;
    let fh = hematoxylin(fixed, w_fixed)?;
    let mh = hematoxylin(moving, w_moving)?;
    refine_affine(&fh, &mh, &rigid.transform, DEFAULT_LEVELS, DEFAULT_MAX_ITERS)
}
