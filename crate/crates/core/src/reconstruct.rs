//! Virtual HES rendering from an HE tile and a Saffron density map.

use crate::error::{Error, Result};
use crate::imaging::{
    check_dims, od_to_intensity, od_to_rgb, rgb_to_od, ConcentrationMap, OdImage, RgbImage, StainMatrix, EOSIN,
    HEMATOXYLIN,
};
use crate::linalg::dot3;
use crate::scalar::Scalar;
use crate::stain::{solve_concentrations, SolveMode};

pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct ReconstructionConfig<T> {
    /// Eosin-suppression margin.
    pub epsilon: T,
    /// Two-column Hematoxylin/Eosin matrix estimated on the HE slide.
    pub w_he: StainMatrix<T>,
    /// Unit Saffron OD direction, estimated on any HES slide.
    pub w_s: [T; 3],
    /// Divisor that brings predicted Saffron back to OD units. `None` uses the
    /// scale recorded in the Saffron map.
    pub saffron_scale: Option<T>,
    /// Compare Saffron and Eosin in normalized units (Eosin divided by the
    /// Saffron scale) rather than in raw OD.
    pub compare_normalized: bool,
}

impl<T: Scalar> ReconstructionConfig<T> {
    /// Takes H and E from `w_he` (by label) and the Saffron column from `w_s`.
    pub fn new(w_he: &StainMatrix<T>, w_s: [T; 3]) -> Result<Self> {
        let h = w_he.position(HEMATOXYLIN);
        let e = w_he.position(EOSIN);
        let (Some(h), Some(e)) = (h, e) else {
            return Err(Error::InvalidStainMatrix("HE matrix needs Hematoxylin and Eosin columns".into()));
        };
        let n = dot3(&w_s, &w_s).sqrt();
        if (n - T::one()).abs() > T::lit(1e-6) || w_s.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidStainMatrix("Saffron vector must be non-negative and unit norm".into()));
        }
        Ok(Self {
            epsilon: T::lit(DEFAULT_EPSILON),
            w_he: w_he.select(&[h, e])?,
            w_s,
            saffron_scale: None,
            compare_normalized: true,
        })
    }
}

#[inline]
fn suppressed<T: Scalar>(h_e: T, h_s: T, epsilon: T) -> bool {
    h_s > h_e + epsilon
}

/// Zeroes Eosin wherever Saffron exceeds it by more than `epsilon`. Both maps
/// are single-stain and compared as given.
pub fn suppress_eosin<T: Scalar>(
    h_e: &ConcentrationMap<T>,
    h_s_hat: &ConcentrationMap<T>,
    epsilon: T,
) -> Result<ConcentrationMap<T>> {
    check_dims(h_e, h_s_hat, "eosin vs saffron")?;
    if h_e.stains() != 1 || h_s_hat.stains() != 1 {
        return Err(Error::DimensionMismatch("suppress_eosin expects single-stain maps".into()));
    }
    let data = h_e
        .data()
        .iter()
        .zip(h_s_hat.data())
        .map(|(&e, &s)| if suppressed(e, s, epsilon) { T::zero() } else { e })
        .collect();
    ConcentrationMap::new(h_e.width(), h_e.height(), 1, data, h_e.scale().to_vec())
}

/// Re-renders an HE tile from its own two-stain deconvolution.
pub fn rerender_he<T: Scalar>(he: &RgbImage, w_he: &StainMatrix<T>) -> Result<RgbImage> {
    let h = solve_concentrations(&rgb_to_od::<T>(he, w_he.illuminant())?, w_he, SolveMode::Pinv)?;
    let data = (0..h.len_pixels())
        .flat_map(|i| w_he.mix(&[h.get(i, 0), h.get(i, 1)]))
        .collect();
    od_to_rgb(&OdImage::from_raw(he.width(), he.height(), 3, data), w_he.illuminant())
}

/// Builds `I₀·exp(−([W_HE, W_S] · [H_H; H_Ẽ; Ĥ_S]))` where `H_Ẽ` is the HE
/// Eosin with suppression applied and `Ĥ_S` is the Saffron map brought back to
/// OD units.
pub fn reconstruct_hes<T: Scalar>(
    he: &RgbImage,
    h_s_hat: &ConcentrationMap<T>,
    cfg: &ReconstructionConfig<T>,
) -> Result<RgbImage> {
    check_dims(he, h_s_hat, "HE tile vs Saffron map")?;
    if h_s_hat.stains() != 1 {
        return Err(Error::DimensionMismatch("Saffron map must be single-stain".into()));
    }
    if !(cfg.epsilon >= T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be >= 0".into()));
    }
    let scale = cfg.saffron_scale.unwrap_or(h_s_hat.scale()[0]);
    let i0 = cfg.w_he.illuminant();
    let h = solve_concentrations(&rgb_to_od::<T>(he, i0)?, &cfg.w_he, SolveMode::Pinv)?;
    let i0 = T::lit(i0 as f64);
    let mut out = Vec::with_capacity(he.len_pixels() * 3);
    for i in 0..h.len_pixels() {
        let (hh, mut he_e) = (h.get(i, 0), h.get(i, 1));
        let s_norm = h_s_hat.data()[i];
        let hit = if cfg.compare_normalized {
            suppressed(he_e / scale, s_norm, cfg.epsilon)
        } else {
            suppressed(he_e, s_norm * scale, cfg.epsilon)
        };
        if hit {
            he_e = T::zero();
        }
        let mut v = cfg.w_he.mix(&[hh, he_e]);
        let s_od = s_norm * scale;
        for (x, &ws) in v.iter_mut().zip(&cfg.w_s) {
            *x = *x + ws * s_od;
        }
        out.extend(v.map(|x| od_to_intensity(x, i0)));
    }
    RgbImage::new(he.width(), he.height(), out)
}
