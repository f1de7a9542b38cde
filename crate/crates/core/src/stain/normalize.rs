use crate::error::{Error, Result};
use crate::imaging::{check_dims, rgb_to_od, BinaryMask, ConcentrationMap, RgbImage, StainMatrix, SAFFRON};
use crate::scalar::Scalar;
use crate::stain::solve::{solve_concentrations, SolveMode};

pub const PSEUDO_MAX_PERCENTILE: f64 = 99.0;

/// Nearest-rank percentile: the `ceil(p/100 · n)`-th smallest value.
/// Sorts `values` in place. Returns `None` for an empty slice.
pub fn percentile_nearest_rank<T: Scalar>(values: &mut [T], p: f64) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    Some(values[rank.clamp(1, n) - 1])
}

/// Per-stain 99th-percentile pseudo-maxima over the masked pixels of one or more
/// maps. A zero percentile yields a divisor of 1.
pub fn pseudo_max<T: Scalar>(maps: &[(&ConcentrationMap<T>, &BinaryMask)]) -> Result<Vec<T>> {
    let Some((first, _)) = maps.first() else {
        return Err(Error::EmptyMask);
    };
    let r = first.stains();
    let mut out = Vec::with_capacity(r);
    for s in 0..r {
        let mut vals = Vec::new();
        for (map, mask) in maps {
            check_dims(*map, *mask, "mask vs concentration map")?;
            if map.stains() != r {
                return Err(Error::DimensionMismatch("stain counts differ".into()));
            }
            vals.extend(
                mask.data()
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m)
                    .map(|(i, _)| map.get(i, s)),
            );
        }
        let p = percentile_nearest_rank(&mut vals, PSEUDO_MAX_PERCENTILE).ok_or(Error::EmptyMask)?;
        out.push(if p > T::zero() { p } else { T::one() });
    }
    Ok(out)
}

/// Divides each stain by its 99th percentile over the mask and records the divisor.
pub fn normalize_p99<T: Scalar>(cmap: &ConcentrationMap<T>, mask: &BinaryMask) -> Result<ConcentrationMap<T>> {
    let scale = pseudo_max(&[(cmap, mask)])?;
    cmap.rescaled(&scale)
}

/// Raw (unnormalized) Saffron densities of an HES tile.
pub fn saffron_raw<T: Scalar>(hes: &RgbImage, w_hes: &StainMatrix<T>) -> Result<ConcentrationMap<T>> {
    let idx = w_hes.position(SAFFRON).ok_or(Error::NoSaffronColumn)?;
    let od = rgb_to_od::<T>(hes, w_hes.illuminant())?;
    Ok(solve_concentrations(&od, w_hes, SolveMode::Pinv)?.channel(idx))
}

/// Ground-truth Saffron map of an HES tile: deconvolve, keep the Saffron channel,
/// then normalize by its 99th percentile over `mask`.
pub fn extract_saffron<T: Scalar>(
    hes: &RgbImage,
    w_hes: &StainMatrix<T>,
    mask: &BinaryMask,
) -> Result<ConcentrationMap<T>> {
    check_dims(hes, mask, "mask vs image")?;
    normalize_p99(&saffron_raw(hes, w_hes)?, mask)
}
