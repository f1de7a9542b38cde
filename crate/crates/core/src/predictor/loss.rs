use log::warn;

use crate::error::{Error, Result};
use crate::imaging::{check_dims, ConcentrationMap};
use crate::scalar::Scalar;

/// Stand-in for a zero class weight.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Per-class loss weights: each pixel is weighted by the share of the opposite class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassWeights<T> {
    pub w_saffron: T,
    pub w_background: T,
    /// Set when one class was absent and its weight was floored.
    pub degenerate: bool,
}

impl<T: Scalar> ClassWeights<T> {
    pub fn uniform() -> Self {
        Self { w_saffron: T::one(), w_background: T::one(), degenerate: false }
    }

    #[inline]
    pub fn weight(&self, gt: T) -> T {
        if gt > T::zero() {
            self.w_saffron
        } else {
            self.w_background
        }
    }
}

/// Class proportions over all training maps, with Saffron meaning `H_S > 0`.
pub fn compute_class_weights<T: Scalar>(training_maps: &[ConcentrationMap<T>]) -> Result<ClassWeights<T>> {
    if training_maps.is_empty() {
        return Err(Error::InvalidArgument("no training maps".into()));
    }
    let (mut pos, mut total) = (0usize, 0usize);
    for m in training_maps {
        if m.stains() != 1 {
            return Err(Error::DimensionMismatch("class weights need single-stain maps".into()));
        }
        pos += m.data().iter().filter(|&&v| v > T::zero()).count();
        total += m.data().len();
    }
    if total == 0 {
        return Err(Error::InvalidArgument("training maps have no pixels".into()));
    }
    let p_s = T::lit(pos as f64 / total as f64);
    let p_b = T::one() - p_s;
    let floor = T::lit(WEIGHT_FLOOR);
    let degenerate = pos == 0 || pos == total;
    if degenerate {
        warn!("all training pixels fall in one class; flooring the empty class weight at {WEIGHT_FLOOR}");
    }
    Ok(ClassWeights { w_saffron: p_b.max(floor), w_background: p_s.max(floor), degenerate })
}

/// Mean over pixels of `weight(gt) · (pred − gt)²`.
pub fn wmse_loss<T: Scalar>(pred: &ConcentrationMap<T>, gt: &ConcentrationMap<T>, w: &ClassWeights<T>) -> Result<T> {
    check_dims(pred, gt, "prediction vs ground truth")?;
    if pred.stains() != gt.stains() {
        return Err(Error::DimensionMismatch("stain counts differ".into()));
    }
    let n = pred.data().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let s: T = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| w.weight(g) * (p - g) * (p - g))
        .sum();
    Ok(s / T::from_usize_lossy(n))
}
