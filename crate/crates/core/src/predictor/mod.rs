//! Saffron-from-HE prediction: the predictor interface, window features, the
//! class-weighted MSE objective and a weighted least-squares linear baseline.

mod features;
mod linear;
mod loss;

pub use features::{extract_features, FeatureMap, DEFAULT_WINDOW, FEATURE_COUNT, FEATURE_NAMES};
pub use linear::{fit_linear_baseline, predict, LinearSaffronModel, RIDGE_PENALTY};
pub use loss::{compute_class_weights, wmse_loss, ClassWeights, WEIGHT_FLOOR};

use crate::error::Result;
use crate::imaging::{ConcentrationMap, RgbImage};

/// Anything that maps an HE tile to a non-negative single-stain Saffron map of
/// the same size. Trained networks can implement this, or exchange maps through
/// CMAP files.
pub trait SaffronPredictor<T> {
    fn predict(&self, he: &RgbImage) -> Result<ConcentrationMap<T>>;
}
