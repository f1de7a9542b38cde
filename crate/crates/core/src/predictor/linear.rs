use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{check_dims, ConcentrationMap, RgbImage, DEFAULT_ILLUMINANT};
use crate::linalg::solve_in_place;
use crate::predictor::features::{extract_features, FeatureMap, FEATURE_COUNT, FEATURE_NAMES};
use crate::predictor::loss::ClassWeights;
use crate::predictor::SaffronPredictor;
use crate::scalar::Scalar;

pub const RIDGE_PENALTY: f64 = 1e-6;

/// Pixel-wise linear Saffron regressor over window features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSaffronModel<T> {
    pub window: usize,
    pub features: Vec<String>,
    /// One weight per feature.
    pub coefficients: Vec<T>,
    pub bias: T,
    pub illuminant: u32,
    /// Saffron scale of the training targets, stamped on every prediction.
    pub target_scale: T,
    /// Set when the normal equations needed the ridge fallback.
    pub ridge: bool,
}

impl<T: Scalar> LinearSaffronModel<T> {
    pub fn zero(window: usize) -> Self {
        Self {
            window,
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            coefficients: vec![T::zero(); FEATURE_COUNT],
            bias: T::zero(),
            illuminant: DEFAULT_ILLUMINANT,
            target_scale: T::one(),
            ridge: false,
        }
    }

    fn check_spec(&self) -> Result<()> {
        let expected: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        if self.features != expected || self.coefficients.len() != FEATURE_COUNT {
            return Err(Error::FeatureMismatch(format!(
                "model has features {:?} with {} coefficients",
                self.features,
                self.coefficients.len()
            )));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::FeatureMismatch(format!("window {} is even", self.window)));
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, x: &[T]) -> T {
        self.coefficients.iter().zip(x).fold(self.bias, |acc, (&c, &v)| acc + c * v)
    }
}

impl<T: Scalar> SaffronPredictor<T> for LinearSaffronModel<T> {
    fn predict(&self, he: &RgbImage) -> Result<ConcentrationMap<T>> {
        predict(self, he)
    }
}

/// Weighted least squares on `[features, 1]` over every pixel of every pair.
pub fn fit_linear_baseline<T: Scalar>(
    pairs: &[(RgbImage, ConcentrationMap<T>)],
    weights: &ClassWeights<T>,
    window: usize,
) -> Result<LinearSaffronModel<T>> {
    let Some((_, first)) = pairs.first() else {
        return Err(Error::InvalidArgument("no training pairs".into()));
    };
    let target_scale = first.scale().first().copied().unwrap_or(T::one());
    let n = FEATURE_COUNT + 1;
    let mut ata = vec![T::zero(); n * n];
    let mut atb = vec![T::zero(); n];
    let illuminant = DEFAULT_ILLUMINANT;
    for (he, gt) in pairs {
        check_dims(he, gt, "HE tile vs ground truth")?;
        if gt.stains() != 1 {
            return Err(Error::DimensionMismatch("ground truth must be single-stain".into()));
        }
        let feats: FeatureMap<T> = extract_features(he, window, illuminant)?;
        let mut x = vec![T::one(); n];
        for i in 0..gt.len_pixels() {
            x[..FEATURE_COUNT].copy_from_slice(feats.pixel(i));
            let y = gt.data()[i];
            let w = weights.weight(y);
            for a in 0..n {
                let wa = w * x[a];
                atb[a] = atb[a] + wa * y;
                for b in a..n {
                    ata[a * n + b] = ata[a * n + b] + wa * x[b];
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            ata[a * n + b] = ata[b * n + a];
        }
    }

    let mut sol = atb.clone();
    let mut ridge = false;
    if !solve_in_place(&mut ata.clone(), &mut sol, n) {
        warn!("normal equations are singular; refitting with ridge penalty {RIDGE_PENALTY}");
        ridge = true;
        let mut reg = ata;
        let trace = (0..n).map(|i| reg[i * n + i]).sum::<T>() / T::from_usize_lossy(n);
        let lambda = T::lit(RIDGE_PENALTY) * trace.max(T::one());
        for i in 0..n {
            reg[i * n + i] = reg[i * n + i] + lambda;
        }
        sol = atb;
        if !solve_in_place(&mut reg, &mut sol, n) {
            sol = vec![T::zero(); n];
        }
    }
    Ok(LinearSaffronModel {
        window,
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        coefficients: sol[..FEATURE_COUNT].to_vec(),
        bias: sol[FEATURE_COUNT],
        illuminant,
        target_scale,
        ridge,
    })
}

/// Dot product plus bias per pixel, negatives clamped to zero (no upper clamp).
pub fn predict<T: Scalar>(model: &LinearSaffronModel<T>, he: &RgbImage) -> Result<ConcentrationMap<T>> {
    model.check_spec()?;
    let feats = extract_features::<T>(he, model.window, model.illuminant)?;
    let data = (0..he.len_pixels()).map(|i| model.eval(feats.pixel(i)).max(T::zero())).collect();
    ConcentrationMap::new(he.width(), he.height(), 1, data, vec![model.target_scale])
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    window: usize,
    features: Vec<String>,
    coefficients: Vec<f64>,
    bias: f64,
    illuminant: u32,
    target_scale: f64,
    #[serde(default)]
    ridge: bool,
}

impl<T: Scalar> LinearSaffronModel<T> {
    pub fn to_text(&self) -> String {
        let doc = ModelDoc {
            window: self.window,
            features: self.features.clone(),
            coefficients: self.coefficients.iter().map(|c| c.as_f64()).collect(),
            bias: self.bias.as_f64(),
            illuminant: self.illuminant,
            target_scale: self.target_scale.as_f64(),
            ridge: self.ridge,
        };
        toml::to_string(&doc).expect("model serializes")
    }

    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let doc: ModelDoc = toml::from_str(text).map_err(|e| e.to_string())?;
        let m = Self {
            window: doc.window,
            features: doc.features,
            coefficients: doc.coefficients.into_iter().map(T::lit).collect(),
            bias: T::lit(doc.bias),
            illuminant: doc.illuminant,
            target_scale: T::lit(doc.target_scale),
            ridge: doc.ridge,
        };
        m.check_spec().map_err(|e| e.to_string())?;
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&fs::read_to_string(path)?).map_err(|msg| Error::Parse { path: path.to_path_buf(), msg })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::loss::wmse_loss;

    fn tile(seed: u32) -> RgbImage {
        let data = (0..24 * 20u32)
            .flat_map(|i| {
                let v = (i * 7 + seed * 13) % 97;
                [(100 + v) as u8, (60 + (v * 3) % 150) as u8, (120 + (v * 5) % 120) as u8]
            })
            .collect();
        RgbImage::new(24, 20, data).unwrap()
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = LinearSaffronModel::<f64>::zero(3);
        assert!(predict(&m, &tile(1)).unwrap().data().iter().all(|&v| v == 0.0));
        let mut neg = m.clone();
        neg.bias = -5.0;
        neg.coefficients[0] = 0.5;
        assert!(predict(&neg, &tile(1)).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_targets_fit_zero() {
        let he = tile(2);
        let gt = ConcentrationMap::<f64>::zeros(24, 20, 1);
        let m = fit_linear_baseline(&[(he.clone(), gt)], &ClassWeights::uniform(), 3).unwrap();
        assert!(predict(&m, &he).unwrap().data().iter().all(|&v| v.abs() <= 1e-9));
    }

    #[test]
    fn duplicates_do_not_change_the_fit() {
        let he = tile(3);
        let gt_data: Vec<f64> = he.pixels().map(|p| (255.0 - p[1] as f64) / 400.0).collect();
        let gt = ConcentrationMap::unscaled(24, 20, 1, gt_data).unwrap();
        let w = ClassWeights { w_saffron: 0.6, w_background: 0.4, degenerate: false };
        let one = fit_linear_baseline(&[(he.clone(), gt.clone())], &w, 3).unwrap();
        let many = fit_linear_baseline(&vec![(he, gt); 4], &w, 3).unwrap();
        for (a, b) in one.coefficients.iter().zip(&many.coefficients) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
        assert!((one.bias - many.bias).abs() <= 1e-9);
    }

    #[test]
    fn fit_beats_zero_predictor() {
        let he = tile(4);
        let gt_data: Vec<f64> = he.pixels().map(|p| ((p[0] as f64 - 140.0) / 100.0).max(0.0)).collect();
        let gt = ConcentrationMap::unscaled(24, 20, 1, gt_data).unwrap();
        let w = ClassWeights { w_saffron: 0.6, w_background: 0.4, degenerate: false };
        let m = fit_linear_baseline(&[(he.clone(), gt.clone())], &w, 5).unwrap();
        let fitted = wmse_loss(&predict(&m, &he).unwrap(), &gt, &w).unwrap();
        let zero = wmse_loss(&ConcentrationMap::zeros(24, 20, 1), &gt, &w).unwrap();
        assert!(fitted <= zero);
    }

    #[test]
    fn model_text_roundtrip_and_mismatch() {
        let mut m = LinearSaffronModel::<f64>::zero(9);
        m.coefficients[2] = 0.125;
        m.target_scale = 0.3;
        let back = LinearSaffronModel::<f64>::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.features.pop();
        bad.coefficients.pop();
        assert!(LinearSaffronModel::<f64>::from_text(&bad.to_text()).is_err());
        assert!(matches!(predict(&bad, &tile(0)), Err(Error::FeatureMismatch(_))));
    }
}
