//! Agreement metrics between predicted and reference Saffron maps.

use crate::error::{Error, Result};
use crate::imaging::{check_dims, BinaryMask, ConcentrationMap};
use crate::scalar::Scalar;

/// Reference concentration above which a pixel belongs to the Saffron region.
pub const SAFFRON_REGION_THRESHOLD: f64 = 0.05;
pub const MDICE_STEPS: usize = 20;

/// Thresholds `k/20` for `k = 0..19`.
pub fn mdice_thresholds() -> [f64; MDICE_STEPS] {
    std::array::from_fn(|k| k as f64 / MDICE_STEPS as f64)
}

fn check_pair<T: Scalar>(pred: &ConcentrationMap<T>, gt: &ConcentrationMap<T>) -> Result<()> {
    check_dims(pred, gt, "prediction vs ground truth")?;
    if pred.stains() != 1 || gt.stains() != 1 {
        return Err(Error::DimensionMismatch("metrics need single-stain maps".into()));
    }
    Ok(())
}

pub fn mae<T: Scalar>(pred: &ConcentrationMap<T>, gt: &ConcentrationMap<T>, mask: Option<&BinaryMask>) -> Result<T> {
    check_pair(pred, gt)?;
    let (p, g) = (pred.data(), gt.data());
    match mask {
        None => {
            if p.is_empty() {
                return Err(Error::EmptyMask);
            }
            Ok(p.iter().zip(g).map(|(&a, &b)| (a - b).abs()).sum::<T>() / T::from_usize_lossy(p.len()))
        }
        Some(m) => {
            check_dims(pred, m, "prediction vs mask")?;
            let (sum, n) = abs_err_where(p, g, |i| m.data()[i]);
            if n == 0 {
                return Err(Error::EmptyMask);
            }
            Ok(sum / T::from_usize_lossy(n))
        }
    }
}

fn abs_err_where<T: Scalar>(p: &[T], g: &[T], keep: impl Fn(usize) -> bool) -> (T, usize) {
    let mut sum = T::zero();
    let mut n = 0;
    for i in 0..p.len() {
        if keep(i) {
            sum = sum + (p[i] - g[i]).abs();
            n += 1;
        }
    }
    (sum, n)
}

/// MAE inside `gt > 0.05` and outside it; `None` for an empty region.
pub fn mae_split<T: Scalar>(pred: &ConcentrationMap<T>, gt: &ConcentrationMap<T>) -> Result<(Option<T>, Option<T>)> {
    let s = split_sums(pred, gt)?;
    Ok((s.mean_s(), s.mean_b()))
}

#[derive(Clone, Copy, Debug, Default)]
struct SplitSums<T> {
    sum_s: T,
    n_s: usize,
    sum_b: T,
    n_b: usize,
}

impl<T: Scalar> SplitSums<T> {
    fn mean_s(&self) -> Option<T> {
        (self.n_s > 0).then(|| self.sum_s / T::from_usize_lossy(self.n_s))
    }

    fn mean_b(&self) -> Option<T> {
        (self.n_b > 0).then(|| self.sum_b / T::from_usize_lossy(self.n_b))
    }
}

fn split_sums<T: Scalar>(pred: &ConcentrationMap<T>, gt: &ConcentrationMap<T>) -> Result<SplitSums<T>> {
    check_pair(pred, gt)?;
    let t = T::lit(SAFFRON_REGION_THRESHOLD);
    let (p, g) = (pred.data(), gt.data());
    let (sum_s, n_s) = abs_err_where(p, g, |i| g[i] > t);
    let (sum_b, n_b) = abs_err_where(p, g, |i| g[i] <= t);
    Ok(SplitSums { sum_s, n_s, sum_b, n_b })
}

/// Overlap counts `(|A∩B|, |A|, |B|)` for masks `value > t`.
fn dice_counts<T: Scalar>(p: &[T], g: &[T], t: T) -> (usize, usize, usize) {
    let (mut both, mut a, mut b) = (0, 0, 0);
    for (&x, &y) in p.iter().zip(g) {
        let (ma, mb) = (x > t, y > t);
        a += ma as usize;
        b += mb as usize;
        both += (ma && mb) as usize;
    }
    (both, a, b)
}

fn dice_from_counts(both: usize, a: usize, b: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    }
}

pub fn dice_at<T: Scalar>(pred: &ConcentrationMap<T>, gt: &ConcentrationMap<T>, t: T) -> Result<T> {
    check_pair(pred, gt)?;
    if !(t >= T::zero()) {
        return Err(Error::InvalidArgument(format!("threshold {t} must be >= 0")));
    }
    let (both, a, b) = dice_counts(pred.data(), gt.data(), t);
    Ok(T::lit(dice_from_counts(both, a, b)))
}

pub fn mdice<T: Scalar>(pred: &ConcentrationMap<T>, gt: &ConcentrationMap<T>) -> Result<T> {
    check_pair(pred, gt)?;
    let sum: f64 = mdice_thresholds()
        .iter()
        .map(|&t| {
            let (both, a, b) = dice_counts(pred.data(), gt.data(), T::lit(t));
            dice_from_counts(both, a, b)
        })
        .sum();
    Ok(T::lit(sum / MDICE_STEPS as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport<T> {
    pub mae: T,
    pub mae_s: Option<T>,
    pub mae_b: Option<T>,
    pub mdice: T,
    pub dice_s: T,
    pub n_pixels: usize,
}

impl<T: Scalar> MetricReport<T> {
    /// Metrics over the union of all pixels of all pairs. Dice counts are pooled
    /// before dividing.
    pub fn pooled(pairs: &[(&ConcentrationMap<T>, &ConcentrationMap<T>)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("no prediction/ground-truth pairs".into()));
        }
        let mut abs = T::zero();
        let mut n = 0usize;
        let mut split = SplitSums::<T>::default();
        let thresholds = mdice_thresholds();
        let mut counts = [(0usize, 0usize, 0usize); MDICE_STEPS];
        for (pred, gt) in pairs {
            let s = split_sums(pred, gt)?;
            split.sum_s = split.sum_s + s.sum_s;
            split.n_s += s.n_s;
            split.sum_b = split.sum_b + s.sum_b;
            split.n_b += s.n_b;
            abs = abs + s.sum_s + s.sum_b;
            n += s.n_s + s.n_b;
            for (c, &t) in counts.iter_mut().zip(&thresholds) {
                let (both, a, b) = dice_counts(pred.data(), gt.data(), T::lit(t));
                c.0 += both;
                c.1 += a;
                c.2 += b;
            }
        }
        if n == 0 {
            return Err(Error::EmptyMask);
        }
        let dices: Vec<f64> = counts.iter().map(|&(both, a, b)| dice_from_counts(both, a, b)).collect();
        Ok(Self {
            mae: abs / T::from_usize_lossy(n),
            mae_s: split.mean_s(),
            mae_b: split.mean_b(),
            mdice: T::lit(dices.iter().sum::<f64>() / MDICE_STEPS as f64),
            dice_s: T::lit(dices[0]),
            n_pixels: n,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r2: T,
    /// `(mean_pred, mean_gt)` per region.
    pub points: Vec<(T, T)>,
}

fn mean<T: Scalar>(v: &[T]) -> T {
    if v.is_empty() {
        T::zero()
    } else {
        v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len())
    }
}

/// Least squares of mean reference concentration on mean prediction across regions.
pub fn mean_concentration_regression<T: Scalar>(
    regions: &[(&ConcentrationMap<T>, &ConcentrationMap<T>)],
) -> Result<RegressionFit<T>> {
    let mut points = Vec::with_capacity(regions.len());
    for (pred, gt) in regions {
        check_pair(pred, gt)?;
        points.push((mean(pred.data()), mean(gt.data())));
    }
    fit_points(points)
}

pub fn fit_points<T: Scalar>(points: Vec<(T, T)>) -> Result<RegressionFit<T>> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("regression needs at least two regions".into()));
    }
    let n = T::from_usize_lossy(points.len());
    let mx = points.iter().map(|p| p.0).sum::<T>() / n;
    let my = points.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: T = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= T::zero() {
        return Err(Error::DegenerateRegression);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: T = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: T = points
        .iter()
        .map(|p| {
            let r = p.1 - (slope * p.0 + intercept);
            r * r
        })
        .sum();
    let r2 = if ss_tot > T::zero() { T::one() - ss_res / ss_tot } else { T::one() };
    Ok(RegressionFit { slope, intercept, r2, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(v: &[f64]) -> ConcentrationMap<f64> {
        ConcentrationMap::unscaled(v.len(), 1, 1, v.to_vec()).unwrap()
    }

    #[test]
    fn mae_cases() {
        let g = map(&[0.0, 1.0]);
        assert_eq!(mae(&g, &g, None).unwrap(), 0.0);
        assert_eq!(mae(&map(&[0.5, 0.5]), &g, None).unwrap(), 0.5);
        let shifted = map(&[0.1, 1.1]);
        assert!((mae(&shifted, &g, None).unwrap() - 0.1).abs() < 1e-15);
        let empty = BinaryMask::full(2, 1, false);
        assert!(matches!(mae(&g, &g, Some(&empty)), Err(Error::EmptyMask)));
        let half = BinaryMask::new(2, 1, vec![false, true]).unwrap();
        assert_eq!(mae(&map(&[0.5, 0.5]), &g, Some(&half)).unwrap(), 0.5);
    }

    #[test]
    fn split_cases() {
        let (s, b) = mae_split(&map(&[0.3, 0.1]), &map(&[0.0, 0.0])).unwrap();
        assert!(s.is_none());
        assert!((b.unwrap() - 0.2).abs() < 1e-15);
        let (s, b) = mae_split(&map(&[0.1, 0.1]), &map(&[0.2, 0.0])).unwrap();
        assert!((s.unwrap() - 0.1).abs() < 1e-15);
        assert!((b.unwrap() - 0.1).abs() < 1e-15);
        let (s, b) = mae_split(&map(&[0.05]), &map(&[0.05])).unwrap();
        assert!(s.is_none());
        assert_eq!(b, Some(0.0));
    }

    #[test]
    fn dice_cases() {
        let a = map(&[1.0, 1.0, 1.0, 0.0, 0.0]);
        let b = map(&[1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(dice_at(&a, &b, 0.5).unwrap(), 0.4);
        assert_eq!(dice_at(&a, &map(&[0.0, 0.0, 0.0, 1.0, 1.0]), 0.5).unwrap(), 0.0);
        let z = map(&[0.0; 5]);
        assert_eq!(dice_at(&z, &z, 0.0).unwrap(), 1.0);
        assert_eq!(mdice(&a, &a).unwrap(), 1.0);
        assert!(dice_at(&a, &b, -0.1).is_err());
    }

    #[test]
    fn regression_cases() {
        let fit = fit_points(vec![(0.0, 0.0), (1.0, 2.0), (2.0, 4.0)]).unwrap();
        assert_eq!((fit.slope, fit.intercept, fit.r2), (2.0, 0.0, 1.0));
        let fit = fit_points(vec![(0.1f64, 0.1), (0.4, 0.4), (0.9, 0.9)]).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12 && fit.intercept.abs() < 1e-12 && (fit.r2 - 1.0).abs() < 1e-12);
        assert!(matches!(fit_points(vec![(1.0, 0.0), (1.0, 2.0)]), Err(Error::DegenerateRegression)));
        assert!(fit_points(vec![(1.0, 0.0)]).is_err());
    }

    #[test]
    fn pooled_single_pair_matches_direct() {
        let p = map(&[0.0, 0.2, 0.6, 0.9, 0.03]);
        let g = map(&[0.1, 0.0, 0.7, 0.5, 0.04]);
        let r = MetricReport::pooled(&[(&p, &g)]).unwrap();
        assert_eq!(r.mae, mae(&p, &g, None).unwrap());
        assert_eq!(r.mdice, mdice(&p, &g).unwrap());
        assert_eq!(r.dice_s, dice_at(&p, &g, 0.0).unwrap());
        assert_eq!(r.n_pixels, 5);
    }

    proptest! {
        #[test]
        fn dice_bounded_and_symmetric(v in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..50), t in 0.0f64..1.0) {
            let (p, g): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let (p, g) = (map(&p), map(&g));
            let d = dice_at(&p, &g, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, dice_at(&g, &p, t).unwrap());
        }

        #[test]
        fn split_partitions_pixels(v in proptest::collection::vec((0.0f64..0.2, 0.0f64..0.2), 1..50)) {
            let (p, g): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let s = split_sums(&map(&p), &map(&g)).unwrap();
            prop_assert_eq!(s.n_s + s.n_b, p.len());
        }
    }
}
