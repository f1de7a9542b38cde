use crate::error::{Error, Result};
use crate::imaging::OdImage;
use crate::registration::affine::AffineTransform;
use crate::registration::phase::phase_correlate;
use crate::registration::warp::{warp_affine, Interpolation};
use crate::registration::{normalized_correlation, RegistrationResult};
use crate::scalar::Scalar;

/// Exhaustive rotation search over `[-angle_range, angle_range]` degrees in
/// `angle_step` increments; each candidate rotation of `moving` about its center
/// is phase-correlated against `fixed` and the highest peak wins. Smaller
/// rotations win ties.
pub fn estimate_rigid<T: Scalar>(
    fixed: &OdImage<T>,
    moving: &OdImage<T>,
    angle_range: T,
    angle_step: T,
) -> Result<RegistrationResult<T>> {
    if !(angle_step > T::zero()) || !(angle_range >= T::zero()) {
        return Err(Error::InvalidArgument("angle_step must be > 0 and angle_range >= 0".into()));
    }
    let steps = (angle_range / angle_step + T::lit(1e-9)).floor().to_i64().unwrap_or(0);
    let cx = T::from_usize_lossy(moving.width() - 1) / T::lit(2.0);
    let cy = T::from_usize_lossy(moving.height() - 1) / T::lit(2.0);

    let mut best: Option<(T, AffineTransform<T>)> = None;
    let order = std::iter::once(0).chain((1..=steps).flat_map(|k| [k, -k]));
    for k in order {
        let angle = (angle_step * T::lit(k as f64)).to_radians();
        let rot = AffineTransform::rotation_about(angle, cx, cy);
        let candidate = if k == 0 { moving.clone() } else { warp_affine(moving, &rot, Interpolation::Bilinear) };
        let shift = phase_correlate(fixed, &candidate, true)?;
        if best.as_ref().is_none_or(|(s, _)| shift.score > *s) {
            let back = AffineTransform::translation(-T::lit(shift.dx as f64), -T::lit(shift.dy as f64));
            best = Some((shift.score, back.compose(&rot)));
        }
    }
    let (_, transform) = best.expect("at least one angle is evaluated");
    Ok(RegistrationResult {
        transform,
        score: normalized_correlation(fixed, moving, &transform),
        converged: true,
        iterations: Vec::new(),
        ssd_trace: Vec::new(),
    })
}
