use crate::error::{Error, Result};
use crate::imaging::OdImage;
use crate::registration::affine::AffineTransform;
use crate::registration::{normalized_correlation, sample, RegistrationResult};
use crate::scalar::Scalar;

/// Relative SSD decrease below which a level counts as converged.
pub const CONVERGENCE_RTOL: f64 = 1e-6;
const MIN_OVERLAP: f64 = 0.25;
const GRAD_STEP: f64 = 1e-2;
const ARMIJO: f64 = 1e-4;
const MIN_PYRAMID_SIDE: usize = 16;

/// Bilinear sample of `moving` that also rejects any footprint touching an
/// exact-zero pixel. Zero OD is pure white (the warp fill value, or background
/// with nothing to match), so it is left out of the cost rather than matched.
fn sample_data<T: Scalar>(img: &OdImage<T>, x: T, y: T) -> Option<T> {
    let v = sample(img, x, y)?;
    let (w, h) = (img.width(), img.height());
    let x0 = x.floor().to_usize()?.min(w.saturating_sub(2));
    let y0 = y.floor().to_usize()?.min(h.saturating_sub(2));
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let d = img.data();
    let zero = T::zero();
    if d[y0 * w + x0] == zero || d[y0 * w + x1] == zero || d[y1 * w + x0] == zero || d[y1 * w + x1] == zero {
        return None;
    }
    Some(v)
}

fn downsample<T: Scalar>(img: &OdImage<T>) -> OdImage<T> {
    let (w, h) = (img.width() / 2, img.height() / 2);
    let quarter = T::lit(0.25);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = img.get(2 * x, 2 * y, 0)
                + img.get(2 * x + 1, 2 * y, 0)
                + img.get(2 * x, 2 * y + 1, 0)
                + img.get(2 * x + 1, 2 * y + 1, 0);
            out.push(s * quarter);
        }
    }
    OdImage::from_raw(w, h, 1, out)
}

/// Fixed-to-moving sampling map `G(x) = A (x − c) + c + t`, with the linear part
/// scaled by the half-extent so all six parameters move corners by about one
/// pixel per unit.
struct Params<T> {
    c: (T, T),
    radius: T,
}

impl<T: Scalar> Params<T> {
    fn params_to_map(&self, p: &[T; 6]) -> AffineTransform<T> {
        let a = T::one() + p[0] / self.radius;
        let b = p[1] / self.radius;
        let c = p[2] / self.radius;
        let d = T::one() + p[3] / self.radius;
        let (cx, cy) = self.c;
        AffineTransform::from_coeffs([a, b, cx + p[4] - a * cx - b * cy, c, d, cy + p[5] - c * cx - d * cy])
    }

    fn map_to_params(&self, g: &AffineTransform<T>) -> [T; 6] {
        let m = g.coeffs();
        let (cx, cy) = self.c;
        let tx = m[0] * cx + m[1] * cy + m[2] - cx;
        let ty = m[3] * cx + m[4] * cy + m[5] - cy;
        [
            (m[0] - T::one()) * self.radius,
            m[1] * self.radius,
            m[3] * self.radius,
            (m[4] - T::one()) * self.radius,
            tx,
            ty,
        ]
    }
}

struct Level<'a, T> {
    fixed: &'a OdImage<T>,
    moving: &'a OdImage<T>,
    params: Params<T>,
}

impl<T: Scalar> Level<'_, T> {
    /// Mean squared difference over the overlap; infinite when the overlap is
    /// under a quarter of the fixed image or the map leaves the determinant band.
    fn ssd(&self, p: &[T; 6]) -> T {
        let g = self.params.params_to_map(p);
        let det = g.det();
        // g is the inverse of the registration transform
        if !(det >= T::lit(1.0 / super::DET_MAX) && det <= T::lit(1.0 / super::DET_MIN)) {
            return T::infinity();
        }
        let (w, h) = (self.fixed.width(), self.fixed.height());
        let mut sum = T::zero();
        let mut n = 0usize;
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = g.apply(T::from_usize_lossy(x), T::from_usize_lossy(y));
                if let Some(m) = sample_data(self.moving, sx, sy) {
                    let d = self.fixed.get(x, y, 0) - m;
                    sum = sum + d * d;
                    n += 1;
                }
            }
        }
        if (n as f64) < MIN_OVERLAP * (w * h) as f64 {
            return T::infinity();
        }
        sum / T::from_usize_lossy(n)
    }

    fn gradient(&self, p: &[T; 6]) -> [T; 6] {
        let h = T::lit(GRAD_STEP);
        let mut g = [T::zero(); 6];
        for i in 0..6 {
            let mut hi = *p;
            let mut lo = *p;
            hi[i] = hi[i] + h;
            lo[i] = lo[i] - h;
            let (fh, fl) = (self.ssd(&hi), self.ssd(&lo));
            g[i] = if fh.is_finite() && fl.is_finite() { (fh - fl) / (h + h) } else { T::zero() };
        }
        g
    }

    /// Steepest descent with Armijo backtracking. Returns the final parameters,
    /// the SSD trace of accepted steps, iterations used and whether it converged.
    fn descend(&self, mut p: [T; 6], max_iters: usize) -> ([T; 6], Vec<T>, usize, bool) {
        let mut f = self.ssd(&p);
        let mut trace = vec![f];
        if !f.is_finite() {
            return (p, trace, 0, false);
        }
        let mut step = T::one();
        let mut iters = 0;
        let mut converged = false;
        while iters < max_iters {
            iters += 1;
            let g = self.gradient(&p);
            let gnorm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
            if !(gnorm > T::zero()) {
                converged = true;
                break;
            }
            step = (step * T::lit(2.0)).min(T::lit(4.0));
            let mut accepted = None;
            while step > T::lit(1e-7) {
                let cand: [T; 6] = std::array::from_fn(|i| p[i] - step * g[i] / gnorm);
                let fc = self.ssd(&cand);
                if fc.is_finite() && fc <= f - T::lit(ARMIJO) * step * gnorm {
                    accepted = Some((cand, fc));
                    break;
                }
                step = step / T::lit(2.0);
            }
            let Some((cand, fc)) = accepted else {
                converged = true;
                break;
            };
            let rel = if f > T::zero() { (f - fc) / f } else { T::zero() };
            p = cand;
            f = fc;
            trace.push(f);
            if rel < T::lit(CONVERGENCE_RTOL) {
                converged = true;
                break;
            }
        }
        (p, trace, iters, converged)
    }
}

/// Coarse-to-fine affine refinement (factor 2 per level) minimizing the mean
/// squared difference between `fixed` and `moving` resampled through the
/// transform, starting from `init` (moving → fixed).
///
/// `converged` is false when the finest level hits `max_iters` or the initial
/// transform is outside the determinant band; the best iterate is returned
/// either way.
pub fn refine_affine<T: Scalar>(
    fixed: &OdImage<T>,
    moving: &OdImage<T>,
    init: &AffineTransform<T>,
    levels: usize,
    max_iters: usize,
) -> Result<RegistrationResult<T>> {
    if fixed.channels() != 1 || moving.channels() != 1 {
        return Err(Error::ChannelCount { expected: 1, actual: fixed.channels().max(moving.channels()) });
    }
    if levels == 0 || max_iters == 0 {
        return Err(Error::InvalidArgument("levels and max_iters must be >= 1".into()));
    }
    if !init.within_det_bound() {
        return Ok(RegistrationResult {
            transform: *init,
            score: normalized_correlation(fixed, moving, init),
            converged: false,
            iterations: Vec::new(),
            ssd_trace: Vec::new(),
        });
    }

    let mut fixed_pyr = vec![fixed.clone()];
    let mut moving_pyr = vec![moving.clone()];
    while fixed_pyr.len() < levels {
        let (f, m) = (fixed_pyr.last().unwrap(), moving_pyr.last().unwrap());
        if f.width().min(f.height()) / 2 < MIN_PYRAMID_SIDE || m.width().min(m.height()) / 2 < MIN_PYRAMID_SIDE {
            break;
        }
        let (f, m) = (downsample(f), downsample(m));
        fixed_pyr.push(f);
        moving_pyr.push(m);
    }

    let mut transform = *init;
    let mut iterations = Vec::new();
    let mut traces = Vec::new();
    let mut converged = false;
    for l in (0..fixed_pyr.len()).rev() {
        let factor = T::lit((1u64 << l) as f64);
        let (f, m) = (&fixed_pyr[l], &moving_pyr[l]);
        let g = transform.at_scale(factor).inverse().expect("transform within det band");
        let level = Level {
            fixed: f,
            moving: m,
            params: Params {
                c: (T::from_usize_lossy(f.width() - 1) / T::lit(2.0), T::from_usize_lossy(f.height() - 1) / T::lit(2.0)),
                radius: T::from_usize_lossy(f.width().max(f.height())) / T::lit(2.0),
            },
        };
        let (p, trace, iters, ok) = level.descend(level.params.map_to_params(&g), max_iters);
        let refined = level.params.params_to_map(&p).inverse().expect("det band excludes singular maps");
        transform = refined.at_scale(T::one() / factor);
        iterations.push(iters);
        traces.push(trace);
        converged = ok;
    }

    Ok(RegistrationResult {
        transform,
        score: normalized_correlation(fixed, moving, &transform),
        converged,
        iterations,
        ssd_trace: traces,
    })
}
