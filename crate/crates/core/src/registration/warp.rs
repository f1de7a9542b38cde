use crate::imaging::{OdImage, RgbImage};
use crate::registration::affine::AffineTransform;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interpolation {
    Nearest,
    Bilinear,
}

/// Images that can be resampled through an affine map.
pub trait Warp: Sized {
    fn warp<T: Scalar>(&self, t: &AffineTransform<T>, interpolation: Interpolation) -> Self;
}

/// Resamples `img` so that output pixel `p` takes the value of `img` at `t⁻¹(p)`:
/// `t` maps source coordinates to output coordinates. Samples falling outside the
/// source are white for RGB and 0 for optical density.
///
/// Panics if `t` is singular.
pub fn warp_affine<I: Warp, T: Scalar>(img: &I, t: &AffineTransform<T>, interpolation: Interpolation) -> I {
    img.warp(t, interpolation)
}

enum Sample {
    Outside,
    At(usize),
    Mix([(usize, f64); 4]),
}

/// Source lookup shared by every pixel type.
fn locate(sx: f64, sy: f64, w: usize, h: usize, interpolation: Interpolation) -> Sample {
    const EPS: f64 = 1e-9;
    match interpolation {
        Interpolation::Nearest => {
            let (x, y) = (sx.round(), sy.round());
            if x < 0.0 || y < 0.0 || x > (w - 1) as f64 || y > (h - 1) as f64 {
                Sample::Outside
            } else {
                Sample::At(y as usize * w + x as usize)
            }
        }
        Interpolation::Bilinear => {
            if sx < -EPS || sy < -EPS || sx > (w - 1) as f64 + EPS || sy > (h - 1) as f64 + EPS {
                return Sample::Outside;
            }
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            let x0 = (sx.floor() as usize).min(w.saturating_sub(2));
            let y0 = (sy.floor() as usize).min(h.saturating_sub(2));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            if fx == 0.0 && fy == 0.0 {
                return Sample::At(y0 * w + x0);
            }
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            Sample::Mix([
                (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
                (y0 * w + x1, fx * (1.0 - fy)),
                (y1 * w + x0, (1.0 - fx) * fy),
                (y1 * w + x1, fx * fy),
            ])
        }
    }
}

fn inverse_f64<T: Scalar>(t: &AffineTransform<T>) -> AffineTransform<f64> {
    t.cast::<f64>().inverse().expect("warp transform must be invertible")
}

impl Warp for RgbImage {
    fn warp<T: Scalar>(&self, t: &AffineTransform<T>, interpolation: Interpolation) -> Self {
        let inv = inverse_f64(t);
        let (w, h) = (self.width(), self.height());
        let src = self.data();
        let mut out = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                match locate(sx, sy, w, h, interpolation) {
                    Sample::Outside => out.extend([255u8; 3]),
                    Sample::At(i) => out.extend_from_slice(&src[i * 3..i * 3 + 3]),
                    Sample::Mix(taps) => {
                        for c in 0..3 {
                            let v: f64 = taps.iter().map(|&(i, wt)| wt * src[i * 3 + c] as f64).sum();
                            out.push(v.round().clamp(0.0, 255.0) as u8);
                        }
                    }
                }
            }
        }
        RgbImage::new(w, h, out).unwrap()
    }
}

impl<S: Scalar> Warp for OdImage<S> {
    fn warp<T: Scalar>(&self, t: &AffineTransform<T>, interpolation: Interpolation) -> Self {
        let inv = inverse_f64(t);
        let (w, h, ch) = (self.width(), self.height(), self.channels());
        let src = self.data();
        let mut out = Vec::with_capacity(w * h * ch);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                match locate(sx, sy, w, h, interpolation) {
                    Sample::Outside => out.extend(std::iter::repeat_n(S::zero(), ch)),
                    Sample::At(i) => out.extend_from_slice(&src[i * ch..(i + 1) * ch]),
                    Sample::Mix(taps) => {
                        for c in 0..ch {
                            let v = taps
                                .iter()
                                .fold(S::zero(), |acc, &(i, wt)| acc + S::lit(wt) * src[i * ch + c]);
                            out.push(v);
                        }
                    }
                }
            }
        }
        OdImage::from_raw(w, h, ch, out)
    }
}
