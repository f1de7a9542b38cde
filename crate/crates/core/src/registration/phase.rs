use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::imaging::OdImage;
use crate::scalar::Scalar;

/// Integer shift of `moving` relative to `fixed`: `moving(x, y) ≈ fixed(x − dx, y − dy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Translation<T> {
    pub dx: i64,
    pub dy: i64,
    /// Height of the phase-correlation peak; 1 for a perfect circular match.
    pub score: T,
}

fn fft2<T: Scalar>(planner: &mut FftPlanner<T>, buf: &mut [Complex<T>], w: usize, h: usize, inverse: bool) {
    let row = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for r in buf.chunks_exact_mut(w) {
        row.process(r);
    }
    let col = if inverse { planner.plan_fft_inverse(h) } else { planner.plan_fft_forward(h) };
    let mut tmp = vec![Complex::new(T::zero(), T::zero()); h];
    for x in 0..w {
        for y in 0..h {
            tmp[y] = buf[y * w + x];
        }
        col.process(&mut tmp);
        for y in 0..h {
            buf[y * w + x] = tmp[y];
        }
    }
}

fn has_signal<T: Scalar>(img: &OdImage<T>) -> bool {
    let d = img.data();
    let n = T::from_usize_lossy(d.len());
    let mean = d.iter().copied().sum::<T>() / n;
    let var = d.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let scale = d.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    var > (scale * T::lit(1e-6)).powi(2) && var > T::zero()
}

fn hann<T: Scalar>(n: usize, i: usize) -> T {
    if n < 2 {
        return T::one();
    }
    let x = T::lit(2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64);
    T::lit(0.5) * (T::one() - x.cos())
}

pub(crate) fn phase_correlate<T: Scalar>(
    fixed: &OdImage<T>,
    moving: &OdImage<T>,
    window: bool,
) -> Result<Translation<T>> {
    if fixed.channels() != 1 || moving.channels() != 1 {
        return Err(Error::ChannelCount { expected: 1, actual: fixed.channels().max(moving.channels()) });
    }
    let (w, h) = (fixed.width(), fixed.height());
    if moving.width() != w || moving.height() != h {
        return Err(Error::DimensionMismatch("phase correlation needs equal sizes".into()));
    }
    if w < 8 || h < 8 {
        return Err(Error::InvalidArgument("phase correlation needs at least 8x8 pixels".into()));
    }
    if !has_signal(fixed) || !has_signal(moving) {
        return Err(Error::NoSignal);
    }
    let prepare = |img: &OdImage<T>| -> Vec<Complex<T>> {
        let d = img.data();
        let mean = if window { d.iter().copied().sum::<T>() / T::from_usize_lossy(d.len()) } else { T::zero() };
        (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .map(|(x, y)| {
                let mut v = d[y * w + x] - mean;
                if window {
                    v = v * hann::<T>(w, x) * hann::<T>(h, y);
                }
                Complex::new(v, T::zero())
            })
            .collect()
    };
    let mut planner = FftPlanner::new();
    let mut f = prepare(fixed);
    let mut m = prepare(moving);
    fft2(&mut planner, &mut f, w, h, false);
    fft2(&mut planner, &mut m, w, h, false);

    let peak_mag = f.iter().chain(&m).fold(T::zero(), |acc, c| acc.max(c.norm()));
    let tiny = peak_mag * peak_mag * T::epsilon() * T::lit(1e3);
    let mut r: Vec<Complex<T>> = m
        .iter()
        .zip(&f)
        .map(|(a, b)| {
            let c = a * b.conj();
            let n = c.norm();
            if n > tiny && n > T::zero() {
                c / n
            } else {
                Complex::new(T::zero(), T::zero())
            }
        })
        .collect();
    fft2(&mut planner, &mut r, w, h, true);

    let norm = T::from_usize_lossy(w * h);
    let (mut best, mut best_i) = (T::neg_infinity(), 0);
    for (i, c) in r.iter().enumerate() {
        if c.re > best {
            best = c.re;
            best_i = i;
        }
    }
    let (px, py) = ((best_i % w) as i64, (best_i / w) as i64);
    let wrap = |p: i64, n: usize| if p > n as i64 / 2 { p - n as i64 } else { p };
    Ok(Translation { dx: wrap(px, w), dy: wrap(py, h), score: (best / norm).min(T::one()) })
}

/// Integer translation between two equally sized grayscale images by phase
/// correlation of the mean-removed, Hann-windowed images.
pub fn estimate_translation<T: Scalar>(fixed: &OdImage<T>, moving: &OdImage<T>) -> Result<Translation<T>> {
    phase_correlate(fixed, moving, true)
}
