use crate::scalar::Scalar;

/// 2x3 affine map `[a b tx; c d ty]` taking moving-image coordinates to fixed-image
/// coordinates. Pixel centers sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform<T> {
    m: [T; 6],
}

pub const DET_MIN: f64 = 0.5;
pub const DET_MAX: f64 = 2.0;

impl<T: Scalar> AffineTransform<T> {
    pub fn from_coeffs(m: [T; 6]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        Self::from_coeffs([T::one(), T::zero(), T::zero(), T::zero(), T::one(), T::zero()])
    }

    pub fn translation(dx: T, dy: T) -> Self {
        Self::from_coeffs([T::one(), T::zero(), dx, T::zero(), T::one(), dy])
    }

    /// Counter-clockwise rotation (in image coordinates, y down) about `(cx, cy)`.
    pub fn rotation_about(angle_rad: T, cx: T, cy: T) -> Self {
        let (s, c) = angle_rad.sin_cos();
        Self::from_coeffs([c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy])
    }

    pub fn coeffs(&self) -> [T; 6] {
        self.m
    }

    #[inline]
    pub fn apply(&self, x: T, y: T) -> (T, T) {
        let m = &self.m;
        (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])
    }

    pub fn det(&self) -> T {
        self.m[0] * self.m[4] - self.m[1] * self.m[3]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let (a, b) = (&self.m, &other.m);
        Self::from_coeffs([
            a[0] * b[0] + a[1] * b[3],
            a[0] * b[1] + a[1] * b[4],
            a[0] * b[2] + a[1] * b[5] + a[2],
            a[3] * b[0] + a[4] * b[3],
            a[3] * b[1] + a[4] * b[4],
            a[3] * b[2] + a[4] * b[5] + a[5],
        ])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == T::zero() || !det.is_finite() {
            return None;
        }
        let m = &self.m;
        let (a, b, c, d) = (m[4] / det, -m[1] / det, -m[3] / det, m[0] / det);
        Some(Self::from_coeffs([a, b, -(a * m[2] + b * m[5]), c, d, -(c * m[2] + d * m[5])]))
    }

    /// Whether the linear part keeps area within the accepted `[0.5, 2]` band.
    pub fn within_det_bound(&self) -> bool {
        let d = self.det();
        d >= T::lit(DET_MIN) && d <= T::lit(DET_MAX)
    }

    /// Mean distance between where `self` and `other` send the four image corners.
    pub fn mean_corner_error(&self, other: &Self, width: usize, height: usize) -> T {
        let (w, h) = (T::from_usize_lossy(width - 1), T::from_usize_lossy(height - 1));
        let corners = [(T::zero(), T::zero()), (w, T::zero()), (T::zero(), h), (w, h)];
        let total: T = corners
            .iter()
            .map(|&(x, y)| {
                let (ax, ay) = self.apply(x, y);
                let (bx, by) = other.apply(x, y);
                ((ax - bx) * (ax - bx) + (ay - by) * (ay - by)).sqrt()
            })
            .sum();
        total / T::lit(4.0)
    }

    /// Conjugates into an image downsampled by `factor` (pixel-center convention).
    pub(crate) fn at_scale(&self, factor: T) -> Self {
        let half = T::lit(0.5);
        // down(x) = (x + 0.5) / f - 0.5
        let down = Self::from_coeffs([
            T::one() / factor,
            T::zero(),
            half / factor - half,
            T::zero(),
            T::one() / factor,
            half / factor - half,
        ]);
        let up = down.inverse().unwrap();
        down.compose(self).compose(&up)
    }

    pub fn cast<U: Scalar>(&self) -> AffineTransform<U> {
        AffineTransform::from_coeffs(self.m.map(|v| U::lit(v.as_f64())))
    }
}
