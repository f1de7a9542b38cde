//! Synthetic HE/HES phantoms with known stain matrices, densities and warps.
//!
//! Every random draw goes through [`Lcg64`], so a phantom is a pure function of
//! its [`PhantomSpec`] on every platform.

use serde::{Deserialize, Serialize};

use crate::imaging::{ConcentrationMap, RgbImage, StainMatrix, DEFAULT_ILLUMINANT, EOSIN, HEMATOXYLIN, SAFFRON};
use crate::linalg::dot3;
use crate::registration::{warp_affine, AffineTransform, Interpolation};
use crate::scalar::Scalar;

/// sRGB color of a unit-density Saffron deposit: a light orange.
pub const SAFFRON_HUE: [u8; 3] = [231, 157, 107];

/// Eosin/Saffron cosine used by hard mode.
pub const HARD_MODE_COSINE: f64 = 0.96;

/// 64-bit linear congruential generator, `x ← a·x + c mod 2⁶⁴`, with Knuth's
/// MMIX constants `a = 6364136223846793005`, `c = 1442695040888963407`.
/// Uniform floats use the top 53 bits of the state.
#[derive(Clone, Debug)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
    pub const INCREMENT: u64 = 1_442_695_040_888_963_407;

    pub fn new(seed: u64) -> Self {
        let mut g = Self { state: seed };
        g.next_u64();
        g
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(Self::MULTIPLIER).wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal by Box-Muller (one draw per call; the sine half is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    /// Gaussian bumps per stain, ordered Hematoxylin, Eosin, Saffron.
    pub blob_count: [usize; 3],
    /// Peak density per stain, in OD units.
    pub max_concentration: [f64; 3],
    /// Standard deviation of additive intensity noise, in 8-bit levels.
    pub noise_sigma: f64,
    /// Optional `[a, b, tx, c, d, ty]` warp for registration cases.
    pub warp: Option<[f64; 6]>,
    /// Saffron direction pulled toward Eosin (cosine [`HARD_MODE_COSINE`]).
    pub hard_mode: bool,
    /// Fraction of the Saffron density that shows up as Eosin on the HE render.
    pub eosin_carryover: f64,
    pub illuminant: u32,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            seed: 0,
            blob_count: [6, 6, 6],
            max_concentration: [0.4, 0.4, 0.4],
            noise_sigma: 0.0,
            warp: None,
            hard_mode: false,
            eosin_carryover: 0.5,
            illuminant: DEFAULT_ILLUMINANT,
        }
    }
}

impl PhantomSpec {
    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        Self { width, height, seed, ..Self::default() }
    }

    /// HE/HES pair where Eosin appears only as the carried-over Saffron signal,
    /// so the HE render is linear in the Saffron density.
    pub fn paired(width: usize, height: usize, seed: u64) -> Self {
        Self { blob_count: [6, 0, 6], ..Self::new(width, height, seed) }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width < 32 || self.height < 32 {
            return Err(format!("phantom must be at least 32x32, got {}x{}", self.width, self.height));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err("noise_sigma must be >= 0".into());
        }
        if self.max_concentration.iter().any(|&c| !(c >= 0.0)) || !(self.eosin_carryover >= 0.0) {
            return Err("concentrations and carryover must be >= 0".into());
        }
        if !(1..=255).contains(&self.illuminant) {
            return Err(format!("illuminant {} not in [1, 255]", self.illuminant));
        }
        Ok(())
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = dot3(&v, &v).sqrt();
    v.map(|x| x / n)
}

/// True stain vectors of the phantom, ordered H, E, S.
pub fn phantom_stains<T: Scalar>(hard_mode: bool, illuminant: u32) -> StainMatrix<T> {
    let h = unit([0.70, 0.66, 0.27]);
    let e = unit([0.10, 0.97, 0.20]);
    let mut s = unit(SAFFRON_HUE.map(|c| -(c as f64 / 255.0).ln()));
    if hard_mode {
        let along = dot3(&s, &e);
        let ortho = unit([0, 1, 2].map(|k| s[k] - along * e[k]));
        let sin = (1.0 - HARD_MODE_COSINE * HARD_MODE_COSINE).sqrt();
        s = unit([0, 1, 2].map(|k| HARD_MODE_COSINE * e[k] + sin * ortho[k]));
    }
    StainMatrix::new(
        vec![h.map(T::lit), e.map(T::lit), s.map(T::lit)],
        vec![HEMATOXYLIN.into(), EOSIN.into(), SAFFRON.into()],
        illuminant,
    )
    .expect("phantom stains are valid")
}

#[derive(Clone, Debug)]
pub struct Phantom<T> {
    /// H, E, S stain vectors used to render the HES tile.
    pub w_true: StainMatrix<T>,
    /// H, E columns of `w_true`; the HE tile is rendered with these.
    pub w_he: StainMatrix<T>,
    /// True H, E, S densities (raw OD units, scale 1).
    pub h_true: ConcentrationMap<T>,
    /// H and E densities behind the HE render (E includes the carried-over Saffron).
    pub h_he: ConcentrationMap<T>,
    pub i_he: RgbImage,
    pub i_hes: RgbImage,
}

fn blob_field(rng: &mut Lcg64, w: usize, h: usize, count: usize, peak: f64) -> Vec<f64> {
    let side = w.min(h) as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let cx = rng.uniform(0.0, w as f64);
            let cy = rng.uniform(0.0, h as f64);
            let sigma = rng.uniform(side / 16.0, side / 6.0);
            let amp = rng.uniform(0.5, 1.5);
            (cx, cy, sigma, amp)
        })
        .collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let s: f64 = blobs
                .iter()
                .map(|&(cx, cy, sigma, amp)| {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    amp * (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .sum();
            out[y * w + x] = peak * (1.0 - (-s).exp());
        }
    }
    out
}

fn render(od: impl Iterator<Item = f64>, i0: f64, noise: f64, rng: &mut Lcg64) -> Vec<u8> {
    od.map(|v| {
        let mut i = i0 * (-v).exp();
        if noise > 0.0 {
            i += noise * rng.normal();
        }
        i.round().clamp(0.0, 255.0) as u8
    })
    .collect()
}

/// Renders a phantom pair. The HES tile is `I₀·exp(−W·H)`; the HE tile uses the
/// same Hematoxylin and Eosin but replaces Saffron by `eosin_carryover · H_S`
/// extra Eosin.
///
/// Panics if the spec is invalid.
pub fn generate_phantom<T: Scalar>(spec: &PhantomSpec) -> Phantom<T> {
    spec.validate().expect("valid phantom spec");
    let (w, h) = (spec.width, spec.height);
    let mut rng = Lcg64::new(spec.seed);
    let fields: Vec<Vec<f64>> = (0..3)
        .map(|k| blob_field(&mut rng, w, h, spec.blob_count[k], spec.max_concentration[k]))
        .collect();
    let w_true = phantom_stains::<f64>(spec.hard_mode, spec.illuminant);
    let i0 = spec.illuminant as f64;

    let hes_od = (0..w * h).flat_map(|p| w_true.mix(&[fields[0][p], fields[1][p], fields[2][p]]));
    let i_hes = render(hes_od, i0, spec.noise_sigma, &mut rng);

    let rho = spec.eosin_carryover;
    let he_e: Vec<f64> = (0..w * h).map(|p| fields[1][p] + rho * fields[2][p]).collect();
    let he_od = (0..w * h).flat_map(|p| w_true.mix(&[fields[0][p], he_e[p], 0.0]));
    let i_he = render(he_od, i0, spec.noise_sigma, &mut rng);

    let h_true: Vec<T> = (0..w * h).flat_map(|p| [0, 1, 2].map(|k| T::lit(fields[k][p]))).collect();
    let h_he: Vec<T> = (0..w * h).flat_map(|p| [T::lit(fields[0][p]), T::lit(he_e[p])]).collect();
    let w_true = w_true.cast::<T>();
    Phantom {
        w_he: w_true.select(&[0, 1]).unwrap(),
        w_true,
        h_true: ConcentrationMap::unscaled(w, h, 3, h_true).unwrap(),
        h_he: ConcentrationMap::unscaled(w, h, 2, h_he).unwrap(),
        i_he: RgbImage::new(w, h, i_he).unwrap(),
        i_hes: RgbImage::new(w, h, i_hes).unwrap(),
    }
}

#[derive(Clone, Debug)]
pub struct RegistrationCase<T> {
    pub fixed: RgbImage,
    pub moving: RgbImage,
    /// Warp applied to `fixed` to produce `moving`; the moving-to-fixed
    /// registration is its inverse.
    pub t_true: AffineTransform<T>,
}

/// `moving = warp_affine(fixed, t_true)` with bilinear resampling, where `fixed`
/// is the phantom's HES tile and `t_true` is `spec.warp` (identity if absent).
pub fn generate_registration_case<T: Scalar>(spec: &PhantomSpec) -> RegistrationCase<T> {
    let phantom = generate_phantom::<T>(spec);
    let t_true = match spec.warp {
        Some(m) => AffineTransform::from_coeffs(m.map(T::lit)),
        None => AffineTransform::identity(),
    };
    let moving = warp_affine(&phantom.i_hes, &t_true, Interpolation::Bilinear);
    RegistrationCase { fixed: phantom.i_hes, moving, t_true }
}

/// Warp about the tile center: rotation by `angle_deg`, isotropic `scale`, then
/// a shift of `(dx, dy)` pixels.
pub fn centered_warp(width: usize, height: usize, angle_deg: f64, scale: f64, dx: f64, dy: f64) -> [f64; 6] {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (a, b, cc, d) = (scale * c, -scale * s, scale * s, scale * c);
    [a, b, cx + dx - a * cx - b * cy, cc, d, cy + dy - cc * cx - d * cy]
}

/// Seeded warp with `|angle| ≤ max_angle_deg`, `|shift| ≤ max_shift` per axis and
/// scale in `[scale_lo, scale_hi]`.
pub fn random_warp(
    rng: &mut Lcg64,
    width: usize,
    height: usize,
    max_angle_deg: f64,
    max_shift: f64,
    scale_lo: f64,
    scale_hi: f64,
) -> [f64; 6] {
    let angle = rng.uniform(-max_angle_deg, max_angle_deg);
    let scale = rng.uniform(scale_lo, scale_hi);
    let dx = rng.uniform(-max_shift, max_shift);
    let dy = rng.uniform(-max_shift, max_shift);
    centered_warp(width, height, angle, scale, dx, dy)
}
