//! `synth`: phantom HE/HES tile pairs with their ground truth.
//!
//! Spec file (TOML, every key optional):
//!
//! ```toml
//! tiles = 25          # number of tile pairs
//! margin = 32         # canvas padding cropped away after warping
//! max_angle = 3.0     # degrees
//! max_shift = 6.0     # pixels per axis
//! scale_min = 0.99
//! scale_max = 1.01
//! test_every = 5      # every n-th tile is tagged test, the rest train
//! [phantom]           # per-tile phantom; tile i uses seed phantom.seed + i
//! width = 128
//! height = 128
//! ```
//!
//! Unset `[phantom]` keys default to the paired phantom (no independent Eosin
//! blobs), so the HE tile carries the Saffron signal.
//!
//! Writes, per tile `i`: `tile_iii_he.png`, `tile_iii_hes.png` (warped) and
//! `tile_iii_truth.cmap` (true Saffron density in the HE frame, normalized by its
//! 99th percentile over tissue across all tiles). Also `matrix_hes.txt`,
//! `matrix_he.txt`, `matrix_s.txt`, `warps.txt` (tile index and the six
//! coefficients of the warp applied to HES) and `pairs.txt`, a pair manifest
//! whose transforms are the exact HES-to-HE registrations.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use stainkit_core::imaging::{rgb_to_od, tissue_mask, DEFAULT_TISSUE_THRESHOLD};
use stainkit_core::registration::{warp_affine, Interpolation};
use stainkit_core::stain::pseudo_max;
use stainkit_core::synth::{generate_phantom, random_warp, Lcg64, Phantom, PhantomSpec};
use stainkit_core::{Affine64, BinaryMask, ConcentrationMap, RgbImage};

use crate::files;
use crate::manifest::{PairRecord, Split};
use crate::par::map_ordered;
use crate::Global;

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SpecDoc {
    tiles: usize,
    margin: usize,
    max_angle: f64,
    max_shift: f64,
    scale_min: f64,
    scale_max: f64,
    test_every: usize,
    phantom: toml::Table,
}

impl Default for SpecDoc {
    fn default() -> Self {
        let d = SynthSpec::default();
        Self {
            tiles: d.tiles,
            margin: d.margin,
            max_angle: d.max_angle,
            max_shift: d.max_shift,
            scale_min: d.scale_min,
            scale_max: d.scale_max,
            test_every: d.test_every,
            phantom: toml::Table::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub tiles: usize,
    pub margin: usize,
    pub max_angle: f64,
    pub max_shift: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub test_every: usize,
    pub phantom: PhantomSpec,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            tiles: 25,
            margin: 32,
            max_angle: 3.0,
            max_shift: 6.0,
            scale_min: 0.99,
            scale_max: 1.01,
            test_every: 5,
            phantom: PhantomSpec::paired(128, 128, 0),
        }
    }
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: SpecDoc = toml::from_str(text)?;
        let mut phantom = toml::Table::try_from(SynthSpec::default().phantom)?;
        phantom.extend(doc.phantom);
        let phantom: PhantomSpec = phantom.try_into()?;
        Ok(Self {
            tiles: doc.tiles,
            margin: doc.margin,
            max_angle: doc.max_angle,
            max_shift: doc.max_shift,
            scale_min: doc.scale_min,
            scale_max: doc.scale_max,
            test_every: doc.test_every,
            phantom,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.tiles == 0 {
            bail!("synth spec: tiles must be >= 1");
        }
        if !(self.max_angle >= 0.0 && self.max_shift >= 0.0) {
            bail!("synth spec: max_angle and max_shift must be >= 0");
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            bail!("synth spec: need 0 < scale_min <= scale_max");
        }
        if self.phantom.warp.is_some() {
            bail!("synth spec: phantom.warp is not used here; warps come from max_angle/max_shift/scale");
        }
        self.phantom.validate().map_err(|e| anyhow::anyhow!("synth spec: {e}"))
    }

    fn split(&self, i: usize) -> Split {
        if self.test_every > 0 && i % self.test_every == self.test_every - 1 {
            Split::Test
        } else {
            Split::Train
        }
    }
}

struct Rendered {
    he: RgbImage,
    hes: RgbImage,
    saffron: ConcentrationMap<f64>,
    tissue: BinaryMask,
}

fn render(spec: &SynthSpec, phantom: &PhantomSpec, warp: &Affine64) -> Result<Rendered> {
    let (w, h, m) = (phantom.width, phantom.height, spec.margin);
    let canvas = PhantomSpec { width: w + 2 * m, height: h + 2 * m, ..phantom.clone() };
    let p: Phantom<f64> = generate_phantom(&canvas);
    let shift = Affine64::translation(m as f64, m as f64);
    let canvas_warp = shift.compose(warp).compose(&shift.inverse().expect("translation is invertible"));
    let hes = warp_affine(&p.i_hes, &canvas_warp, Interpolation::Bilinear).crop(m, m, w, h)?;
    let he = p.i_he.crop(m, m, w, h)?;
    let saffron = p.h_true.channel(2).crop(m, m, w, h)?;
    let tissue = tissue_mask(&rgb_to_od::<f64>(&he, phantom.illuminant)?, DEFAULT_TISSUE_THRESHOLD)?;
    Ok(Rendered { he, hes, saffron, tissue })
}

pub fn run(g: &Global, spec_path: &Path, out_dir: &Path) -> Result<()> {
    let text = files::read_text(spec_path)?;
    let mut spec =
        SynthSpec::from_toml(&text).with_context(|| format!("malformed synth spec {}", spec_path.display()))?;
    if let Some(seed) = g.seed {
        spec.phantom.seed = seed;
    }
    spec.validate()?;

    let (w, h) = (spec.phantom.width, spec.phantom.height);
    let mut rng = Lcg64::new(spec.phantom.seed ^ 0x9e37_79b9_7f4a_7c15);
    let warps: Vec<Affine64> = (0..spec.tiles)
        .map(|_| {
            Affine64::from_coeffs(random_warp(
                &mut rng,
                w,
                h,
                spec.max_angle,
                spec.max_shift,
                spec.scale_min,
                spec.scale_max,
            ))
        })
        .collect();
    let rendered = map_ordered(g.jobs, &warps, |i, t| {
        let ps = PhantomSpec { seed: spec.phantom.seed.wrapping_add(i as u64), ..spec.phantom.clone() };
        render(&spec, &ps, t)
    })?;

    let masks: Vec<_> = rendered.iter().map(|r| (&r.saffron, &r.tissue)).collect();
    let p99 = pseudo_max(&masks)?;

    let w_true = generate_phantom::<f64>(&PhantomSpec { width: 32, height: 32, ..spec.phantom.clone() }).w_true;
    files::write_matrix(&out_dir.join("matrix_hes.txt"), &w_true)?;
    files::write_matrix(&out_dir.join("matrix_he.txt"), &w_true.select(&[0, 1])?)?;
    files::write_matrix(&out_dir.join("matrix_s.txt"), &w_true.select(&[2])?)?;

    let mut warp_lines = String::from("# tile\ta\tb\ttx\tc\td\tty\n");
    let mut pairs = String::from("# fixed\tmoving\ta\tb\ttx\tc\td\tty\tscore\tconverged\tsplit\n");
    for (i, (r, t)) in rendered.iter().zip(&warps).enumerate() {
        let stem = format!("tile_{i:03}");
        files::write_png(&out_dir.join(format!("{stem}_he.png")), &r.he)?;
        files::write_png(&out_dir.join(format!("{stem}_hes.png")), &r.hes)?;
        files::write_cmap(&out_dir.join(format!("{stem}_truth.cmap")), &r.saffron.rescaled(&p99)?)?;
        let c = t.coeffs();
        warp_lines.push_str(&format!("{i}\t{}\n", c.map(|v| format!("{v:?}")).join("\t")));
        let rec = PairRecord {
            fixed: format!("{stem}_he.png").into(),
            moving: format!("{stem}_hes.png").into(),
            transform: t.inverse().context("warp is not invertible")?,
            score: 1.0,
            converged: true,
            split: spec.split(i),
        };
        pairs.push_str(&rec.to_line());
        pairs.push('\n');
    }
    files::write_atomic(&out_dir.join("warps.txt"), warp_lines.as_bytes())?;
    files::write_atomic(&out_dir.join("pairs.txt"), pairs.as_bytes())?;
    log::info!("wrote {} tile pairs to {}", spec.tiles, out_dir.display());
    Ok(())
}
