//! `pipeline`: registration, Saffron extraction, baseline fit, prediction,
//! virtual HES reconstruction and evaluation over a pair manifest.
//!
//! Outputs in `--out-dir`:
//! - `matrix_he.txt`, `matrix_hes.txt` (the latter records the slide-level p99)
//! - `registration.txt`: pair manifest with the transforms used
//! - `model.txt`
//! - `pred/tile_iii.cmap`, `hes/tile_iii.png`: prediction and virtual HES per tile
//! - `eval/tile_iii_pred.cmap`, `eval/tile_iii_target.cmap`, `eval.txt`: the
//!   cropped maps scored for every non-train tile, and their manifest
//! - `report.txt`

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use stainkit_core::imaging::{rgb_to_od, tissue_mask, DEFAULT_TISSUE_THRESHOLD, SAFFRON};
use stainkit_core::predictor::{compute_class_weights, fit_linear_baseline, predict, DEFAULT_WINDOW};
use stainkit_core::reconstruct::{reconstruct_hes, ReconstructionConfig, DEFAULT_EPSILON};
use stainkit_core::registration::{register_stained_pair, warp_affine, Interpolation};
use stainkit_core::stain::{
    estimate_stain_matrix, pseudo_max, sample_tissue_pixels, saffron_raw, SnmfConfig, SnmfInit, DEFAULT_SAMPLE_SIZE,
};
use stainkit_core::{Affine64, BinaryMask, ConcentrationMap, RgbImage, StainMatrix};

use crate::files;
use crate::manifest::{base_dir, parse_pairs, PairRecord, Split};
use crate::par::map_ordered;
use crate::report;
use crate::Global;

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Two-stain HE matrix; estimated by SNMF on the train HE tiles if absent.
    #[arg(long)]
    pub matrix_he: Option<PathBuf>,
    /// Three-stain HES matrix; estimated by SNMF on the train HES tiles if absent.
    #[arg(long)]
    pub matrix_hes: Option<PathBuf>,
    #[arg(long, default_value_t = SnmfConfig::<f64>::new(3).sparsity_lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Regions per tile side for the mean-concentration regression.
    #[arg(long, default_value_t = 2)]
    pub region_grid: usize,
    /// Use the manifest transforms instead of registering each pair.
    #[arg(long)]
    pub no_register: bool,
}

/// One registered pair, cropped to the area where the aligned HES tile has data.
pub struct Prepared {
    pub he: RgbImage,
    pub crop: (usize, usize, usize, usize),
    pub he_crop: RgbImage,
    pub saffron_raw: ConcentrationMap<f64>,
    pub tissue: BinaryMask,
}

/// Border that contains every pixel the warp can move in from outside the tile:
/// the largest corner displacement of the transform or its inverse, rounded up,
/// plus one pixel for the bilinear footprint.
pub fn crop_border(t: &Affine64, w: usize, h: usize) -> Result<usize> {
    let inv = t.inverse().context("registration transform is not invertible")?;
    let (wm, hm) = ((w - 1) as f64, (h - 1) as f64);
    let mut d: f64 = 0.0;
    for a in [t, &inv] {
        for (x, y) in [(0.0, 0.0), (wm, 0.0), (0.0, hm), (wm, hm)] {
            let (u, v) = a.apply(x, y);
            d = d.max((u - x).abs()).max((v - y).abs());
        }
    }
    Ok(d.ceil() as usize + 1)
}

/// Warps the HES tile into the HE frame, crops both, and extracts raw Saffron
/// and the tissue mask from the aligned HES crop.
pub fn prepare(he: RgbImage, hes: &RgbImage, t: &Affine64, w_hes: &StainMatrix<f64>) -> Result<Prepared> {
    let (w, h) = (he.width(), he.height());
    let b = crop_border(t, w, h)?;
    if 2 * b + 8 > w.min(h) {
        bail!("registration transform moves the tile by {b} px; nothing left after cropping a {w}x{h} tile");
    }
    let crop = (b, b, w - 2 * b, h - 2 * b);
    let aligned = warp_affine(hes, t, Interpolation::Bilinear).crop(crop.0, crop.1, crop.2, crop.3)?;
    let he_crop = he.crop(crop.0, crop.1, crop.2, crop.3)?;
    let saffron_raw = saffron_raw(&aligned, w_hes)?;
    let tissue = tissue_mask(&rgb_to_od::<f64>(&aligned, w_hes.illuminant())?, DEFAULT_TISSUE_THRESHOLD)?;
    Ok(Prepared { he, crop, he_crop, saffron_raw, tissue })
}

/// Slide-level 99th percentile of raw Saffron over the tissue of the train tiles.
pub fn slide_p99(prepared: &[&Prepared]) -> Result<f64> {
    let maps: Vec<_> = prepared.iter().map(|p| (&p.saffron_raw, &p.tissue)).collect();
    Ok(pseudo_max(&maps).context("no tissue in the train tiles")?[0])
}

/// Sets the Saffron entry of the matrix's p99 record (other stains get 1).
pub fn with_saffron_p99(w: &StainMatrix<f64>, p99: f64) -> Result<StainMatrix<f64>> {
    let idx = w.position(SAFFRON).context("HES matrix has no Saffron column")?;
    let mut v = w.p99().map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; w.stains()]);
    v[idx] = p99;
    Ok(w.clone().with_p99(Some(v))?)
}

pub fn snmf_matrix(tiles: &[RgbImage], stains: usize, lambda: f64, seed: u64) -> Result<StainMatrix<f64>> {
    let sample = sample_tissue_pixels::<f64>(tiles, 255, DEFAULT_TISSUE_THRESHOLD, DEFAULT_SAMPLE_SIZE, seed)?;
    let cfg = SnmfConfig { sparsity_lambda: lambda, init: SnmfInit::Reference, ..SnmfConfig::new(stains) };
    Ok(estimate_stain_matrix(&sample, &cfg)?.matrix)
}

fn read_pair(r: &PairRecord) -> Result<(RgbImage, RgbImage)> {
    let he = files::image(&r.fixed)?;
    let hes = files::image(&r.moving)?;
    if !he.same_dims(&hes) {
        bail!("{} and {} differ in size", r.fixed.display(), r.moving.display());
    }
    Ok((he, hes))
}

fn load_matrices(g: &Global, args: &PipelineArgs, records: &[PairRecord]) -> Result<(StainMatrix<f64>, StainMatrix<f64>)> {
    let train: Vec<&PairRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
    let w_he = match &args.matrix_he {
        Some(p) => files::matrix(p)?,
        None => {
            let tiles = map_ordered(g.jobs, &train, |_, r| files::image(&r.fixed))?;
            snmf_matrix(&tiles, 2, args.lambda, g.seed())?
        }
    };
    let w_hes = match &args.matrix_hes {
        Some(p) => files::matrix(p)?,
        None => {
            let tiles = map_ordered(g.jobs, &train, |_, r| files::image(&r.moving))?;
            snmf_matrix(&tiles, 3, args.lambda, g.seed())?
        }
    };
    Ok((w_he, w_hes))
}

fn stem(i: usize) -> String {
    format!("tile_{i:03}")
}

pub fn run(g: &Global, args: &PipelineArgs) -> Result<()> {
    let text = files::read_text(&args.manifest)?;
    let records = parse_pairs(&text, &base_dir(&args.manifest))?;
    if !records.iter().any(|r| r.split == Split::Train) {
        bail!("manifest has no train records");
    }
    let (w_he, w_hes) = load_matrices(g, args, &records)?;
    let w_s = w_hes.column(w_hes.position(SAFFRON).context("HES matrix has no Saffron column")?);
    let mut recon = ReconstructionConfig::new(&w_he, w_s)?;
    recon.epsilon = args.epsilon;

    // registration and extraction
    let prepared = map_ordered(g.jobs, &records, |_, r| {
        let (he, hes) = read_pair(r)?;
        let (transform, score, converged) = if args.no_register {
            (r.transform, r.score, r.converged)
        } else {
            let res = register_stained_pair(&he, &hes, &w_he, &w_hes)
                .with_context(|| format!("registering {}", r.moving.display()))?;
            if !res.converged {
                log::warn!("registration of {} did not converge", r.moving.display());
            }
            (res.transform, res.score, res.converged)
        };
        let rec = PairRecord { transform, score, converged, ..r.clone() };
        let p = prepare(he, &hes, &transform, &w_hes).with_context(|| format!("preparing {}", r.moving.display()))?;
        Ok((rec, p))
    })?;

    // slide-level normalization and fit
    let train: Vec<&Prepared> =
        prepared.iter().filter(|(r, _)| r.split == Split::Train).map(|(_, p)| p).collect();
    let p99 = slide_p99(&train)?;
    let w_hes = with_saffron_p99(&w_hes, p99)?;
    let targets: Vec<ConcentrationMap<f64>> =
        prepared.iter().map(|(_, p)| p.saffron_raw.rescaled(&[p99])).collect::<stainkit_core::Result<_>>()?;
    let train_pairs: Vec<(RgbImage, ConcentrationMap<f64>)> = prepared
        .iter()
        .zip(&targets)
        .filter(|((r, _), _)| r.split == Split::Train)
        .map(|((_, p), t)| (p.he_crop.clone(), t.clone()))
        .collect();
    let train_targets: Vec<ConcentrationMap<f64>> = train_pairs.iter().map(|(_, t)| t.clone()).collect();
    let weights = compute_class_weights(&train_targets)?;
    let model = fit_linear_baseline(&train_pairs, &weights, args.k)?;

    // prediction and reconstruction
    let outputs = map_ordered(g.jobs, &prepared, |_, (_, p)| {
        let pred = predict(&model, &p.he)?;
        let hes = reconstruct_hes(&p.he, &pred, &recon)?;
        let (x, y, w, h) = p.crop;
        Ok((pred.crop(x, y, w, h)?, pred, hes))
    })?;

    // evaluation on every non-train tile
    let out = &args.out_dir;
    let mut eval_lines = String::from("# prediction\tground_truth\n");
    let mut scored = Vec::new();
    for (i, (((rec, _), target), (pred_crop, _, _))) in prepared.iter().zip(&targets).zip(&outputs).enumerate() {
        if rec.split != Split::Train {
            eval_lines.push_str(&format!("eval/{}_pred.cmap\teval/{}_target.cmap\n", stem(i), stem(i)));
            scored.push((i, pred_crop.clone(), target.clone()));
        }
    }
    if scored.is_empty() {
        bail!("manifest has no val or test records to evaluate");
    }
    let pairs: Vec<_> = scored.iter().map(|(_, p, t)| (p.clone(), t.clone())).collect();
    let evaluation = report::evaluate(&pairs, args.region_grid)?;

    files::write_matrix(&out.join("matrix_he.txt"), &w_he)?;
    files::write_matrix(&out.join("matrix_hes.txt"), &w_hes)?;
    let mut reg = String::from("# fixed\tmoving\ta\tb\ttx\tc\td\tty\tscore\tconverged\tsplit\n");
    for (rec, _) in &prepared {
        reg.push_str(&rec.to_line());
        reg.push('\n');
    }
    files::write_atomic(&out.join("registration.txt"), reg.as_bytes())?;
    files::write_model(&out.join("model.txt"), &model)?;
    for (i, (_, pred, hes)) in outputs.iter().enumerate() {
        files::write_cmap(&out.join("pred").join(format!("{}.cmap", stem(i))), pred)?;
        files::write_png(&out.join("hes").join(format!("{}.png", stem(i))), hes)?;
    }
    for (i, p, t) in &scored {
        files::write_cmap(&out.join("eval").join(format!("{}_pred.cmap", stem(*i))), p)?;
        files::write_cmap(&out.join("eval").join(format!("{}_target.cmap", stem(*i))), t)?;
    }
    files::write_atomic(&out.join("eval.txt"), eval_lines.as_bytes())?;
    files::write_atomic(&out.join("report.txt"), evaluation.to_text().as_bytes())?;
    log::info!("pipeline finished: {} tiles, {} evaluated", prepared.len(), scored.len());
    Ok(())
}

/// Reads and prepares every record with its manifest transform.
pub fn prepare_records(
    g: &Global,
    records: &[PairRecord],
    w_hes: &StainMatrix<f64>,
) -> Result<Vec<Prepared>> {
    map_ordered(g.jobs, records, |_, r| {
        let (he, hes) = read_pair(r)?;
        prepare(he, &hes, &r.transform, w_hes).with_context(|| format!("preparing {}", r.moving.display()))
    })
}
