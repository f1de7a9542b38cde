//! Single-step subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stainkit_core::imaging::{gray_od, rgb_to_od, tissue_mask, DEFAULT_TISSUE_THRESHOLD, SAFFRON};
use stainkit_core::predictor::{compute_class_weights, fit_linear_baseline, predict as predict_map};
use stainkit_core::reconstruct::{reconstruct_hes, ReconstructionConfig};
use stainkit_core::registration::{estimate_rigid, refine_affine};
use stainkit_core::stain::{
    estimate_stain_matrix, extract_saffron as extract, normalize_p99, sample_tissue_pixels, saffron_raw,
    solve_concentrations, SnmfConfig, SnmfInit, SolveMode,
};
use stainkit_core::{BinaryMask, ConcentrationMap};

use crate::manifest::{base_dir, parse_eval, parse_pairs, PairRecord, Split};
use crate::par::map_ordered;
use crate::pipeline::{prepare_records, slide_p99};
use crate::{files, report, Global, UsageError};

pub struct EstimateArgs {
    pub tiles: Vec<PathBuf>,
    pub stains: usize,
    pub lambda: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub sample_size: usize,
    pub random_init: bool,
}

pub fn estimate_matrix(g: &Global, a: &EstimateArgs, out: &Path) -> Result<()> {
    if !(1..=3).contains(&a.stains) {
        return Err(UsageError(format!("--stains must be 1, 2 or 3, got {}", a.stains)).into());
    }
    let paths = files::collect_images(&a.tiles)?;
    let tiles = map_ordered(g.jobs, &paths, |_, p| files::image(p))?;
    let sample = sample_tissue_pixels::<f64>(&tiles, 255, DEFAULT_TISSUE_THRESHOLD, a.sample_size, g.seed())?;
    let cfg = SnmfConfig {
        sparsity_lambda: a.lambda,
        max_iters: a.max_iters,
        tol: a.tol,
        init: if a.random_init { SnmfInit::Random(g.seed()) } else { SnmfInit::Reference },
        ..SnmfConfig::new(a.stains)
    };
    files::write_matrix(out, &estimate_stain_matrix(&sample, &cfg)?.matrix)
}

pub fn deconvolve(image: &Path, matrix: &Path, mode: &str, out: &Path) -> Result<()> {
    let mode: SolveMode = mode.parse().map_err(UsageError)?;
    let img = files::image(image)?;
    let w = files::matrix(matrix)?;
    let od = rgb_to_od::<f64>(&img, w.illuminant())?;
    files::write_cmap(out, &solve_concentrations(&od, &w, mode)?)
}

pub fn normalize(cmap: &Path, image: Option<&Path>, out: &Path) -> Result<()> {
    let map = files::cmap(cmap)?;
    let mask = match image {
        Some(p) => {
            let img = files::image(p)?;
            if !img.same_dims(&map) {
                bail!("{} and {} differ in size", p.display(), cmap.display());
            }
            tissue_mask(&rgb_to_od::<f64>(&img, 255)?, DEFAULT_TISSUE_THRESHOLD)?
        }
        None => BinaryMask::full(map.width(), map.height(), true),
    };
    files::write_cmap(out, &normalize_p99(&map, &mask)?)
}

pub fn extract_saffron(hes: &Path, matrix: &Path, out: &Path) -> Result<()> {
    let img = files::image(hes)?;
    let w = files::matrix(matrix)?;
    let idx = w.position(SAFFRON).context("stain matrix has no Saffron column")?;
    let map = match w.p99() {
        Some(p) => saffron_raw(&img, &w)?.rescaled(&[p[idx]])?,
        None => {
            let mask = tissue_mask(&rgb_to_od::<f64>(&img, w.illuminant())?, DEFAULT_TISSUE_THRESHOLD)?;
            extract(&img, &w, &mask)?
        }
    };
    files::write_cmap(out, &map)
}

pub fn reconstruct(
    he: &Path,
    saffron: &Path,
    matrix_he: &Path,
    matrix_s: &Path,
    epsilon: f64,
    raw_compare: bool,
    out: &Path,
) -> Result<()> {
    let img = files::image(he)?;
    let s = files::cmap(saffron)?;
    let w_he = files::matrix(matrix_he)?;
    let w_s = files::matrix(matrix_s)?;
    let idx = match w_s.position(SAFFRON) {
        Some(i) => i,
        None if w_s.stains() == 1 => 0,
        None => bail!("{} has no Saffron column", matrix_s.display()),
    };
    let mut cfg = ReconstructionConfig::new(&w_he, w_s.column(idx))?;
    cfg.epsilon = epsilon;
    cfg.compare_normalized = !raw_compare;
    files::write_png(out, &reconstruct_hes(&img, &s, &cfg)?)
}

pub fn register(
    fixed: &Path,
    moving: &Path,
    angle_range: f64,
    angle_step: f64,
    levels: usize,
    max_iters: usize,
    out: &Path,
) -> Result<()> {
    let f = gray_od::<f64>(&files::image(fixed)?, 255)?;
    let m = gray_od::<f64>(&files::image(moving)?, 255)?;
    let rigid = estimate_rigid(&f, &m, angle_range, angle_step)?;
    let res = refine_affine(&f, &m, &rigid.transform, levels, max_iters)?;
    if !res.converged {
        log::warn!("registration did not converge");
    }
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let rec = PairRecord {
        fixed: abs(fixed),
        moving: abs(moving),
        transform: res.transform,
        score: res.score,
        converged: res.converged,
        split: Split::Train,
    };
    let text = format!("# fixed\tmoving\ta\tb\ttx\tc\td\tty\tscore\tconverged\tsplit\n{}\n", rec.to_line());
    files::write_atomic(out, text.as_bytes())
}

pub fn fit_baseline(g: &Global, manifest: &Path, matrix_hes: &Path, k: usize, out: &Path) -> Result<()> {
    let records = parse_pairs(&files::read_text(manifest)?, &base_dir(manifest))?;
    let train: Vec<PairRecord> = records.into_iter().filter(|r| r.split == Split::Train).collect();
    if train.is_empty() {
        bail!("manifest has no train records");
    }
    let w_hes = files::matrix(matrix_hes)?;
    let prepared = prepare_records(g, &train, &w_hes)?;
    let refs: Vec<_> = prepared.iter().collect();
    let p99 = match w_hes.p99() {
        Some(p) => p[w_hes.position(SAFFRON).context("HES matrix has no Saffron column")?],
        None => slide_p99(&refs)?,
    };
    let pairs: Vec<_> = prepared
        .iter()
        .map(|p| Ok((p.he_crop.clone(), p.saffron_raw.rescaled(&[p99])?)))
        .collect::<Result<_>>()?;
    let targets: Vec<ConcentrationMap<f64>> = pairs.iter().map(|(_, t)| t.clone()).collect();
    let weights = compute_class_weights(&targets)?;
    files::write_model(out, &fit_linear_baseline(&pairs, &weights, k)?)
}

pub fn predict(model: &Path, he: &Path, out: &Path) -> Result<()> {
    let m = files::model(model)?;
    files::write_cmap(out, &predict_map(&m, &files::image(he)?)?)
}

pub fn evaluate(manifest: &Path, region_grid: usize, out: &Path) -> Result<()> {
    let records = parse_eval(&files::read_text(manifest)?, &base_dir(manifest))?;
    let pairs = records
        .iter()
        .map(|r| Ok((files::cmap(&r.prediction)?, files::cmap(&r.ground_truth)?)))
        .collect::<Result<Vec<_>>>()?;
    let e = report::evaluate(&pairs, region_grid)?;
    files::write_atomic(out, e.to_text().as_bytes())
}
