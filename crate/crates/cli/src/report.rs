//! Evaluation report: `key = value` lines in a fixed order.

use anyhow::{bail, Result};
use stainkit_core::metrics::{
    mdice_thresholds, mean_concentration_regression, MetricReport, RegressionFit, MDICE_STEPS,
    SAFFRON_REGION_THRESHOLD,
};
use stainkit_core::ConcentrationMap;

pub struct Evaluation {
    pub tiles: usize,
    pub metrics: MetricReport<f64>,
    pub regions: usize,
    pub regression: Option<RegressionFit<f64>>,
}

/// Splits a map into a `grid x grid` set of blocks; edge blocks absorb the remainder.
pub fn region_blocks(map: &ConcentrationMap<f64>, grid: usize) -> Result<Vec<ConcentrationMap<f64>>> {
    let (w, h) = (map.width(), map.height());
    if grid == 0 || grid > w || grid > h {
        bail!("region grid {grid} does not fit a {w}x{h} map");
    }
    let (bw, bh) = (w / grid, h / grid);
    let mut out = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        for gx in 0..grid {
            let cw = if gx + 1 == grid { w - gx * bw } else { bw };
            let ch = if gy + 1 == grid { h - gy * bh } else { bh };
            out.push(map.crop(gx * bw, gy * bh, cw, ch)?);
        }
    }
    Ok(out)
}

/// Pooled metrics over all pairs plus the mean-concentration regression over
/// region blocks (absent with fewer than two regions).
pub fn evaluate(pairs: &[(ConcentrationMap<f64>, ConcentrationMap<f64>)], grid: usize) -> Result<Evaluation> {
    let refs: Vec<_> = pairs.iter().map(|(p, g)| (p, g)).collect();
    let metrics = MetricReport::pooled(&refs)?;
    let mut blocks = Vec::new();
    for (p, g) in pairs {
        blocks.extend(region_blocks(p, grid)?.into_iter().zip(region_blocks(g, grid)?));
    }
    let regression = if blocks.len() >= 2 {
        let refs: Vec<_> = blocks.iter().map(|(p, g)| (p, g)).collect();
        Some(mean_concentration_regression(&refs)?)
    } else {
        None
    };
    Ok(Evaluation { tiles: pairs.len(), metrics, regions: blocks.len(), regression })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:.9}"))
}

impl Evaluation {
    pub fn to_text(&self) -> String {
        let m = &self.metrics;
        let thresholds: Vec<String> = mdice_thresholds().iter().map(|t| format!("{t:.2}")).collect();
        let mut lines = vec![
            format!("tiles = {}", self.tiles),
            format!("pixels = {}", m.n_pixels),
            format!("mae = {:.9}", m.mae),
            format!("mae_s = {}", opt(m.mae_s)),
            format!("mae_b = {}", opt(m.mae_b)),
            format!("mdice = {:.9}", m.mdice),
            format!("dice_s = {:.9}", m.dice_s),
            format!("saffron_region_threshold = {SAFFRON_REGION_THRESHOLD}"),
            format!("dice_threshold_count = {MDICE_STEPS}"),
            format!("dice_thresholds = {}", thresholds.join(",")),
            format!("regions = {}", self.regions),
        ];
        let r = self.regression.as_ref();
        lines.push(format!("regression_slope = {}", opt(r.map(|r| r.slope))));
        lines.push(format!("regression_intercept = {}", opt(r.map(|r| r.intercept))));
        lines.push(format!("regression_r2 = {}", opt(r.map(|r| r.r2))));
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}
