//! Plain-text manifests. One record per line, fields separated by tabs; blank
//! lines and lines starting with `#` are ignored. Relative paths resolve against
//! the manifest's directory.
//!
//! Pair manifest fields, in order:
//! `fixed  moving  a  b  tx  c  d  ty  score  converged  [split]`
//! where `fixed` is the HE tile, `moving` the HES tile, the six coefficients map
//! moving to fixed coordinates (`x' = a x + b y + tx`, `y' = c x + d y + ty`),
//! `converged` is `true`/`false` and `split` is `train`, `val` or `test`
//! (default `train`).
//!
//! Evaluation manifest fields: `prediction  ground_truth` (CMAP files).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use stainkit_core::Affine64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub fixed: PathBuf,
    pub moving: PathBuf,
    pub transform: Affine64,
    pub score: f64,
    pub converged: bool,
    pub split: Split,
}

impl PairRecord {
    /// One manifest line (no trailing newline). Paths are written as given.
    pub fn to_line(&self) -> String {
        let c = self.transform.coeffs();
        let mut fields = vec![self.fixed.display().to_string(), self.moving.display().to_string()];
        fields.extend(c.iter().map(|v| format!("{v:?}")));
        fields.push(format!("{:?}", self.score));
        fields.push(self.converged.to_string());
        fields.push(self.split.to_string());
        fields.join("\t")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub prediction: PathBuf,
    pub ground_truth: PathBuf,
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| (n, l.split('\t').map(str::trim).collect()))
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn existing(base: &Path, p: &str, name: &str, line: usize) -> Result<PathBuf> {
    let path = resolve(base, p);
    if !path.exists() {
        bail!("malformed manifest: line {line}: {name} file not found: {}", path.display());
    }
    Ok(path)
}

fn num(s: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| anyhow!("malformed manifest: line {line}: {name} is not a number: {s:?}"))?;
    if !v.is_finite() {
        bail!("malformed manifest: line {line}: {name} is not finite");
    }
    Ok(v)
}

/// Parses a pair manifest; every path must exist and every transform must pass
/// the determinant bound.
pub fn parse_pairs(text: &str, base: &Path) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        if f.len() != 10 && f.len() != 11 {
            bail!("malformed manifest: line {line}: expected 10 or 11 tab-separated fields, found {}", f.len());
        }
        let mut m = [0.0; 6];
        for (k, v) in m.iter_mut().enumerate() {
            *v = num(f[2 + k], "affine coefficient", line)?;
        }
        let transform = Affine64::from_coeffs(m);
        if !transform.within_det_bound() {
            bail!("malformed manifest: line {line}: affine determinant {:.4} outside the allowed band", transform.det());
        }
        let converged = f[9]
            .parse::<bool>()
            .map_err(|_| anyhow!("malformed manifest: line {line}: converged must be true or false"))?;
        let split = match f.get(10) {
            Some(s) => s.parse().map_err(|e| anyhow!("malformed manifest: line {line}: {e}"))?,
            None => Split::Train,
        };
        out.push(PairRecord {
            fixed: existing(base, f[0], "fixed", line)?,
            moving: existing(base, f[1], "moving", line)?,
            transform,
            score: num(f[8], "score", line)?,
            converged,
            split,
        });
    }
    if out.is_empty() {
        bail!("malformed manifest: no records");
    }
    Ok(out)
}

pub fn parse_eval(text: &str, base: &Path) -> Result<Vec<EvalRecord>> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        if f.len() != 2 {
            bail!("malformed manifest: line {line}: expected 2 tab-separated fields, found {}", f.len());
        }
        out.push(EvalRecord {
            prediction: existing(base, f[0], "prediction", line)?,
            ground_truth: existing(base, f[1], "ground truth", line)?,
        });
    }
    if out.is_empty() {
        bail!("malformed manifest: no records");
    }
    Ok(out)
}

pub fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}
