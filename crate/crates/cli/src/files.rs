//! File reading with path context, and atomic writes (temp file + rename).

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use stainkit_core::imaging::{encode_cmap, encode_png, read_cmap, read_rgb};
use stainkit_core::predictor::LinearSaffronModel;
use stainkit_core::{ConcentrationMap, RgbImage, StainMatrix};

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("input file not found: {}", path.display());
    }
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    require(path)?;
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn image(path: &Path) -> Result<RgbImage> {
    require(path)?;
    read_rgb(path).with_context(|| format!("cannot load image {}", path.display()))
}

pub fn cmap(path: &Path) -> Result<ConcentrationMap<f64>> {
    require(path)?;
    read_cmap(path).with_context(|| format!("cannot load concentration map {}", path.display()))
}

pub fn matrix(path: &Path) -> Result<StainMatrix<f64>> {
    require(path)?;
    StainMatrix::read(path).with_context(|| format!("cannot load stain matrix {}", path.display()))
}

pub fn model(path: &Path) -> Result<LinearSaffronModel<f64>> {
    require(path)?;
    LinearSaffronModel::read(path).with_context(|| format!("cannot load model {}", path.display()))
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create directory {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)
        .with_context(|| format!("cannot create temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .with_context(|| format!("cannot write {}", path.display()))?;
    tmp.persist(path).with_context(|| format!("cannot move output into place at {}", path.display()))?;
    Ok(())
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    write_atomic(path, &encode_png(img)?)
}

pub fn write_cmap(path: &Path, map: &ConcentrationMap<f64>) -> Result<()> {
    write_atomic(path, &encode_cmap(map))
}

pub fn write_matrix(path: &Path, w: &StainMatrix<f64>) -> Result<()> {
    write_atomic(path, w.to_text().as_bytes())
}

pub fn write_model(path: &Path, m: &LinearSaffronModel<f64>) -> Result<()> {
    write_atomic(path, m.to_text().as_bytes())
}

/// Image files given directly plus the `.png`/`.tif`/`.tiff` files of any
/// directories, each directory listed in name order.
pub fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "tif" | "tiff"))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            require(p)?;
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no image files found in the given tiles");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn missing_input_names_the_path() {
        let e = read_text(Path::new("/nonexistent/x.txt")).unwrap_err();
        assert!(e.to_string().contains("input file not found: /nonexistent/x.txt"));
    }
}
