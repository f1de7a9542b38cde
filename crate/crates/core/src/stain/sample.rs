use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{od_lut, RgbImage};
use crate::scalar::Scalar;

/// Flattened OD vectors drawn from tissue pixels, with the index of the tile each
/// came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelSample<T> {
    pub od: Vec<[T; 3]>,
    pub source: Vec<usize>,
}

impl<T: Scalar> PixelSample<T> {
    pub fn len(&self) -> usize {
        self.od.len()
    }

    pub fn is_empty(&self) -> bool {
        self.od.is_empty()
    }

    /// Builds a sample directly from OD vectors (all from source 0).
    pub fn from_vectors(od: Vec<[T; 3]>) -> Result<Self> {
        if od.iter().flatten().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidArgument("sample entries must be finite and >= 0".into()));
        }
        let source = vec![0; od.len()];
        Ok(Self { od, source })
    }
}

/// Draws up to `n_target` tissue OD vectors uniformly without replacement across
/// all tiles. Candidates are enumerated in tile order, so the draw is a pure
/// function of the tiles and the seed.
pub fn sample_tissue_pixels<T: Scalar>(
    tiles: &[RgbImage],
    i0: u32,
    mask_threshold: T,
    n_target: usize,
    seed: u64,
) -> Result<PixelSample<T>> {
    let lut = od_lut::<T>(i0)?;
    let three = T::lit(3.0);
    let mut od = Vec::new();
    let mut source = Vec::new();
    for (t, tile) in tiles.iter().enumerate() {
        for p in tile.pixels() {
            let v = [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]];
            if (v[0] + v[1] + v[2]) / three > mask_threshold {
                od.push(v);
                source.push(t);
            }
        }
    }
    if od.is_empty() {
        return Err(Error::NoTissue);
    }
    if od.len() <= n_target {
        return Ok(PixelSample { od, source });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, od.len(), n_target).into_vec();
    picked.sort_unstable();
    Ok(PixelSample {
        od: picked.iter().map(|&i| od[i]).collect(),
        source: picked.iter().map(|&i| source[i]).collect(),
    })
}
