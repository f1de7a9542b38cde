//! `CMAP` binary format for concentration maps.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"CMAP" | version: u8 | width: u32 | height: u32 | stains: u32
//! | scale: stains x f32 | payload: width*height*stains x f32 (row-major, interleaved)
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::types::ConcentrationMap;
use crate::scalar::Scalar;

pub const CMAP_MAGIC: &[u8; 4] = b"CMAP";
pub const CMAP_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 12;

pub fn encode_cmap<T: Scalar>(map: &ConcentrationMap<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * (map.stains() + map.data().len()));
    out.extend_from_slice(CMAP_MAGIC);
    out.push(CMAP_VERSION);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.stains() as u32).to_le_bytes());
    for v in map.scale().iter().chain(map.data()) {
        out.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_cmap<T: Scalar>(bytes: &[u8]) -> Result<ConcentrationMap<T>> {
    if bytes.len() < 4 || &bytes[..4] != CMAP_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload { expected: HEADER_LEN, actual: bytes.len() });
    }
    let version = bytes[4];
    if version != CMAP_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (w, h, r) = (read_u32(bytes, 5), read_u32(bytes, 9), read_u32(bytes, 13));
    let overflow = || Error::DimensionOverflow { width: w, height: h, stains: r };
    let values = (w as usize)
        .checked_mul(h as usize)
        .and_then(|n| n.checked_mul(r as usize))
        .ok_or_else(overflow)?;
    let expected = values
        .checked_add(r as usize)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(overflow)?;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload { expected, actual: bytes.len() });
    }
    let floats: Vec<T> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    let (scale, data) = floats.split_at(r as usize);
    ConcentrationMap::new(w as usize, h as usize, r as usize, data.to_vec(), scale.to_vec())
}

pub fn read_cmap<T: Scalar>(path: impl AsRef<Path>) -> Result<ConcentrationMap<T>> {
    decode_cmap(&fs::read(path)?)
}

pub fn write_cmap<T: Scalar>(path: impl AsRef<Path>, map: &ConcentrationMap<T>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_cmap(map))?;
    Ok(())
}
