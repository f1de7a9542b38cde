//! Image containers, Beer-Lambert optical density transforms, tissue masking and
//! the on-disk formats shared by every other module.

mod cmap;
mod io;
mod od;
mod stain_matrix;
mod types;

pub use cmap::{decode_cmap, encode_cmap, read_cmap, write_cmap, CMAP_MAGIC, CMAP_VERSION};
pub use io::{encode_png, read_rgb, write_png};
pub use od::{
    gray_od, od_lut, od_to_rgb, rgb_to_od, tissue_mask, DEFAULT_ILLUMINANT, DEFAULT_TISSUE_THRESHOLD,
};
pub(crate) use od::od_to_intensity;
pub use stain_matrix::{StainMatrix, EOSIN, HEMATOXYLIN, SAFFRON};
pub(crate) use types::check_dims;
pub use types::{BinaryMask, ConcentrationMap, Dims, OdImage, RgbImage};
