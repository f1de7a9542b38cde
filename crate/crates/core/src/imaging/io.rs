use std::path::Path;

use crate::error::Result;
use crate::imaging::types::RgbImage;

/// Reads a PNG or TIFF tile and converts it to 8-bit RGB.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<RgbImage> {
    let img = image::open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w as usize, h as usize, img.into_raw())
}

/// Encodes as PNG regardless of extension.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
        .expect("buffer size matches dimensions");
    buf.write_to(&mut std::io::Cursor::new(&mut out), image::ImageFormat::Png)?;
    Ok(out)
}

pub fn write_png(path: impl AsRef<Path>, img: &RgbImage) -> Result<()> {
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_tiff_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<u8> = (0..5 * 4 * 3).map(|i| (i * 7 % 256) as u8).collect();
        let img = RgbImage::new(5, 4, data).unwrap();
        let png = dir.path().join("a.png");
        write_png(&png, &img).unwrap();
        assert_eq!(read_rgb(&png).unwrap(), img);

        let tif = dir.path().join("a.tif");
        image::RgbImage::from_raw(5, 4, img.data().to_vec()).unwrap().save(&tif).unwrap();
        assert_eq!(read_rgb(&tif).unwrap(), img);
    }
}
