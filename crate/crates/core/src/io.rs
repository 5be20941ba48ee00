//! Grayscale image input and labeling output (PGM P2/P5, PNG).

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{GrayImage, ImageEncoder, ImageFormat, Luma};

use crate::energy::ResponseMap;
use crate::error::{Error, Result};
use crate::grid::{GridLabeling, ImageGrid};

/// Loads an image as grayscale with intensities `v / 255`. Color input is
/// converted to luma first.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let img = image::open(path.as_ref())?.to_luma8();
    gray_to_grid(&img)
}

fn gray_to_grid(img: &GrayImage) -> Result<ImageGrid> {
    let (w, h) = img.dimensions();
    let values = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
    ImageGrid::new(w as usize, h as usize, values)
}

/// Reads a labeling image; any intensity above 0.5 is label 1.
pub fn read_labeling(path: impl AsRef<Path>) -> Result<GridLabeling> {
    let img = read_image(path)?;
    GridLabeling::new(
        img.width(),
        img.height(),
        img.intensities().iter().map(|&v| (v > 0.5) as u8).collect(),
    )
}

/// Masks use the same rule as labelings.
pub fn read_mask(path: impl AsRef<Path>) -> Result<GridLabeling> {
    read_labeling(path)
}

/// Writes label 0 as black and 1 as white. The format follows the file
/// extension: `.pgm`/`.pnm` give binary PGM, anything else PNG.
pub fn write_labeling(labeling: &GridLabeling, path: impl AsRef<Path>) -> Result<()> {
    let img = GrayImage::from_fn(labeling.width() as u32, labeling.height() as u32, |x, y| {
        Luma([labeling.labels()[y as usize * labeling.width() + x as usize] * 255])
    });
    write_gray(&img, path.as_ref())
}

/// Writes a response map scaled so that its maximum is white.
pub fn write_response_png(map: &ResponseMap, path: impl AsRef<Path>) -> Result<()> {
    let max = map.max();
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        let v = map.get(x as usize, y as usize);
        let scaled = if max > 0.0 {
            (v / max * 255.0).round()
        } else {
            0.0
        };
        Luma([scaled as u8])
    });
    write_gray(&img, path.as_ref())
}

/// Writes intensities in `[0, 1]` as an 8-bit grayscale image.
pub fn write_image(img: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let out = GrayImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let v = img.intensities()[y as usize * img.width() + x as usize];
        Luma([(v * 255.0).round() as u8])
    });
    write_gray(&out, path.as_ref())
}

fn write_gray(img: &GrayImage, path: &Path) -> Result<()> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") | Some("pnm") => {
            let file = BufWriter::new(File::create(path)?);
            PnmEncoder::new(file)
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .write_image(
                    img.as_raw(),
                    img.width(),
                    img.height(),
                    image::ExtendedColorType::L8,
                )?;
            Ok(())
        }
        _ => img
            .save_with_format(path, ImageFormat::Png)
            .map_err(Error::from),
    }
}
