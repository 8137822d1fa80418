//! Grayscale image files: 8-bit PGM (P5) and PNG.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};
use metamorph_core::ImageGrid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("cannot read image {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot open {}: {source}", path.display())]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write image {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image {} is not a valid grid: {source}", path.display())]
    Grid {
        path: PathBuf,
        #[source]
        source: metamorph_core::Error,
    },
    #[error("unsupported output extension for {} (use .pgm or .png)", path.display())]
    UnsupportedFormat { path: PathBuf },
}

/// Rec. 601 luma of an 8-bit RGB pixel, in `[0, 1]`.
fn luma601(p: [u8; 3]) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
}

/// Loads a PGM or PNG file as intensities in `[0, 1]`. Colour input is
/// reduced to Rec. 601 luma; alpha is ignored.
pub fn load_image(path: &Path) -> Result<ImageGrid, ImageIoError> {
    let read_err = |source| ImageIoError::Read {
        path: path.to_path_buf(),
        source,
    };
    let reader = ImageReader::open(path).map_err(|source| ImageIoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    let decoded = reader
        .with_guessed_format()
        .map_err(|source| ImageIoError::Open {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(read_err)?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let values: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        other => other.to_rgb8().pixels().map(|p| luma601(p.0)).collect(),
    };
    ImageGrid::new(width, height, values).map_err(|source| ImageIoError::Grid {
        path: path.to_path_buf(),
        source,
    })
}

/// 8-bit quantization: clamp to `[0, 1]`, scale by 255, round half away from zero.
pub fn quantize(img: &ImageGrid) -> Vec<u8> {
    img.values()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Writes an 8-bit grayscale image; the format follows the extension.
pub fn save_image(img: &ImageGrid, path: &Path) -> Result<(), ImageIoError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let bytes = quantize(img);
    let (w, h) = (img.width() as u32, img.height() as u32);
    let file = File::create(path).map_err(|source| ImageIoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    let out = BufWriter::new(file);
    let result = match ext.as_deref() {
        Some("pgm") => PnmEncoder::new(out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, w, h, ExtendedColorType::L8),
        Some("png") => PngEncoder::new(out).write_image(&bytes, w, h, ExtendedColorType::L8),
        _ => {
            return Err(ImageIoError::UnsupportedFormat {
                path: path.to_path_buf(),
            })
        }
    };
    result.map_err(|source| ImageIoError::Write {
        path: path.to_path_buf(),
        source,
    })
}
