//! Image and label map files.
//!
//! Gray images load from 8/16-bit single-channel PNG or TIFF and keep their
//! stored integer values. Label maps are 16-bit PNG by default; a `.npy`
//! extension selects the unbounded `uint32` array backend.

use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, ImageReader, Luma};

use crate::error::{Error, Result};

use super::grid::Grid;
use super::npy::{read_labels_npy, write_labels_npy};
use super::types::{GrayImage, InstanceMap, ProbabilityMap, SemanticMap, WeightMap};

pub fn read_gray_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let (width, height, data) = match extension(path).as_deref() {
        Some("npy") => {
            let array = super::npy::read_array(path)?;
            let (channels, h, w) = array.shape();
            if channels != 1 {
                return Err(Error::MultiChannel { channels: channels.min(255) as u8 });
            }
            (w, h, array.data().iter().map(|&v| v as f64).collect())
        }
        _ => {
            let image = decode(path)?;
            let (w, h) = (image.width() as usize, image.height() as usize);
            let data: Vec<f64> = match image {
                DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
                DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
                other => return Err(color_error(&other)),
            };
            (w, h, data)
        }
    };
    GrayImage::new(Grid::new(width, height, data)?)
}

/// Writes an image as a one-channel float32 array. Only `.npy` paths are
/// accepted; intensities are not rescaled.
pub fn write_gray_image(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    if extension(path).as_deref() != Some("npy") {
        return Err(Error::UnsupportedFormat(path.to_path_buf()));
    }
    let array = super::npy::FloatArray::from_planes(std::slice::from_ref(image.grid()))?;
    super::npy::write_array(path, &array)
}

/// Reads a `(C, H, W)` float32 array as per-class probabilities.
pub fn read_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    ProbabilityMap::new(super::npy::read_array(path)?.to_planes())
}

pub fn write_probability_map(path: impl AsRef<Path>, z: &ProbabilityMap) -> Result<()> {
    super::npy::write_array(path, &super::npy::FloatArray::from_planes(z.planes())?)
}

pub fn read_weight_map(path: impl AsRef<Path>) -> Result<WeightMap> {
    let array = super::npy::read_array(path)?;
    let (channels, _, _) = array.shape();
    if channels != 1 {
        return Err(Error::MultiChannel { channels: channels.min(255) as u8 });
    }
    WeightMap::new(array.to_planes().remove(0))
}

/// Weights are stored as float32, so values round to single precision.
pub fn write_weight_map(path: impl AsRef<Path>, w: &WeightMap) -> Result<()> {
    super::npy::write_array(path, &super::npy::FloatArray::from_planes(std::slice::from_ref(w.grid()))?)
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<InstanceMap> {
    let path = path.as_ref();
    let grid = match extension(path).as_deref() {
        Some("npy") => read_labels_npy(path)?,
        _ => {
            let image = decode(path)?;
            let (w, h) = (image.width() as usize, image.height() as usize);
            let data: Vec<u32> = match image {
                DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
                DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
                other => return Err(color_error(&other)),
            };
            Grid::new(w, h, data)?
        }
    };
    Ok(InstanceMap::new(grid))
}

pub fn write_label_map(path: impl AsRef<Path>, labels: &InstanceMap) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("npy") => write_labels_npy(path, labels.grid()),
        Some("png") => write_png16(path, labels.grid()),
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

pub fn read_semantic_map(path: impl AsRef<Path>) -> Result<SemanticMap> {
    let labels = read_label_map(path)?;
    SemanticMap::from_ids(labels.width(), labels.height(), labels.data())
}

pub fn write_semantic_map(path: impl AsRef<Path>, classes: &SemanticMap) -> Result<()> {
    let grid = classes.map(|&c| c as u32);
    write_label_map(path, &InstanceMap::new(grid))
}

fn write_png16(path: &Path, labels: &Grid<u32>) -> Result<()> {
    let mut data = Vec::with_capacity(labels.len());
    for &label in labels.data() {
        data.push(u16::try_from(label).map_err(|_| Error::LabelOverflow(label as u64))?);
    }
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(labels.width() as u32, labels.height() as u32, data)
            .expect("buffer matches dimensions");
    let mut encoded = Cursor::new(Vec::new());
    buf.write_to(&mut encoded, ImageFormat::Png)
        .map_err(|e| Error::Decode(e.to_string()))?;
    write_atomic(path, |f| f.write_all(encoded.get_ref()))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedBitDepth(u.to_string()),
        other => Error::Decode(other.to_string()),
    })
}

fn color_error(image: &DynamicImage) -> Error {
    let color = image.color();
    if color.channel_count() > 1 {
        Error::MultiChannel { channels: color.channel_count() }
    } else {
        Error::UnsupportedBitDepth(format!("{} bits per pixel", color.bits_per_pixel()))
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase())
}

/// Writes through a temporary sibling file and renames it into place.
pub fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut file = BufWriter::new(File::create(&tmp)?);
        write(&mut file)?;
        file.flush()?;
        file.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
