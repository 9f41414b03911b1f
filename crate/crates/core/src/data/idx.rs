//! IDX reader and writer. Files starting with the gzip magic bytes are
//! decompressed transparently.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::Array2;

use super::LabeledDataset;
use crate::error::{Result, SorrError};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images flattened row-major, one per row, scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Array2<f64>,
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut raw))
        .map_err(|e| SorrError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| SorrError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| SorrError::Data(format!("{}: truncated IDX header", path.display())))
}

fn header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(SorrError::Data(format!(
            "{}: IDX magic {found:#010x}, expected {magic:#010x}",
            path.display()
        )));
    }
    let shape = (0..dims)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let body = bytes.len() - 4 - 4 * dims;
    let expected: usize = shape.iter().product();
    if body != expected {
        return Err(SorrError::Data(format!(
            "{}: IDX payload has {body} bytes, header promises {expected}",
            path.display()
        )));
    }
    Ok(shape)
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = read_all(path)?;
    let shape = header(&bytes, path, IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (shape[0], shape[1], shape[2]);
    let pixels = Array2::from_shape_vec(
        (n, rows * cols),
        bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect(),
    )
    .expect("payload length checked");
    Ok(IdxImages { rows, cols, pixels })
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_all(path)?;
    header(&bytes, path, LABELS_MAGIC, 1)?;
    Ok(bytes[8..].to_vec())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| SorrError::io(path, e))?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let result = if gz {
        let mut enc = GzEncoder::new(BufWriter::new(file), Compression::default());
        enc.write_all(bytes).and_then(|_| enc.finish()).and_then(|mut w| w.flush())
    } else {
        let mut w = BufWriter::new(file);
        w.write_all(bytes).and_then(|_| w.flush())
    };
    result.map_err(|e| SorrError::io(path, e))
}

/// Writes `n` images of `rows x cols` raw bytes; gzip-compressed when the
/// path ends in `.gz`.
pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let per = rows * cols;
    if per == 0 || pixels.len() % per != 0 {
        return Err(SorrError::param(format!(
            "{} pixel bytes do not form {rows}x{cols} images",
            pixels.len()
        )));
    }
    let mut bytes = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, (pixels.len() / per) as u32, rows as u32, cols as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(pixels);
    write_bytes(path, &bytes)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_bytes(path, &bytes)
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            SorrError::io(
                dir.join(stem),
                std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found (also tried .gz)"),
            )
        })
}

/// Loads the standard training (`train = true`) or test split from `dir` as
/// a 10-class dataset with pixels in `[0, 1]`.
pub fn load_mnist(dir: &Path, train: bool) -> Result<LabeledDataset> {
    let prefix = if train { "train" } else { "t10k" };
    let images = read_idx_images(&locate(dir, &format!("{prefix}-images-idx3-ubyte"))?)?;
    let labels = read_idx_labels(&locate(dir, &format!("{prefix}-labels-idx1-ubyte"))?)?;
    if labels.len() != images.pixels.nrows() {
        return Err(SorrError::Data(format!(
            "{} images but {} labels in {}",
            images.pixels.nrows(),
            labels.len(),
            dir.display()
        )));
    }
    let classes: Vec<usize> = labels.iter().map(|&c| c as usize).collect();
    if let Some(c) = classes.iter().find(|&&c| c >= 10) {
        return Err(SorrError::Data(format!("digit label {c} out of range")));
    }
    Ok(LabeledDataset::multiclass(images.pixels, &classes, 10)?.with_name(format!("mnist-{prefix}")))
}
