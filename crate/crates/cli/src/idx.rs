//! IDX files as used by MNIST: a big-endian magic `0x00000803` (u8 images,
//! three dimensions) or `0x00000801` (u8 labels, one dimension), the
//! dimension sizes as big-endian u32, then the raw bytes.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use voradv_core::geometry::{ClassId, DatasetRole, LabeledDataset};
use voradv_core::PointCloud;

use crate::data::stratified_indices;
use crate::error::{CliError, CliResult, IoContext};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

fn header(bytes: &[u8], magic: u32, ndims: usize, what: &str) -> Result<Vec<usize>, String> {
    if bytes.len() < 4 {
        return Err(format!("truncated {what} header"));
    }
    let found = BigEndian::read_u32(&bytes[..4]);
    if found != magic {
        return Err(format!("magic mismatch for {what}: expected {magic:#010x}, found {found:#010x}"));
    }
    let end = 4 + 4 * ndims;
    if bytes.len() < end {
        return Err(format!("truncated {what} header"));
    }
    Ok((0..ndims).map(|i| BigEndian::read_u32(&bytes[4 + 4 * i..]) as usize).collect())
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, String> {
    let dims = header(bytes, IMAGES_MAGIC, 3, "images")?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    let want = count.checked_mul(rows).and_then(|v| v.checked_mul(cols)).ok_or("image dimensions overflow")?;
    if body.len() != want {
        return Err(format!("truncated images: {} pixel bytes, expected {want}", body.len()));
    }
    Ok(IdxImages { count, rows, cols, pixels: body.to_vec() })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, String> {
    let count = header(bytes, LABELS_MAGIC, 1, "labels")?[0];
    let body = &bytes[8..];
    if body.len() != count {
        return Err(format!("truncated labels: {} bytes, expected {count}", body.len()));
    }
    Ok(body.to_vec())
}

pub fn read_images(path: &Path) -> CliResult<IdxImages> {
    let bytes = std::fs::read(path).at(path)?;
    parse_images(&bytes).map_err(|m| CliError::format(path, m))
}

pub fn read_labels(path: &Path) -> CliResult<Vec<u8>> {
    let bytes = std::fs::read(path).at(path)?;
    parse_labels(&bytes).map_err(|m| CliError::format(path, m))
}

/// Pixels scaled to [0, 1]; digit `c` becomes class `c + 1`. Keeps a
/// stratified subset of `subset_n` items (0 keeps all).
pub fn to_dataset(images: &IdxImages, labels: &[u8], subset_n: usize, seed: u64, role: DatasetRole) -> CliResult<LabeledDataset> {
    if images.count != labels.len() {
        return Err(CliError::config(format!("{} images but {} labels", images.count, labels.len())));
    }
    let classes: Vec<ClassId> = labels.iter().map(|&l| l as ClassId + 1).collect();
    let keep = stratified_indices(&classes, subset_n, seed, "subset")?;
    let d = images.rows * images.cols;
    let mut points = PointCloud::with_capacity(d, keep.len());
    let mut row = vec![0.0; d];
    for &i in &keep {
        for (x, &p) in row.iter_mut().zip(images.image(i)) {
            *x = p as f64 / 255.0;
        }
        points.push(&row)?;
    }
    let mut ds = LabeledDataset::new(points, keep.iter().map(|&i| classes[i]).collect(), None, role)?;
    ds.seed = Some(seed);
    Ok(ds)
}
