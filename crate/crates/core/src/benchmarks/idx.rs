//! IDX (MNIST) file reader. All header integers are big-endian.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images scaled to `[0, 1]` plus their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxSplit {
    pub rows: usize,
    pub cols: usize,
    /// `[count, rows * cols]`, row-major.
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
}

impl IdxSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let d = self.rows * self.cols;
        &self.images[i * d..(i + 1) * d]
    }
}

fn ingestion(path: &Path, offset: u64, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| ingestion(path, offset as u64, "file ends inside the header"))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Returns `(rows, cols, raw pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(ingestion(path, 0, format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(ingestion(
            path,
            bytes.len() as u64,
            format!("truncated: header declares {count} images of {rows}x{cols} ({need} bytes), found {}", body.len()),
        ));
    }
    if body.len() > need {
        return Err(ingestion(path, (16 + need) as u64, "trailing bytes after the last image"));
    }
    Ok((rows, cols, body.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(ingestion(path, 0, format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(ingestion(
            path,
            (8 + body.len().min(count)) as u64,
            format!("header declares {count} labels, found {}", body.len()),
        ));
    }
    if let Some(pos) = body.iter().position(|&l| l > 9) {
        return Err(ingestion(path, (8 + pos) as u64, format!("label {} outside 0..=9", body[pos])));
    }
    Ok(body.to_vec())
}

/// Reads an image file and its label file; pixels become `u8 / 255`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<IdxSplit> {
    let (rows, cols, raw) = read_idx_images(images)?;
    let labels_v = read_idx_labels(labels)?;
    let count = raw.len() / (rows * cols).max(1);
    if count != labels_v.len() {
        return Err(ingestion(
            labels,
            4,
            format!("{} labels but {} images in {}", labels_v.len(), count, images.display()),
        ));
    }
    Ok(IdxSplit {
        rows,
        cols,
        images: raw.iter().map(|&p| p as f32 / 255.0).collect(),
        labels: labels_v,
    })
}

/// The four canonical files under `<root>/mnist/`.
pub fn mnist_files(root: &Path) -> [PathBuf; 4] {
    let dir = root.join("mnist");
    [
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    ]
}

/// Canonical MNIST files absent under `root`.
pub fn missing_mnist_files(root: &Path) -> Vec<PathBuf> {
    mnist_files(root).into_iter().filter(|p| !p.is_file()).collect()
}

/// Explicit root if given, else `$SEQUEL_DATA_DIR`.
pub fn resolve_data_root(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("SEQUEL_DATA_DIR").map(PathBuf::from))
}

/// Train and test splits of MNIST.
#[derive(Clone, Debug)]
pub struct MnistSource {
    pub train: IdxSplit,
    pub test: IdxSplit,
}

impl MnistSource {
    pub fn load(root: &Path) -> Result<Self> {
        let missing = missing_mnist_files(root);
        if let Some(first) = missing.first() {
            return Err(Error::io(
                first,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!(
                        "missing MNIST files: {}",
                        missing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
                    ),
                ),
            ));
        }
        let [tri, trl, tei, tel] = mnist_files(root);
        Ok(Self {
            train: load_idx(&tri, &trl)?,
            test: load_idx(&tei, &tel)?,
        })
    }
}
