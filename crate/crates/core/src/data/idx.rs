//! IDX files as distributed with MNIST and Fashion-MNIST, optionally gzipped.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded content of one IDX file.
#[derive(Clone, Debug, PartialEq)]
pub enum IdxData {
    /// `[count, rows, cols]` scaled to `[0, 1]`.
    Images(Tensor<f32>),
    Labels(Vec<u8>),
}

/// Images and labels of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    /// `[count, 1, rows, cols]` with values in `[0, 1]`.
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
}

fn format_error(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        format: "IDX",
        offset: offset as u64,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_error(bytes.len(), "truncated header"))
}

/// Parses raw (already decompressed) IDX bytes.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    let magic = be_u32(bytes, 0)?;
    let dims = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        other => return Err(format_error(0, format!("bad magic 0x{other:08x}"))),
    };
    let mut shape = Vec::with_capacity(dims);
    for d in 0..dims {
        shape.push(be_u32(bytes, 4 + 4 * d)? as usize);
    }
    let start = 4 + 4 * dims;
    let len: usize = shape.iter().product();
    let payload = bytes
        .get(start..start + len)
        .ok_or_else(|| format_error(bytes.len(), format!("truncated data: expected {len} bytes")))?;
    if bytes.len() > start + len {
        return Err(format_error(start + len, "trailing bytes after data"));
    }
    Ok(match magic {
        IMAGES_MAGIC => IdxData::Images(Tensor::new(
            shape,
            payload.iter().map(|&b| f32::from(b) / 255.0).collect(),
        )?),
        _ => IdxData::Labels(payload.to_vec()),
    })
}

/// Reads an IDX file; gzip input is detected from its magic bytes.
pub fn read_idx(path: impl AsRef<Path>) -> Result<IdxData> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut bytes = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        parse_idx(&bytes)
    } else {
        parse_idx(&raw)
    }
}

/// Encodes images (values rounded back to bytes) or labels as IDX.
pub fn encode_idx(data: &IdxData) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match data {
        IdxData::Images(t) => {
            let [n, rows, cols] = t.shape() else {
                return Err(Error::InvalidParameter(format!(
                    "IDX images need [count, rows, cols], got {:?}",
                    t.shape()
                )));
            };
            out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
            for d in [n, rows, cols] {
                out.extend_from_slice(&(*d as u32).to_be_bytes());
            }
            out.extend(t.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        }
        IdxData::Labels(labels) => {
            out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
            out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
            out.extend_from_slice(labels);
        }
    }
    Ok(out)
}

pub fn write_idx(path: impl AsRef<Path>, data: &IdxData, gzip: bool) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_idx(data)?;
    let bytes = if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

impl ImageSet {
    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Self> {
        let IdxData::Images(images) = read_idx(images.as_ref())? else {
            return Err(format_error(0, format!("{} holds labels, not images", images.as_ref().display())));
        };
        let IdxData::Labels(labels) = read_idx(labels.as_ref())? else {
            return Err(format_error(0, format!("{} holds images, not labels", labels.as_ref().display())));
        };
        Self::new(images, labels)
    }

    /// Accepts `[count, rows, cols]` or `[count, channels, rows, cols]`.
    pub fn new(images: Tensor<f32>, labels: Vec<u8>) -> Result<Self> {
        let images = match *images.shape() {
            [n, h, w] => images.reshape(vec![n, 1, h, w])?,
            [_, _, _, _] => images,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "images must be 3-D or 4-D, got {:?}",
                    images.shape()
                )))
            }
        };
        if images.shape()[0] != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[channels, rows, cols]` of one image.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// One more than the largest label.
    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    /// The first `n` samples (all of them if fewer).
    pub fn take(&self, n: usize) -> Self {
        self.select(&(0..n.min(self.len())).collect::<Vec<_>>())
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let per: usize = self.image_shape().iter().product();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * per..(i + 1) * per]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.image_shape());
        Self {
            images: Tensor::new(shape, data).expect("selected images"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
