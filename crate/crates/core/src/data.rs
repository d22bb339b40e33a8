//! MNIST (IDX) and CIFAR-10 (binary) ingestion.
//!
//! Pixels are rescaled from `0..=255` to `[-1, 1]` as `p / 127.5 - 1`.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_BYTES: usize = 3073;

pub const MNIST_FILES: [&str; 4] =
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

/// Images `[N, C, H, W]` in `[-1, 1]` with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if images.ndim() != 4 {
            return Err(Error::Ingestion(format!("images must be [N, C, H, W], got {:?}", images.shape())));
        }
        if images.rows() != labels.len() {
            return Err(Error::Ingestion(format!("{} images but {} labels", images.rows(), labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Ingestion(format!("label {l} out of range for {classes} classes")));
        }
        Ok(Dataset { images, labels, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Examples `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        Ok(Dataset {
            images: self.images.slice_rows(start, end)?,
            labels: self.labels[start..end].to_vec(),
            classes: self.classes,
        })
    }

    /// The first `n` examples, or all of them if there are fewer.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        self.slice(0, n.min(self.len()))
    }

    /// Splits off the last `count` examples.
    pub fn split_tail(&self, count: usize) -> Result<(Dataset, Dataset)> {
        if count == 0 || count >= self.len() {
            return Err(Error::config(format!("validation count {count} must be in 1..{}", self.len())));
        }
        let cut = self.len() - count;
        Ok((self.slice(0, cut)?, self.slice(cut, self.len())?))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Split sizes; limits truncate after the validation split is taken.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitOptions {
    /// Examples taken from the end of the training file for validation.
    pub validation: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_limit: Option<usize>,
}

impl SplitOptions {
    pub const MNIST: SplitOptions =
        SplitOptions { validation: 10_000, train_limit: None, validation_limit: None, test_limit: None };
    pub const CIFAR10: SplitOptions =
        SplitOptions { validation: 5_000, train_limit: None, validation_limit: None, test_limit: None };

    fn apply(&self, full_train: Dataset, test: Dataset) -> Result<Splits> {
        let (train, validation) = full_train.split_tail(self.validation)?;
        let limit = |d: Dataset, l: Option<usize>| match l {
            Some(n) => d.take(n.max(1)),
            None => Ok(d),
        };
        Ok(Splits {
            train: limit(train, self.train_limit)?,
            validation: limit(validation, self.validation_limit)?,
            test: limit(test, self.test_limit)?,
        })
    }
}

#[inline]
pub fn scale_pixel(p: u8) -> f32 {
    p as f32 / 127.5 - 1.0
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Ingestion(format!("{what}: truncated header")))
}

/// Parses an IDX3 image file into `[N, 1, rows, cols]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor<f32>> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Ingestion(format!("images: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(Error::Ingestion(format!(
            "images: expected {need} pixel bytes for {n}x{rows}x{cols}, found {}",
            body.len()
        )));
    }
    if n == 0 || rows == 0 || cols == 0 {
        return Err(Error::Ingestion("images: empty file".into()));
    }
    Tensor::from_vec(&[n, 1, rows, cols], body.iter().map(|&p| scale_pixel(p)).collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Ingestion(format!("labels: bad magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Ingestion(format!("labels: expected {n} bytes, found {}", body.len())));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Serializes images and labels in IDX form; used for fixtures.
pub fn write_idx(images: &[u8], labels: &[u8], rows: usize, cols: usize) -> (Vec<u8>, Vec<u8>) {
    let n = labels.len() as u32;
    let mut img = Vec::with_capacity(16 + images.len());
    for v in [IDX_IMAGES_MAGIC, n, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(images);
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))
}

fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = parse_idx_images(&read(images)?)?;
    let y = parse_idx_labels(&read(labels)?)?;
    if x.rows() != y.len() {
        return Err(Error::Ingestion(format!("{}: {} images but {} labels", images.display(), x.rows(), y.len())));
    }
    Dataset::new(x, y, 10)
}

/// Loads the four MNIST IDX files from `dir`.
pub fn load_mnist(dir: &Path, opts: &SplitOptions) -> Result<Splits> {
    let train = load_idx_pair(&dir.join(MNIST_FILES[0]), &dir.join(MNIST_FILES[1]))?;
    let test = load_idx_pair(&dir.join(MNIST_FILES[2]), &dir.join(MNIST_FILES[3]))?;
    opts.apply(train, test)
}

/// Parses concatenated CIFAR-10 binary records (label byte then 3072
/// channel-major pixels), keeping at most `limit` records.
pub fn parse_cifar10(bytes: &[u8], limit: Option<usize>) -> Result<Dataset> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(Error::Ingestion(format!(
            "CIFAR-10 file length {} is not a positive multiple of {CIFAR_RECORD_BYTES}",
            bytes.len()
        )));
    }
    let total = bytes.len() / CIFAR_RECORD_BYTES;
    let n = limit.map_or(total, |l| l.min(total)).max(1);
    let mut pixels = Vec::with_capacity(n * 3072);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD_BYTES).take(n) {
        labels.push(rec[0] as usize);
        pixels.extend(rec[1..].iter().map(|&p| scale_pixel(p)));
    }
    Dataset::new(Tensor::from_vec(&[n, 3, 32, 32], pixels)?, labels, 10)
}

fn concat(parts: Vec<Dataset>) -> Result<Dataset> {
    let n: usize = parts.iter().map(|d| d.len()).sum();
    let mut pixels = Vec::new();
    let mut labels = Vec::with_capacity(n);
    for p in parts {
        labels.extend_from_slice(&p.labels);
        pixels.extend(p.images.into_vec());
    }
    Dataset::new(Tensor::from_vec(&[n, 3, 32, 32], pixels)?, labels, 10)
}

/// Loads `data_batch_1..5.bin` and `test_batch.bin` from `dir`.
///
/// `opts.train_limit` also bounds how many training records are read, so
/// desk-scale subsets avoid decoding the whole set.
pub fn load_cifar10(dir: &Path, opts: &SplitOptions) -> Result<Splits> {
    let want = opts.train_limit.map(|l| l + opts.validation);
    let mut parts = Vec::new();
    let mut have = 0;
    for i in 1..=5 {
        if want.is_some_and(|w| have >= w) {
            break;
        }
        let d = parse_cifar10(&read(&dir.join(format!("data_batch_{i}.bin")))?, want.map(|w| w - have))?;
        have += d.len();
        parts.push(d);
    }
    let train = concat(parts)?;
    let test = parse_cifar10(&read(&dir.join("test_batch.bin"))?, opts.test_limit)?;
    opts.apply(train, test)
}

/// Deterministic toy classification set: one random prototype per class
/// in `[-1, 1]`, examples are prototypes plus uniform noise, clipped.
pub fn synthetic(n: usize, shape: [usize; 3], classes: usize, noise: f32, seed: u64) -> Result<Dataset> {
    if n == 0 || classes == 0 {
        return Err(Error::config("synthetic set needs examples and classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim: usize = shape.iter().product();
    let protos: Vec<Vec<f32>> =
        (0..classes).map(|_| (0..dim).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()).collect();
    let mut pixels = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        labels.push(c);
        pixels.extend(protos[c].iter().map(|&p| (p + rng.gen_range(-noise..=noise)).clamp(-1.0, 1.0)));
    }
    Dataset::new(Tensor::from_vec(&[n, shape[0], shape[1], shape[2]], pixels)?, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_endpoints() {
        assert_eq!(scale_pixel(0), -1.0);
        assert_eq!(scale_pixel(255), 1.0);
    }

    #[test]
    fn two_image_fixture() {
        let (img, lab) = write_idx(&[0, 255, 51, 204, 255, 0, 0, 255], &[7, 2], 2, 2);
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        let x = parse_idx_images(&img).unwrap();
        assert_eq!(x.shape(), &[2, 1, 2, 2]);
        assert_eq!(x.data(), &[-1.0, 1.0, -0.6, 0.6, 1.0, -1.0, -1.0, 1.0]);
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![7, 2]);
    }

    #[test]
    fn idx_errors() {
        let (mut img, lab) = write_idx(&[1, 2, 3, 4], &[1], 2, 2);
        assert!(matches!(parse_idx_images(&img[..18]), Err(Error::Ingestion(_))));
        assert!(matches!(parse_idx_images(&lab), Err(Error::Ingestion(_))));
        assert!(matches!(parse_idx_labels(&img), Err(Error::Ingestion(_))));
        img[3] = 0x01;
        assert!(parse_idx_images(&img).is_err());
    }

    #[test]
    fn cifar_record_fixture() {
        let mut rec = vec![3u8];
        rec.extend((0..3072).map(|i| (i % 256) as u8));
        let d = parse_cifar10(&rec, None).unwrap();
        assert_eq!(d.labels, vec![3]);
        assert_eq!(d.images.shape(), &[1, 3, 32, 32]);
        assert_eq!(d.images.data()[0], -1.0);
        assert_eq!(d.images.data()[255], 1.0);
        assert_eq!(d.images.data()[1024], -1.0);
        assert!(parse_cifar10(&rec[..3072], None).is_err());
    }

    #[test]
    fn cifar_subset() {
        let rec: Vec<u8> =
            (0..4).flat_map(|i| std::iter::once(i as u8).chain(std::iter::repeat_n(9, 3072))).collect();
        assert_eq!(parse_cifar10(&rec, Some(2)).unwrap().len(), 2);
        assert_eq!(parse_cifar10(&rec, Some(500)).unwrap().len(), 4);
    }

    #[test]
    fn splits_sum_to_total() {
        let d = synthetic(50, [1, 2, 2], 3, 0.1, 4).unwrap();
        let (a, b) = d.split_tail(10).unwrap();
        assert_eq!(a.len() + b.len(), 50);
        assert_eq!(b.labels, d.labels[40..].to_vec());
        assert!(d.split_tail(50).is_err());
    }
}
