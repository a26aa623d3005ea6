//! Dataset ingestion: MNIST IDX files, synthetic noisy XOR, and seeded
//! minibatch iteration.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_SIDE: usize = 28;

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Default standard deviation of the Gaussian noise added to XOR corners.
pub const XOR_NOISE_STD: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One sample per row.
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::shape(format!("label {bad} out of range for {n_classes} classes")));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Splits into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    pub fn batches(&self, batch_size: usize, seed: u64) -> Result<Minibatches<'_>> {
        minibatches(self, batch_size, seed)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(Error::Truncated {
                offset: self.offset,
                needed: n,
                available: self.bytes.len() - self.offset,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn expect_magic(r: &mut Reader<'_>, expected: u32) -> Result<()> {
    let found = r.u32_be()?;
    if found != expected {
        return Err(Error::Format {
            expected: format!("IDX magic {expected:#010x}"),
            found: format!("{found:#010x}"),
        });
    }
    Ok(())
}

/// Parses an IDX3 image file; pixels are scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    let mut r = Reader { bytes, offset: 0 };
    expect_magic(&mut r, IDX_IMAGES_MAGIC)?;
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(Error::Format {
            expected: format!("{MNIST_SIDE}x{MNIST_SIDE} images"),
            found: format!("{rows}x{cols}"),
        });
    }
    let pixels = r.take(n * rows * cols)?;
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Matrix::from_vec(n, rows * cols, data)
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let mut r = Reader { bytes, offset: 0 };
    expect_magic(&mut r, IDX_LABELS_MAGIC)?;
    let n = r.u32_be()? as usize;
    Ok(r.take(n)?.iter().map(|&l| l as usize).collect())
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let features = parse_idx_images(&images)?;
    let labels = parse_idx_labels(&labels)?;
    Dataset::new(features, labels, 10)
}

/// Loads the standard uncompressed train and test files from `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_mnist_idx(dir.join(MNIST_TRAIN_IMAGES), dir.join(MNIST_TRAIN_LABELS))?;
    let test = load_mnist_idx(dir.join(MNIST_TEST_IMAGES), dir.join(MNIST_TEST_LABELS))?;
    Ok((train, test))
}

const XOR_CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];

/// `n` noisy XOR samples. Corners are assigned round-robin and the label is
/// the XOR of the corner coordinates, regardless of where the noise moves
/// the point.
pub fn gen_xor(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n % 4 != 0 {
        return Err(Error::config(format!("XOR sample count {n} is not divisible by 4")));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::config(format!("noise std must be finite and >= 0, got {noise_std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std).expect("checked above");
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (cx, cy) = XOR_CORNERS[i % 4];
        data.push(cx + noise.sample(&mut rng));
        data.push(cy + noise.sample(&mut rng));
        labels.push(usize::from((cx != 0.0) != (cy != 0.0)));
    }
    Dataset::new(Matrix::from_vec(n, 2, data)?, labels, 2)
}

/// One epoch over a seeded permutation of the dataset.
pub struct Minibatches<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

/// Iterates one epoch in batches of `batch_size`; the final batch may be
/// short. A batch size above the dataset size yields one full batch.
pub fn minibatches(ds: &Dataset, batch_size: usize, seed: u64) -> Result<Minibatches<'_>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    Ok(Minibatches {
        ds,
        order,
        batch_size,
        pos: 0,
    })
}

impl Iterator for Minibatches<'_> {
    type Item = (Matrix, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        Some((
            self.ds.features.select_rows(idx),
            idx.iter().map(|&i| self.ds.labels[i]).collect(),
        ))
    }
}

/// Endless stream of minibatches; every epoch draws a fresh permutation from
/// a single seeded generator.
pub struct BatchStream<'a> {
    ds: &'a Dataset,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl<'a> BatchStream<'a> {
    pub fn new(ds: &'a Dataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if ds.is_empty() {
            return Err(Error::config("cannot draw batches from an empty dataset"));
        }
        Ok(BatchStream {
            ds,
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..ds.len()).collect(),
            batch_size,
            pos: ds.len(),
        })
    }

    pub fn next_batch(&mut self) -> (Matrix, Vec<usize>) {
        if self.pos >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        (
            self.ds.features.select_rows(idx),
            idx.iter().map(|&i| self.ds.labels[i]).collect(),
        )
    }
}
