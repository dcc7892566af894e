//! Datasets: CIFAR-10 binary batches, a synthetic shape corpus, and subsetting.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::filters::{from_byte, to_byte, FilterSpec};
use crate::image::Image;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_RECORD: usize = 1 + 3 * CIFAR_SIDE * CIFAR_SIDE;
pub const CIFAR_PER_BATCH: usize = 10_000;
pub const CIFAR_CLASSES: [&str; 10] =
    ["airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"];

pub const SYNTH_CLASSES: [&str; 4] = ["hbar", "vbar", "disk", "checker"];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub images: Vec<Image<T>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl<T: Real> Dataset<T> {
    pub fn new(images: Vec<Image<T>>, labels: Vec<usize>, num_classes: usize, class_names: Vec<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::InvalidConfig(format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label: l, classes: num_classes });
        }
        if let Some(first) = images.first() {
            if images.iter().any(|i| i.shape() != first.shape()) {
                return Err(Error::InvalidConfig("images differ in shape".into()));
            }
        }
        Ok(Self { images, labels, num_classes, class_names })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_shape(&self) -> Option<[usize; 3]> {
        self.images.first().map(Image::shape)
    }

    /// Network inputs after applying `filter` to every image.
    pub fn filtered_tensors(&self, filter: &FilterSpec) -> Result<Vec<Tensor<T>>> {
        use rayon::prelude::*;
        self.images.par_iter().map(|img| Ok(filter.apply(img)?.to_tensor())).collect()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Seeded sample of `n` items without replacement, stratified by label.
    ///
    /// Each class receives its proportional share (largest remainder), so the
    /// label distribution tracks the original as closely as integer counts allow.
    pub fn subset(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(Error::DatasetTooSmall { needed: n, have: self.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let total = self.len().max(1);
        let mut quota: Vec<usize> = by_class.iter().map(|c| c.len() * n / total).collect();
        let mut rest: Vec<(usize, usize)> =
            by_class.iter().enumerate().map(|(k, c)| ((c.len() * n) % total, k)).collect();
        rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let short = n - quota.iter().sum::<usize>();
        for &(_, k) in rest.iter().take(short) {
            quota[k] += 1;
        }
        let mut picked = Vec::with_capacity(n);
        for (members, q) in by_class.iter_mut().zip(quota) {
            members.shuffle(&mut rng);
            picked.extend_from_slice(&members[..q]);
        }
        picked.shuffle(&mut rng);
        Ok(self.select(&picked))
    }

    /// Splits off the last `test` items (after a seeded shuffle) as a test set.
    pub fn split(&self, test: usize, seed: u64) -> Result<(Self, Self)> {
        if test > self.len() {
            return Err(Error::DatasetTooSmall { needed: test, have: self.len() });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = self.len() - test;
        Ok((self.select(&order[..cut]), self.select(&order[cut..])))
    }
}

fn cifar_names() -> Vec<String> {
    CIFAR_CLASSES.iter().map(|s| s.to_string()).collect()
}

/// Parses one CIFAR-10 binary batch (label byte + 3072 channel-planar pixel bytes per record).
pub fn parse_cifar_batch<T: Real>(bytes: &[u8], path: &str) -> Result<Dataset<T>> {
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD;
        return Err(Error::DataFile {
            path: path.into(),
            msg: format!(
                "truncated record {whole} at byte offset {}: {} of {CIFAR_RECORD} bytes present",
                whole * CIFAR_RECORD,
                bytes.len() % CIFAR_RECORD
            ),
        });
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    let mut labels = Vec::with_capacity(bytes.len() / CIFAR_RECORD);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = usize::from(rec[0]);
        if label >= 10 {
            return Err(Error::DataFile {
                path: path.into(),
                msg: format!("label {label} out of range at byte offset {}", i * CIFAR_RECORD),
            });
        }
        labels.push(label);
        let data = rec[1..].iter().map(|&b| from_byte(b)).collect();
        images.push(Image::new(3, CIFAR_SIDE, CIFAR_SIDE, data)?);
    }
    Dataset::new(images, labels, 10, cifar_names())
}

/// Serialises a 3x32x32 dataset in the CIFAR-10 binary record layout.
pub fn write_cifar_batch<T: Real, W: Write>(ds: &Dataset<T>, mut out: W) -> Result<()> {
    for (img, &label) in ds.images.iter().zip(&ds.labels) {
        if img.shape() != [3, CIFAR_SIDE, CIFAR_SIDE] || label > 255 {
            return Err(Error::UnsupportedImage(format!("cannot store {:?} as a CIFAR record", img.shape())));
        }
        let mut rec = Vec::with_capacity(CIFAR_RECORD);
        rec.push(label as u8);
        rec.extend(img.data().iter().map(|&v| to_byte(v)));
        out.write_all(&rec)?;
    }
    Ok(())
}

fn read_batch_file<T: Real>(path: &Path) -> Result<Dataset<T>> {
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::DataFile { path: name.clone(), msg: e.to_string() })?;
    parse_cifar_batch(&bytes, &name)
}

fn concat<T: Real>(parts: Vec<Dataset<T>>) -> Result<Dataset<T>> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for p in parts {
        images.extend(p.images);
        labels.extend(p.labels);
    }
    Dataset::new(images, labels, 10, cifar_names())
}

/// Loads `data_batch_{1..5}.bin` and `test_batch.bin` from a CIFAR-10 binary directory.
pub fn load_cifar10<T: Real>(dir: impl AsRef<Path>) -> Result<(Dataset<T>, Dataset<T>)> {
    let dir = dir.as_ref();
    let train = (1..=5)
        .map(|i| read_batch_file(&dir.join(format!("data_batch_{i}.bin"))))
        .collect::<Result<Vec<_>>>()?;
    let test = read_batch_file(&dir.join("test_batch.bin"))?;
    Ok((concat(train)?, test))
}

/// Loads only `test_batch.bin`.
pub fn load_cifar10_test<T: Real>(dir: impl AsRef<Path>) -> Result<Dataset<T>> {
    read_batch_file(&dir.as_ref().join("test_batch.bin"))
}

/// Four-class RGB corpus of noisy shapes: horizontal bar, vertical bar, disk, checkerboard.
///
/// A light foreground shape sits on a dark background. Colours, positions,
/// sizes and phases are jittered per image, and Gaussian
/// pixel noise (std 0.04) is added. Labels are balanced and interleaved.
pub fn synth_shapes<T: Real>(num_per_class: usize, size: usize, seed: u64) -> Result<Dataset<T>> {
    if size < 8 {
        return Err(Error::InvalidConfig(format!("synthetic image size {size} < 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.04).expect("valid std");
    let s = size as f64;
    let mut images = Vec::with_capacity(4 * num_per_class);
    let mut labels = Vec::with_capacity(4 * num_per_class);
    for _ in 0..num_per_class {
        for class in 0..4 {
            let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..0.35));
            let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.65..1.0));
            let thick = rng.random_range(s / 6.0..s / 3.5);
            let offset = rng.random_range(thick / 2.0 + 1.0..s - thick / 2.0 - 1.0);
            let (cy, cx) = (rng.random_range(s * 0.35..s * 0.65), rng.random_range(s * 0.35..s * 0.65));
            let radius = rng.random_range(s * 0.2..s * 0.32);
            let cell = rng.random_range(s / 8.0..s / 4.0);
            let (py, px) = (rng.random_range(0.0..cell), rng.random_range(0.0..cell));
            let inside = |y: f64, x: f64| match class {
                0 => (y - offset).abs() < thick / 2.0,
                1 => (x - offset).abs() < thick / 2.0,
                2 => (y - cy).powi(2) + (x - cx).powi(2) < radius * radius,
                _ => (((y + py) / cell).floor() as i64 + ((x + px) / cell).floor() as i64) % 2 == 0,
            };
            let mut data = Vec::with_capacity(3 * size * size);
            for c in 0..3 {
                for y in 0..size {
                    for x in 0..size {
                        let base = if inside(y as f64 + 0.5, x as f64 + 0.5) { fg[c] } else { bg[c] };
                        data.push(T::lit(base + noise.sample(&mut rng)));
                    }
                }
            }
            images.push(Image::from_clamped(3, size, size, data)?);
            labels.push(class);
        }
    }
    Dataset::new(images, labels, 4, SYNTH_CLASSES.iter().map(|s| s.to_string()).collect())
}
