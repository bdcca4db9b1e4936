//! Datasets: IDX (MNIST) files, synthetic Gaussian blobs, seeded splits and batches.

use crate::error::{invalid, Error, Result};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Shape(format!("{} input rows for {} labels", inputs.nrows(), labels.len())));
        }
        if class_count == 0 {
            return Err(invalid("class_count must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(invalid(format!("label {bad} out of range for {class_count} classes")));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(invalid("inputs must be finite"));
        }
        Ok(Self { inputs, labels, class_count })
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.ncols()
    }

    /// Rows `idx` in the given order; class count is preserved.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// The first `n` rows (all rows if `n` exceeds the size).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: header truncated")))
}

/// Unsigned-byte rank-3 image tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!("images: magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("images: dimensions overflow".into()))?;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(Error::Format(format!("images: payload has {} bytes, header declares {expected}", payload.len())));
    }
    Ok(IdxImages { count, rows, cols, pixels: payload[..expected].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!("labels: magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Format(format!("labels: payload has {} bytes, header declares {count}", payload.len())));
    }
    Ok(payload[..count].to_vec())
}

/// Reads an IDX image/label pair (optionally gzip-compressed); pixels are scaled by 1/255.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = parse_idx_images(&read_maybe_gz(images)?)?;
    let lab = parse_idx_labels(&read_maybe_gz(labels)?)?;
    if img.count != lab.len() {
        return Err(Error::Format(format!("{} images but {} labels", img.count, lab.len())));
    }
    let features = img.rows * img.cols;
    let inputs = Array2::from_shape_vec((img.count, features), img.pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .map_err(|e| Error::Format(e.to_string()))?;
    let labels: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
    let class_count = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(inputs, labels, class_count)
}

pub fn encode_idx_images(images: &IdxImages) -> Result<Vec<u8>> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(Error::Shape("pixel buffer does not match dimensions".into()));
    }
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Writes `bytes`, gzip-compressed when `gzip` is set.
pub fn write_bytes(path: &Path, bytes: &[u8], gzip: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    if gzip {
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
    }
    Ok(())
}

const CENTER_ATTEMPTS: usize = 1000;
const LAYOUT_RESTARTS: usize = 50;

/// Unit-variance Gaussian clusters around seeded random centers whose pairwise
/// distances are at least `separation`.
///
/// Centers are drawn from an isotropic Gaussian whose scale puts the typical pairwise
/// distance at 1.5·`separation`; placements closer than `separation` are redrawn, and
/// the scale grows by 10% after every failed layout.
pub fn synth_blobs(
    class_count: usize,
    dim: usize,
    samples_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count == 0 || dim == 0 || samples_per_class == 0 {
        return Err(invalid("class_count, dim and samples_per_class must be positive"));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(invalid(format!("separation must be positive and finite, got {separation}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scale = 1.5 * separation / (2.0 * dim as f64).sqrt();
    let mut centers = None;
    for _ in 0..LAYOUT_RESTARTS {
        centers = place_centers(&mut rng, class_count, dim, scale, separation);
        if centers.is_some() {
            break;
        }
        scale *= 1.1;
    }
    let centers = centers.ok_or_else(|| {
        Error::Infeasible(format!("could not place {class_count} centers {separation} apart in {dim} dimensions"))
    })?;

    let n = class_count * samples_per_class;
    let mut inputs = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for s in 0..samples_per_class {
            let mut row = inputs.row_mut(c * samples_per_class + s);
            for (x, &m) in row.iter_mut().zip(center) {
                *x = m + rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(c);
        }
    }
    Dataset::new(inputs, labels, class_count)
}

fn place_centers(rng: &mut ChaCha8Rng, k: usize, dim: usize, scale: f64, sep: f64) -> Option<Vec<Vec<f64>>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let c = (0..CENTER_ATTEMPTS).find_map(|_| {
            let cand: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            centers.iter().all(|o| dist(o, &cand) >= sep).then_some(cand)
        })?;
        centers.push(c);
    }
    Some(centers)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Disjoint train/validation split with seeded per-epoch train batching.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub val: Dataset,
    pub batch_size: usize,
    pub seed: u64,
}

impl SplitData {
    pub fn epoch_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        epoch_batches(self.train.len(), self.batch_size, self.seed, epoch)
    }
}

/// Seeded shuffle into `round(N·val_fraction)` validation rows and the rest for training.
pub fn split_and_batch(ds: &Dataset, val_fraction: f64, batch_size: usize, seed: u64) -> Result<SplitData> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(invalid(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
    }
    if batch_size == 0 {
        return Err(invalid("batch_size must be positive"));
    }
    let n = ds.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(invalid(format!("split of {n} samples at {val_fraction} leaves an empty side")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut split_rng(seed));
    let (val_idx, train_idx) = idx.split_at(n_val);
    Ok(SplitData { train: ds.select(train_idx), val: ds.select(val_idx), batch_size, seed })
}

fn split_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Row indices `0..n` shuffled for `epoch` and chunked into batches; the last batch may be short.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    idx.shuffle(&mut rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
