//! Datasets: MNIST IDX files, preprocessed 124-sample ECG beats in CSV, a
//! Gaussian-cluster generator, and disjoint per-client partitioning.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGE_MAGIC: u32 = 2051;
pub const IDX_LABEL_MAGIC: u32 = 2049;

/// Heartbeat classes in label-index order.
pub const ECG_CLASS_TOKENS: [&str; 5] = ["N", "L", "R", "A", "V"];
pub const ECG_FEATURES: usize = 124;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `[N, features]`
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.shape().len() != 2 {
            return Err(Error::Data(format!("inputs must be [N, features], got {:?}", inputs.shape())));
        }
        if inputs.batch_size() != labels.len() {
            return Err(Error::shape("dataset labels", vec![inputs.batch_size()], vec![labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            name: name.into(),
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.sample_len()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let inputs = self.inputs.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(self.name.clone(), inputs, labels, self.num_classes)
    }

    /// Appends `other`'s samples after this dataset's.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if other.features() != self.features() || other.num_classes != self.num_classes {
            return Err(Error::Data("cannot join datasets of different shape".into()));
        }
        let mut data = self.inputs.data().to_vec();
        data.extend_from_slice(other.inputs.data());
        let inputs = Tensor::new(vec![self.len() + other.len(), self.features()], data)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(self.name.clone(), inputs, labels, self.num_classes)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// SHA-256 over the feature bits and labels.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in self.inputs.data() {
            h.update(v.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Per-feature zero-mean, unit-variance scaling. Constant features are only centred.
    pub fn standardize(&mut self) {
        let (n, f) = (self.len(), self.features());
        let data = self.inputs.data_mut();
        for j in 0..f {
            let mean = (0..n).map(|i| data[i * f + j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (data[i * f + j] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..n {
                data[i * f + j] = (data[i * f + j] - mean) / sd;
            }
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            message: "truncated header".into(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file into `[n, rows * cols]` values scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad image magic {magic}, expected {IDX_IMAGE_MAGIC}"),
        });
    }
    let n = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let want = 16 + n * rows * cols;
    if bytes.len() != want {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: bytes.len().min(want) as u64,
            message: format!("expected {want} bytes for {n} images of {rows}x{cols}, found {}", bytes.len()),
        });
    }
    if n == 0 || rows * cols == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 4,
            message: "empty image file".into(),
        });
    }
    let data = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor::new(vec![n, rows * cols], data)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad label magic {magic}, expected {IDX_LABEL_MAGIC}"),
        });
    }
    let n = read_u32(bytes, 4, path)? as usize;
    if bytes.len() != 8 + n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: bytes.len().min(8 + n) as u64,
            message: format!("expected {} bytes for {n} labels, found {}", 8 + n, bytes.len()),
        });
    }
    Ok(bytes[8..].iter().map(|&b| usize::from(b)).collect())
}

pub fn load_mnist_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (image_path.as_ref(), label_path.as_ref());
    let inputs = parse_idx_images(&read_file(ip)?, ip)?;
    let labels = parse_idx_labels(&read_file(lp)?, lp)?;
    if labels.len() != inputs.batch_size() {
        return Err(Error::Format {
            path: lp.to_path_buf(),
            offset: 4,
            message: format!("{} labels for {} images", labels.len(), inputs.batch_size()),
        });
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= 10) {
        return Err(Error::Format {
            path: lp.to_path_buf(),
            offset: 8 + i as u64,
            message: format!("label {l} outside 0-9"),
        });
    }
    Dataset::new("mnist", inputs, labels, 10)
}

/// Expects the standard file names (`train-images-idx3-ubyte`, ...) under `dir`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"))?;
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"))?;
    Ok((train, test))
}

pub fn ecg_class_index(token: &str) -> Option<usize> {
    ECG_CLASS_TOKENS.iter().position(|&t| t == token)
}

/// Reads rows of 124 numeric features followed by a class token from
/// `N, L, R, A, V`. A non-numeric first row is taken as a header.
pub fn load_ecg_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: 0,
            message: e.to_string(),
        })?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i as u64 + 1;
        let err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            row,
            message,
        };
        let record = record.map_err(|e| err(e.to_string()))?;
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != ECG_FEATURES + 1 {
            return Err(err(format!(
                "expected {} columns ({ECG_FEATURES} features + class), found {}",
                ECG_FEATURES + 1,
                record.len()
            )));
        }
        for (j, field) in record.iter().take(ECG_FEATURES).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(format!("column {}: {field:?} is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(err(format!("column {}: non-finite value", j + 1)));
            }
            values.push(v);
        }
        let token = &record[ECG_FEATURES];
        labels.push(ecg_class_index(token).ok_or_else(|| err(format!("unknown class token {token:?}")))?);
    }
    if labels.is_empty() {
        return Err(Error::Csv {
            path: path.to_path_buf(),
            row: 0,
            message: "no data rows".into(),
        });
    }
    let inputs = Tensor::new(vec![labels.len(), ECG_FEATURES], values)?;
    Dataset::new("ecg", inputs, labels, ECG_CLASS_TOKENS.len())
}

/// Seeded random half/half split into `(train, test)`; train gets `floor(N/2)`.
pub fn split_half(dataset: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    if dataset.len() < 2 {
        return Err(Error::Data("need at least 2 samples to split".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let half = dataset.len() / 2;
    Ok((dataset.subset(&order[..half])?, dataset.subset(&order[half..])?))
}

/// Gaussian class clusters with unit within-class standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub name: String,
    pub num_classes: usize,
    pub features: usize,
    pub n_per_class: usize,
    /// Minimum distance between class means, in within-class standard deviations.
    pub separation: f64,
}

pub const DEFAULT_SEPARATION: f64 = 6.0;

impl SynthSpec {
    pub fn new(num_classes: usize, features: usize, n_per_class: usize) -> Self {
        Self {
            name: "synth".into(),
            num_classes,
            features,
            n_per_class,
            separation: DEFAULT_SEPARATION,
        }
    }
}

pub fn synth_dataset(num_classes: usize, features: usize, n_per_class: usize, seed: u64) -> Result<Dataset> {
    synth_dataset_with(&SynthSpec::new(num_classes, features, n_per_class), seed)
}

/// Samples are interleaved by class: sample `i` belongs to class `i % num_classes`.
pub fn synth_dataset_with(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    let (c, f, n) = (spec.num_classes, spec.features, spec.n_per_class);
    if c == 0 || f == 0 || n == 0 {
        return Err(Error::Data("synthetic dataset dimensions must be positive".into()));
    }
    if spec.separation < 4.0 {
        return Err(Error::Data(format!(
            "class separation {} is below 4 standard deviations",
            spec.separation
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<Vec<f64>> = (0..c)
        .map(|_| (0..f).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    if c > 1 {
        let mut min_d = f64::INFINITY;
        for a in 0..c {
            for b in a + 1..c {
                let d: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y) * (x - y)).sum();
                min_d = min_d.min(d.sqrt());
            }
        }
        let scale = spec.separation / min_d;
        means.iter_mut().flatten().for_each(|v| *v *= scale);
    }
    let mut data = Vec::with_capacity(c * n * f);
    let mut labels = Vec::with_capacity(c * n);
    for _ in 0..n {
        for (class, mean) in means.iter().enumerate() {
            for &m in mean {
                let noise: f64 = StandardNormal.sample(&mut rng);
                data.push(m + noise);
            }
            labels.push(class);
        }
    }
    let inputs = Tensor::new(vec![c * n, f], data)?;
    Dataset::new(spec.name.clone(), inputs, labels, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub client_id: usize,
    pub train: Dataset,
    pub holdout: Option<Dataset>,
    /// Source-dataset rows behind `train` and `holdout`.
    pub train_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: Vec<Shard>,
    /// Rows not assigned to any client, if any.
    pub remainder: Option<Dataset>,
    pub remainder_indices: Vec<usize>,
}

/// Shuffles once with `seed` and deals out disjoint, equal-size shards.
pub fn partition(
    dataset: &Dataset,
    num_clients: usize,
    train_per_client: usize,
    holdout_per_client: usize,
    seed: u64,
) -> Result<Partition> {
    if num_clients == 0 || train_per_client == 0 {
        return Err(Error::Data("need at least one client with at least one training sample".into()));
    }
    let per_client = train_per_client + holdout_per_client;
    let needed = num_clients * per_client;
    if needed > dataset.len() {
        return Err(Error::Data(format!(
            "{num_clients} clients x {per_client} samples needs {needed}, dataset has {}",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut shards = Vec::with_capacity(num_clients);
    for (client_id, chunk) in order[..needed].chunks_exact(per_client).enumerate() {
        let (train_idx, hold_idx) = chunk.split_at(train_per_client);
        shards.push(Shard {
            client_id,
            train: dataset.subset(train_idx)?,
            holdout: if hold_idx.is_empty() {
                None
            } else {
                Some(dataset.subset(hold_idx)?)
            },
            train_indices: train_idx.to_vec(),
            holdout_indices: hold_idx.to_vec(),
        });
    }
    let rest = &order[needed..];
    Ok(Partition {
        shards,
        remainder: if rest.is_empty() {
            None
        } else {
            Some(dataset.subset(rest)?)
        },
        remainder_indices: rest.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn idx_images(n: u32, rows: u32, cols: u32, magic: u32) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [magic, n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend((0..n * rows * cols).map(|i| (i % 256) as u8));
        b
    }

    #[test]
    fn idx_images_parse_and_reject() {
        let p = Path::new("mem");
        let bytes = idx_images(3, 2, 2, IDX_IMAGE_MAGIC);
        let t = parse_idx_images(&bytes, p).unwrap();
        assert_eq!(t.shape(), &[3, 4]);
        assert_eq!(t.data()[1], 1.0 / 255.0);

        let err = parse_idx_images(&bytes[..bytes.len() - 1], p).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 27, .. }), "{err}");
        let err = parse_idx_images(&idx_images(3, 2, 2, IDX_LABEL_MAGIC), p).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }));
        assert!(parse_idx_images(&bytes[..10], p).is_err());
    }

    #[test]
    fn idx_labels_parse() {
        let p = Path::new("mem");
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&[7, 0, 9]);
        assert_eq!(parse_idx_labels(&b, p).unwrap(), vec![7, 0, 9]);
        assert!(parse_idx_labels(&b[..10], p).is_err());
    }

    #[test]
    fn ecg_tokens() {
        assert_eq!(ecg_class_index("N"), Some(0));
        assert_eq!(ecg_class_index("L"), Some(1));
        assert_eq!(ecg_class_index("V"), Some(4));
        assert_eq!(ecg_class_index("Q"), None);
    }

    #[test]
    fn synth_deterministic_and_balanced() {
        let a = synth_dataset(5, 8, 20, 3).unwrap();
        let b = synth_dataset(5, 8, 20, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![20; 5]);
        assert_ne!(a, synth_dataset(5, 8, 20, 4).unwrap());
        assert!(synth_dataset(0, 8, 20, 3).is_err());
    }

    #[test]
    fn partition_is_disjoint_and_equal() {
        let d = synth_dataset(3, 2, 40, 1).unwrap();
        let p = partition(&d, 4, 20, 5, 9).unwrap();
        let mut seen = HashSet::new();
        for s in &p.shards {
            assert_eq!(s.train.len(), 20);
            assert_eq!(s.holdout.as_ref().unwrap().len(), 5);
            for &i in s.train_indices.iter().chain(&s.holdout_indices) {
                assert!(seen.insert(i));
            }
        }
        for &i in &p.remainder_indices {
            assert!(seen.insert(i));
        }
        assert_eq!(seen.len(), d.len());
        assert_eq!(p.remainder.unwrap().len(), 20);
        assert!(partition(&d, 5, 20, 5, 9).is_err());
    }

    #[test]
    fn split_half_sizes() {
        let d = synth_dataset(2, 3, 5, 1).unwrap();
        let (tr, te) = split_half(&d, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (5, 5));
    }
}
