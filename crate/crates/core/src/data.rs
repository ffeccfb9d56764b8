//! Datasets, synthetic clusters, CSV/BIN ingestion, class-disjoint splits
//! and P×K batch sampling.
//!
//! File formats:
//!
//! - CSV: one header row, then `label,f_1,…,f_f` per sample; labels are
//!   non-negative integers, features decimal numbers.
//! - BIN: ASCII magic `MFDM`, `u32` n, `u32` f (little-endian), `n·f`
//!   little-endian `f32` features row-major, then `n` little-endian `u32`
//!   labels.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::meanfield::{random_rows, InitScheme};

pub const BIN_MAGIC: &[u8; 4] = b"MFDM";

/// Feature matrix with contiguous class labels `0..num_classes()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    features: Matrix,
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset; labels are remapped to `0..|C|` preserving order.
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<usize>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Data("dataset has no samples".into()));
        }
        if features.cols() == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Data("non-finite feature value".into()));
        }
        let mut remap = BTreeMap::new();
        for &y in &labels {
            remap.entry(y).or_insert(0usize);
        }
        for (new, v) in remap.values_mut().enumerate() {
            *v = new;
        }
        let labels: Vec<usize> = labels.iter().map(|y| remap[y]).collect();
        let mut members = vec![Vec::new(); remap.len()];
        for (i, &y) in labels.iter().enumerate() {
            members[y].push(i);
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            members,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    /// Sample indices of class `c`.
    pub fn class_members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    /// Samples restricted to the given classes (labels remapped).
    fn subset_by_class(&self, name: String, classes: std::ops::Range<usize>) -> Result<Dataset> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| classes.contains(&self.labels[i]))
            .collect();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(name, self.features.select_rows(&idx), labels)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    #[serde(default = "one")]
    pub center_scale: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.per_class == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidParameter(
                "synthetic counts (num_classes, per_class, feature_dim) must be >= 1".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0
            && self.noise_sigma.is_finite()
            && self.center_scale.is_finite())
        {
            return Err(Error::InvalidParameter(
                "noise_sigma must be >= 0 and center_scale finite".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian clusters around centers drawn uniformly on the sphere of radius
/// `center_scale`. Samples are grouped by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = random_rows(
        spec.num_classes,
        spec.feature_dim,
        InitScheme::UnitRandom,
        &mut rng,
    );
    let n = spec.num_classes * spec.per_class;
    let mut features = Matrix::zeros(n, spec.feature_dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        for s in 0..spec.per_class {
            let row = features.row_mut(c * spec.per_class + s);
            for (v, &center) in row.iter_mut().zip(centers.row(c)) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = spec.center_scale * center + spec.noise_sigma * z;
            }
            labels.push(c);
        }
    }
    Dataset::new(
        format!(
            "synthetic-{}x{}-f{}",
            spec.num_classes, spec.per_class, spec.feature_dim
        ),
        features,
        labels,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Bin,
}

impl DataFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DataFormat::Csv),
            "bin" => Some(DataFormat::Bin),
            _ => None,
        }
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let (features, labels) = match format {
        DataFormat::Csv => read_csv(path)?,
        DataFormat::Bin => {
            let mut bytes = Vec::new();
            std::fs::File::open(path)?.read_to_end(&mut bytes)?;
            decode_bin(path, &bytes)?
        }
    };
    Dataset::new(name, features, labels).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    let bytes = match format {
        DataFormat::Csv => encode_csv(ds)?,
        DataFormat::Bin => encode_bin(ds),
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Matrix, Vec<usize>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let header_len = reader
        .headers()
        .map_err(|e| Error::format(path, format!("malformed header: {e}")))?
        .len();
    if header_len < 2 {
        return Err(Error::format(
            path,
            format!("malformed header: expected label plus at least one feature column, got {header_len} column(s)"),
        ));
    }
    let f = header_len - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // row numbers are 1-based file lines; the header is line 1
        let line = r + 2;
        let record = record.map_err(|e| Error::format(path, format!("row {line}: {e}")))?;
        if record.len() != header_len {
            return Err(Error::format(
                path,
                format!(
                    "row {line}: expected {header_len} columns, found {}",
                    record.len()
                ),
            ));
        }
        let label: usize = record[0].parse().map_err(|_| {
            Error::format(
                path,
                format!("row {line}, column 1: invalid label `{}`", &record[0]),
            )
        })?;
        labels.push(label);
        for c in 1..=f {
            let v: f64 = record[c].parse().map_err(|_| {
                Error::format(
                    path,
                    format!(
                        "row {line}, column {}: non-numeric cell `{}`",
                        c + 1,
                        &record[c]
                    ),
                )
            })?;
            data.push(v);
        }
    }
    let n = labels.len();
    Ok((Matrix::from_vec(n, f, data)?, labels))
}

fn encode_csv(ds: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["label".to_string()];
    header.extend((1..=ds.feature_dim()).map(|i| format!("f{i}")));
    w.write_record(&header)
        .map_err(|e| Error::Data(e.to_string()))?;
    for (i, row) in ds.features.iter_rows().enumerate() {
        let mut rec = vec![ds.labels[i].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)
            .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

fn encode_bin(ds: &Dataset) -> Vec<u8> {
    let (n, f) = ds.features.shape();
    let mut out = Vec::with_capacity(12 + 4 * n * (f + 1));
    out.extend_from_slice(BIN_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(f as u32).to_le_bytes());
    for &v in ds.features.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &y in &ds.labels {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    out
}

fn decode_bin(path: &Path, bytes: &[u8]) -> Result<(Matrix, Vec<usize>)> {
    if bytes.len() < 12 || &bytes[..4] != BIN_MAGIC {
        return Err(Error::format(
            path,
            "malformed header: missing MFDM magic at offset 0",
        ));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let f = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let expected = n
        .checked_mul(f)
        .and_then(|nf| nf.checked_add(n))
        .and_then(|w| w.checked_mul(4))
        .and_then(|b| b.checked_add(12))
        .ok_or_else(|| Error::format(path, "malformed header: sizes overflow"))?;
    if bytes.len() < expected {
        return Err(Error::format(
            path,
            format!(
                "truncated payload: need {expected} bytes, file ends at offset {}",
                bytes.len()
            ),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            path,
            format!("trailing bytes after offset {expected}"),
        ));
    }
    let word = |off: usize| -> [u8; 4] { bytes[off..off + 4].try_into().expect("4 bytes") };
    let data = (0..n * f)
        .map(|k| f32::from_le_bytes(word(12 + 4 * k)) as f64)
        .collect();
    let label_base = 12 + 4 * n * f;
    let labels = (0..n)
        .map(|k| u32::from_le_bytes(word(label_base + 4 * k)) as usize)
        .collect();
    Ok((Matrix::from_vec(n, f, data)?, labels))
}

/// Train gets classes `[0, ⌈|C|/2⌉)`, test the rest. Both keep labels
/// contiguous from 0.
pub fn class_disjoint_split(ds: &Dataset) -> Result<(Dataset, Dataset)> {
    let c = ds.num_classes();
    if c < 2 {
        return Err(Error::Data(format!(
            "class-disjoint split needs at least 2 classes, got {c}"
        )));
    }
    let half = c.div_ceil(2);
    let train = ds.subset_by_class(format!("{}-train", ds.name), 0..half)?;
    let test = ds.subset_by_class(format!("{}-test", ds.name), half..c)?;
    Ok((train, test))
}

/// P classes per batch, K samples per class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub p: usize,
    pub k: usize,
}

impl SamplerSpec {
    pub fn batch_size(&self) -> usize {
        self.p * self.k
    }
}

/// Indices of `P` distinct random classes with `K` samples each, grouped by
/// class. Classes with fewer than `K` samples are drawn with replacement.
pub fn sample_batch<R: Rng>(ds: &Dataset, spec: &SamplerSpec, rng: &mut R) -> Result<Vec<usize>> {
    if spec.p == 0 || spec.k == 0 {
        return Err(Error::InvalidParameter(
            "sampler needs P >= 1 and K >= 1".into(),
        ));
    }
    if spec.p > ds.num_classes() {
        return Err(Error::InvalidParameter(format!(
            "sampler asks for P={} classes but the dataset has {}",
            spec.p,
            ds.num_classes()
        )));
    }
    let mut out = Vec::with_capacity(spec.batch_size());
    for c in sample_indices(rng, ds.num_classes(), spec.p) {
        let members = ds.class_members(c);
        if members.len() >= spec.k {
            out.extend(
                sample_indices(rng, members.len(), spec.k)
                    .into_iter()
                    .map(|j| members[j]),
            );
        } else {
            out.extend((0..spec.k).map(|_| members[rng.random_range(0..members.len())]));
        }
    }
    Ok(out)
}
