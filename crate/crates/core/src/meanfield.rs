//! The learnable per-class mean fields `M_c`, their initialization and the
//! centroid diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{mfcont_loss, Batch, MfContParams};
use crate::matrix::{norm, Matrix};
use crate::numerics::DistanceKind;

/// One vector per class; class ids are the row indices `0..len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFieldBank {
    vectors: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Uniform on the unit sphere.
    #[default]
    UnitRandom,
    /// I.i.d. `N(0, 1/d)` entries.
    Gaussian,
}

impl MeanFieldBank {
    pub fn from_matrix(vectors: Matrix) -> Result<Self> {
        if vectors.rows() == 0 || vectors.cols() == 0 {
            return Err(Error::InvalidParameter(
                "mean-field bank needs at least one class and dimension".into(),
            ));
        }
        if !vectors.is_finite() {
            return Err(Error::InvalidParameter("non-finite mean field".into()));
        }
        Ok(Self { vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut Matrix {
        &mut self.vectors
    }

    pub fn into_matrix(self) -> Matrix {
        self.vectors
    }

    /// Classes whose mean-field norm fell below `threshold`.
    pub fn small_norm_rows(&self, threshold: f64) -> Vec<usize> {
        self.vectors
            .iter_rows()
            .enumerate()
            .filter(|(_, r)| norm(r) < threshold)
            .map(|(c, _)| c)
            .collect()
    }
}

pub fn init_bank(
    num_classes: usize,
    dim: usize,
    scheme: InitScheme,
    seed: u64,
) -> Result<MeanFieldBank> {
    if num_classes == 0 || dim == 0 {
        return Err(Error::InvalidParameter(format!(
            "bank shape must be non-empty (got {num_classes}×{dim})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(MeanFieldBank {
        vectors: random_rows(num_classes, dim, scheme, &mut rng),
    })
}

pub(crate) fn random_rows<R: rand::Rng>(
    rows: usize,
    dim: usize,
    scheme: InitScheme,
    rng: &mut R,
) -> Matrix {
    let mut m = Matrix::zeros(rows, dim);
    for r in 0..rows {
        let row = m.row_mut(r);
        match scheme {
            InitScheme::UnitRandom => loop {
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
                let n = norm(row);
                if n > 1e-12 {
                    row.iter_mut().for_each(|v| *v /= n);
                    break;
                }
            },
            InitScheme::Gaussian => {
                let s = 1.0 / (dim as f64).sqrt();
                for v in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = s * z;
                }
            }
        }
    }
    m
}

/// Per-class mean embeddings of the classes present in a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Centroids {
    /// Ascending class labels.
    pub labels: Vec<usize>,
    /// One row per entry of `labels`.
    pub vectors: Matrix,
}

impl Centroids {
    pub fn get(&self, label: usize) -> Option<&[f64]> {
        self.labels
            .binary_search(&label)
            .ok()
            .map(|r| self.vectors.row(r))
    }
}

pub fn class_centroids(batch: &Batch) -> Centroids {
    let classes = crate::losses::BatchClasses::new(batch.labels());
    let dim = batch.dim();
    let mut vectors = Matrix::zeros(classes.len(), dim);
    for (slot, members) in classes.members.iter().enumerate() {
        let row = vectors.row_mut(slot);
        for &i in members {
            for (o, v) in row.iter_mut().zip(batch.embeddings().row(i)) {
                *o += v;
            }
        }
        let inv = 1.0 / members.len() as f64;
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Centroids {
        labels: classes.labels,
        vectors,
    }
}

/// Norm of the MFCont gradient with respect to each mean field, under
/// squared Euclidean distance, rescaled by the number of classes so that
/// each entry is the gradient of that class's own average term.
///
/// `data` must contain every bank class.
pub fn stationarity_residual(
    bank: &MeanFieldBank,
    data: &Batch,
    params: &MfContParams,
) -> Result<Vec<f64>> {
    let centroids = class_centroids(data);
    if let Some(c) = (0..bank.len()).find(|&c| centroids.get(c).is_none()) {
        return Err(Error::MissingClass(c));
    }
    let r = mfcont_loss(data, bank, params, DistanceKind::SqEuclidean)?;
    let grad = r
        .grad_meanfields
        .expect("mean-field loss returns bank gradient");
    let scale = centroids.labels.len() as f64;
    Ok(grad.iter_rows().map(|g| scale * norm(g)).collect())
}
