//! Contrastive, ClassWiseMultiSimilarity and their mean-field counterparts.
//!
//! Every loss returns its value together with the gradient with respect to
//! the batch embeddings and, for the mean-field losses, the mean-field bank.
//!
//! Conventions shared by all four:
//! - `|C|` in a sample-dependent term is the number of classes present in
//!   the batch; the pure mean-field regularizers use the bank size.
//! - Double sums over a class include the `i = j` self pairs.
//! - Class-pair sums run over ordered pairs `c ≠ c'`.

mod contrastive;
mod cwms;
mod mfcont;
mod mfcwms;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::meanfield::MeanFieldBank;
use crate::numerics::DistanceKind;

pub use contrastive::contrastive_loss;
pub use cwms::cwms_loss;
pub use mfcont::mfcont_loss;
pub use mfcwms::mfcwms_loss;

/// Embeddings of one mini-batch with their class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    embeddings: Matrix,
    labels: Vec<usize>,
}

impl Batch {
    pub fn new(embeddings: Matrix, labels: Vec<usize>) -> Result<Self> {
        if embeddings.rows() == 0 {
            return Err(Error::EmptyBatch);
        }
        if labels.len() != embeddings.rows() {
            return Err(Error::DimensionMismatch {
                expected: embeddings.rows(),
                got: labels.len(),
            });
        }
        if embeddings.cols() == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension must be >= 1".into(),
            ));
        }
        if !embeddings.is_finite() {
            return Err(Error::InvalidParameter("non-finite embedding entry".into()));
        }
        Ok(Self { embeddings, labels })
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
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

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn into_parts(self) -> (Matrix, Vec<usize>) {
        (self.embeddings, self.labels)
    }
}

/// Classes present in a batch, in ascending label order.
pub(crate) struct BatchClasses {
    pub labels: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    /// Slot of each sample's class in `labels`.
    pub slot_of_sample: Vec<usize>,
}

impl BatchClasses {
    pub(crate) fn new(labels: &[usize]) -> Self {
        let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &y) in labels.iter().enumerate() {
            by_label.entry(y).or_default().push(i);
        }
        let mut slot_of_sample = vec![0; labels.len()];
        let mut class_labels = Vec::with_capacity(by_label.len());
        let mut members = Vec::with_capacity(by_label.len());
        for (slot, (label, idx)) in by_label.into_iter().enumerate() {
            for &i in &idx {
                slot_of_sample[i] = slot;
            }
            class_labels.push(label);
            members.push(idx);
        }
        Self {
            labels: class_labels,
            members,
            slot_of_sample,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.labels.len()
    }

    /// Slot lookup table for labels `0..bank_size`.
    pub(crate) fn slots_by_label(&self, bank_size: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; bank_size];
        for (slot, &label) in self.labels.iter().enumerate() {
            out[label] = Some(slot);
        }
        out
    }
}

/// Margins of the Contrastive-type losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastiveParams {
    #[serde(default = "default_m_p")]
    pub m_p: f64,
    #[serde(default = "default_m_n")]
    pub m_n: f64,
}

impl Default for ContrastiveParams {
    fn default() -> Self {
        Self {
            m_p: default_m_p(),
            m_n: default_m_n(),
        }
    }
}

impl ContrastiveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_p.is_finite() && self.m_n.is_finite()) {
            return Err(Error::InvalidParameter("margins must be finite".into()));
        }
        if self.m_p < 0.0 || self.m_n <= 0.0 || self.m_p >= self.m_n {
            return Err(Error::InvalidParameter(format!(
                "margins must satisfy 0 <= m_p < m_n and m_n > 0 (got m_p={}, m_n={})",
                self.m_p, self.m_n
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwmsParams {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for CwmsParams {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            delta: default_delta(),
        }
    }
}

impl CwmsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be > 0 (got {})",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must be > 0 (got {})",
                self.beta
            )));
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfContParams {
    #[serde(default = "default_m_p")]
    pub m_p: f64,
    #[serde(default = "default_m_n")]
    pub m_n: f64,
    #[serde(default)]
    pub lambda_mf: f64,
}

impl Default for MfContParams {
    fn default() -> Self {
        Self {
            m_p: default_m_p(),
            m_n: default_m_n(),
            lambda_mf: 0.0,
        }
    }
}

impl MfContParams {
    pub fn margins(&self) -> ContrastiveParams {
        ContrastiveParams {
            m_p: self.m_p,
            m_n: self.m_n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.margins().validate()?;
        validate_lambda(self.lambda_mf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfCwmsParams {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub lambda_mf: f64,
}

impl Default for MfCwmsParams {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            delta: default_delta(),
            lambda_mf: 0.0,
        }
    }
}

impl MfCwmsParams {
    pub fn shape(&self) -> CwmsParams {
        CwmsParams {
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape().validate()?;
        validate_lambda(self.lambda_mf)
    }
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda_mf must be >= 0 (got {lambda})"
        )));
    }
    Ok(())
}

fn default_m_p() -> f64 {
    0.02
}
fn default_m_n() -> f64 {
    0.3
}
fn default_alpha() -> f64 {
    0.01
}
fn default_beta() -> f64 {
    80.0
}
fn default_delta() -> f64 {
    0.8
}

/// Value and gradients of one loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_embeddings: Matrix,
    /// `None` for the pair-based losses.
    pub grad_meanfields: Option<Matrix>,
}

/// A loss together with its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum LossSpec {
    Contrastive(ContrastiveParams),
    Cwms(CwmsParams),
    Mfcont(MfContParams),
    Mfcwms(MfCwmsParams),
}

impl LossSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpec::Contrastive(_) => "contrastive",
            LossSpec::Cwms(_) => "cwms",
            LossSpec::Mfcont(_) => "mfcont",
            LossSpec::Mfcwms(_) => "mfcwms",
        }
    }

    /// The loss with default hyperparameters, by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "contrastive" | "cont" => Ok(LossSpec::Contrastive(Default::default())),
            "cwms" => Ok(LossSpec::Cwms(Default::default())),
            "mfcont" => Ok(LossSpec::Mfcont(Default::default())),
            "mfcwms" => Ok(LossSpec::Mfcwms(Default::default())),
            other => Err(Error::InvalidParameter(format!(
                "unknown loss `{other}` (expected contrastive, cwms, mfcont or mfcwms)"
            ))),
        }
    }

    pub fn is_mean_field(&self) -> bool {
        matches!(self, LossSpec::Mfcont(_) | LossSpec::Mfcwms(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::Contrastive(p) => p.validate(),
            LossSpec::Cwms(p) => p.validate(),
            LossSpec::Mfcont(p) => p.validate(),
            LossSpec::Mfcwms(p) => p.validate(),
        }
    }

    /// Evaluates the loss. Mean-field losses require `bank`; pair-based
    /// losses ignore it.
    pub fn evaluate(
        &self,
        batch: &Batch,
        bank: Option<&MeanFieldBank>,
        kind: DistanceKind,
    ) -> Result<LossResult> {
        let need_bank =
            || Error::InvalidParameter(format!("{} needs a mean-field bank", self.name()));
        match self {
            LossSpec::Contrastive(p) => contrastive_loss(batch, p, kind),
            LossSpec::Cwms(p) => cwms_loss(batch, p, kind),
            LossSpec::Mfcont(p) => mfcont_loss(batch, bank.ok_or_else(need_bank)?, p, kind),
            LossSpec::Mfcwms(p) => mfcwms_loss(batch, bank.ok_or_else(need_bank)?, p, kind),
        }
    }
}

pub(crate) fn check_bank(batch: &Batch, bank: &MeanFieldBank) -> Result<()> {
    if bank.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            got: batch.dim(),
        });
    }
    if let Some(&label) = batch.labels().iter().find(|&&y| y >= bank.len()) {
        return Err(Error::LabelOutsideBank {
            label,
            classes: bank.len(),
        });
    }
    Ok(())
}

/// Sums row-wise `(value, gradient row)` pieces in index order.
pub(crate) fn assemble_rows(pieces: Vec<(f64, Vec<f64>)>, dim: usize) -> Result<(f64, Matrix)> {
    let rows = pieces.len();
    let mut value = 0.0;
    let mut data = Vec::with_capacity(rows * dim);
    for (v, g) in pieces {
        value += v;
        data.extend(g);
    }
    Ok((value, Matrix::from_vec(rows, dim, data)?))
}
