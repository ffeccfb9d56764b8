//! Small embedding backbones with exact reverse-mode gradients.
//!
//! - `Table`: one learnable row per training sample, addressed by index.
//! - `Linear`: `x W + b`.
//! - `Mlp1`: `relu(x W₁ + b₁) W₂ + b₂`.
//!
//! Parameters are stored as a flat list of tensors in a fixed order
//! (`Table`: rows; `Linear`: W, b; `Mlp1`: W₁, b₁, W₂, b₂). Biases are
//! `1 × n` matrices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::meanfield::{random_rows, InitScheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Table,
    Linear,
    Mlp1,
}

impl ModelKind {
    pub(crate) fn code(self) -> u32 {
        match self {
            ModelKind::Table => 0,
            ModelKind::Linear => 1,
            ModelKind::Mlp1 => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ModelKind::Table),
            1 => Some(ModelKind::Linear),
            2 => Some(ModelKind::Mlp1),
            _ => None,
        }
    }

    fn tensor_count(self) -> usize {
        match self {
            ModelKind::Table => 1,
            ModelKind::Linear => 2,
            ModelKind::Mlp1 => 4,
        }
    }
}

/// Model input: feature rows for `Linear`/`Mlp1`, sample indices for `Table`.
#[derive(Clone, Copy, Debug)]
pub enum ModelInput<'a> {
    Features(&'a Matrix),
    Indices(&'a [usize]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    kind: ModelKind,
    tensors: Vec<Matrix>,
    generation: u64,
}

/// Everything `backward` needs from a `forward` call.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    generation: u64,
    inputs: CachedInput,
    hidden_pre: Option<Matrix>,
    hidden: Option<Matrix>,
}

#[derive(Clone, Debug)]
enum CachedInput {
    Features(Matrix),
    Indices(Vec<usize>),
}

impl Model {
    /// Fresh model. `Table` rows are unit-random; `Linear`/`Mlp1` weights are
    /// uniform in `±1/√fan_in` with zero biases.
    ///
    /// For `Table`, `input_dim` is the number of rows (training samples).
    pub fn init<R: Rng>(
        kind: ModelKind,
        input_dim: usize,
        hidden: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || dim == 0 || (kind == ModelKind::Mlp1 && hidden == 0) {
            return Err(Error::InvalidParameter(format!(
                "model dimensions must be positive (input {input_dim}, hidden {hidden}, embedding {dim})"
            )));
        }
        let uniform = |rows: usize, cols: usize, rng: &mut R| {
            let bound = 1.0 / (rows as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let tensors = match kind {
            ModelKind::Table => vec![random_rows(input_dim, dim, InitScheme::UnitRandom, rng)],
            ModelKind::Linear => vec![uniform(input_dim, dim, rng), Matrix::zeros(1, dim)],
            ModelKind::Mlp1 => vec![
                uniform(input_dim, hidden, rng),
                Matrix::zeros(1, hidden),
                uniform(hidden, dim, rng),
                Matrix::zeros(1, dim),
            ],
        };
        Ok(Self {
            kind,
            tensors,
            generation: 0,
        })
    }

    /// Model from explicit tensors, in the documented order.
    pub fn from_tensors(kind: ModelKind, tensors: Vec<Matrix>) -> Result<Self> {
        if tensors.len() != kind.tensor_count() {
            return Err(Error::InvalidParameter(format!(
                "{kind:?} model takes {} tensors, got {}",
                kind.tensor_count(),
                tensors.len()
            )));
        }
        let shape_err = |t: &Matrix, expected: (usize, usize)| Error::ShapeMismatch {
            expected,
            got: t.shape(),
        };
        match kind {
            ModelKind::Table => {}
            ModelKind::Linear => {
                let (w, b) = (&tensors[0], &tensors[1]);
                if b.shape() != (1, w.cols()) {
                    return Err(shape_err(b, (1, w.cols())));
                }
            }
            ModelKind::Mlp1 => {
                let (w1, b1, w2, b2) = (&tensors[0], &tensors[1], &tensors[2], &tensors[3]);
                if b1.shape() != (1, w1.cols()) {
                    return Err(shape_err(b1, (1, w1.cols())));
                }
                if w2.rows() != w1.cols() {
                    return Err(shape_err(w2, (w1.cols(), w2.cols())));
                }
                if b2.shape() != (1, w2.cols()) {
                    return Err(shape_err(b2, (1, w2.cols())));
                }
            }
        }
        if tensors.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("non-finite model parameter".into()));
        }
        Ok(Self {
            kind,
            tensors,
            generation: 0,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    /// Mutable parameters; invalidates outstanding forward caches.
    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        self.generation += 1;
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Matrix> {
        self.tensors
    }

    /// Width of a feature input (`Linear`/`Mlp1`) or number of rows (`Table`).
    pub fn input_dim(&self) -> usize {
        self.tensors[0].rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.tensors[self.tensors.len() - 1].cols()
    }

    pub fn forward(&self, input: ModelInput<'_>) -> Result<(Matrix, ForwardCache)> {
        match (self.kind, input) {
            (ModelKind::Table, ModelInput::Indices(idx)) => {
                let rows = &self.tensors[0];
                if let Some(&bad) = idx.iter().find(|&&i| i >= rows.rows()) {
                    return Err(Error::InvalidParameter(format!(
                        "table index {bad} out of range for {} rows",
                        rows.rows()
                    )));
                }
                Ok((
                    rows.select_rows(idx),
                    self.cache(CachedInput::Indices(idx.to_vec()), None, None),
                ))
            }
            (ModelKind::Linear, ModelInput::Features(x)) => {
                self.check_features(x)?;
                let mut out = x.matmul(&self.tensors[0])?;
                out.add_row_broadcast(self.tensors[1].row(0));
                Ok((
                    out,
                    self.cache(CachedInput::Features(x.clone()), None, None),
                ))
            }
            (ModelKind::Mlp1, ModelInput::Features(x)) => {
                self.check_features(x)?;
                let mut pre = x.matmul(&self.tensors[0])?;
                pre.add_row_broadcast(self.tensors[1].row(0));
                let mut hidden = pre.clone();
                hidden
                    .as_mut_slice()
                    .iter_mut()
                    .for_each(|v| *v = v.max(0.0));
                let mut out = hidden.matmul(&self.tensors[2])?;
                out.add_row_broadcast(self.tensors[3].row(0));
                Ok((
                    out,
                    self.cache(CachedInput::Features(x.clone()), Some(pre), Some(hidden)),
                ))
            }
            (kind, _) => Err(Error::InvalidParameter(format!(
                "{kind:?} model received the wrong input type"
            ))),
        }
    }

    /// Gradients of the parameters, one tensor per parameter tensor.
    pub fn backward(&self, cache: &ForwardCache, grad_embeddings: &Matrix) -> Result<Vec<Matrix>> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        let expect_rows = match &cache.inputs {
            CachedInput::Features(x) => x.rows(),
            CachedInput::Indices(idx) => idx.len(),
        };
        if grad_embeddings.shape() != (expect_rows, self.embedding_dim()) {
            return Err(Error::ShapeMismatch {
                expected: (expect_rows, self.embedding_dim()),
                got: grad_embeddings.shape(),
            });
        }
        match (&cache.inputs, self.kind) {
            (CachedInput::Indices(idx), ModelKind::Table) => {
                let rows = &self.tensors[0];
                let mut g = Matrix::zeros(rows.rows(), rows.cols());
                for (b, &i) in idx.iter().enumerate() {
                    for (o, v) in g.row_mut(i).iter_mut().zip(grad_embeddings.row(b)) {
                        *o += v;
                    }
                }
                Ok(vec![g])
            }
            (CachedInput::Features(x), ModelKind::Linear) => Ok(vec![
                x.t_matmul(grad_embeddings)?,
                grad_embeddings.column_sums(),
            ]),
            (CachedInput::Features(x), ModelKind::Mlp1) => {
                let pre = cache.hidden_pre.as_ref().ok_or(Error::StaleCache)?;
                let hidden = cache.hidden.as_ref().ok_or(Error::StaleCache)?;
                let g_w2 = hidden.t_matmul(grad_embeddings)?;
                let g_b2 = grad_embeddings.column_sums();
                let mut g_hidden = grad_embeddings.matmul_t(&self.tensors[2])?;
                for (g, &p) in g_hidden.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
                let g_w1 = x.t_matmul(&g_hidden)?;
                let g_b1 = g_hidden.column_sums();
                Ok(vec![g_w1, g_b1, g_w2, g_b2])
            }
            _ => Err(Error::StaleCache),
        }
    }

    /// Copy with every parameter rounded through `f32`.
    pub fn quantized_f32(&self) -> Model {
        Model {
            kind: self.kind,
            tensors: self.tensors.iter().map(Matrix::quantized_f32).collect(),
            generation: 0,
        }
    }

    fn check_features(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    fn cache(
        &self,
        inputs: CachedInput,
        hidden_pre: Option<Matrix>,
        hidden: Option<Matrix>,
    ) -> ForwardCache {
        ForwardCache {
            generation: self.generation,
            inputs,
            hidden_pre,
            hidden,
        }
    }
}
