//! Training loop, periodic retrieval evaluation, early stopping and
//! checkpoints.
//!
//! # Checkpoint format
//!
//! All integers and floats little-endian:
//!
//! ```text
//! "MFDMCKPT"                       8-byte magic
//! u32 version (= 1)
//! u32 model kind                   0 table, 1 linear, 2 mlp1
//! u32 has_bank                     0 or 1
//! u32 epoch
//! f64 best MAP@R
//! u32 optimizer kind               0 sgd, 1 rmsprop, 2 adamw
//! f64 × 3 optimizer hyperparameters (sgd: momentum; rmsprop: rho, eps; adamw: beta1, beta2, eps; unused slots 0)
//! u64 optimizer step
//! u32 group count, then per group: u32 id (0 model, 1 meanfields), f64 lr, f64 weight decay, u32 tensor count
//! tensors, in order: model tensors, bank (if present), then each group's
//!   buffers (buffer-major, tensor-minor)
//! ```
//!
//! Each tensor is `u32 rows, u32 cols` followed by `rows·cols` `f32`
//! values, row-major. Checkpoints hold `f32`-rounded values, so a save/load
//! round trip is bit-exact.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_batch, Dataset, SamplerSpec};
use crate::error::{Error, Result};
use crate::losses::{Batch, LossSpec};
use crate::matrix::Matrix;
use crate::meanfield::{init_bank, InitScheme, MeanFieldBank};
use crate::metrics::{evaluate, RetrievalReport};
use crate::model::{Model, ModelInput, ModelKind};
use crate::numerics::DistanceKind;
use crate::optim::{GroupId, GroupState, GroupUpdate, Optimizer, OptimizerKind, ParamGroup};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MFDMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Mean-field rows with a norm below this are reported after each evaluation.
const SMALL_NORM: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    /// Hidden width of `mlp1`; ignored otherwise.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
}

fn default_embedding_dim() -> usize {
    32
}
fn default_hidden() -> usize {
    64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Rmsprop,
    Adamw,
}

/// Optimizer choice and per-group learning rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_model_lr")]
    pub model_lr: f64,
    #[serde(default)]
    pub model_weight_decay: f64,
    #[serde(default = "default_meanfield_lr")]
    pub meanfield_lr: f64,
    #[serde(default)]
    pub meanfield_weight_decay: f64,
    /// SGD momentum.
    #[serde(default)]
    pub momentum: f64,
    /// RMSprop decay.
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Adamw
}
fn default_model_lr() -> f64 {
    1e-4
}
fn default_meanfield_lr() -> f64 {
    2e-1
}
fn default_rho() -> f64 {
    0.99
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            model_lr: default_model_lr(),
            model_weight_decay: 0.0,
            meanfield_lr: default_meanfield_lr(),
            meanfield_weight_decay: 0.0,
            momentum: 0.0,
            rho: default_rho(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl OptimizerConfig {
    pub fn kind(&self) -> OptimizerKind {
        match self.algorithm {
            Algorithm::Sgd => OptimizerKind::Sgd {
                momentum: self.momentum,
            },
            Algorithm::Rmsprop => OptimizerKind::Rmsprop {
                rho: self.rho,
                eps: self.eps,
            },
            Algorithm::Adamw => OptimizerKind::Adamw {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossSpec,
    #[serde(default = "default_distance")]
    pub distance: DistanceKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerSpec,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub seed: u64,
    /// Omits wall-clock times from the log so reruns are byte-identical.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub bank_init: InitScheme,
}

fn default_distance() -> DistanceKind {
    DistanceKind::Cosine
}
fn default_sampler() -> SamplerSpec {
    SamplerSpec { p: 8, k: 4 }
}
fn default_max_epochs() -> usize {
    60
}
fn default_patience() -> usize {
    5
}
fn default_eval_every() -> usize {
    1
}

impl TrainConfig {
    /// Defaults around a given loss and model.
    pub fn new(loss: LossSpec, model: ModelConfig) -> Self {
        Self {
            loss,
            distance: default_distance(),
            model,
            optimizer: OptimizerConfig::default(),
            sampler: default_sampler(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            eval_every: default_eval_every(),
            seed: 0,
            deterministic: false,
            bank_init: InitScheme::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.loss
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("loss: {e}")))?;
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if self.patience == 0 {
            return bad("patience must be >= 1".into());
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        if self.sampler.p == 0 || self.sampler.k == 0 {
            return bad("sampler.p and sampler.k must be >= 1".into());
        }
        if self.model.embedding_dim == 0
            || (self.model.kind == ModelKind::Mlp1 && self.model.hidden == 0)
        {
            return bad("model dimensions must be >= 1".into());
        }
        let o = &self.optimizer;
        for (name, v) in [
            ("optimizer.model_lr", o.model_lr),
            ("optimizer.meanfield_lr", o.meanfield_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be > 0"));
            }
        }
        for (name, v) in [
            ("optimizer.model_weight_decay", o.model_weight_decay),
            ("optimizer.meanfield_weight_decay", o.meanfield_weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub p_at_1: f64,
    pub r_precision: f64,
    pub map_at_r: f64,
}

impl From<&RetrievalReport> for EvalMetrics {
    fn from(r: &RetrievalReport) -> Self {
        Self {
            p_at_1: r.p_at_1,
            r_precision: r.r_precision,
            map_at_r: r.map_at_r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Step,
    Eval,
}

/// One line of the training log. `step` counts optimizer steps from 1;
/// eval records carry the step they follow and the epoch's mean loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub kind: RecordKind,
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    pub eval: Option<EvalMetrics>,
    /// Milliseconds since training started; `None` in deterministic mode.
    pub wall_time_ms: Option<f64>,
}

pub fn history_to_jsonl(history: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in history {
        out.push_str(&serde_json::to_string(r).expect("log records serialize"));
        out.push('\n');
    }
    out
}

/// Snapshot of a training run, with every tensor rounded to `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub bank: Option<MeanFieldBank>,
    pub optimizer: Optimizer,
    pub epoch: usize,
    pub best_map_at_r: f64,
}

impl Checkpoint {
    pub fn capture(
        model: &Model,
        bank: Option<&MeanFieldBank>,
        optimizer: &Optimizer,
        epoch: usize,
        best_map_at_r: f64,
    ) -> Self {
        let groups = optimizer
            .groups()
            .iter()
            .map(|g| GroupState {
                group: g.group,
                buffers: g
                    .buffers
                    .iter()
                    .map(|b| b.iter().map(Matrix::quantized_f32).collect())
                    .collect(),
            })
            .collect();
        Self {
            model: model.quantized_f32(),
            bank: bank.map(|b| {
                MeanFieldBank::from_matrix(b.vectors().quantized_f32()).expect("finite bank")
            }),
            optimizer: Optimizer::from_parts(optimizer.kind(), optimizer.step_count(), groups),
            epoch,
            best_map_at_r,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.model.kind().code());
        put_u32(&mut out, self.bank.is_some() as u32);
        put_u32(&mut out, self.epoch as u32);
        out.extend_from_slice(&self.best_map_at_r.to_le_bytes());
        let kind = self.optimizer.kind();
        put_u32(&mut out, kind.code());
        for h in kind.hyper() {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out.extend_from_slice(&self.optimizer.step_count().to_le_bytes());
        let groups = self.optimizer.groups();
        put_u32(&mut out, groups.len() as u32);
        for g in groups {
            put_u32(&mut out, g.group.id.code());
            out.extend_from_slice(&g.group.lr.to_le_bytes());
            out.extend_from_slice(&g.group.weight_decay.to_le_bytes());
            put_u32(&mut out, g.buffers.first().map_or(0, Vec::len) as u32);
        }
        for t in self.model.tensors() {
            put_tensor(&mut out, t);
        }
        if let Some(bank) = &self.bank {
            put_tensor(&mut out, bank.vectors());
        }
        for g in groups {
            for buffer in &g.buffers {
                for t in buffer {
                    put_tensor(&mut out, t);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Data(
                "not a checkpoint (bad magic at offset 0)".into(),
            ));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let model_kind = ModelKind::from_code(r.u32()?)
            .ok_or_else(|| Error::Data(format!("unknown model kind at offset {}", r.pos - 4)))?;
        let has_bank = match r.u32()? {
            0 => false,
            1 => true,
            v => {
                return Err(Error::Data(format!(
                    "bad bank flag {v} at offset {}",
                    r.pos - 4
                )))
            }
        };
        let epoch = r.u32()? as usize;
        let best_map_at_r = r.f64()?;
        let kind_code = r.u32()?;
        let hyper = [r.f64()?, r.f64()?, r.f64()?];
        let opt_kind = OptimizerKind::from_code(kind_code, hyper)
            .ok_or_else(|| Error::Data(format!("unknown optimizer kind {kind_code}")))?;
        let step = r.u64()?;
        let group_count = r.u32()? as usize;
        if group_count > 2 {
            return Err(Error::Data(format!(
                "bad optimizer group count {group_count}"
            )));
        }
        let mut headers = Vec::with_capacity(group_count);
        for _ in 0..group_count {
            let id = GroupId::from_code(r.u32()?)
                .ok_or_else(|| Error::Data("unknown optimizer group".into()))?;
            let lr = r.f64()?;
            let weight_decay = r.f64()?;
            let tensors = r.u32()? as usize;
            headers.push((
                ParamGroup {
                    id,
                    lr,
                    weight_decay,
                },
                tensors,
            ));
        }
        let model_tensors = match model_kind {
            ModelKind::Table => 1,
            ModelKind::Linear => 2,
            ModelKind::Mlp1 => 4,
        };
        let tensors = (0..model_tensors)
            .map(|_| r.tensor())
            .collect::<Result<Vec<_>>>()?;
        let model = Model::from_tensors(model_kind, tensors)
            .map_err(|e| Error::Data(format!("checkpoint model: {e}")))?;
        let bank = if has_bank {
            Some(
                MeanFieldBank::from_matrix(r.tensor()?)
                    .map_err(|e| Error::Data(format!("checkpoint bank: {e}")))?,
            )
        } else {
            None
        };
        let buffers_per_tensor = match opt_kind {
            OptimizerKind::Adamw { .. } => 2,
            _ => 1,
        };
        let mut groups = Vec::with_capacity(group_count);
        for (group, count) in headers {
            let buffers = (0..buffers_per_tensor)
                .map(|_| (0..count).map(|_| r.tensor()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            groups.push(GroupState { group, buffers });
        }
        if r.pos != bytes.len() {
            return Err(Error::Data(format!(
                "trailing bytes after offset {}",
                r.pos
            )));
        }
        Ok(Self {
            model,
            bank,
            optimizer: Optimizer::from_parts(opt_kind, step, groups),
            epoch,
            best_map_at_r,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| Error::format(path, e.to_string()))
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Matrix) {
    put_u32(out, t.rows() as u32);
    put_u32(out, t.cols() as u32);
    for &v in t.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Data(format!(
                    "truncated checkpoint: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn tensor(&mut self) -> Result<Matrix> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Data("tensor shape overflows".into()))?;
        let raw = self.take(len)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

/// Embeddings of every sample of `ds`.
pub fn embed(model: &Model, ds: &Dataset) -> Result<Matrix> {
    let all: Vec<usize>;
    let input = match model.kind() {
        ModelKind::Table => {
            if ds.len() != model.input_dim() {
                return Err(Error::Data(format!(
                    "table model has {} rows but the dataset has {} samples",
                    model.input_dim(),
                    ds.len()
                )));
            }
            all = (0..ds.len()).collect();
            ModelInput::Indices(&all)
        }
        _ => {
            if ds.feature_dim() != model.input_dim() {
                return Err(Error::Data(format!(
                    "model expects {} features, dataset has {}",
                    model.input_dim(),
                    ds.feature_dim()
                )));
            }
            ModelInput::Features(ds.features())
        }
    };
    Ok(model.forward(input)?.0)
}

pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    ds: &Dataset,
    kind: DistanceKind,
) -> Result<RetrievalReport> {
    evaluate(&embed(&ckpt.model, ds)?, ds.labels(), kind)
}

pub struct TrainOutcome {
    pub history: Vec<LogRecord>,
    pub best: Checkpoint,
}

/// Trains on `train_ds`, evaluating MAP@R on `eval_ds` every `eval_every`
/// epochs (and after the last epoch). Stops after `max_epochs` or when
/// `patience` consecutive evaluations fail to improve on the best MAP@R,
/// and returns the best checkpoint.
///
/// Evaluation scores the `f32`-rounded checkpoint itself, so the returned
/// `best_map_at_r` is reproducible from the saved file.
pub fn train(config: &TrainConfig, train_ds: &Dataset, eval_ds: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let sampler = config.sampler;
    if sampler.p > train_ds.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "sampler.p = {} exceeds the {} training classes",
            sampler.p,
            train_ds.num_classes()
        )));
    }
    if config.model.kind == ModelKind::Table && eval_ds != train_ds {
        return Err(Error::InvalidConfig(
            "table model can only be evaluated on its own training set".into(),
        ));
    }
    if (0..eval_ds.num_classes()).any(|c| eval_ds.class_members(c).len() < 2) {
        return Err(Error::Data(
            "every evaluation class needs at least 2 samples".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let input_dim = match config.model.kind {
        ModelKind::Table => train_ds.len(),
        _ => train_ds.feature_dim(),
    };
    let mut model = Model::init(
        config.model.kind,
        input_dim,
        config.model.hidden,
        config.model.embedding_dim,
        &mut rng,
    )?;
    let mean_field = config.loss.is_mean_field();
    let bank_seed: u64 = rng.random();
    let mut bank = if mean_field {
        Some(init_bank(
            train_ds.num_classes(),
            config.model.embedding_dim,
            config.bank_init,
            bank_seed,
        )?)
    } else {
        None
    };

    let oc = &config.optimizer;
    let mut groups = vec![(
        ParamGroup {
            id: GroupId::Model,
            lr: oc.model_lr,
            weight_decay: oc.model_weight_decay,
        },
        model.tensors().iter().map(Matrix::shape).collect(),
    )];
    if let Some(b) = &bank {
        groups.push((
            ParamGroup {
                id: GroupId::Meanfields,
                lr: oc.meanfield_lr,
                weight_decay: oc.meanfield_weight_decay,
            },
            vec![b.vectors().shape()],
        ));
    }
    let mut optimizer = Optimizer::new(oc.kind(), groups)?;

    let start = Instant::now();
    let clock = |deterministic: bool| (!deterministic).then(|| start.elapsed().as_secs_f64() * 1e3);
    let steps_per_epoch = train_ds.len().div_ceil(sampler.batch_size());
    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut since_best = 0usize;
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut epoch_loss = 0.0;
        for _ in 0..steps_per_epoch {
            step += 1;
            let idx = sample_batch(train_ds, &sampler, &mut rng)?;
            let features;
            let input = match config.model.kind {
                ModelKind::Table => ModelInput::Indices(&idx),
                _ => {
                    features = train_ds.features().select_rows(&idx);
                    ModelInput::Features(&features)
                }
            };
            let (emb, cache) = model.forward(input)?;
            let labels = idx.iter().map(|&i| train_ds.labels()[i]).collect();
            let batch =
                Batch::new(emb, labels).map_err(|_| Error::NonFiniteLoss { epoch, step })?;
            let result = config
                .loss
                .evaluate(&batch, bank.as_ref(), config.distance)?;
            let finite = result.value.is_finite()
                && result.grad_embeddings.is_finite()
                && result
                    .grad_meanfields
                    .as_ref()
                    .is_none_or(Matrix::is_finite);
            if !finite {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let model_grads = model.backward(&cache, &result.grad_embeddings)?;
            let mut updates = vec![GroupUpdate {
                id: GroupId::Model,
                params: model.tensors_mut(),
                grads: &model_grads,
            }];
            let bank_grad;
            if let (Some(b), Some(g)) = (bank.as_mut(), result.grad_meanfields) {
                bank_grad = [g];
                updates.push(GroupUpdate {
                    id: GroupId::Meanfields,
                    params: std::slice::from_mut(b.vectors_mut()),
                    grads: &bank_grad,
                });
            }
            optimizer.step(&mut updates)?;
            epoch_loss += result.value;
            history.push(LogRecord {
                kind: RecordKind::Step,
                epoch,
                step,
                loss: result.value,
                eval: None,
                wall_time_ms: clock(config.deterministic),
            });
        }

        let last = epoch == config.max_epochs;
        if epoch % config.eval_every != 0 && !last {
            continue;
        }
        let snapshot = Checkpoint::capture(&model, bank.as_ref(), &optimizer, epoch, 0.0);
        let report = evaluate_checkpoint(&snapshot, eval_ds, config.distance)?;
        if let Some(b) = &bank {
            let small = b.small_norm_rows(SMALL_NORM);
            if !small.is_empty() {
                log::warn!("epoch {epoch}: mean fields {small:?} have norm below {SMALL_NORM:e}");
            }
        }
        history.push(LogRecord {
            kind: RecordKind::Eval,
            epoch,
            step,
            loss: epoch_loss / steps_per_epoch as f64,
            eval: Some(EvalMetrics::from(&report)),
            wall_time_ms: clock(config.deterministic),
        });
        let improved = best
            .as_ref()
            .is_none_or(|b| report.map_at_r > b.best_map_at_r);
        if improved {
            best = Some(Checkpoint {
                best_map_at_r: report.map_at_r,
                ..snapshot
            });
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::info!(
                    "early stop at epoch {epoch}: no improvement in {since_best} evaluations"
                );
                break;
            }
        }
    }

    Ok(TrainOutcome {
        history,
        best: best.expect("at least one evaluation runs"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    fn tiny() -> Dataset {
        generate_synthetic(&SyntheticSpec {
            num_classes: 4,
            per_class: 6,
            feature_dim: 5,
            center_scale: 1.0,
            noise_sigma: 0.1,
            seed: 2,
        })
        .unwrap()
    }

    fn config(loss: &str) -> TrainConfig {
        let mut c = TrainConfig::new(
            LossSpec::by_name(loss).unwrap(),
            ModelConfig {
                kind: ModelKind::Linear,
                embedding_dim: 3,
                hidden: 4,
            },
        );
        c.sampler = SamplerSpec { p: 2, k: 3 };
        c.max_epochs = 1;
        c.deterministic = true;
        c
    }

    #[test]
    fn one_epoch_gives_one_evaluation() {
        let ds = tiny();
        let out = train(&config("mfcont"), &ds, &ds).unwrap();
        let evals = out
            .history
            .iter()
            .filter(|r| r.kind == RecordKind::Eval)
            .count();
        assert_eq!(evals, 1);
        assert_eq!(out.history.len(), 4 + 1);
        assert!(out.best.bank.is_some());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let ds = tiny();
        for loss in ["contrastive", "mfcwms"] {
            let out = train(&config(loss), &ds, &ds).unwrap();
            let bytes = out.best.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, out.best);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let ds = tiny();
        let bytes = train(&config("cwms"), &ds, &ds).unwrap().best.to_bytes();
        for cut in [0, 7, 20, bytes.len() - 1] {
            assert!(
                Checkpoint::from_bytes(&bytes[..cut]).is_err(),
                "cut at {cut}"
            );
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn config_validation() {
        let ds = tiny();
        let mut c = config("mfcont");
        c.patience = 0;
        assert!(matches!(train(&c, &ds, &ds), Err(Error::InvalidConfig(_))));
        let mut c = config("mfcont");
        c.sampler.p = 5;
        assert!(matches!(train(&c, &ds, &ds), Err(Error::InvalidConfig(_))));
        let mut c = config("mfcont");
        c.model.kind = ModelKind::Table;
        let other = generate_synthetic(&SyntheticSpec {
            seed: 3,
            ..serde_json::from_str(r#"{"num_classes":4,"per_class":6,"feature_dim":5}"#).unwrap()
        })
        .unwrap();
        assert!(matches!(
            train(&c, &ds, &other),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn config_json_defaults_and_unknown_keys() {
        let c: TrainConfig =
            serde_json::from_str(r#"{"loss":{"name":"mfcont"},"model":{"kind":"linear"}}"#)
                .unwrap();
        assert_eq!(c.patience, 5);
        assert_eq!(c.sampler, SamplerSpec { p: 8, k: 4 });
        assert_eq!(c.optimizer.model_lr, 1e-4);
        assert_eq!(c.optimizer.meanfield_lr, 0.2);
        assert!(serde_json::from_str::<TrainConfig>(
            r#"{"loss":{"name":"mfcont"},"model":{"kind":"linear"},"epochs":3}"#
        )
        .is_err());
    }
}
