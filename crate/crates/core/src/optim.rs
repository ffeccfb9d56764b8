//! SGD with momentum, RMSprop and AdamW over named parameter groups.
//!
//! Update rules, per parameter `p` with gradient `g`:
//!
//! - SGD: `v ← μv + g`, `p ← p − lr·v`
//! - RMSprop: `s ← ρs + (1−ρ)g²`, `p ← p − lr·g/(√s + ε)`
//! - AdamW: `p ← p·(1 − lr·wd)`, then bias-corrected Adam moments
//!
//! For SGD and RMSprop a nonzero weight decay is added to the gradient
//! (`g + wd·p`); AdamW decouples it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Rmsprop {
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Adamw {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

fn default_rho() -> f64 {
    0.99
}
fn default_eps() -> f64 {
    1e-8
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}

impl OptimizerKind {
    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::Sgd { momentum }
    }

    pub fn rmsprop() -> Self {
        OptimizerKind::Rmsprop {
            rho: default_rho(),
            eps: default_eps(),
        }
    }

    pub fn adamw() -> Self {
        OptimizerKind::Adamw {
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub(crate) fn code(&self) -> u32 {
        match self {
            OptimizerKind::Sgd { .. } => 0,
            OptimizerKind::Rmsprop { .. } => 1,
            OptimizerKind::Adamw { .. } => 2,
        }
    }

    /// Hyperparameters as a fixed triple, for serialization.
    pub(crate) fn hyper(&self) -> [f64; 3] {
        match *self {
            OptimizerKind::Sgd { momentum } => [momentum, 0.0, 0.0],
            OptimizerKind::Rmsprop { rho, eps } => [rho, eps, 0.0],
            OptimizerKind::Adamw { beta1, beta2, eps } => [beta1, beta2, eps],
        }
    }

    pub(crate) fn from_code(code: u32, h: [f64; 3]) -> Option<Self> {
        match code {
            0 => Some(OptimizerKind::Sgd { momentum: h[0] }),
            1 => Some(OptimizerKind::Rmsprop {
                rho: h[0],
                eps: h[1],
            }),
            2 => Some(OptimizerKind::Adamw {
                beta1: h[0],
                beta2: h[1],
                eps: h[2],
            }),
            _ => None,
        }
    }

    /// Moment buffers kept per parameter tensor.
    fn buffers(&self) -> usize {
        match self {
            OptimizerKind::Sgd { .. } | OptimizerKind::Rmsprop { .. } => 1,
            OptimizerKind::Adamw { .. } => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    Model,
    Meanfields,
}

impl GroupId {
    pub(crate) fn code(self) -> u32 {
        match self {
            GroupId::Model => 0,
            GroupId::Meanfields => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(GroupId::Model),
            1 => Some(GroupId::Meanfields),
            _ => None,
        }
    }
}

impl std::fmt::Display for GroupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GroupId::Model => "model",
            GroupId::Meanfields => "meanfields",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub id: GroupId,
    pub lr: f64,
    pub weight_decay: f64,
}

/// Moment buffers of one group: `buffers[b][t]` is buffer `b` of tensor `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupState {
    pub group: ParamGroup,
    pub buffers: Vec<Vec<Matrix>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    groups: Vec<GroupState>,
}

/// Parameters and gradients of one group for a single step.
pub struct GroupUpdate<'a> {
    pub id: GroupId,
    pub params: &'a mut [Matrix],
    pub grads: &'a [Matrix],
}

impl Optimizer {
    /// Optimizer with zeroed state for each `(group, parameter shapes)`.
    pub fn new(
        kind: OptimizerKind,
        groups: Vec<(ParamGroup, Vec<(usize, usize)>)>,
    ) -> Result<Self> {
        let mut states = Vec::with_capacity(groups.len());
        for (group, shapes) in groups {
            if !(group.lr.is_finite() && group.lr > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{} lr must be > 0",
                    group.id
                )));
            }
            if !(group.weight_decay.is_finite() && group.weight_decay >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{} weight_decay must be >= 0",
                    group.id
                )));
            }
            if states.iter().any(|s: &GroupState| s.group.id == group.id) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate group {}",
                    group.id
                )));
            }
            let buffers = (0..kind.buffers())
                .map(|_| shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect())
                .collect();
            states.push(GroupState { group, buffers });
        }
        Ok(Self {
            kind,
            step: 0,
            groups: states,
        })
    }

    pub(crate) fn from_parts(kind: OptimizerKind, step: u64, groups: Vec<GroupState>) -> Self {
        Self { kind, step, groups }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn groups(&self) -> &[GroupState] {
        &self.groups
    }

    pub fn group(&self, id: GroupId) -> Option<&ParamGroup> {
        self.groups
            .iter()
            .find(|g| g.group.id == id)
            .map(|g| &g.group)
    }

    /// One step over the given groups; the step counter advances once.
    pub fn step(&mut self, updates: &mut [GroupUpdate<'_>]) -> Result<()> {
        for u in updates.iter() {
            let state = self
                .groups
                .iter()
                .find(|g| g.group.id == u.id)
                .ok_or_else(|| Error::UninitializedState(u.id.to_string()))?;
            let shapes = &state.buffers[0];
            if u.params.len() != shapes.len() || u.grads.len() != shapes.len() {
                return Err(Error::InvalidParameter(format!(
                    "group {} expects {} tensors",
                    u.id,
                    shapes.len()
                )));
            }
            for ((p, g), s) in u.params.iter().zip(u.grads).zip(shapes) {
                if p.shape() != s.shape() {
                    return Err(Error::ShapeMismatch {
                        expected: s.shape(),
                        got: p.shape(),
                    });
                }
                if g.shape() != s.shape() {
                    return Err(Error::ShapeMismatch {
                        expected: s.shape(),
                        got: g.shape(),
                    });
                }
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let kind = self.kind;
        for u in updates.iter_mut() {
            let state = self
                .groups
                .iter_mut()
                .find(|g| g.group.id == u.id)
                .expect("checked above");
            let ParamGroup {
                lr,
                weight_decay: wd,
                ..
            } = state.group;
            for (ti, (p, g)) in u.params.iter_mut().zip(u.grads).enumerate() {
                let p = p.as_mut_slice();
                let g = g.as_slice();
                match kind {
                    OptimizerKind::Sgd { momentum } => {
                        let v = state.buffers[0][ti].as_mut_slice();
                        for ((p, &g), v) in p.iter_mut().zip(g).zip(v) {
                            let g = g + wd * *p;
                            *v = momentum * *v + g;
                            *p -= lr * *v;
                        }
                    }
                    OptimizerKind::Rmsprop { rho, eps } => {
                        let s = state.buffers[0][ti].as_mut_slice();
                        for ((p, &g), s) in p.iter_mut().zip(g).zip(s) {
                            let g = g + wd * *p;
                            *s = rho * *s + (1.0 - rho) * g * g;
                            *p -= lr * g / (s.sqrt() + eps);
                        }
                    }
                    OptimizerKind::Adamw { beta1, beta2, eps } => {
                        let (first, second) = state.buffers.split_at_mut(1);
                        let m = first[0][ti].as_mut_slice();
                        let v = second[0][ti].as_mut_slice();
                        let c1 = 1.0 - beta1.powf(t);
                        let c2 = 1.0 - beta2.powf(t);
                        let decay = 1.0 - lr * wd;
                        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m).zip(v) {
                            if wd != 0.0 {
                                *p *= decay;
                            }
                            *m = beta1 * *m + (1.0 - beta1) * g;
                            *v = beta2 * *v + (1.0 - beta2) * g * g;
                            let m_hat = *m / c1;
                            let v_hat = *v / c2;
                            *p -= lr * m_hat / (v_hat.sqrt() + eps);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
