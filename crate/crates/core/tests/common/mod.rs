//! Naive reference implementations and instance generators shared by the
//! integration tests. Everything here is written from the loss formulas
//! directly, with plain loops and no shared code from the library.
#![allow(dead_code)]

use mfdml::losses::{ContrastiveParams, CwmsParams, MfContParams, MfCwmsParams};
use mfdml::{Batch, DistanceKind, LossSpec, Matrix, MeanFieldBank};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rows = Vec<Vec<f64>>;

pub fn dist(a: &[f64], b: &[f64], kind: DistanceKind) -> f64 {
    match kind {
        DistanceKind::SqEuclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
        DistanceKind::Cosine => {
            let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let aa: f64 = a.iter().map(|x| x * x).sum();
            let bb: f64 = b.iter().map(|x| x * x).sum();
            1.0 - ab / (aa.sqrt() * bb.sqrt())
        }
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Sorted distinct labels and the member lists of each.
pub fn groups(labels: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    present
        .into_iter()
        .map(|c| (c, (0..labels.len()).filter(|&i| labels[i] == c).collect()))
        .collect()
}

/// Loss value plus every hinge argument encountered, in a fixed order.
pub struct Reference {
    pub value: f64,
    pub hinge_args: Vec<f64>,
}

pub fn ref_contrastive(
    x: &Rows,
    labels: &[usize],
    p: &ContrastiveParams,
    kind: DistanceKind,
) -> Reference {
    let g = groups(labels);
    let nc = g.len() as f64;
    let mut args = Vec::new();
    let mut total = 0.0;
    for (_, dc) in &g {
        let mut s = 0.0;
        for &i in dc {
            for &j in dc {
                let a = dist(&x[i], &x[j], kind) - p.m_p;
                args.push(a);
                s += relu(a);
            }
        }
        total += s / (dc.len() * dc.len()) as f64;
    }
    for (c, dc) in &g {
        for (c2, dc2) in &g {
            if c == c2 {
                continue;
            }
            let mut s = 0.0;
            for &i in dc {
                for &j in dc2 {
                    let a = p.m_n - dist(&x[i], &x[j], kind);
                    args.push(a);
                    s += relu(a);
                }
            }
            total += s / (dc.len() * dc2.len()) as f64;
        }
    }
    Reference {
        value: total / (2.0 * nc),
        hinge_args: args,
    }
}

pub fn ref_cwms(x: &Rows, labels: &[usize], p: &CwmsParams, kind: DistanceKind) -> Reference {
    let g = groups(labels);
    let nc = g.len() as f64;
    let mut pos = 0.0;
    for (_, dc) in &g {
        let mut s = 0.0;
        for &i in dc {
            for &j in dc {
                s += (p.alpha * (dist(&x[i], &x[j], kind) - p.delta)).exp();
            }
        }
        pos += (1.0 + s / (2.0 * (dc.len() * dc.len()) as f64)).ln();
    }
    let mut neg = 0.0;
    for (c, dc) in &g {
        for (c2, dc2) in &g {
            if c == c2 {
                continue;
            }
            let mut s = 0.0;
            for &i in dc {
                for &j in dc2 {
                    s += (-p.beta * (dist(&x[i], &x[j], kind) - p.delta)).exp();
                }
            }
            neg += (1.0 + s / (dc.len() * dc2.len()) as f64).ln();
        }
    }
    Reference {
        value: pos / (p.alpha * nc) + neg / (2.0 * p.beta * nc),
        hinge_args: Vec::new(),
    }
}

pub fn ref_mfcont(
    x: &Rows,
    labels: &[usize],
    m: &Rows,
    p: &MfContParams,
    kind: DistanceKind,
) -> Reference {
    let g = groups(labels);
    let nc = g.len() as f64;
    let k = m.len();
    let mut args = Vec::new();
    let mut total = 0.0;
    for (c, dc) in &g {
        let mut s = 0.0;
        for &i in dc {
            let a = dist(&x[i], &m[*c], kind) - p.m_p;
            args.push(a);
            s += relu(a);
            for c2 in (0..k).filter(|c2| c2 != c) {
                let a = p.m_n - dist(&x[i], &m[c2], kind);
                args.push(a);
                s += relu(a);
            }
        }
        total += s / dc.len() as f64;
    }
    let mut reg = 0.0;
    for c in 0..k {
        for c2 in (0..k).filter(|&c2| c2 != c) {
            let a = p.m_n - dist(&m[c], &m[c2], kind);
            args.push(a);
            reg += relu(a) * relu(a);
        }
    }
    Reference {
        value: total / nc + p.lambda_mf / k as f64 * reg,
        hinge_args: args,
    }
}

pub fn ref_mfcwms(
    x: &Rows,
    labels: &[usize],
    m: &Rows,
    p: &MfCwmsParams,
    kind: DistanceKind,
) -> Reference {
    let g = groups(labels);
    let nc = g.len() as f64;
    let k = m.len();
    let members = |c: usize| g.iter().find(|(l, _)| *l == c).map(|(_, d)| d.clone());
    let mut pos = 0.0;
    for (c, dc) in &g {
        let s: f64 = dc
            .iter()
            .map(|&i| (p.alpha * (dist(&x[i], &m[*c], kind) - p.delta)).exp())
            .sum();
        pos += (1.0 + s / dc.len() as f64).ln();
    }
    let mut neg = 0.0;
    for (c, dc) in &g {
        for c2 in (0..k).filter(|c2| c2 != c) {
            let mut inner = 1.0;
            let s: f64 = dc
                .iter()
                .map(|&i| (-p.beta * (dist(&x[i], &m[c2], kind) - p.delta)).exp())
                .sum();
            inner += s / dc.len() as f64;
            if let Some(dc2) = members(c2) {
                let s: f64 = dc2
                    .iter()
                    .map(|&j| (-p.beta * (dist(&m[*c], &x[j], kind) - p.delta)).exp())
                    .sum();
                inner += s / dc2.len() as f64;
            }
            neg += inner.ln();
        }
    }
    let mut reg = 0.0;
    for c in 0..k {
        for c2 in (0..k).filter(|&c2| c2 != c) {
            let sp = (1.0 + (-p.beta * (dist(&m[c], &m[c2], kind) - p.delta)).exp()).ln();
            reg += sp * sp;
        }
    }
    Reference {
        value: pos / (p.alpha * nc) + neg / (2.0 * p.beta * nc) + p.lambda_mf / k as f64 * reg,
        hinge_args: Vec::new(),
    }
}

pub fn reference(
    spec: &LossSpec,
    x: &Rows,
    labels: &[usize],
    m: &Rows,
    kind: DistanceKind,
) -> Reference {
    match spec {
        LossSpec::Contrastive(p) => ref_contrastive(x, labels, p, kind),
        LossSpec::Cwms(p) => ref_cwms(x, labels, p, kind),
        LossSpec::Mfcont(p) => ref_mfcont(x, labels, m, p, kind),
        LossSpec::Mfcwms(p) => ref_mfcwms(x, labels, m, p, kind),
    }
}

pub fn to_matrix(rows: &Rows) -> Matrix {
    Matrix::from_rows(rows).unwrap()
}

pub fn to_rows(m: &Matrix) -> Rows {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

pub fn gaussian_rows<R: Rng>(rows: usize, dim: usize, scale: f64, rng: &mut R) -> Rows {
    (0..rows)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
                })
                .collect()
        })
        .collect()
}

/// Gaussian rows with norm at least `min_norm`, so cosine gradients stay tame.
pub fn well_scaled_rows<R: Rng>(
    rows: usize,
    dim: usize,
    scale: f64,
    min_norm: f64,
    rng: &mut R,
) -> Rows {
    (0..rows)
        .map(|_| loop {
            let r = gaussian_rows(1, dim, scale, rng).pop().unwrap();
            if r.iter().map(|v| v * v).sum::<f64>().sqrt() >= min_norm {
                break r;
            }
        })
        .collect()
}

/// A random loss instance small enough for finite differences.
pub struct Instance {
    pub spec: LossSpec,
    pub x: Rows,
    pub labels: Vec<usize>,
    pub bank: Rows,
}

impl Instance {
    pub fn batch(&self) -> Batch {
        Batch::new(to_matrix(&self.x), self.labels.clone()).unwrap()
    }

    pub fn bank(&self) -> MeanFieldBank {
        MeanFieldBank::from_matrix(to_matrix(&self.bank)).unwrap()
    }

    pub fn evaluate(&self, kind: DistanceKind) -> mfdml::LossResult {
        let bank = self.bank();
        let bank = self.spec.is_mean_field().then_some(&bank);
        self.spec.evaluate(&self.batch(), bank, kind).unwrap()
    }
}

/// Parameters are drawn on scales where hinges are partly active and the
/// log-sum-exp terms stay well conditioned for the given distance.
pub fn random_instance(loss: &str, kind: DistanceKind, rng: &mut ChaCha8Rng) -> Instance {
    let b = rng.random_range(1..=16);
    let k = rng.random_range(2..=5);
    let d = rng.random_range(2..=8);
    let scale = match kind {
        DistanceKind::Cosine => 1.0,
        DistanceKind::SqEuclidean => 0.5,
    };
    let x = well_scaled_rows(b, d, scale, 0.3, rng);
    let bank = well_scaled_rows(k, d, scale, 0.3, rng);
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    // typical distance magnitude: cosine in [0, 2], squared Euclidean ≈ 2·d·scale²
    let typical = match kind {
        DistanceKind::Cosine => 1.0,
        DistanceKind::SqEuclidean => 2.0 * d as f64 * scale * scale,
    };
    let m_p = rng.random_range(0.01..0.3) * typical;
    let m_n = m_p + rng.random_range(0.2..1.5) * typical;
    let alpha = rng.random_range(0.5..2.0) / typical;
    let beta = rng.random_range(1.0..10.0) / typical;
    let delta = rng.random_range(0.2..1.0) * typical;
    let lambda_mf = rng.random_range(0.0..1.0);
    let spec = match loss {
        "contrastive" => LossSpec::Contrastive(ContrastiveParams { m_p, m_n }),
        "cwms" => LossSpec::Cwms(CwmsParams { alpha, beta, delta }),
        "mfcont" => LossSpec::Mfcont(MfContParams {
            m_p,
            m_n,
            lambda_mf,
        }),
        "mfcwms" => LossSpec::Mfcwms(MfCwmsParams {
            alpha,
            beta,
            delta,
            lambda_mf,
        }),
        other => panic!("unknown loss {other}"),
    };
    Instance {
        spec,
        x,
        labels,
        bank,
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-6;
pub const KINK_EPS: f64 = 1e-3;
/// Denominator floor of the relative error, so near-zero gradient entries
/// are compared on an absolute scale of `FD_REL_TOL · REL_FLOOR`.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    pub skipped: usize,
    pub worst_rel: f64,
    pub value_err: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares analytic gradients with central differences of the naive
/// reference, skipping coordinates that move a near-zero hinge argument.
pub fn check_gradients(inst: &Instance, kind: DistanceKind) -> GradCheck {
    let result = inst.evaluate(kind);
    let base = reference(&inst.spec, &inst.x, &inst.labels, &inst.bank, kind);
    let mut out = GradCheck {
        value_err: rel_err(result.value, base.value),
        ..Default::default()
    };
    let n_x = inst.x.len();
    let mut targets: Vec<(bool, usize, usize)> = Vec::new();
    for i in 0..n_x {
        for j in 0..inst.x[i].len() {
            targets.push((false, i, j));
        }
    }
    let grad_m = result.grad_meanfields.as_ref();
    if grad_m.is_some() {
        for c in 0..inst.bank.len() {
            for j in 0..inst.bank[c].len() {
                targets.push((true, c, j));
            }
        }
    }
    for (is_bank, r, col) in targets {
        let eval = |delta: f64| {
            let mut x = inst.x.clone();
            let mut m = inst.bank.clone();
            if is_bank {
                m[r][col] += delta;
            } else {
                x[r][col] += delta;
            }
            reference(&inst.spec, &x, &inst.labels, &m, kind)
        };
        let (p, q) = (eval(FD_STEP), eval(-FD_STEP));
        let near_kink = base
            .hinge_args
            .iter()
            .zip(&p.hinge_args)
            .zip(&q.hinge_args)
            .any(|((b, p), q)| p != q && b.abs().min(p.abs()).min(q.abs()) < KINK_EPS);
        if near_kink {
            out.skipped += 1;
            continue;
        }
        let fd = (p.value - q.value) / (2.0 * FD_STEP);
        let analytic = if is_bank {
            grad_m.unwrap().get(r, col)
        } else {
            result.grad_embeddings.get(r, col)
        };
        out.checked += 1;
        out.worst_rel = out.worst_rel.max(rel_err(analytic, fd));
    }
    out
}

/// Per-query (P@1, R-precision, MAP@R) by sorting every candidate list
/// from scratch.
pub fn naive_retrieval(x: &Rows, labels: &[usize], kind: DistanceKind) -> Vec<(f64, f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|q| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != q)
                .map(|j| (dist(&x[q], &x[j], kind), j))
                .collect();
            cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let rel: Vec<bool> = cand.iter().map(|&(_, j)| labels[j] == labels[q]).collect();
            let r = rel.iter().filter(|&&b| b).count();
            let p1 = if rel[0] { 1.0 } else { 0.0 };
            let hits_in_r = rel[..r].iter().filter(|&&b| b).count();
            let rp = hits_in_r as f64 / r as f64;
            let mut hits = 0usize;
            let mut ap = 0.0;
            for (k, &is_rel) in rel[..r].iter().enumerate() {
                if is_rel {
                    hits += 1;
                    ap += hits as f64 / (k + 1) as f64;
                }
            }
            (p1, rp, ap / r as f64)
        })
        .collect()
}
