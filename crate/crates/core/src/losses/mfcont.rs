use super::{assemble_rows, check_bank, Batch, BatchClasses, LossResult, MfContParams};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::meanfield::MeanFieldBank;
use crate::numerics::{hinge, hinge_grad, DistanceKind, Points};
use crate::par;

/// MeanFieldContrastive loss.
///
/// ```text
/// L = 1/|C| Σ_c 1/|D_c| Σ_{i∈D_c} ( [d(F_i, M_c) − m_P]_+ + Σ_{c'≠c} [m_N − d(F_i, M_c')]_+ )
///   + λ_MF/|C_bank| Σ_{c≠c'} [m_N − d(M_c, M_c')]_+²
/// ```
///
/// `c` ranges over the classes present in the batch and `c'` over the whole
/// bank. Cost is `O(B·C_bank·d)` plus `O(C_bank²·d)` when `λ_MF > 0`.
pub fn mfcont_loss(
    batch: &Batch,
    bank: &MeanFieldBank,
    params: &MfContParams,
    kind: DistanceKind,
) -> Result<LossResult> {
    params.validate()?;
    check_bank(batch, bank)?;
    let samples = Points::new(batch.embeddings(), kind)?;
    let fields = Points::new(bank.vectors(), kind)?;
    let classes = BatchClasses::new(batch.labels());
    let n = batch.len();
    let k = bank.len();
    let dim = batch.dim();
    let nc = classes.len() as f64;
    let labels = batch.labels();

    // ∂L/∂d(F_i, M_c) for every sample and bank class, plus per-sample values.
    let per_sample = par::map_indexed(n, |i| {
        let omega = 1.0 / (nc * classes.members[classes.slot_of_sample[i]].len() as f64);
        let mut value = 0.0;
        let mut coefs = vec![0.0; k];
        for (c, coef) in coefs.iter_mut().enumerate() {
            let d = samples.dist(i, &fields, c);
            if c == labels[i] {
                let arg = d - params.m_p;
                value += hinge(arg);
                *coef = omega * hinge_grad(arg);
            } else {
                let arg = params.m_n - d;
                value += hinge(arg);
                *coef = -omega * hinge_grad(arg);
            }
        }
        (omega * value, coefs)
    });
    let mut value: f64 = per_sample.iter().map(|(v, _)| v).sum();
    let coefs = Matrix::from_vec(n, k, per_sample.into_iter().flat_map(|(_, c)| c).collect())?;

    let grad_rows = par::map_indexed(n, |i| {
        let mut g = vec![0.0; dim];
        for c in 0..k {
            samples.add_grad(i, &fields, c, coefs.get(i, c), &mut g);
        }
        (0.0, g)
    });
    let (_, grad_embeddings) = assemble_rows(grad_rows, dim)?;

    let regularize = params.lambda_mf > 0.0;
    let scale = params.lambda_mf / k as f64;
    let bank_rows = par::map_indexed(k, |c| {
        let mut g = vec![0.0; dim];
        for i in 0..n {
            fields.add_grad(c, &samples, i, coefs.get(i, c), &mut g);
        }
        let mut reg = 0.0;
        if regularize {
            for c2 in (0..k).filter(|&c2| c2 != c) {
                let r = hinge(params.m_n - fields.dist(c, &fields, c2));
                reg += scale * r * r;
                // both ordered pairs (c, c2) and (c2, c) contribute
                fields.add_grad(c, &fields, c2, -2.0 * 2.0 * scale * r, &mut g);
            }
        }
        (reg, g)
    });
    let (reg, grad_meanfields) = assemble_rows(bank_rows, dim)?;
    value += reg;

    Ok(LossResult {
        value,
        grad_embeddings,
        grad_meanfields: Some(grad_meanfields),
    })
}
