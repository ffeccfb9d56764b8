use super::{assemble_rows, Batch, BatchClasses, ContrastiveParams, LossResult};
use crate::error::Result;
use crate::numerics::{hinge, hinge_grad, DistanceKind, Points};
use crate::par;

/// Pair-based Contrastive loss.
///
/// ```text
/// L = 1/(2|C|) Σ_c 1/|D_c|² Σ_{i,j∈D_c} [d_ij − m_P]_+
///   + 1/(2|C|) Σ_{c≠c'} 1/(|D_c||D_c'|) Σ_{i∈D_c, j∈D_c'} [m_N − d_ij]_+
/// ```
///
/// Cost is `O(B² d)`.
pub fn contrastive_loss(
    batch: &Batch,
    params: &ContrastiveParams,
    kind: DistanceKind,
) -> Result<LossResult> {
    params.validate()?;
    let pts = Points::new(batch.embeddings(), kind)?;
    let classes = BatchClasses::new(batch.labels());
    let n = batch.len();
    let dim = batch.dim();
    let nc = classes.len() as f64;
    let sizes: Vec<f64> = classes
        .slot_of_sample
        .iter()
        .map(|&s| classes.members[s].len() as f64)
        .collect();

    let rows = par::map_indexed(n, |i| {
        let si = classes.slot_of_sample[i];
        let mut value = 0.0;
        let mut grad = vec![0.0; dim];
        for j in 0..n {
            let d = pts.dist(i, &pts, j);
            let (arg, weight, sign) = if classes.slot_of_sample[j] == si {
                (d - params.m_p, 1.0 / (2.0 * nc * sizes[i] * sizes[i]), 1.0)
            } else {
                (params.m_n - d, 1.0 / (2.0 * nc * sizes[i] * sizes[j]), -1.0)
            };
            value += weight * hinge(arg);
            // (i, j) and (j, i) carry the same coefficient; ∂d_ii/∂F_i = 0
            if j != i {
                let coef = 2.0 * sign * weight * hinge_grad(arg);
                pts.add_grad(i, &pts, j, coef, &mut grad);
            }
        }
        (value, grad)
    });
    let (value, grad_embeddings) = assemble_rows(rows, dim)?;
    Ok(LossResult {
        value,
        grad_embeddings,
        grad_meanfields: None,
    })
}
