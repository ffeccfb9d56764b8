use super::{assemble_rows, Batch, BatchClasses, CwmsParams, LossResult};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::numerics::{log1p_sum_exp_iter, DistanceKind, Points};
use crate::par;

/// ClassWiseMultiSimilarity loss.
///
/// ```text
/// L = 1/(α|C|)  Σ_c     log[1 + Σ_{i,j∈D_c} e^{α(d_ij−δ)} / (2|D_c|²)]
///   + 1/(2β|C|) Σ_{c≠c'} log[1 + Σ_{i∈D_c,j∈D_c'} e^{−β(d_ij−δ)} / (|D_c||D_c'|)]
/// ```
///
/// Cost is `O(B² d)`.
pub fn cwms_loss(batch: &Batch, params: &CwmsParams, kind: DistanceKind) -> Result<LossResult> {
    params.validate()?;
    let pts = Points::new(batch.embeddings(), kind)?;
    let classes = BatchClasses::new(batch.labels());
    let n = batch.len();
    let dim = batch.dim();
    let nc = classes.len();
    let ncf = nc as f64;
    let CwmsParams { alpha, beta, delta } = *params;

    let dist = pts.distance_table(&pts);

    // Exponent of the (i, j) term in block (a, b), and the block's log-normalizer.
    let exponent = |a: usize, b: usize, d: f64| {
        if a == b {
            alpha * (d - delta)
        } else {
            -beta * (d - delta)
        }
    };
    let log_norm = |a: usize, b: usize| {
        let (sa, sb) = (
            classes.members[a].len() as f64,
            classes.members[b].len() as f64,
        );
        if a == b {
            (2.0 * sa * sa).ln()
        } else {
            (sa * sb).ln()
        }
    };

    // One log-term per ordered class block; the diagonal holds the positive terms.
    let block_logs = par::map_indexed(nc * nc, |ab| {
        let (a, b) = (ab / nc, ab % nc);
        let terms = classes.members[a].iter().flat_map(|&i| {
            let di = dist.row(i);
            classes.members[b]
                .iter()
                .map(move |&j| exponent(a, b, di[j]))
        });
        log1p_sum_exp_iter(terms, log_norm(a, b))
    });
    let block_logs = Matrix::from_vec(nc, nc, block_logs)?;
    let log_norms = Matrix::from_vec(
        nc,
        nc,
        par::map_indexed(nc * nc, |ab| log_norm(ab / nc, ab % nc)),
    )?;

    let mut value = 0.0;
    for a in 0..nc {
        for b in 0..nc {
            let scale = if a == b {
                alpha * ncf
            } else {
                2.0 * beta * ncf
            };
            value += block_logs.get(a, b) / scale;
        }
    }

    let rows = par::map_indexed(n, |i| {
        let a = classes.slot_of_sample[i];
        let mut grad = vec![0.0; dim];
        for j in 0..n {
            if j == i {
                continue;
            }
            let b = classes.slot_of_sample[j];
            let d = dist.get(i, j);
            // ∂L/∂d_ij for this ordered pair: positive blocks give
            // (1/|C|)·softmax weight, negative blocks −(1/(2|C|))·softmax weight
            let w = (exponent(a, b, d) - log_norms.get(a, b) - block_logs.get(a, b)).exp();
            let dl_dd = if a == b { w / ncf } else { -w / (2.0 * ncf) };
            pts.add_grad(i, &pts, j, 2.0 * dl_dd, &mut grad);
        }
        (0.0, grad)
    });
    let (_, grad_embeddings) = assemble_rows(rows, dim)?;
    Ok(LossResult {
        value,
        grad_embeddings,
        grad_meanfields: None,
    })
}
