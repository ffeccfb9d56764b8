use super::{assemble_rows, check_bank, Batch, BatchClasses, LossResult, MfCwmsParams};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::meanfield::MeanFieldBank;
use crate::numerics::{log1p_sum_exp_iter, sigmoid, softplus, DistanceKind, Points};
use crate::par;

/// MeanFieldClassWiseMultiSimilarity loss.
///
/// ```text
/// L = 1/(α|C|)  Σ_c log[1 + Σ_{i∈D_c} e^{α(d(F_i,M_c)−δ)} / |D_c|]
///   + 1/(2β|C|) Σ_c Σ_{c'≠c} log[1 + Σ_{i∈D_c} e^{−β(d(F_i,M_c')−δ)} / |D_c|
///                                  + Σ_{j∈D_c'} e^{−β(d(M_c,F_j)−δ)} / |D_c'|]
///   + λ_MF/|C_bank| Σ_{c≠c'} softplus(−β(d(M_c,M_c')−δ))²
/// ```
///
/// `c` ranges over batch classes and `c'` over the whole bank; a sum over an
/// empty `D_c'` is zero. Cost is `O(B·C_bank·d)` plus `O(C_bank²·d)` when
/// `λ_MF > 0`.
pub fn mfcwms_loss(
    batch: &Batch,
    bank: &MeanFieldBank,
    params: &MfCwmsParams,
    kind: DistanceKind,
) -> Result<LossResult> {
    params.validate()?;
    check_bank(batch, bank)?;
    let samples = Points::new(batch.embeddings(), kind)?;
    let fields = Points::new(bank.vectors(), kind)?;
    let classes = BatchClasses::new(batch.labels());
    let slot_of_label = classes.slots_by_label(bank.len());
    let n = batch.len();
    let k = bank.len();
    let dim = batch.dim();
    let nc = classes.len();
    let ncf = nc as f64;
    let labels = batch.labels();
    let MfCwmsParams {
        alpha,
        beta,
        delta,
        lambda_mf,
    } = *params;

    let dist = samples.distance_table(&fields);
    let log_size: Vec<f64> = classes
        .members
        .iter()
        .map(|m| (m.len() as f64).ln())
        .collect();
    // negative-term exponent for sample i against field c, already divided by |D_{y_i}|
    let neg_exponent =
        |i: usize, c: usize| -beta * (dist.get(i, c) - delta) - log_size[classes.slot_of_sample[i]];

    let positive_logs = par::map_indexed(nc, |a| {
        let c = classes.labels[a];
        let terms = classes.members[a]
            .iter()
            .map(|&i| alpha * (dist.get(i, c) - delta));
        log1p_sum_exp_iter(terms, log_size[a])
    });
    // (batch slot a, bank class c'), with c' equal to a's own class left at 0
    let negative_logs = par::map_indexed(nc * k, |ac| {
        let (a, c2) = (ac / k, ac % k);
        let c = classes.labels[a];
        if c2 == c {
            return 0.0;
        }
        let own = classes.members[a].iter().map(|&i| neg_exponent(i, c2));
        let other: &[usize] = match slot_of_label[c2] {
            Some(b) => &classes.members[b],
            None => &[],
        };
        let cross = other.iter().map(|&j| neg_exponent(j, c));
        log1p_sum_exp_iter(own.chain(cross), 0.0)
    });
    let negative_logs = Matrix::from_vec(nc, k, negative_logs)?;

    let mut value = positive_logs.iter().sum::<f64>() / (alpha * ncf);
    value += negative_logs.as_slice().iter().sum::<f64>() / (2.0 * beta * ncf);

    // ∂L/∂d(F_i, M_c)
    let coefs = par::map_indexed(n, |i| {
        let a = classes.slot_of_sample[i];
        let y = labels[i];
        let mut row = vec![0.0; k];
        for (c, coef) in row.iter_mut().enumerate() {
            if c == y {
                let t = alpha * (dist.get(i, c) - delta) - log_size[a];
                *coef = (t - positive_logs[a]).exp() / ncf;
            } else {
                let t = neg_exponent(i, c);
                // as an anchor of pair (y, c), and as a member of D_c' in pair (c, y)
                let mut w = (t - negative_logs.get(a, c)).exp();
                if let Some(b) = slot_of_label[c] {
                    w += (t - negative_logs.get(b, y)).exp();
                }
                *coef = -w / (2.0 * ncf);
            }
        }
        row
    });
    let coefs = Matrix::from_vec(n, k, coefs.into_iter().flatten().collect())?;

    let grad_rows = par::map_indexed(n, |i| {
        let mut g = vec![0.0; dim];
        for c in 0..k {
            samples.add_grad(i, &fields, c, coefs.get(i, c), &mut g);
        }
        (0.0, g)
    });
    let (_, grad_embeddings) = assemble_rows(grad_rows, dim)?;

    let regularize = lambda_mf > 0.0;
    let scale = lambda_mf / k as f64;
    let bank_rows = par::map_indexed(k, |c| {
        let mut g = vec![0.0; dim];
        for i in 0..n {
            fields.add_grad(c, &samples, i, coefs.get(i, c), &mut g);
        }
        let mut reg = 0.0;
        if regularize {
            for c2 in (0..k).filter(|&c2| c2 != c) {
                let x = -beta * (fields.dist(c, &fields, c2) - delta);
                let sp = softplus(x);
                reg += scale * sp * sp;
                let dl_dd = scale * 2.0 * sp * sigmoid(x) * -beta;
                fields.add_grad(c, &fields, c2, 2.0 * dl_dd, &mut g);
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
