//! Distances, hinges and log-exp primitives shared by every loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// `1 − aᵀb / (‖a‖‖b‖)`, in `[0, 2]`.
    Cosine,
    /// `‖a − b‖²`.
    SqEuclidean,
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cosine" => Ok(DistanceKind::Cosine),
            "sqeuclidean" | "sq_euclidean" | "sq-euclidean" => Ok(DistanceKind::SqEuclidean),
            other => Err(Error::InvalidParameter(format!(
                "unknown distance kind `{other}` (expected cosine or sqeuclidean)"
            ))),
        }
    }
}

impl std::fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceKind::Cosine => "cosine",
            DistanceKind::SqEuclidean => "sqeuclidean",
        })
    }
}

fn check_pair(a: &[f64], b: &[f64], kind: DistanceKind) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter(
            "embedding dimension must be >= 1".into(),
        ));
    }
    match kind {
        DistanceKind::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok((na, nb))
        }
        DistanceKind::SqEuclidean => Ok((1.0, 1.0)),
    }
}

pub fn distance(a: &[f64], b: &[f64], kind: DistanceKind) -> Result<f64> {
    let (na, nb) = check_pair(a, b, kind)?;
    Ok(raw_distance(a, b, na, nb, kind))
}

/// Returns `(∂d/∂a, ∂d/∂b)`.
pub fn distance_grad(a: &[f64], b: &[f64], kind: DistanceKind) -> Result<(Vec<f64>, Vec<f64>)> {
    let (na, nb) = check_pair(a, b, kind)?;
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    accumulate_first_arg_grad(a, b, na, nb, kind, 1.0, &mut ga);
    accumulate_first_arg_grad(b, a, nb, na, kind, 1.0, &mut gb);
    Ok((ga, gb))
}

#[inline]
fn raw_distance(a: &[f64], b: &[f64], na: f64, nb: f64, kind: DistanceKind) -> f64 {
    match kind {
        DistanceKind::Cosine => (1.0 - dot(a, b) / (na * nb)).clamp(0.0, 2.0),
        DistanceKind::SqEuclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
    }
}

/// `out += coef · ∂d(a, b)/∂a`.
#[inline]
fn accumulate_first_arg_grad(
    a: &[f64],
    b: &[f64],
    na: f64,
    nb: f64,
    kind: DistanceKind,
    coef: f64,
    out: &mut [f64],
) {
    if coef == 0.0 {
        return;
    }
    match kind {
        DistanceKind::SqEuclidean => {
            let s = 2.0 * coef;
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o += s * (x - y);
            }
        }
        DistanceKind::Cosine => {
            // ∂/∂a [1 − a·b/(|a||b|)] = −b/(|a||b|) + (a·b) a/(|a|³|b|)
            let inv = 1.0 / (na * nb);
            let cos_over_na2 = dot(a, b) * inv / (na * na);
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o += coef * (cos_over_na2 * x - inv * y);
            }
        }
    }
}

/// Rows of a matrix prepared for repeated distance evaluation (norms cached
/// for cosine).
pub(crate) struct Points<'a> {
    m: &'a Matrix,
    norms: Vec<f64>,
    kind: DistanceKind,
}

impl<'a> Points<'a> {
    pub(crate) fn new(m: &'a Matrix, kind: DistanceKind) -> Result<Self> {
        if m.cols() == 0 {
            return Err(Error::InvalidParameter(
                "embedding dimension must be >= 1".into(),
            ));
        }
        let norms = match kind {
            DistanceKind::Cosine => {
                let norms: Vec<f64> = m.iter_rows().map(norm).collect();
                if norms.contains(&0.0) {
                    return Err(Error::ZeroNorm);
                }
                norms
            }
            DistanceKind::SqEuclidean => vec![1.0; m.rows()],
        };
        Ok(Self { m, norms, kind })
    }

    pub(crate) fn len(&self) -> usize {
        self.m.rows()
    }

    #[inline]
    pub(crate) fn dist(&self, i: usize, other: &Points<'_>, j: usize) -> f64 {
        raw_distance(
            self.m.row(i),
            other.m.row(j),
            self.norms[i],
            other.norms[j],
            self.kind,
        )
    }

    /// `out += coef · ∂d(self_i, other_j)/∂self_i`.
    #[inline]
    pub(crate) fn add_grad(
        &self,
        i: usize,
        other: &Points<'_>,
        j: usize,
        coef: f64,
        out: &mut [f64],
    ) {
        accumulate_first_arg_grad(
            self.m.row(i),
            other.m.row(j),
            self.norms[i],
            other.norms[j],
            self.kind,
            coef,
            out,
        );
    }

    /// Full `self.len() × other.len()` distance table.
    pub(crate) fn distance_table(&self, other: &Points<'_>) -> Matrix {
        let mut out = Matrix::zeros(self.len(), other.len());
        crate::par::for_each_row_mut(out.as_mut_slice(), other.len(), |i, row| {
            for (j, o) in row.iter_mut().enumerate() {
                *o = self.dist(i, other, j);
            }
        });
        out
    }
}

/// `[x]_+ = max(x, 0)`.
#[inline]
pub fn hinge(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Subgradient of [`hinge`]; zero at the kink.
#[inline]
pub fn hinge_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `log(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + Σₖ e^{tₖ} / e^{log_denominator})`, stable for large `|tₖ|`.
///
/// Returns 0 for an empty term list.
pub fn log1p_sum_exp_scaled(terms: &[f64], log_denominator: f64) -> f64 {
    log1p_sum_exp_iter(terms.iter().copied(), log_denominator)
}

pub(crate) fn log1p_sum_exp_iter<I>(terms: I, log_denominator: f64) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    let sum: f64 = terms.map(|t| (t - max).exp()).sum();
    softplus(max + sum.ln() - log_denominator)
}
