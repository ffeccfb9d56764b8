//! k-NN retrieval metrics: precision at 1, R-precision and MAP@R.
//!
//! Every sample queries all others (itself excluded). Neighbors are sorted
//! by ascending distance, ties broken by ascending index. For a query whose
//! class has `R + 1` members:
//!
//! - `P@1` is 1 when the nearest neighbor shares the class;
//! - `RP` is the fraction of same-class items among the top `R`;
//! - `MAP@R = (1/R) Σ_{i≤R} P(i)·rel(i)`.
//!
//! Reported values are macro-averages over queries.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numerics::{DistanceKind, Points};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryMetrics {
    pub p_at_1: f64,
    pub r_precision: f64,
    pub map_at_r: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    pub p_at_1: f64,
    pub r_precision: f64,
    pub map_at_r: f64,
    pub per_query: Vec<QueryMetrics>,
}

impl RetrievalReport {
    /// `key=value` lines for the three aggregates.
    pub fn to_kv_text(&self) -> String {
        format!(
            "p_at_1={}\nr_precision={}\nmap_at_r={}\n",
            self.p_at_1, self.r_precision, self.map_at_r
        )
    }

    /// Parses the aggregates back from [`to_kv_text`](Self::to_kv_text)
    /// output; `per_query` comes back empty.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("report line without `=`: {line}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("report value for {k} is not a number")))?;
            fields.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Data(format!("report is missing {k}")))
        };
        Ok(Self {
            p_at_1: get("p_at_1")?,
            r_precision: get("r_precision")?,
            map_at_r: get("map_at_r")?,
            per_query: Vec::new(),
        })
    }
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

fn neighbors(pts: &Points<'_>, q: usize) -> Vec<(f64, usize)> {
    (0..pts.len())
        .filter(|&j| j != q)
        .map(|j| (pts.dist(q, pts, j), j))
        .collect()
}

/// For every query, all other indices sorted by (distance, index).
pub fn rank_neighbors(embeddings: &Matrix, kind: DistanceKind) -> Result<Vec<Vec<usize>>> {
    if embeddings.rows() < 2 {
        return Err(Error::InvalidParameter(format!(
            "ranking needs at least 2 points, got {}",
            embeddings.rows()
        )));
    }
    let pts = Points::new(embeddings, kind)?;
    Ok(par::map_indexed(pts.len(), |q| {
        let mut nb = neighbors(&pts, q);
        nb.sort_unstable_by(by_distance_then_index);
        nb.into_iter().map(|(_, j)| j).collect()
    }))
}

pub fn evaluate(
    embeddings: &Matrix,
    labels: &[usize],
    kind: DistanceKind,
) -> Result<RetrievalReport> {
    if labels.len() != embeddings.rows() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.rows(),
            got: labels.len(),
        });
    }
    if labels.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "retrieval needs at least 2 samples, got {}",
            labels.len()
        )));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &y in labels {
        *counts.entry(y).or_default() += 1;
    }
    if let Some((&c, _)) = counts.iter().find(|(_, &n)| n < 2) {
        return Err(Error::InvalidParameter(format!(
            "class {c} has a single sample; every query needs a relevant item"
        )));
    }
    let pts = Points::new(embeddings, kind)?;
    let per_query = par::map_indexed(labels.len(), |q| {
        let r = counts[&labels[q]] - 1;
        let mut nb = neighbors(&pts, q);
        if r < nb.len() {
            nb.select_nth_unstable_by(r - 1, by_distance_then_index);
            nb.truncate(r);
        }
        nb.sort_unstable_by(by_distance_then_index);
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (rank, &(_, j)) in nb.iter().enumerate() {
            if labels[j] == labels[q] {
                hits += 1;
                ap += hits as f64 / (rank + 1) as f64;
            }
        }
        QueryMetrics {
            p_at_1: if labels[nb[0].1] == labels[q] {
                1.0
            } else {
                0.0
            },
            r_precision: hits as f64 / r as f64,
            map_at_r: ap / r as f64,
        }
    });
    let n = per_query.len() as f64;
    let mean = |f: fn(&QueryMetrics) -> f64| per_query.iter().map(f).sum::<f64>() / n;
    Ok(RetrievalReport {
        p_at_1: mean(|m| m.p_at_1),
        r_precision: mean(|m| m.r_precision),
        map_at_r: mean(|m| m.map_at_r),
        per_query,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_vec(xs.len(), 1, xs.to_vec()).unwrap()
    }

    #[test]
    fn two_points_retrieve_each_other() {
        let r = rank_neighbors(&line(&[0.0, 5.0]), DistanceKind::SqEuclidean).unwrap();
        assert_eq!(r, vec![vec![1], vec![0]]);
        assert!(rank_neighbors(&line(&[0.0]), DistanceKind::SqEuclidean).is_err());
    }

    #[test]
    fn collinear_ranking_and_ties() {
        let r = rank_neighbors(&line(&[0.0, 3.0, 1.0, -1.0]), DistanceKind::SqEuclidean).unwrap();
        // from 0: 1 and -1 tie at distance 1 → lower index (2) first
        assert_eq!(r[0], vec![2, 3, 1]);
        assert_eq!(r[1], vec![2, 0, 3]);
    }

    #[test]
    fn perfect_retrieval() {
        let e = line(&[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]);
        let rep = evaluate(&e, &[0, 0, 0, 1, 1, 1], DistanceKind::SqEuclidean).unwrap();
        assert_eq!((rep.p_at_1, rep.r_precision, rep.map_at_r), (1.0, 1.0, 1.0));
    }

    #[test]
    fn relevant_at_ranks_one_and_three() {
        // query 0 with R = 2: ranking 1 (rel), 3 (irrel), 2 (rel)
        let e = line(&[0.0, 1.0, 3.0, 2.0, 100.0]);
        let rep = evaluate(&e, &[0, 0, 0, 1, 1], DistanceKind::SqEuclidean).unwrap();
        let q = rep.per_query[0];
        assert_eq!(q.p_at_1, 1.0);
        assert_eq!(q.r_precision, 0.5);
        assert_eq!(q.map_at_r, 0.5);
    }

    #[test]
    fn singleton_class_rejected() {
        let err = evaluate(
            &line(&[0.0, 1.0, 2.0]),
            &[0, 0, 1],
            DistanceKind::SqEuclidean,
        );
        assert!(err.is_err());
    }

    #[test]
    fn kv_text_round_trip() {
        let e = line(&[0.0, 1.0, 3.0, 2.0, 100.0]);
        let rep = evaluate(&e, &[0, 0, 0, 1, 1], DistanceKind::SqEuclidean).unwrap();
        let back = RetrievalReport::from_kv_text(&rep.to_kv_text()).unwrap();
        assert_eq!(back.map_at_r, rep.map_at_r);
        assert_eq!(back.r_precision, rep.r_precision);
        assert_eq!(back.p_at_1, rep.p_at_1);
    }
}
