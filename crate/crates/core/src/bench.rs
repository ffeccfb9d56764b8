//! Wall-time scaling of loss + gradient evaluation against batch size.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::losses::{Batch, LossSpec};
use crate::matrix::Matrix;
use crate::meanfield::{init_bank, InitScheme, MeanFieldBank};
use crate::numerics::DistanceKind;
use crate::par;

pub const CSV_HEADER: &str = "loss,B,C,d,mean_ns,std_ns,repeats";

/// Untimed evaluations before each timed series.
pub const WARMUP_RUNS: usize = 3;

/// Each timed repeat loops the evaluation until at least this long has
/// elapsed and reports the per-evaluation average.
const MIN_REPEAT_NS: f64 = 2e6;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub loss: String,
    pub batch_size: usize,
    pub classes: usize,
    pub dim: usize,
    pub mean_ns: f64,
    pub std_ns: f64,
    pub repeats: usize,
}

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.1},{:.1},{}",
            self.loss,
            self.batch_size,
            self.classes,
            self.dim,
            self.mean_ns,
            self.std_ns,
            self.repeats
        )
    }
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSpec {
    pub losses: Vec<LossSpec>,
    pub batch_sizes: Vec<usize>,
    pub classes: usize,
    pub dim: usize,
    pub repeats: usize,
    pub seed: u64,
    pub distance: DistanceKind,
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.losses.is_empty() {
            return Err(Error::InvalidParameter("no losses to benchmark".into()));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::InvalidParameter(
                "batch sizes must be positive".into(),
            ));
        }
        if self.batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "batch sizes must be strictly ascending".into(),
            ));
        }
        if self.classes == 0 || self.dim == 0 {
            return Err(Error::InvalidParameter(
                "classes and dim must be >= 1".into(),
            ));
        }
        if self.repeats < 5 {
            return Err(Error::InvalidParameter(format!(
                "repeats must be >= 5 (got {})",
                self.repeats
            )));
        }
        for l in &self.losses {
            l.validate()?;
        }
        Ok(())
    }
}

/// The benchmark input for batch size `b`: Gaussian embeddings, labels
/// uniform over `classes`, and a unit-random bank. Depends only on the
/// arguments.
pub fn bench_inputs(
    b: usize,
    classes: usize,
    dim: usize,
    seed: u64,
) -> Result<(Batch, MeanFieldBank)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let data = (0..b * dim)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let labels = (0..b).map(|_| rng.random_range(0..classes)).collect();
    let batch = Batch::new(Matrix::from_vec(b, dim, data)?, labels)?;
    let bank = init_bank(classes, dim, InitScheme::UnitRandom, seed)?;
    Ok((batch, bank))
}

/// Times every loss at every batch size on the calling thread only.
pub fn bench_loss_scaling(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    spec.validate()?;
    par::single_threaded(|| {
        let mut rows = Vec::new();
        for loss in &spec.losses {
            for &b in &spec.batch_sizes {
                let (batch, bank) = bench_inputs(b, spec.classes, spec.dim, spec.seed)?;
                let run = || loss.evaluate(&batch, Some(&bank), spec.distance);
                let mut last = 0.0;
                for _ in 0..WARMUP_RUNS {
                    let t = Instant::now();
                    std::hint::black_box(run()?);
                    last = t.elapsed().as_nanos() as f64;
                }
                let inner = ((MIN_REPEAT_NS / last.max(1.0)).ceil() as usize).max(1);
                let mut samples = Vec::with_capacity(spec.repeats);
                for _ in 0..spec.repeats {
                    let t = Instant::now();
                    for _ in 0..inner {
                        std::hint::black_box(run()?);
                    }
                    samples.push(t.elapsed().as_nanos() as f64 / inner as f64);
                }
                let mean = samples.iter().sum::<f64>() / samples.len() as f64;
                let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                    / (samples.len() as f64 - 1.0);
                rows.push(BenchRow {
                    loss: loss.name().to_string(),
                    batch_size: b,
                    classes: spec.classes,
                    dim: spec.dim,
                    mean_ns: mean.max(f64::MIN_POSITIVE),
                    std_ns: var.sqrt(),
                    repeats: spec.repeats,
                });
            }
        }
        Ok(rows)
    })
}

/// Least-squares slope of `log(mean_ns)` against `log(B)`.
pub fn fit_loglog_slope(rows: &[BenchRow]) -> Result<f64> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.batch_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "slope fit needs at least 3 distinct batch sizes, got {}",
            sizes.len()
        )));
    }
    if rows
        .iter()
        .any(|r| r.mean_ns.is_nan() || r.mean_ns <= 0.0 || r.batch_size == 0)
    {
        return Err(Error::InvalidParameter(
            "slope fit needs positive times and sizes".into(),
        ));
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.batch_size as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_ns.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(f: impl Fn(f64) -> f64) -> Vec<BenchRow> {
        [64usize, 128, 256, 512, 1024]
            .iter()
            .map(|&b| BenchRow {
                loss: "x".into(),
                batch_size: b,
                classes: 1,
                dim: 1,
                mean_ns: f(b as f64),
                std_ns: 0.0,
                repeats: 5,
            })
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        assert!((fit_loglog_slope(&rows(|b| b * b)).unwrap() - 2.0).abs() < 1e-9);
        assert!((fit_loglog_slope(&rows(|b| b)).unwrap() - 1.0).abs() < 1e-9);
        assert!((fit_loglog_slope(&rows(|b| 7.0 * b.powf(1.5))).unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn degenerate_sizes_rejected() {
        let mut r = rows(|b| b);
        r.truncate(2);
        assert!(fit_loglog_slope(&r).is_err());
        let same: Vec<_> = (0..4).map(|_| r[0].clone()).collect();
        assert!(fit_loglog_slope(&same).is_err());
    }

    #[test]
    fn inputs_are_seeded() {
        let (a, ba) = bench_inputs(32, 4, 8, 9).unwrap();
        let (b, bb) = bench_inputs(32, 4, 8, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ba, bb);
        let (c, _) = bench_inputs(32, 4, 8, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_has_one_row_per_measurement() {
        let spec = BenchSpec {
            losses: vec![LossSpec::by_name("mfcont").unwrap()],
            batch_sizes: vec![4, 8, 16],
            classes: 3,
            dim: 4,
            repeats: 5,
            seed: 1,
            distance: DistanceKind::Cosine,
        };
        let rows = bench_loss_scaling(&spec).unwrap();
        let csv = rows_to_csv(&rows);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(rows.iter().all(|r| r.mean_ns > 0.0));
    }
}
