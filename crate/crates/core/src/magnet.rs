//! Mean-field theory of the infinite-range magnet.
//!
//! `H = −(J/2) Σ_{i,j} S_iᵀS_j` over all ordered pairs (self terms included);
//! expanding `S_i = M + (S_i − M)` and dropping the quadratic fluctuation
//! term gives `H_MFT = (J N²/2) MᵀM − J N Mᵀ Σ_i S_i`. The dropped term is
//! exactly `−(J/2)‖Σ_i (S_i − M)‖²`.
//!
//! In the Ising specialization the self-consistency condition reads
//! `M = tanh(J N M / T)`.

use crate::error::{Error, Result};
use crate::matrix::{dot, norm};
use crate::par;

/// Largest spin count accepted by [`exact_gibbs`].
pub const MAX_EXACT_SPINS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum Spins {
    /// Unit 3-vectors.
    Vector(Vec<[f64; 3]>),
    /// Values in `{−1, +1}`.
    Ising(Vec<i8>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinSystem {
    pub coupling: f64,
    pub temperature: f64,
    spins: Spins,
}

impl SpinSystem {
    pub fn new(coupling: f64, temperature: f64, spins: Spins) -> Result<Self> {
        if !(coupling > 0.0 && coupling.is_finite()) {
            return Err(Error::InvalidParameter(
                "exchange coupling J must be > 0".into(),
            ));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidParameter("temperature T must be > 0".into()));
        }
        match &spins {
            Spins::Vector(v) => {
                if let Some(i) = v.iter().position(|s| (norm(s) - 1.0).abs() > 1e-12) {
                    return Err(Error::InvalidParameter(format!(
                        "spin {i} is not unit-norm"
                    )));
                }
            }
            Spins::Ising(v) => {
                if let Some(i) = v.iter().position(|&s| s != 1 && s != -1) {
                    return Err(Error::InvalidParameter(format!("Ising spin {i} is not ±1")));
                }
            }
        }
        if self_len(&spins) == 0 {
            return Err(Error::InvalidParameter("spin system needs N >= 1".into()));
        }
        Ok(Self {
            coupling,
            temperature,
            spins,
        })
    }

    pub fn spins(&self) -> &Spins {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self_len(&self.spins)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Spin components: dimension 3 for vector mode, 1 for Ising.
    pub fn dim(&self) -> usize {
        match self.spins {
            Spins::Vector(_) => 3,
            Spins::Ising(_) => 1,
        }
    }

    fn spin(&self, i: usize) -> Vec<f64> {
        match &self.spins {
            Spins::Vector(v) => v[i].to_vec(),
            Spins::Ising(v) => vec![v[i] as f64],
        }
    }

    fn total_spin(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.dim()];
        for i in 0..self.len() {
            for (t, s) in total.iter_mut().zip(self.spin(i)) {
                *t += s;
            }
        }
        total
    }

    fn check_field(&self, m: &[f64]) -> Result<()> {
        if m.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: m.len(),
            });
        }
        Ok(())
    }
}

fn self_len(spins: &Spins) -> usize {
    match spins {
        Spins::Vector(v) => v.len(),
        Spins::Ising(v) => v.len(),
    }
}

/// `−(J/2) Σ_{i,j} S_iᵀS_j`, evaluated pair by pair.
pub fn hamiltonian(sys: &SpinSystem) -> f64 {
    let spins: Vec<Vec<f64>> = (0..sys.len()).map(|i| sys.spin(i)).collect();
    let mut sum = 0.0;
    for a in &spins {
        for b in &spins {
            sum += dot(a, b);
        }
    }
    -0.5 * sys.coupling * sum
}

/// `(J N²/2) MᵀM − J N Mᵀ Σ_i S_i`.
pub fn mft_hamiltonian(sys: &SpinSystem, field: &[f64]) -> Result<f64> {
    sys.check_field(field)?;
    let n = sys.len() as f64;
    let j = sys.coupling;
    Ok(0.5 * j * n * n * dot(field, field) - j * n * dot(field, &sys.total_spin()))
}

/// `H − H_MFT`.
pub fn expansion_gap(sys: &SpinSystem, field: &[f64]) -> Result<f64> {
    Ok(hamiltonian(sys) - mft_hamiltonian(sys, field)?)
}

/// The discarded second-order term `−(J/2)‖Σ_i (S_i − M)‖²`.
pub fn fluctuation_term(sys: &SpinSystem, field: &[f64]) -> Result<f64> {
    sys.check_field(field)?;
    let mut dev = vec![0.0; sys.dim()];
    for i in 0..sys.len() {
        for ((d, s), m) in dev.iter_mut().zip(sys.spin(i)).zip(field) {
            *d += s - m;
        }
    }
    Ok(-0.5 * sys.coupling * dot(&dev, &dev))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MftSolution {
    pub field: f64,
    /// `|M − tanh(J N M / T)|`.
    pub residual: f64,
    pub iterations: usize,
}

/// Damping factor of the fixed-point iteration.
pub const DAMPING: f64 = 0.5;

/// Solves `M = tanh(J N M / T)` by damped fixed-point iteration
/// `M ← (1−γ)M + γ·tanh(J N M / T)` with `γ = 0.5`.
///
/// When `J N / T ≤ 1` the only root is `M = 0` (since `tanh x < x` for
/// `x > 0`), which is returned directly with zero iterations.
pub fn solve_self_consistency(
    coupling: f64,
    n: usize,
    temperature: f64,
    init: f64,
    tol: f64,
    max_iter: usize,
) -> Result<MftSolution> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameter("temperature T must be > 0".into()));
    }
    if !(coupling > 0.0 && coupling.is_finite()) || n == 0 {
        return Err(Error::InvalidParameter("need J > 0 and N >= 1".into()));
    }
    let gain = coupling * n as f64 / temperature;
    if gain <= 1.0 {
        return Ok(MftSolution {
            field: 0.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    let residual = |m: f64| (m - (gain * m).tanh()).abs();
    let mut m = init;
    for it in 0..=max_iter {
        let r = residual(m);
        if r <= tol {
            return Ok(MftSolution {
                field: m,
                residual: r,
                iterations: it,
            });
        }
        m = (1.0 - DAMPING) * m + DAMPING * (gain * m).tanh();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: residual(m),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GibbsSummary {
    /// Partition function; may overflow to infinity, see `log_z`.
    pub z: f64,
    pub log_z: f64,
    /// `E[(1/N) Σ S_i]`.
    pub mean_spin: f64,
    /// `E[|(1/N) Σ S_i|]`, the order-parameter magnitude.
    pub mean_abs_spin: f64,
}

/// Exact Gibbs averages of the Ising infinite-range magnet by enumerating
/// all `2^N` states.
pub fn exact_gibbs(n: usize, coupling: f64, temperature: f64) -> Result<GibbsSummary> {
    if n == 0 || n > MAX_EXACT_SPINS {
        return Err(Error::InvalidParameter(format!(
            "exact enumeration supports 1 <= N <= {MAX_EXACT_SPINS}, got {n}"
        )));
    }
    if !(temperature > 0.0 && temperature.is_finite() && coupling > 0.0 && coupling.is_finite()) {
        return Err(Error::InvalidParameter("need J > 0 and T > 0".into()));
    }
    let states = 1usize << n;
    // −H/T = (J/2T)(Σs)², shifted by its maximum to keep exp() finite
    let weight_exponent = |sum: f64| 0.5 * coupling * sum * sum / temperature;
    let shift = weight_exponent(n as f64);
    const BLOCK: usize = 1 << 10;
    let blocks = states.div_ceil(BLOCK);
    let partial = par::map_indexed(blocks, |b| {
        let mut acc = [0.0f64; 3];
        for state in b * BLOCK..((b + 1) * BLOCK).min(states) {
            let up = state.count_ones() as f64;
            let sum = 2.0 * up - n as f64;
            let w = (weight_exponent(sum) - shift).exp();
            let m = sum / n as f64;
            acc[0] += w;
            acc[1] += w * m;
            acc[2] += w * m.abs();
        }
        acc
    });
    let mut tot = [0.0f64; 3];
    for p in partial {
        for (t, v) in tot.iter_mut().zip(p) {
            *t += v;
        }
    }
    let log_z = tot[0].ln() + shift;
    Ok(GibbsSummary {
        z: log_z.exp(),
        log_z,
        mean_spin: tot[1] / tot[0],
        mean_abs_spin: tot[2] / tot[0],
    })
}
