//! Covariance propagation under `dC/dt = AC + CAᵀ + D`.

use nalgebra::{DMatrix, SMatrix};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

use super::Matrix6;

/// Largest allowed `dt * rate` for the fixed-step integrator.
pub const MAX_STEP_RATE_PRODUCT: f64 = 0.05;

fn lyapunov_rhs<const N: usize>(
    c: &SMatrix<f64, N, N>,
    a: &SMatrix<f64, N, N>,
    d: &SMatrix<f64, N, N>,
) -> SMatrix<f64, N, N> {
    let ac = a * c;
    ac + ac.transpose() + d
}

/// Fastest rate present in `a`: the largest entry, or twice the largest
/// diagonal decay (the full linewidth of a damped mode).
pub fn fastest_rate<const N: usize>(a: &SMatrix<f64, N, N>) -> f64 {
    let entries = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diag = (0..N).fold(0.0f64, |m, i| m.max(a[(i, i)].abs()));
    entries.max(2.0 * diag)
}

/// Fixed-step RK4 with per-step symmetrization.
///
/// The interval is split into `ceil(t / dt)` equal steps so the final time is
/// hit exactly.
pub fn evolve<const N: usize>(
    c0: &SMatrix<f64, N, N>,
    a: &SMatrix<f64, N, N>,
    d: &SMatrix<f64, N, N>,
    t: f64,
    dt: f64,
) -> Result<SMatrix<f64, N, N>> {
    if !(t >= 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "evolve needs t >= 0 and dt > 0, got t = {t:e}, dt = {dt:e}"
        )));
    }
    if t == 0.0 {
        return Ok(*c0);
    }
    if dt > t * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "step {dt:e} s exceeds the interval {t:e} s"
        )));
    }
    let product = dt * fastest_rate(a);
    if product > MAX_STEP_RATE_PRODUCT {
        return Err(Error::StepSize { dt, product });
    }

    let steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut c = (c0 + c0.transpose()) * 0.5;
    for _ in 0..steps {
        let k1 = lyapunov_rhs(&c, a, d);
        let k2 = lyapunov_rhs(&(c + k1 * (0.5 * h)), a, d);
        let k3 = lyapunov_rhs(&(c + k2 * (0.5 * h)), a, d);
        let k4 = lyapunov_rhs(&(c + k3 * h), a, d);
        c += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        c = (c + c.transpose()) * 0.5;
    }
    Ok(c)
}

/// One-interval propagator `C ↦ F C Fᵀ + Q` with `F = e^{Ah}`.
struct Propagator<const N: usize> {
    transfer: SMatrix<f64, N, N>,
    noise: SMatrix<f64, N, N>,
}

impl<const N: usize> Propagator<N> {
    /// Van Loan construction: `exp([[A, D], [0, -Aᵀ]] h) = [[F, G], [0, e^{-Aᵀh}]]`
    /// and the accumulated noise is `G Fᵀ`.
    fn new(a: &SMatrix<f64, N, N>, d: &SMatrix<f64, N, N>, h: f64) -> Self {
        let mut block = DMatrix::zeros(2 * N, 2 * N);
        for i in 0..N {
            for j in 0..N {
                block[(i, j)] = a[(i, j)] * h;
                block[(i, N + j)] = d[(i, j)] * h;
                block[(N + i, N + j)] = -a[(j, i)] * h;
            }
        }
        let e = block.exp();
        let transfer = SMatrix::<f64, N, N>::from_fn(|i, j| e[(i, j)]);
        let g = SMatrix::<f64, N, N>::from_fn(|i, j| e[(i, N + j)]);
        let noise = g * transfer.transpose();
        Propagator {
            transfer,
            noise: (noise + noise.transpose()) * 0.5,
        }
    }

    fn apply(&self, c: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
        let out = self.transfer * c * self.transfer.transpose() + self.noise;
        (out + out.transpose()) * 0.5
    }
}

/// Closed-form solution `e^{At} C0 e^{Aᵀt} + ∫₀ᵗ e^{As} D e^{Aᵀs} ds`.
///
/// The block exponential loses precision once `e^{|A|t}` is large, so the
/// interval is cut into pieces with `|A| h ≤ 1/2` and the exact one-piece map
/// is composed.
pub fn evolve_exact<const N: usize>(
    c0: &SMatrix<f64, N, N>,
    a: &SMatrix<f64, N, N>,
    d: &SMatrix<f64, N, N>,
    t: f64,
) -> Result<SMatrix<f64, N, N>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t:e}")));
    }
    if t == 0.0 {
        return Ok(*c0);
    }
    let pieces = (t * fastest_rate(a) / 0.5).ceil().max(1.0) as usize;
    let step = Propagator::new(a, d, t / pieces as f64);
    let mut c = (c0 + c0.transpose()) * 0.5;
    for _ in 0..pieces {
        c = step.apply(&c);
    }
    Ok(c)
}

/// A method for propagating a covariance over a constant-coefficient interval.
pub trait CovarianceIntegrator: Named + Send + Sync {
    fn propagate(&self, c0: &Matrix6, a: &Matrix6, d: &Matrix6, t: f64, dt: f64)
        -> Result<Matrix6>;
}

/// Fixed-step fourth-order Runge-Kutta.
pub struct Rk4;

impl Named for Rk4 {
    fn name(&self) -> &str {
        "rk4"
    }
}

impl CovarianceIntegrator for Rk4 {
    fn propagate(
        &self,
        c0: &Matrix6,
        a: &Matrix6,
        d: &Matrix6,
        t: f64,
        dt: f64,
    ) -> Result<Matrix6> {
        // the last piece of a sampled segment may be shorter than dt
        evolve(c0, a, d, t, dt.min(t))
    }
}

/// Matrix-exponential propagation; ignores `dt`.
pub struct Exact;

impl Named for Exact {
    fn name(&self) -> &str {
        "exact"
    }
}

impl CovarianceIntegrator for Exact {
    fn propagate(
        &self,
        c0: &Matrix6,
        a: &Matrix6,
        d: &Matrix6,
        t: f64,
        _dt: f64,
    ) -> Result<Matrix6> {
        evolve_exact(c0, a, d, t)
    }
}

pub type IntegratorRegistry = Registry<dyn CovarianceIntegrator>;

/// Registry holding `rk4` and `exact`.
pub fn builtin_integrators() -> IntegratorRegistry {
    let mut r = IntegratorRegistry::new("integrator");
    r.register(Box::new(Rk4)).register(Box::new(Exact));
    r
}
