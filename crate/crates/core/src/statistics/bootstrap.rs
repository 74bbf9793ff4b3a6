use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics};

use super::Statistic;
use crate::error::{Error, Result};
use crate::estimation::Moments;
use crate::measurement::{EfficiencyModel, Shot};
use crate::rng::{stream_rng, Domain};

pub const MIN_REPLICATES: usize = 200;
/// Two-sided 1σ coverage.
pub const DEFAULT_LEVEL: f64 = 0.6827;
/// Largest tolerated fraction of failed replicates.
const MAX_DROP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 1000,
            seed: 0,
            level: DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatInterval {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub replicates: usize,
    pub dropped: usize,
    /// Bias-correction constant `Φ⁻¹(fraction of replicates below the point)`.
    pub z0: f64,
}

impl StatInterval {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

fn resample(shots: &[Shot], seed: u64, b: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, Domain::Bootstrap, b as u64);
    let n = shots.len();
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bias-corrected percentile interval of `statistic` under per-shot
/// resampling with replacement.
///
/// Replicate `b` draws from its own random stream, so the result depends only
/// on `(shots, statistic, opts)`. A replicate whose statistic fails is
/// dropped; more than 5% drops abort.
pub fn bootstrap_ci(
    shots: &[Shot],
    statistic: &dyn Statistic,
    eff: &EfficiencyModel,
    opts: &BootstrapOptions,
) -> Result<StatInterval> {
    if opts.replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
            opts.replicates
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {}",
            opts.level
        )));
    }
    let point = statistic.evaluate(&Moments::from_shots(shots)?, eff)?;

    let outcomes: Vec<Result<f64>> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let idx = resample(shots, opts.seed, b);
            let m = Moments::from_shots(idx.iter().map(|&i| &shots[i]))?;
            statistic.evaluate(&m, eff)
        })
        .collect();

    let mut values = Vec::with_capacity(outcomes.len());
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => {
                first_error.get_or_insert_with(|| format!("non-finite value {v}"));
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let dropped = opts.replicates - values.len();
    if dropped as f64 > MAX_DROP_FRACTION * opts.replicates as f64 {
        return Err(Error::TooManyDroppedReplicates {
            dropped,
            total: opts.replicates,
            reason: first_error.unwrap_or_default(),
        });
    }

    let below = values.iter().filter(|&&v| v < point).count() as f64;
    let ties = values.iter().filter(|&&v| v == point).count() as f64;
    let b = values.len() as f64;
    // keep z0 finite when every replicate falls on one side
    let frac = ((below + 0.5 * ties) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let normal = Normal::standard();
    let z0 = normal.inverse_cdf(frac);
    let z = normal.inverse_cdf(0.5 + 0.5 * opts.level);
    let mut data = Data::new(values);
    let lo = data.quantile(normal.cdf(2.0 * z0 - z));
    let hi = data.quantile(normal.cdf(2.0 * z0 + z));
    Ok(StatInterval {
        point,
        lo,
        hi,
        level: opts.level,
        replicates: opts.replicates,
        dropped,
        z0,
    })
}
