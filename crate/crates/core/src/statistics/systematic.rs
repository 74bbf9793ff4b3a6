use serde::{Deserialize, Serialize};

use super::Statistic;
use crate::error::{Error, Result};
use crate::estimation::Moments;
use crate::measurement::EfficiencyModel;

/// Corner efficiencies at or below zero are raised to this value.
pub const DEFAULT_EFFICIENCY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerValue {
    pub eta1: f64,
    pub eta2: f64,
    pub value: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysInterval {
    /// Value at the nominal efficiencies.
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Centre first, then `(η1∓σ1, η2∓σ2)` in the order `--`, `-+`, `+-`, `++`.
    pub evaluations: Vec<CornerValue>,
    pub clipped: bool,
}

fn corner(eta: f64, sigma: f64, sign: f64, floor: f64) -> (f64, bool) {
    let v = eta + sign * sigma;
    if v <= 0.0 {
        (floor, true)
    } else if v > 1.0 {
        (1.0, true)
    } else {
        (v, false)
    }
}

/// Envelope of `statistic` over the centre and the four `(η1±σ1, η2±σ2)`
/// corners of the efficiency model.
pub fn systematic_scan(
    moments: &Moments,
    eff: &EfficiencyModel,
    statistic: &dyn Statistic,
    floor: f64,
) -> Result<SysInterval> {
    eff.validate()?;
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "efficiency floor must lie in (0, 1), got {floor}"
        )));
    }
    let point = statistic.evaluate(moments, eff)?;
    let mut evaluations = vec![CornerValue {
        eta1: eff.eta1,
        eta2: eff.eta2,
        value: point,
        clipped: false,
    }];
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            let (eta1, c1) = corner(eff.eta1, eff.eta1_sigma, s1, floor);
            let (eta2, c2) = corner(eff.eta2, eff.eta2_sigma, s2, floor);
            let e = EfficiencyModel::exact(eta1, eta2)?;
            evaluations.push(CornerValue {
                eta1,
                eta2,
                value: statistic.evaluate_at_corner(moments, eff, &e)?,
                clipped: c1 || c2,
            });
        }
    }
    let lo = evaluations
        .iter()
        .map(|c| c.value)
        .fold(f64::INFINITY, f64::min);
    let hi = evaluations
        .iter()
        .map(|c| c.value)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SysInterval {
        point,
        lo,
        hi,
        clipped: evaluations.iter().any(|c| c.clipped),
        evaluations,
    })
}
