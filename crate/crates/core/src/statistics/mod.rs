//! Statistical (bootstrap) and systematic (efficiency scan) uncertainties.

mod bootstrap;
mod systematic;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_ci, BootstrapOptions, StatInterval, DEFAULT_LEVEL, MIN_REPLICATES};
pub use systematic::{systematic_scan, CornerValue, SysInterval, DEFAULT_EFFICIENCY_FLOOR};

use crate::correction::{infer_nu, invert_loss};
use crate::error::Result;
use crate::estimation::{correlation_angle, Moments};
use crate::gaussian::{occupancy_raw, simon_duan_nu_raw};
use crate::measurement::{loss_channel_raw, EfficiencyModel};
use crate::registry::{Named, Registry};

/// A scalar derived from the sample moments of a record, possibly using
/// the calibrated efficiencies.
pub trait Statistic: Named + Send + Sync {
    fn evaluate(&self, moments: &Moments, eff: &EfficiencyModel) -> Result<f64>;

    /// Value if the true efficiencies were `corner` instead of `nominal`;
    /// used by the systematic scan.
    fn evaluate_at_corner(
        &self,
        moments: &Moments,
        _nominal: &EfficiencyModel,
        corner: &EfficiencyModel,
    ) -> Result<f64> {
        self.evaluate(moments, corner)
    }
}

pub type StatisticRegistry = Registry<dyn Statistic>;

/// Entanglement eigenvalue of the raw measured covariance.
pub struct NuMeas;

/// Entanglement eigenvalue after loss inversion and physical projection.
pub struct Nu;

/// Pre-loss occupancy of one drum, from the inverted (unprojected) covariance.
pub struct Occupancy(pub usize);

/// (x1, x2) correlation-ellipse angle of the measured covariance, degrees.
pub struct Angle;

impl Named for NuMeas {
    fn name(&self) -> &str {
        "nu_meas"
    }
}

impl Statistic for NuMeas {
    fn evaluate(&self, m: &Moments, _: &EfficiencyModel) -> Result<f64> {
        simon_duan_nu_raw(&m.covariance)
    }

    /// The measured covariance itself does not depend on η, so the state
    /// inferred at the nominal efficiencies is re-measured at the corner.
    fn evaluate_at_corner(
        &self,
        m: &Moments,
        nominal: &EfficiencyModel,
        corner: &EfficiencyModel,
    ) -> Result<f64> {
        let state = infer_nu(&m.covariance, nominal)?.projected.as_two_mode()?;
        simon_duan_nu_raw(&loss_channel_raw(&state, corner))
    }
}

impl Named for Nu {
    fn name(&self) -> &str {
        "nu"
    }
}

impl Statistic for Nu {
    fn evaluate(&self, m: &Moments, eff: &EfficiencyModel) -> Result<f64> {
        Ok(infer_nu(&m.covariance, eff)?.nu)
    }
}

impl Named for Occupancy {
    fn name(&self) -> &str {
        match self.0 {
            0 => "occupancy1",
            _ => "occupancy2",
        }
    }
}

impl Statistic for Occupancy {
    fn evaluate(&self, m: &Moments, eff: &EfficiencyModel) -> Result<f64> {
        Ok(occupancy_raw(&invert_loss(&m.covariance, eff)?, self.0))
    }
}

impl Named for Angle {
    fn name(&self) -> &str {
        "angle"
    }
}

impl Statistic for Angle {
    fn evaluate(&self, m: &Moments, _: &EfficiencyModel) -> Result<f64> {
        Ok(correlation_angle(&m.covariance).degrees)
    }
}

pub fn builtin_statistics() -> StatisticRegistry {
    let mut r = StatisticRegistry::new("statistic");
    r.register(Box::new(NuMeas))
        .register(Box::new(Nu))
        .register(Box::new(Occupancy(0)))
        .register(Box::new(Occupancy(1)))
        .register(Box::new(Angle));
    r
}

/// Point value with 1σ statistical and systematic intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBudget {
    pub point: f64,
    pub stat_lo: f64,
    pub stat_hi: f64,
    pub sys_lo: f64,
    pub sys_hi: f64,
    /// `value +hi/-lo (stat) +hi/-lo (sys)`.
    pub notation: String,
}

impl UncertaintyBudget {
    /// Combines intervals sharing the same point value.
    pub fn new(stat: &StatInterval, sys: &SysInterval) -> Self {
        Self::from_bounds(stat.point, (stat.lo, stat.hi), (sys.lo, sys.hi))
    }

    pub fn from_bounds(point: f64, stat: (f64, f64), sys: (f64, f64)) -> Self {
        let mut b = UncertaintyBudget {
            point,
            stat_lo: stat.0.min(point),
            stat_hi: stat.1.max(point),
            sys_lo: sys.0.min(point),
            sys_hi: sys.1.max(point),
            notation: String::new(),
        };
        b.notation = b.format(3);
        b
    }

    pub fn format(&self, decimals: usize) -> String {
        let p = self.point;
        format!(
            "{p:.d$} +{:.d$}/-{:.d$} (stat) +{:.d$}/-{:.d$} (sys)",
            self.stat_hi - p,
            p - self.stat_lo,
            self.sys_hi - p,
            p - self.sys_lo,
            d = decimals
        )
    }
}

/// Statistical half-widths by which ν_meas must lie below ½ to claim entanglement.
pub const CLAIM_SIGMAS: f64 = 3.0;

/// The minimum-eigenvalue estimator reads low when the two partially
/// transposed symplectic eigenvalues are nearly equal (vacuum, thermal
/// states), so a 1σ margin would certify separable records.
pub fn entanglement_claim(nu_meas: &UncertaintyBudget) -> bool {
    let sigma = nu_meas.stat_hi - nu_meas.point;
    nu_meas.point + CLAIM_SIGMAS * sigma < 0.5
}

impl fmt::Display for UncertaintyBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.notation)
    }
}
