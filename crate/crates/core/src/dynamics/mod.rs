//! Pulsed dynamics of a microwave cavity coupled to two mechanical drums.
//!
//! Everything runs in the rotating frame of each mode under the rotating-wave
//! approximation: drum `i` couples to the cavity only through its own red
//! (beam-splitter) or blue (two-mode-squeezing) sideband. The 6x6 covariance
//! is ordered `(Xc, Pc, X1, P1, X2, P2)`.

mod calibrate;
mod integrate;
mod trajectory;

pub use calibrate::{calibrate_couplings, Calibration, CalibrationSpec, Couplings};
pub use integrate::{
    builtin_integrators, evolve, evolve_exact, fastest_rate, CovarianceIntegrator, Exact,
    IntegratorRegistry, Rk4, MAX_STEP_RATE_PRODUCT,
};
pub use trajectory::{Trajectory, TRAJECTORY_CSV_HEADER};

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{CovarianceMatrix, VACUUM_VARIANCE};

pub type Matrix6 = nalgebra::Matrix6<f64>;

/// Device constants. Rates are angular (rad/s); frequencies are in Hz and
/// only used for validation since the dynamics are in rotating frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    #[serde(rename = "kappa_rad_per_s")]
    pub kappa: f64,
    #[serde(rename = "gamma1_rad_per_s")]
    pub gamma1: f64,
    #[serde(rename = "gamma2_rad_per_s")]
    pub gamma2: f64,
    pub nbath1: f64,
    pub nbath2: f64,
    pub fc_hz: f64,
    pub fm1_hz: f64,
    pub fm2_hz: f64,
}

impl DeviceParams {
    /// Device of the two-drum experiment: 800 kHz cavity linewidth, 10 Hz
    /// mechanical linewidths and bath occupancies of the drum modes at about
    /// 20 mK.
    pub fn paper_defaults() -> Self {
        DeviceParams {
            kappa: 2.0 * PI * 800e3,
            gamma1: 2.0 * PI * 10.0,
            gamma2: 2.0 * PI * 10.0,
            nbath1: 38.0,
            nbath2: 26.0,
            fc_hz: 6.0806e9,
            fm1_hz: 10.9e6,
            fm2_hz: 15.9e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return bad("kappa must be positive");
        }
        if !(self.gamma1 >= 0.0 && self.gamma2 >= 0.0) {
            return bad("mechanical decay rates must be non-negative");
        }
        if !(self.nbath1 >= 0.0 && self.nbath2 >= 0.0) {
            return bad("bath occupancies must be non-negative");
        }
        if !(self.fc_hz > 0.0 && self.fm1_hz > 0.0 && self.fm2_hz > 0.0) {
            return bad("frequencies must be positive");
        }
        if self.fm1_hz == self.fm2_hz {
            return bad("drum frequencies must be non-degenerate");
        }
        Ok(())
    }
}

/// Constant sideband couplings (rad/s) held for `duration` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSegment {
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "g_bsb1_rad_per_s", default)]
    pub g_bsb1: f64,
    #[serde(rename = "g_rsb1_rad_per_s", default)]
    pub g_rsb1: f64,
    #[serde(rename = "g_bsb2_rad_per_s", default)]
    pub g_bsb2: f64,
    #[serde(rename = "g_rsb2_rad_per_s", default)]
    pub g_rsb2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Idle,
    /// Only red sidebands on.
    Cooling,
    /// Blue sideband on drum 1 and red sideband on drum 2, nothing else.
    Entangling,
    Other,
}

impl PulseSegment {
    pub fn idle(duration: f64) -> Self {
        PulseSegment {
            duration,
            g_bsb1: 0.0,
            g_rsb1: 0.0,
            g_bsb2: 0.0,
            g_rsb2: 0.0,
        }
    }

    pub fn cooling(duration: f64, g_rsb1: f64, g_rsb2: f64) -> Self {
        PulseSegment {
            g_rsb1,
            g_rsb2,
            ..Self::idle(duration)
        }
    }

    pub fn entangling(duration: f64, g_bsb1: f64, g_rsb2: f64) -> Self {
        PulseSegment {
            g_bsb1,
            g_rsb2,
            ..Self::idle(duration)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "segment duration must be positive, got {}",
                self.duration
            )));
        }
        for (name, g) in self.couplings() {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "coupling {name} must be non-negative, got {g}"
                )));
            }
        }
        Ok(())
    }

    fn couplings(&self) -> [(&'static str, f64); 4] {
        [
            ("g_bsb1", self.g_bsb1),
            ("g_rsb1", self.g_rsb1),
            ("g_bsb2", self.g_bsb2),
            ("g_rsb2", self.g_rsb2),
        ]
    }

    pub fn kind(&self) -> SegmentKind {
        let on = |g: f64| g != 0.0;
        match (
            on(self.g_bsb1),
            on(self.g_rsb1),
            on(self.g_bsb2),
            on(self.g_rsb2),
        ) {
            (false, false, false, false) => SegmentKind::Idle,
            (false, _, false, _) => SegmentKind::Cooling,
            (true, false, false, true) => SegmentKind::Entangling,
            _ => SegmentKind::Other,
        }
    }

    /// Copy with every coupling to drum `drum` (0 or 1) switched off.
    pub fn without_drum(&self, drum: usize) -> Self {
        let mut s = self.clone();
        if drum == 0 {
            s.g_bsb1 = 0.0;
            s.g_rsb1 = 0.0;
        } else {
            s.g_bsb2 = 0.0;
            s.g_rsb2 = 0.0;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub segments: Vec<PulseSegment>,
}

impl PulseSequence {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        let seq = PulseSequence { segments };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidArgument("pulse sequence is empty".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::InvalidArgument(format!("segment {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    fn without_drum(&self, drum: usize) -> Self {
        PulseSequence {
            segments: self.segments.iter().map(|s| s.without_drum(drum)).collect(),
        }
    }
}

const CAVITY: usize = 0;

fn drum_indices(drum: usize) -> (usize, usize) {
    (2 + 2 * drum, 3 + 2 * drum)
}

fn add_blue_sideband(a: &mut Matrix6, drum: usize, g: f64) {
    let (x, p) = drum_indices(drum);
    a[(CAVITY, p)] -= g;
    a[(CAVITY + 1, x)] -= g;
    a[(x, CAVITY + 1)] -= g;
    a[(p, CAVITY)] -= g;
}

fn add_red_sideband(a: &mut Matrix6, drum: usize, g: f64) {
    let (x, p) = drum_indices(drum);
    a[(CAVITY, p)] += g;
    a[(CAVITY + 1, x)] -= g;
    a[(x, CAVITY + 1)] += g;
    a[(p, CAVITY)] -= g;
}

/// Drift matrix of the linearized Heisenberg-Langevin equations.
///
/// A blue sideband on drum `i` gives `Ẋc = -g Pi, Ṗc = -g Xi, Ẋi = -g Pc,
/// Ṗi = -g Xc`; a red sideband gives `Ẋc = g Pi, Ṗc = -g Xi, Ẋi = g Pc,
/// Ṗi = -g Xc`. Damping contributes `-κ/2` and `-γi/2` on the diagonal.
pub fn build_drift(params: &DeviceParams, seg: &PulseSegment) -> Matrix6 {
    let mut a = Matrix6::zeros();
    a[(0, 0)] = -params.kappa / 2.0;
    a[(1, 1)] = -params.kappa / 2.0;
    for (drum, gamma) in [(0, params.gamma1), (1, params.gamma2)] {
        let (x, p) = drum_indices(drum);
        a[(x, x)] = -gamma / 2.0;
        a[(p, p)] = -gamma / 2.0;
    }
    add_blue_sideband(&mut a, 0, seg.g_bsb1);
    add_red_sideband(&mut a, 0, seg.g_rsb1);
    add_blue_sideband(&mut a, 1, seg.g_bsb2);
    add_red_sideband(&mut a, 1, seg.g_rsb2);
    a
}

/// Diffusion matrix: vacuum input noise on the cavity, thermal baths on the
/// drums.
pub fn build_diffusion(params: &DeviceParams) -> Matrix6 {
    let v = VACUUM_VARIANCE;
    Matrix6::from_diagonal(&nalgebra::Vector6::new(
        params.kappa * v,
        params.kappa * v,
        params.gamma1 * (params.nbath1 + v),
        params.gamma1 * (params.nbath1 + v),
        params.gamma2 * (params.nbath2 + v),
        params.gamma2 * (params.nbath2 + v),
    ))
}

/// Vacuum cavity and drums thermalized with their baths.
pub fn default_initial_state(params: &DeviceParams) -> Matrix6 {
    let v = VACUUM_VARIANCE;
    Matrix6::from_diagonal(&nalgebra::Vector6::new(
        v,
        v,
        params.nbath1 + v,
        params.nbath1 + v,
        params.nbath2 + v,
        params.nbath2 + v,
    ))
}

/// Drum-subsystem (rows/cols 3-6) covariance of a full state.
pub fn drum_block(c: &Matrix6) -> Matrix4<f64> {
    c.fixed_view::<4, 4>(2, 2).clone_owned()
}

pub(crate) fn to_covariance(c: &Matrix6) -> Result<CovarianceMatrix> {
    CovarianceMatrix::new(DMatrix::from_iterator(6, 6, c.iter().copied()))
}

/// How a sequence is integrated and sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Registered integrator name (`rk4` or `exact`).
    pub integrator: String,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    /// Extra samples every this many seconds inside each segment.
    #[serde(rename = "sample_interval_s")]
    pub sample_interval: Option<f64>,
    /// Keep the 6x6 matrices alongside the drum blocks.
    pub keep_full: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            integrator: "rk4".into(),
            dt: 1e-9,
            sample_interval: None,
            keep_full: false,
        }
    }
}

impl RunOptions {
    pub fn exact() -> Self {
        RunOptions {
            integrator: "exact".into(),
            ..Self::default()
        }
    }
}

/// Integrates a pulse sequence, recording the drum covariance at `t = 0`,
/// every segment boundary and every `sample_interval` inside segments.
pub fn run_sequence(
    params: &DeviceParams,
    seq: &PulseSequence,
    c_init: Option<&Matrix6>,
    opts: &RunOptions,
) -> Result<Trajectory> {
    params.validate()?;
    seq.validate()?;
    let registry = builtin_integrators();
    let integrator = registry.get(&opts.integrator)?;
    if let Some(dt) = opts.sample_interval {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample interval must be positive, got {dt}"
            )));
        }
    }

    let diffusion = build_diffusion(params);
    let mut c = c_init
        .copied()
        .unwrap_or_else(|| default_initial_state(params));
    let mut traj = Trajectory::with_capacity(opts.keep_full, seq.segments.len() + 1);
    let mut t = 0.0;
    traj.push(t, &c)?;

    for seg in &seq.segments {
        let drift = build_drift(params, seg);
        let pieces = match opts.sample_interval {
            Some(dt) => (seg.duration / dt - 1e-9).ceil().max(1.0) as usize,
            None => 1,
        };
        let mut elapsed = 0.0;
        for k in 1..=pieces {
            // piece boundaries are computed from the segment start so that
            // rounding does not accumulate
            let target = if k == pieces {
                seg.duration
            } else {
                k as f64 * opts.sample_interval.unwrap()
            };
            c = integrator.propagate(&c, &drift, &diffusion, target - elapsed, opts.dt)?;
            elapsed = target;
            traj.push(t + elapsed, &c)?;
        }
        t += seg.duration;
    }
    Ok(traj)
}

/// Drum trajectories if the two drums were driven separately: each drum is
/// simulated with the other drum's couplings switched off and the drum-drum
/// covariance block is set to zero.
pub fn independent_evolution_reference(
    params: &DeviceParams,
    seq: &PulseSequence,
    c_init: Option<&Matrix6>,
    opts: &RunOptions,
) -> Result<Trajectory> {
    let only_first = run_sequence(params, &seq.without_drum(1), c_init, opts)?;
    let only_second = run_sequence(params, &seq.without_drum(0), c_init, opts)?;
    Trajectory::combine_independent(&only_first, &only_second)
}
