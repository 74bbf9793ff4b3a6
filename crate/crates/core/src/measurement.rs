//! Lossy concurrent readout of both drums and synthetic shot records.
//!
//! Each measured quadrature is `s = √η S + √(1-η) ξ` with independent vacuum
//! noise `ξ` per mode, so the measured covariance is `E C E + (I - E²)/2`
//! with `E = diag(√η1, √η1, √η2, √η2)`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::symplectic::local_rotation;
use crate::gaussian::{CovarianceMatrix, VACUUM_VARIANCE};
use crate::rng::{stream_rng, Domain};

/// Header line of record CSV files.
pub const RECORD_CSV_HEADER: &str = "x1,p1,x2,p2";

/// Shots per random stream when sampling.
const SHOTS_PER_STREAM: usize = 4096;

/// Measurement efficiencies of the two drums with 1σ uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyModel {
    pub eta1: f64,
    #[serde(default)]
    pub eta1_sigma: f64,
    pub eta2: f64,
    #[serde(default)]
    pub eta2_sigma: f64,
}

impl EfficiencyModel {
    pub fn new(eta1: f64, eta1_sigma: f64, eta2: f64, eta2_sigma: f64) -> Result<Self> {
        let m = EfficiencyModel {
            eta1,
            eta1_sigma,
            eta2,
            eta2_sigma,
        };
        m.validate()?;
        Ok(m)
    }

    /// Without uncertainties.
    pub fn exact(eta1: f64, eta2: f64) -> Result<Self> {
        Self::new(eta1, 0.0, eta2, 0.0)
    }

    /// `η1 = 0.29(6)`, `η2 = 0.156(5)`.
    pub fn paper() -> Self {
        EfficiencyModel {
            eta1: 0.29,
            eta1_sigma: 0.06,
            eta2: 0.156,
            eta2_sigma: 0.005,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, eta) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must lie in [0, 1], got {eta}"
                )));
            }
        }
        for (name, s) in [
            ("eta1_sigma", self.eta1_sigma),
            ("eta2_sigma", self.eta2_sigma),
        ] {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be non-negative, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// `√(η1 η2)`.
    pub fn geometric_mean(&self) -> f64 {
        (self.eta1 * self.eta2).sqrt()
    }

    /// Concurrent position and momentum readout cannot exceed η = 1/2.
    pub fn warnings(&self) -> Vec<String> {
        [("eta1", self.eta1), ("eta2", self.eta2)]
            .iter()
            .filter(|(_, eta)| *eta > 0.5)
            .map(|(name, eta)| {
                format!("{name} = {eta} exceeds 1/2, the limit for concurrent x and p readout")
            })
            .collect()
    }

    pub(crate) fn amplitudes(&self) -> Matrix4<f64> {
        let (a, b) = (self.eta1.sqrt(), self.eta2.sqrt());
        Matrix4::from_diagonal(&Vector4::new(a, a, b, b))
    }
}

/// Readout phase references of drums 1 and 2 relative to the drive frame.
pub const DEFAULT_READOUT_PHASES: [f64; 2] = [0.0, std::f64::consts::PI];

/// Drum covariance expressed in readout quadratures whose phase references
/// are offset by `phases` (radians). ν and occupancies are unchanged.
pub fn readout_frame(c: &CovarianceMatrix, phases: [f64; 2]) -> Result<CovarianceMatrix> {
    if phases.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "readout phases must be finite, got {phases:?}"
        )));
    }
    c.transform(&local_rotation(&phases))
}

/// `E C E + (I - E²)/2` on a raw 4x4 matrix.
pub fn loss_channel_raw(c: &Matrix4<f64>, eff: &EfficiencyModel) -> Matrix4<f64> {
    let e = eff.amplitudes();
    let vacuum = (Matrix4::identity() - e * e) * VACUUM_VARIANCE;
    e * c * e + vacuum
}

/// Measured-variable covariance after the inefficient readout.
pub fn loss_channel(c: &CovarianceMatrix, eff: &EfficiencyModel) -> Result<CovarianceMatrix> {
    eff.validate()?;
    CovarianceMatrix::from_two_mode(&loss_channel_raw(&c.as_two_mode()?, eff))
}

/// `η ν + (1 - η)/2` with `η = √(η1 η2)`; exact for symmetric two-mode
/// squeezed thermal states read out with equal efficiencies.
pub fn predicted_nu_meas(nu: f64, eff: &EfficiencyModel) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ν must be positive, got {nu}"
        )));
    }
    eff.validate()?;
    let eta = eff.geometric_mean();
    Ok(eta * nu + (1.0 - eta) * VACUUM_VARIANCE)
}

pub type Shot = [f64; 4];

/// Concurrent `(x1, p1, x2, p2)` samples, one per experiment repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub shots: Vec<Shot>,
    pub seed: Option<u64>,
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSidecar {
    pub n_shots: usize,
    pub seed: Option<u64>,
    pub source: String,
}

impl MeasurementRecord {
    pub fn new(shots: Vec<Shot>, seed: Option<u64>, meta: impl Into<String>) -> Result<Self> {
        let r = MeasurementRecord {
            shots,
            seed,
            meta: meta.into(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a record needs at least 2 shots, got {}",
                self.shots.len()
            )));
        }
        if let Some(i) = self
            .shots
            .iter()
            .position(|s| s.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "shot {i} has non-finite values"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }

    pub fn sidecar(&self) -> RecordSidecar {
        RecordSidecar {
            n_shots: self.shots.len(),
            seed: self.seed,
            source: self.meta.clone(),
        }
    }

    /// Header plus one shot per row, 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(RECORD_CSV_HEADER.split(','))
            .map_err(to_io)?;
        for s in &self.shots {
            w.write_record(s.iter().map(|v| format!("{v:.16e}")))
                .map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a record CSV; malformed rows are reported with their line number.
    pub fn read_csv<R: Read>(input: R, meta: impl Into<String>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(input);
        let headers = reader
            .headers()
            .map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != RECORD_CSV_HEADER.split(',').collect::<Vec<_>>() {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header '{RECORD_CSV_HEADER}'"),
            });
        }
        let mut shots = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            if row.len() != 4 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 4 fields, found {}", row.len()),
                });
            }
            let mut shot = [0.0; 4];
            for (slot, field) in shot.iter_mut().zip(row.iter()) {
                *slot = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("'{field}' is not a finite number"),
                    })?;
            }
            shots.push(shot);
        }
        MeasurementRecord::new(shots, None, meta)
    }

    /// Writes `<path>` (CSV) and `<path>.json` (seed and provenance).
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))?;
        let sidecar =
            serde_json::to_string_pretty(&self.sidecar()).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(sidecar_path(path), sidecar + "\n")?;
        Ok(())
    }

    /// Reads a record CSV and, when present, its sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut rec = Self::read_csv(std::io::BufReader::new(f), path.display().to_string())?;
        if let Ok(text) = std::fs::read_to_string(sidecar_path(path)) {
            let side: RecordSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: e.line(),
                message: format!("sidecar: {e}"),
            })?;
            rec.seed = side.seed;
            rec.meta = side.source;
        }
        Ok(rec)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Zero-mean Gaussian shots with covariance `c_meas`, drawn through its
/// Cholesky factor. Deterministic in `(seed, n_shots)` regardless of the
/// number of worker threads.
pub fn sample_record(
    c_meas: &CovarianceMatrix,
    n_shots: usize,
    seed: u64,
) -> Result<MeasurementRecord> {
    if n_shots < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 shots, got {n_shots}"
        )));
    }
    let m = c_meas.as_two_mode()?;
    let l = m.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: m.symmetric_eigenvalues().min(),
    })?;
    let l = l.l();
    let n_streams = n_shots.div_ceil(SHOTS_PER_STREAM);
    let shots: Vec<Shot> = (0..n_streams)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = stream_rng(seed, Domain::Shots, k as u64);
            let count = SHOTS_PER_STREAM.min(n_shots - k * SHOTS_PER_STREAM);
            (0..count)
                .map(|_| {
                    let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                    let s = l * z;
                    [s[0], s[1], s[2], s[3]]
                })
                .collect::<Vec<_>>()
        })
        .collect();
    MeasurementRecord::new(shots, Some(seed), "synthetic Gaussian record")
}
