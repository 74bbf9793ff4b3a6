//! Moment tomography of measurement records.

use std::io::Write;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{occupancy_raw, simon_duan_nu_raw};
use crate::measurement::{MeasurementRecord, Shot};

const QUADRATURES: [&str; 4] = ["x1", "p1", "x2", "p2"];

/// Sample mean and unbiased covariance of a set of shots.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl Moments {
    /// Two passes over `shots`: means first, then centred products.
    pub fn from_shots<'a, I>(shots: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Shot>,
        I::IntoIter: Clone,
    {
        let iter = shots.into_iter();
        let mut n = 0usize;
        let mut sum = Vector4::zeros();
        for s in iter.clone() {
            sum += Vector4::from(*s);
            n += 1;
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "covariance estimation needs at least 2 shots, got {n}"
            )));
        }
        let mean = sum / n as f64;
        let mut acc = Matrix4::zeros();
        for s in iter {
            let d = Vector4::from(*s) - mean;
            acc += d * d.transpose();
        }
        let covariance = acc / (n - 1) as f64;
        let covariance = (covariance + covariance.transpose()) * 0.5;
        Ok(Moments {
            n,
            mean,
            covariance,
        })
    }

    /// Quadratures with zero sample variance.
    pub fn degenerate_quadratures(&self) -> Vec<&'static str> {
        (0..4)
            .filter(|&k| self.covariance[(k, k)] == 0.0)
            .map(|k| QUADRATURES[k])
            .collect()
    }
}

/// Mean-subtracted covariance with divisor `n - 1`. Constant columns give
/// zero variance; see [`Moments::degenerate_quadratures`].
pub fn estimate_covariance(record: &MeasurementRecord) -> Result<Matrix4<f64>> {
    Ok(Moments::from_shots(&record.shots)?.covariance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAngle {
    /// In (-90, 90].
    pub degrees: f64,
    /// Set when the (x1, x2) marginal is isotropic and uncorrelated.
    pub degenerate: bool,
}

/// Major-axis angle of the (x1, x2) marginal ellipse, measured from the x1
/// axis: `θ = ½ atan2(2 C_x1x2, C_x1x1 - C_x2x2)`.
pub fn correlation_angle(c: &Matrix4<f64>) -> CorrelationAngle {
    let (y, x) = (2.0 * c[(0, 2)], c[(0, 0)] - c[(2, 2)]);
    if y == 0.0 && x == 0.0 {
        return CorrelationAngle {
            degrees: 0.0,
            degenerate: true,
        };
    }
    let mut degrees = 0.5 * y.atan2(x).to_degrees();
    if degrees <= -90.0 {
        degrees += 180.0;
    }
    CorrelationAngle {
        degrees,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    #[serde(with = "crate::serde_rows")]
    pub covariance: Matrix4<f64>,
    pub occupancies: [f64; 2],
    pub nu_meas: f64,
    pub angle_deg: f64,
    pub angle_degenerate: bool,
    pub n_shots: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate_quadratures: Vec<String>,
}

impl TomographyResult {
    pub fn from_covariance(covariance: Matrix4<f64>, n_shots: usize) -> Result<Self> {
        let nu_meas = simon_duan_nu_raw(&covariance)?;
        let angle = correlation_angle(&covariance);
        Ok(TomographyResult {
            covariance,
            occupancies: [occupancy_raw(&covariance, 0), occupancy_raw(&covariance, 1)],
            nu_meas,
            angle_deg: angle.degrees,
            angle_degenerate: angle.degenerate,
            n_shots,
            degenerate_quadratures: Vec::new(),
        })
    }
}

/// Covariance, occupancies, ν_meas and correlation angle of a record.
pub fn tomography(record: &MeasurementRecord) -> Result<TomographyResult> {
    record.validate()?;
    let m = Moments::from_shots(&record.shots)?;
    let degenerate: Vec<String> = m
        .degenerate_quadratures()
        .into_iter()
        .map(String::from)
        .collect();
    let mut result = TomographyResult::from_covariance(m.covariance, m.n).map_err(|e| {
        if degenerate.is_empty() {
            e
        } else {
            Error::DegenerateRecord(format!("zero variance in {}: {e}", degenerate.join(", ")))
        }
    })?;
    result.degenerate_quadratures = degenerate;
    Ok(result)
}

pub const SWEEP_CSV_HEADER: &str = "duration_s,nu_meas,nu,angle_deg,n1,n2";

/// One entangling-pulse duration of a Fig. 3 style sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub duration_s: f64,
    pub nu_meas: f64,
    /// Loss-corrected eigenvalue, NaN when correction was skipped.
    pub nu: f64,
    pub angle_deg: f64,
    pub n1: f64,
    pub n2: f64,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.duration_s, r.nu_meas, r.nu, r.angle_deg, r.n1, r.n2
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{simon_duan_nu, two_mode_squeezed_thermal, CovarianceMatrix};
    use crate::measurement::sample_record;
    use approx::assert_relative_eq;

    fn rec(shots: Vec<Shot>) -> MeasurementRecord {
        MeasurementRecord::new(shots, None, "test").unwrap()
    }

    #[test]
    fn two_shot_hand_example() {
        let c = estimate_covariance(&rec(vec![[0.0; 4], [2.0, 0.0, 0.0, 0.0]])).unwrap();
        let mut expected = Matrix4::zeros();
        expected[(0, 0)] = 2.0;
        assert_eq!(c, expected);
    }

    #[test]
    fn means_are_subtracted() {
        let shots = vec![
            [10.0, 1.0, -3.0, 0.0],
            [12.0, 1.0, -5.0, 0.0],
            [14.0, 1.0, -7.0, 0.0],
        ];
        let m = Moments::from_shots(&shots).unwrap();
        assert_relative_eq!(m.mean[0], 12.0);
        assert_relative_eq!(m.covariance[(0, 0)], 4.0);
        assert_relative_eq!(m.covariance[(0, 2)], -4.0);
        assert_eq!(m.degenerate_quadratures(), vec!["p1", "p2"]);
    }

    #[test]
    fn angle_examples() {
        let with = |a: f64, b: f64, c: f64| {
            let mut m = Matrix4::identity();
            m[(0, 0)] = a;
            m[(2, 2)] = b;
            m[(0, 2)] = c;
            m[(2, 0)] = c;
            correlation_angle(&m)
        };
        assert_relative_eq!(with(1.0, 1.0, 0.5).degrees, 45.0, epsilon = 1e-12);
        assert_relative_eq!(with(1.0, 1.0, -0.5).degrees, -45.0, epsilon = 1e-12);
        assert_eq!(with(2.0, 1.0, 0.0).degrees, 0.0);
        // major axis along x2 is reported as +90, never -90
        assert_eq!(with(1.0, 2.0, 0.0).degrees, 90.0);
        let iso = with(1.0, 1.0, 0.0);
        assert!(iso.degenerate);
        assert_eq!(iso.degrees, 0.0);
        let scaled = with(3.0 * 1.7, 3.0 * 0.4, 3.0 * 0.9);
        assert_relative_eq!(scaled.degrees, with(1.7, 0.4, 0.9).degrees, epsilon = 1e-12);
    }

    #[test]
    fn vacuum_record_statistics() {
        let r = sample_record(&CovarianceMatrix::vacuum(2), 1_000_000, 5).unwrap();
        let t = tomography(&r).unwrap();
        // Var of a sample variance of N(0, ½) is 2σ⁴/(n-1) = 0.5/n
        let sd_var = (0.5f64 / 1e6).sqrt();
        let sd_cov = (0.25f64 / 1e6).sqrt();
        for i in 0..4 {
            for j in 0..4 {
                let (target, sd) = if i == j { (0.5, sd_var) } else { (0.0, sd_cov) };
                assert!(
                    (t.covariance[(i, j)] - target).abs() < 4.0 * sd,
                    "({i},{j})"
                );
            }
        }
        assert!((t.nu_meas - 0.5).abs() < 0.005);
        assert!(t.occupancies.iter().all(|n| n.abs() < 0.005));
    }

    #[test]
    fn tomography_matches_closed_form_and_signs() {
        let c = two_mode_squeezed_thermal(0.5, 0.3, 0.1).unwrap();
        let r = sample_record(&c, 20_000, 9).unwrap();
        let t = tomography(&r).unwrap();
        assert_eq!(t.nu_meas, simon_duan_nu_raw(&t.covariance).unwrap());
        assert!(t.covariance[(0, 2)] > 0.0);
        assert!(t.covariance[(1, 3)] < 0.0);
        assert!((t.nu_meas - simon_duan_nu(&c).unwrap()).abs() < 0.03);
        let json = serde_json::to_string(&t).unwrap();
        let back: TomographyResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn identical_shots_are_flagged() {
        let r = rec(vec![[1.0, 2.0, 3.0, 4.0]; 10]);
        assert_eq!(estimate_covariance(&r).unwrap(), Matrix4::zeros());
        assert!(matches!(tomography(&r), Err(Error::DegenerateRecord(_))));
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = [SweepRow {
            duration_s: 1e-6,
            nu_meas: 0.5,
            nu: f64::NAN,
            angle_deg: 10.0,
            n1: 1.0,
            n2: 2.0,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SWEEP_CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 6);
    }
}
