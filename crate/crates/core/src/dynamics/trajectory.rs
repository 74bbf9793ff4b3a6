use std::io::Write;

use nalgebra::Matrix4;
use serde::Serialize;

use super::{drum_block, to_covariance, Matrix6};
use crate::error::{Error, Result};
use crate::gaussian::{occupancy_raw, simon_duan_nu_raw, CovarianceMatrix};

pub const TRAJECTORY_CSV_HEADER: &str =
    "time_s,x1x1,x1p1,x1x2,x1p2,p1p1,p1x2,p1p2,x2x2,x2p2,p2p2,n1,n2,nu";

/// Sampled drum covariances (cavity traced out) along a pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub drum_covariances: Vec<CovarianceMatrix>,
    pub full_covariances: Option<Vec<CovarianceMatrix>>,
}

impl Trajectory {
    pub(crate) fn with_capacity(keep_full: bool, n: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(n),
            drum_covariances: Vec::with_capacity(n),
            full_covariances: keep_full.then(|| Vec::with_capacity(n)),
        }
    }

    pub(crate) fn push(&mut self, t: f64, c: &Matrix6) -> Result<()> {
        self.times.push(t);
        self.drum_covariances
            .push(CovarianceMatrix::from_two_mode(&drum_block(c))?);
        if let Some(full) = &mut self.full_covariances {
            full.push(to_covariance(c)?);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_drums(&self) -> &CovarianceMatrix {
        self.drum_covariances
            .last()
            .expect("trajectory has the initial sample")
    }

    /// Drum 1 from `first`, drum 2 from `second`, no cross-correlation.
    pub(crate) fn combine_independent(first: &Trajectory, second: &Trajectory) -> Result<Self> {
        if first.times != second.times {
            return Err(Error::InvalidArgument(
                "trajectories are sampled differently".into(),
            ));
        }
        let drum_covariances = first
            .drum_covariances
            .iter()
            .zip(&second.drum_covariances)
            .map(|(a, b)| {
                let mut m = Matrix4::zeros();
                m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a.block(0, 0));
                m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b.block(1, 1));
                CovarianceMatrix::from_two_mode(&m)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            times: first.times.clone(),
            drum_covariances,
            full_covariances: None,
        })
    }

    /// One row per sample: time, the 10 unique drum-covariance entries,
    /// both occupancies and the entanglement eigenvalue.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
        for (t, c) in self.times.iter().zip(&self.drum_covariances) {
            let m = c.as_two_mode()?;
            write!(out, "{t:.16e}")?;
            for i in 0..4 {
                for j in i..4 {
                    write!(out, ",{:.16e}", m[(i, j)])?;
                }
            }
            let nu = simon_duan_nu_raw(&m).map_or(f64::NAN, |v| v);
            writeln!(
                out,
                ",{:.16e},{:.16e},{:.16e}",
                occupancy_raw(&m, 0),
                occupancy_raw(&m, 1),
                nu
            )?;
        }
        Ok(())
    }
}
