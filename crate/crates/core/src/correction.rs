//! Loss inversion and projection onto physical covariance matrices.
//!
//! The projection finds the Frobenius-nearest `C` with `C + (i/2)Ω ⪰ 0` by
//! Dykstra's alternating projections between the affine set of Hermitian
//! matrices with imaginary part `Ω/2` and the PSD cone. Hermitian 4x4
//! matrices `C + iS` are handled through the real embedding
//! `[[C, -S], [S, C]]`.

use nalgebra::{Matrix4, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    occupancy_raw, simon_duan_nu_raw, uncertainty_margin, CovarianceMatrix, VACUUM_VARIANCE,
};
use crate::measurement::EfficiencyModel;

type Matrix8 = SMatrix<f64, 8, 8>;

pub const MAX_ITERATIONS: usize = 100_000;
/// Successive-iterate Frobenius distance at which the projection stops.
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Feasibility certificate on the projected output.
pub const CERTIFICATE_TOL: f64 = 1e-8;

/// `E⁻¹ (C_meas - (I - E²)/2) E⁻¹`, the algebraic inverse of the loss channel.
pub fn invert_loss(c_meas: &Matrix4<f64>, eff: &EfficiencyModel) -> Result<Matrix4<f64>> {
    eff.validate()?;
    if eff.eta1 <= 0.0 || eff.eta2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "loss channel with η = ({}, {}) is not invertible",
            eff.eta1, eff.eta2
        )));
    }
    let (a, b) = (1.0 / eff.eta1.sqrt(), 1.0 / eff.eta2.sqrt());
    let e_inv = Matrix4::from_diagonal(&Vector4::new(a, a, b, b));
    let vacuum = Matrix4::from_diagonal(&Vector4::new(
        1.0 - eff.eta1,
        1.0 - eff.eta1,
        1.0 - eff.eta2,
        1.0 - eff.eta2,
    )) * VACUUM_VARIANCE;
    Ok(e_inv * (c_meas - vacuum) * e_inv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub matrix: Matrix4<f64>,
    /// Frobenius distance from the input.
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn half_omega() -> Matrix4<f64> {
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0,  0.5, 0.0,  0.0,
        -0.5, 0.0, 0.0,  0.0,
        0.0,  0.0, 0.0,  0.5,
        0.0,  0.0, -0.5, 0.0,
    );
    m
}

fn embed(re: &Matrix4<f64>, im: &Matrix4<f64>) -> Matrix8 {
    let mut m = Matrix8::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(re);
    m.fixed_view_mut::<4, 4>(4, 4).copy_from(re);
    m.fixed_view_mut::<4, 4>(0, 4).copy_from(&(-im));
    m.fixed_view_mut::<4, 4>(4, 0).copy_from(im);
    m
}

fn real_part(m: &Matrix8) -> Matrix4<f64> {
    let re = (m.fixed_view::<4, 4>(0, 0) + m.fixed_view::<4, 4>(4, 4)) * 0.5;
    (re + re.transpose()) * 0.5
}

fn project_affine(m: &Matrix8, im: &Matrix4<f64>) -> Matrix8 {
    embed(&real_part(m), im)
}

fn project_psd(m: &Matrix8) -> Matrix8 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let out = eig.eigenvectors * Matrix8::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (out + out.transpose()) * 0.5
}

/// Frobenius-nearest physical covariance to a symmetric `c_raw`.
///
/// Physical input is returned unchanged. Otherwise Dykstra iterates until
/// successive PSD iterates differ by less than [`STEP_TOLERANCE`]; after
/// [`MAX_ITERATIONS`] the last iterate is returned with `converged = false`.
pub fn project_physical(c_raw: &Matrix4<f64>) -> Result<Projection> {
    if c_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix has non-finite entries".into(),
        ));
    }
    let asym = (c_raw - c_raw.transpose()).amax();
    if asym > 1e-12 * c_raw.amax().max(1.0) {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    let c_raw = (c_raw + c_raw.transpose()) * 0.5;
    let dyn_raw = nalgebra::DMatrix::from_iterator(4, 4, c_raw.iter().copied());
    if uncertainty_margin(&dyn_raw) >= 0.0 {
        return Ok(Projection {
            matrix: c_raw,
            distance: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let im = half_omega();
    let mut x = embed(&c_raw, &im);
    let mut p = Matrix8::zeros();
    let mut q = Matrix8::zeros();
    // the embedding doubles squared Frobenius norms
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let y = project_affine(&(x + p), &im);
        p += x - y;
        let next = project_psd(&(y + q));
        q += y - next;
        let step = (next - x).norm() * scale;
        x = next;
        if step < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    let matrix = real_part(&x);
    Ok(Projection {
        distance: (matrix - c_raw).norm(),
        matrix,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    #[serde(with = "crate::serde_rows")]
    pub raw_inverted: Matrix4<f64>,
    pub projected: CovarianceMatrix,
    pub distance: f64,
    pub nu: f64,
    pub occupancies: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
    /// Smallest symplectic eigenvalue of `projected`.
    pub min_symplectic_eigenvalue: f64,
}

/// Inverts the readout loss, projects onto physical states and evaluates ν.
pub fn infer_nu(c_meas: &Matrix4<f64>, eff: &EfficiencyModel) -> Result<CorrectionReport> {
    let raw = invert_loss(c_meas, eff)?;
    let proj = project_physical(&raw)?;
    let projected = CovarianceMatrix::from_two_mode(&proj.matrix)?;
    let nu = simon_duan_nu_raw(&proj.matrix)?;
    Ok(CorrectionReport {
        raw_inverted: raw,
        min_symplectic_eigenvalue: projected.min_symplectic_eigenvalue(),
        projected,
        distance: proj.distance,
        nu,
        occupancies: [
            occupancy_raw(&proj.matrix, 0),
            occupancy_raw(&proj.matrix, 1),
        ],
        iterations: proj.iterations,
        converged: proj.converged,
    })
}
