//! Covariance-matrix representation of Gaussian states and the exact
//! two-mode formulas used for entanglement certification.
//!
//! Quadratures are ordered `(X1, P1, X2, P2, ...)` and normalized so that
//! `[x, p] = i`; the vacuum therefore has covariance `I / 2`.

mod covariance;
pub mod symplectic;

pub use covariance::{CovarianceMatrix, ORDERING_PREFIXES};

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};

/// Quadrature variance of the vacuum.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Tolerance on symplectic eigenvalues when deciding physicality.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Relative tolerance used by the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Moment convention: unitless quadratures with `[x_i, p_i] = i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QuadratureConvention;

impl QuadratureConvention {
    pub const fn vacuum_variance(self) -> f64 {
        VACUUM_VARIANCE
    }

    /// `[x, p] = i * commutator_scale()`.
    pub const fn commutator_scale(self) -> f64 {
        1.0
    }

    pub fn vacuum(self, n_modes: usize) -> CovarianceMatrix {
        CovarianceMatrix::vacuum(n_modes)
    }
}

/// Index of a mode inside an `n_modes`-mode state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeLabel(usize);

impl ModeLabel {
    pub fn new(index: usize, n_modes: usize) -> Result<Self> {
        if index >= n_modes {
            return Err(Error::ModeOutOfRange { index, n_modes });
        }
        Ok(ModeLabel(index))
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn check(self, n_modes: usize) -> Result<()> {
        if self.0 >= n_modes {
            Err(Error::ModeOutOfRange {
                index: self.0,
                n_modes,
            })
        } else {
            Ok(())
        }
    }
}

/// Standard symplectic form `⊕ [[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> (f64, f64) {
    let mut asym = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            scale = scale.max(m[(i, j)].abs());
        }
    }
    (asym, scale)
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() % 2 != 0 || m.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "covariance must be square with even dimension, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let (asym, scale) = max_asymmetry(m);
    if !(asym <= SYMMETRY_TOL * scale.max(1.0)) {
        return Err(Error::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(())
}

/// Symplectic eigenvalues of a symmetric `2n x 2n` matrix, ascending.
///
/// These are the moduli of the eigenvalues of `iΩC`; each appears twice in
/// that spectrum and is reported once here. Positive-definite input goes
/// through the singular values of `LᵀΩL` (`C = LLᵀ`), anything else through
/// the general eigenvalues of `ΩC`.
pub fn symplectic_eigenvalues(c: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(c)?;
    let n_modes = c.nrows() / 2;
    let omega = symplectic_form(n_modes);
    let sym = (c + c.transpose()) * 0.5;

    let mut moduli: Vec<f64> = match sym.clone().cholesky() {
        Some(chol) => {
            let l = chol.l();
            let k = l.transpose() * &omega * &l;
            k.singular_values().iter().copied().collect()
        }
        None => (&omega * &sym)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect(),
    };
    moduli.sort_by(f64::total_cmp);
    Ok(moduli
        .chunks(2)
        .map(|pair| 0.5 * (pair[0] + pair[1]))
        .collect())
}

/// Smallest eigenvalue of `C + (i/2)Ω`, computed through its real
/// embedding `[[C, -Ω/2], [Ω/2, C]]`. Non-negative exactly for physical states.
pub fn uncertainty_margin(c: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    let half_omega = symplectic_form(n / 2) * 0.5;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(c);
    m.view_mut((n, n), (n, n)).copy_from(c);
    m.view_mut((0, n), (n, n)).copy_from(&(-&half_omega));
    m.view_mut((n, 0), (n, n)).copy_from(&half_omega);
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigenvalues().min()
}

/// Returns `ΛCΛ` where `Λ` flips the momentum of `mode`.
pub fn partial_transpose(c: &CovarianceMatrix, mode: ModeLabel) -> Result<CovarianceMatrix> {
    mode.check(c.n_modes())?;
    let p = 2 * mode.index() + 1;
    let mut m = c.entries().clone();
    for k in 0..m.nrows() {
        if k != p {
            m[(p, k)] = -m[(p, k)];
            m[(k, p)] = -m[(k, p)];
        }
    }
    CovarianceMatrix::new(m)
}

/// Entanglement eigenvalue of the partially transposed two-mode state, from
/// the 2x2 block determinants of `C = [[A, K], [Kᵀ, B]]`.
///
/// The state is entangled iff the result is below 1/2. Inputs for which the
/// closed form has no real solution are reported as non-physical.
pub fn simon_duan_nu(c: &CovarianceMatrix) -> Result<f64> {
    let m = c.as_two_mode()?;
    simon_duan_nu_raw(&m)
}

/// [`simon_duan_nu`] on an unvalidated 4x4 matrix (e.g. a sample estimate).
pub fn simon_duan_nu_raw(m: &Matrix4<f64>) -> Result<f64> {
    let det2 = |r: usize, c: usize| m[(r, c)] * m[(r + 1, c + 1)] - m[(r, c + 1)] * m[(r + 1, c)];
    let delta = det2(0, 0) + det2(2, 2) - 2.0 * det2(0, 2);
    let det = m.determinant();
    let scale = delta * delta + det.abs();
    let disc = delta * delta - 4.0 * det;
    if !disc.is_finite() || disc < -1e-9 * scale {
        return Err(Error::NonPhysical(format!(
            "Δ² - 4det = {disc:e} is negative (Δ = {delta:e}, det = {det:e})"
        )));
    }
    let root = disc.max(0.0).sqrt();
    let upper = 0.5 * (delta + root);
    if upper <= 0.0 {
        return Err(Error::NonPhysical(format!(
            "partial-transpose invariant Δ = {delta:e} is not positive"
        )));
    }
    // ν₋² ν₊² = det C; dividing avoids cancellation in Δ - √(Δ² - 4det)
    let nu_sq = det / upper;
    if nu_sq < -1e-9 * upper {
        return Err(Error::NonPhysical(format!(
            "negative determinant {det:e} gives ν² = {nu_sq:e}"
        )));
    }
    Ok(nu_sq.max(0.0).sqrt())
}

/// Mean phonon number `(VarX + VarP)/2 - 1/2` of a zero-mean mode.
pub fn occupancy(c: &CovarianceMatrix, mode: ModeLabel) -> Result<f64> {
    mode.check(c.n_modes())?;
    let k = 2 * mode.index();
    let e = c.entries();
    Ok(0.5 * (e[(k, k)] + e[(k + 1, k + 1)]) - VACUUM_VARIANCE)
}

/// Occupancy of mode `mode` read from an unvalidated 4x4 matrix.
pub fn occupancy_raw(m: &Matrix4<f64>, mode: usize) -> f64 {
    let k = 2 * mode;
    0.5 * (m[(k, k)] + m[(k + 1, k + 1)]) - VACUUM_VARIANCE
}

/// How far below the separability threshold `ν` lies, in dB.
pub fn entanglement_margin_db(nu: f64) -> Result<f64> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "entanglement margin needs ν > 0, got {nu}"
        )));
    }
    Ok(10.0 * (VACUUM_VARIANCE / nu).log10())
}

/// Two-mode squeezed thermal state: thermal occupancies `n1`, `n2` followed
/// by two-mode squeezing with parameter `r`. Positive `r` correlates the
/// positions and anti-correlates the momenta.
pub fn two_mode_squeezed_thermal(r: f64, n1: f64, n2: f64) -> Result<CovarianceMatrix> {
    if !(n1 >= 0.0) || !(n2 >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "occupancies must be non-negative, got ({n1}, {n2})"
        )));
    }
    if !r.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "squeezing {r} is not finite"
        )));
    }
    let v1 = n1 + VACUUM_VARIANCE;
    let v2 = n2 + VACUUM_VARIANCE;
    let (ch, sh) = (r.cosh(), r.sinh());
    let a = v1 * ch * ch + v2 * sh * sh;
    let b = v2 * ch * ch + v1 * sh * sh;
    let k = (v1 + v2) * ch * sh;
    #[rustfmt::skip]
    let m = Matrix4::new(
        a,   0.0, k,   0.0,
        0.0, a,   0.0, -k,
        k,   0.0, b,   0.0,
        0.0, -k,  0.0, b,
    );
    CovarianceMatrix::from_two_mode(&m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag4(d: [f64; 4]) -> CovarianceMatrix {
        CovarianceMatrix::from_two_mode(&Matrix4::from_diagonal(&d.into())).unwrap()
    }

    #[test]
    fn symplectic_form_small_cases() {
        let one = symplectic_form(1);
        assert_eq!(one, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let two = symplectic_form(2);
        assert_eq!(two.view((0, 2), (2, 2)).norm(), 0.0);
        assert_eq!(two.view((2, 2), (2, 2)).clone_owned(), one);
        let three = symplectic_form(3);
        assert_eq!(&three * three.transpose(), DMatrix::identity(6, 6));
        assert_eq!(&three * &three, -DMatrix::identity(6, 6));
        assert_eq!(three.transpose(), -three.clone());
    }

    #[test]
    fn vacuum_and_thermal_spectra() {
        let v = symplectic_eigenvalues(CovarianceMatrix::vacuum(2).entries()).unwrap();
        assert_relative_eq!(v[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.5, epsilon = 1e-14);
        let t = symplectic_eigenvalues(diag4([1.5; 4]).entries()).unwrap();
        assert_relative_eq!(t[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(t[1], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut m = DMatrix::identity(4, 4);
        m[(0, 1)] = 0.1;
        assert!(matches!(
            symplectic_eigenvalues(&m),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn indefinite_input_uses_general_route() {
        // diag(2, -1/8): ΩC has eigenvalues ±i·√(1/4) only in modulus
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -0.125]));
        let s = symplectic_eigenvalues(&m).unwrap();
        assert_relative_eq!(s[0], 0.5, epsilon = 1e-12);
        assert!(uncertainty_margin(&m) < 0.0);
    }

    #[test]
    fn partial_transpose_flips_second_momentum() {
        let mut m = Matrix4::from_diagonal(&[1.0, 1.0, 1.0, 1.0].into());
        m[(1, 3)] = 0.3;
        m[(3, 1)] = 0.3;
        m[(0, 2)] = 0.2;
        m[(2, 0)] = 0.2;
        let c = CovarianceMatrix::from_two_mode(&m).unwrap();
        let pt = partial_transpose(&c, ModeLabel::new(1, 2).unwrap()).unwrap();
        assert_eq!(pt.entries()[(1, 3)], -0.3);
        assert_eq!(pt.entries()[(3, 1)], -0.3);
        assert_eq!(pt.entries()[(0, 2)], 0.2);
        let back = partial_transpose(&pt, ModeLabel::new(1, 2).unwrap()).unwrap();
        assert_eq!(back, c);

        let d = diag4([0.7, 0.8, 0.9, 1.0]);
        assert_eq!(
            partial_transpose(&d, ModeLabel::new(0, 2).unwrap()).unwrap(),
            d
        );
    }

    #[test]
    fn mode_out_of_range() {
        assert!(ModeLabel::new(2, 2).is_err());
        let c = CovarianceMatrix::vacuum(2);
        assert!(partial_transpose(&c, ModeLabel(5)).is_err());
        assert!(occupancy(&c, ModeLabel(2)).is_err());
    }

    #[test]
    fn simon_duan_reference_values() {
        assert_relative_eq!(
            simon_duan_nu(&CovarianceMatrix::vacuum(2)).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        // Δ = 2.25 + 2.25 - 0 = 4.5, det = 5.0625
        assert_relative_eq!(
            simon_duan_nu(&diag4([1.5; 4])).unwrap(),
            1.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn simon_duan_rejects_unphysical() {
        // strongly correlated beyond any physical state: Δ < 0
        let mut m = Matrix4::from_diagonal(&[0.5, 0.5, 0.5, 0.5].into());
        m[(0, 2)] = 2.0;
        m[(2, 0)] = 2.0;
        m[(1, 3)] = 2.0;
        m[(3, 1)] = 2.0;
        assert!(matches!(simon_duan_nu_raw(&m), Err(Error::NonPhysical(_))));
    }

    #[test]
    fn occupancy_values() {
        let c = CovarianceMatrix::vacuum(2);
        assert_eq!(occupancy(&c, ModeLabel(0)).unwrap(), 0.0);
        let cooled = diag4([1.29, 1.29, 1.10, 1.10]);
        assert_relative_eq!(
            occupancy(&cooled, ModeLabel(0)).unwrap(),
            0.79,
            epsilon = 1e-12
        );
        let hot = diag4([12.0, 12.0, 4.92, 4.92]);
        assert_relative_eq!(
            occupancy(&hot, ModeLabel(0)).unwrap(),
            11.5,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            occupancy(&hot, ModeLabel(1)).unwrap(),
            4.42,
            epsilon = 1e-12
        );
    }

    #[test]
    fn margin_values() {
        assert_eq!(entanglement_margin_db(0.5).unwrap(), 0.0);
        assert_relative_eq!(entanglement_margin_db(0.05).unwrap(), 10.0, epsilon = 1e-12);
        let m = entanglement_margin_db(0.15).unwrap();
        assert!((m - 5.2288).abs() < 1e-4);
        assert!(entanglement_margin_db(0.0).is_err());
        assert!(entanglement_margin_db(-1.0).is_err());
        assert!(entanglement_margin_db(0.6).unwrap() < 0.0);
    }

    #[test]
    fn tmst_constructor() {
        assert_eq!(
            two_mode_squeezed_thermal(0.0, 0.0, 0.0).unwrap(),
            CovarianceMatrix::vacuum(2)
        );
        let c = two_mode_squeezed_thermal(0.5, 0.0, 0.0).unwrap();
        assert_relative_eq!(
            simon_duan_nu(&c).unwrap(),
            (-1.0f64).exp() / 2.0,
            epsilon = 1e-14
        );
        let e = c.entries();
        assert!(e[(0, 2)] > 0.0);
        assert!(e[(1, 3)] < 0.0);
        assert!(two_mode_squeezed_thermal(0.1, -0.1, 0.0).is_err());
        let thermal = two_mode_squeezed_thermal(0.0, 1.0, 2.0).unwrap();
        assert_eq!(thermal, diag4([1.5, 1.5, 2.5, 2.5]));
    }

    #[test]
    fn tmst_thermal_oracle() {
        // brute-force route: spectrum of the partial transpose. Thermal noise
        // scales the vacuum by 2n̄ + 1, so ν = (n̄ + 1/2) e^{-2r} = 0.6 e^{-1}.
        let c = two_mode_squeezed_thermal(0.5, 0.1, 0.1).unwrap();
        let pt = partial_transpose(&c, ModeLabel(1)).unwrap();
        let spectral = symplectic_eigenvalues(pt.entries()).unwrap()[0];
        let expected = 0.6 * (-1.0f64).exp();
        assert_relative_eq!(spectral, expected, epsilon = 1e-12);
        assert_relative_eq!(simon_duan_nu(&c).unwrap(), spectral, epsilon = 1e-12);
        assert!(c.is_physical(PHYSICALITY_TOL));
    }
}
