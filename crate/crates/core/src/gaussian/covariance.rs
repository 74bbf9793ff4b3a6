use nalgebra::{DMatrix, Matrix2, Matrix4};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{check_symmetric, symplectic_eigenvalues, uncertainty_margin, VACUUM_VARIANCE};
use crate::error::{Error, Result};

/// Quadrature labels, suffixed by the 1-based mode number in serialized form.
pub const ORDERING_PREFIXES: [&str; 2] = ["X", "P"];

/// Real symmetric second-moment matrix of an `n`-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n_modes: usize,
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Validates symmetry and positive diagonal, then symmetrizes exactly.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&entries)?;
        for i in 0..entries.nrows() {
            let v = entries[(i, i)];
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveDiagonal { index: i, value: v });
            }
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "covariance has non-finite entries".into(),
            ));
        }
        let entries = (&entries + entries.transpose()) * 0.5;
        Ok(CovarianceMatrix {
            n_modes: entries.nrows() / 2,
            entries,
        })
    }

    pub fn from_two_mode(m: &Matrix4<f64>) -> Result<Self> {
        Self::new(DMatrix::from_iterator(4, 4, m.iter().copied()))
    }

    pub fn vacuum(n_modes: usize) -> Self {
        CovarianceMatrix {
            n_modes,
            entries: DMatrix::identity(2 * n_modes, 2 * n_modes) * VACUUM_VARIANCE,
        }
    }

    /// Product of thermal states with the given mean occupancies.
    pub fn thermal(occupancies: &[f64]) -> Result<Self> {
        let mut m = DMatrix::zeros(2 * occupancies.len(), 2 * occupancies.len());
        for (k, &n) in occupancies.iter().enumerate() {
            if !(n >= 0.0) {
                return Err(Error::InvalidArgument(format!("negative occupancy {n}")));
            }
            m[(2 * k, 2 * k)] = n + VACUUM_VARIANCE;
            m[(2 * k + 1, 2 * k + 1)] = n + VACUUM_VARIANCE;
        }
        Self::new(m)
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    /// 2x2 block coupling modes `i` and `j`.
    pub fn block(&self, i: usize, j: usize) -> Matrix2<f64> {
        self.entries.fixed_view::<2, 2>(2 * i, 2 * j).clone_owned()
    }

    pub fn as_two_mode(&self) -> Result<Matrix4<f64>> {
        if self.n_modes != 2 {
            return Err(Error::Shape {
                expected: 4,
                rows: self.entries.nrows(),
                cols: self.entries.ncols(),
            });
        }
        Ok(self.entries.fixed_view::<4, 4>(0, 0).clone_owned())
    }

    /// Marginal state of the listed modes, in the order given.
    pub fn reduced(&self, modes: &[usize]) -> Result<Self> {
        let idx: Vec<usize> = modes
            .iter()
            .map(|&m| {
                if m >= self.n_modes {
                    Err(Error::ModeOutOfRange {
                        index: m,
                        n_modes: self.n_modes,
                    })
                } else {
                    Ok([2 * m, 2 * m + 1])
                }
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        let n = idx.len();
        let m = DMatrix::from_fn(n, n, |r, c| self.entries[(idx[r], idx[c])]);
        Ok(CovarianceMatrix {
            n_modes: modes.len(),
            entries: m,
        })
    }

    /// `S C Sᵀ`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        Self::new(s * &self.entries * s.transpose())
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_eigenvalues(&self.entries).expect("validated covariance is symmetric")
    }

    pub fn min_symplectic_eigenvalue(&self) -> f64 {
        self.symplectic_eigenvalues()[0]
    }

    /// Positive definite with every symplectic eigenvalue at least `1/2 - tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.validate_physical(tol).is_ok()
    }

    pub fn validate_physical(&self, tol: f64) -> Result<()> {
        if self.entries.clone().cholesky().is_none() {
            return Err(Error::NonPhysical(format!(
                "covariance is not positive definite (min eigenvalue {:e})",
                self.entries.symmetric_eigenvalues().min()
            )));
        }
        let nu = self.min_symplectic_eigenvalue();
        if nu < VACUUM_VARIANCE - tol {
            return Err(Error::NonPhysical(format!(
                "minimum symplectic eigenvalue {nu} is below 1/2"
            )));
        }
        Ok(())
    }

    /// Smallest eigenvalue of `C + (i/2)Ω`.
    pub fn uncertainty_margin(&self) -> f64 {
        uncertainty_margin(&self.entries)
    }

    /// Quadrature labels in storage order, e.g. `X1, P1, X2, P2`.
    pub fn ordering(&self) -> Vec<String> {
        ordering_labels(self.n_modes)
    }
}

fn ordering_labels(n_modes: usize) -> Vec<String> {
    (1..=n_modes)
        .flat_map(|k| ORDERING_PREFIXES.iter().map(move |p| format!("{p}{k}")))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct CovarianceJson {
    ordering: Vec<String>,
    n_modes: usize,
    entries: Vec<Vec<f64>>,
}

impl Serialize for CovarianceMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = self
            .entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        CovarianceJson {
            ordering: self.ordering(),
            n_modes: self.n_modes,
            entries: rows,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CovarianceMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = CovarianceJson::deserialize(deserializer)?;
        if raw.ordering != ordering_labels(raw.n_modes) {
            return Err(D::Error::custom(format!(
                "unsupported quadrature ordering {:?}",
                raw.ordering
            )));
        }
        let dim = 2 * raw.n_modes;
        if raw.entries.len() != dim || raw.entries.iter().any(|r| r.len() != dim) {
            return Err(D::Error::custom(format!(
                "entries must be {dim}x{dim} for {} modes",
                raw.n_modes
            )));
        }
        let m = DMatrix::from_fn(dim, dim, |r, c| raw.entries[r][c]);
        CovarianceMatrix::new(m).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_inputs() {
        let mut m = DMatrix::identity(4, 4);
        m[(2, 2)] = 0.0;
        assert!(matches!(
            CovarianceMatrix::new(m),
            Err(Error::NonPositiveDiagonal { index: 2, .. })
        ));
        let mut m = DMatrix::identity(4, 4);
        m[(0, 3)] = 1e-6;
        assert!(matches!(
            CovarianceMatrix::new(m),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(CovarianceMatrix::new(DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn json_layout() {
        let c = CovarianceMatrix::thermal(&[1.0, 0.0]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        assert_eq!(v["ordering"], serde_json::json!(["X1", "P1", "X2", "P2"]));
        assert_eq!(v["entries"][0][0], 1.5);
        assert_eq!(v["entries"][3][3], 0.5);
        let bad = r#"{"ordering":["P1","X1","X2","P2"],"n_modes":2,
                      "entries":[[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}"#;
        assert!(serde_json::from_str::<CovarianceMatrix>(bad).is_err());
    }

    #[test]
    fn reduced_picks_modes() {
        let c = CovarianceMatrix::thermal(&[0.0, 1.0, 2.0]).unwrap();
        let r = c.reduced(&[1, 2]).unwrap();
        assert_eq!(r, CovarianceMatrix::thermal(&[1.0, 2.0]).unwrap());
        assert!(c.reduced(&[3]).is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_exact(vals in prop::collection::vec(-1.0e3f64..1.0e3, 6),
                                    diag in prop::collection::vec(1.0e-3f64..1.0e4, 4)) {
            let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag));
            let mut k = 0;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    m[(i, j)] = vals[k] / 7.0;
                    m[(j, i)] = vals[k] / 7.0;
                    k += 1;
                }
            }
            let c = CovarianceMatrix::new(m).unwrap();
            let text = serde_json::to_string(&c).unwrap();
            let back: CovarianceMatrix = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
