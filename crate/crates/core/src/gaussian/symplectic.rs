//! Elementary symplectic transformations on `(X1, P1, X2, P2, ...)`.

use nalgebra::DMatrix;

/// Independent phase rotations, one angle per mode.
pub fn local_rotation(angles: &[f64]) -> DMatrix<f64> {
    let n = angles.len();
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for (k, &theta) in angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        s[(2 * k, 2 * k)] = cos;
        s[(2 * k, 2 * k + 1)] = sin;
        s[(2 * k + 1, 2 * k)] = -sin;
        s[(2 * k + 1, 2 * k + 1)] = cos;
    }
    s
}

/// Single-mode squeezer on `mode`: `X → e^{-r} X`, `P → e^{r} P`.
pub fn squeezer(n_modes: usize, mode: usize, r: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
    s[(2 * mode, 2 * mode)] = (-r).exp();
    s[(2 * mode + 1, 2 * mode + 1)] = r.exp();
    s
}

/// Beam splitter mixing modes `i` and `j` with angle `theta`.
pub fn beam_splitter(n_modes: usize, i: usize, j: usize, theta: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let (sin, cos) = theta.sin_cos();
    for q in 0..2 {
        let (a, b) = (2 * i + q, 2 * j + q);
        s[(a, a)] = cos;
        s[(b, b)] = cos;
        s[(a, b)] = sin;
        s[(b, a)] = -sin;
    }
    s
}

/// Two-mode squeezer on modes `i`, `j`; positive `r` correlates positions.
pub fn two_mode_squeezer(n_modes: usize, i: usize, j: usize, r: f64) -> DMatrix<f64> {
    let mut s = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let (ch, sh) = (r.cosh(), r.sinh());
    for q in 0..2 {
        let sign = if q == 0 { 1.0 } else { -1.0 };
        let (a, b) = (2 * i + q, 2 * j + q);
        s[(a, a)] = ch;
        s[(b, b)] = ch;
        s[(a, b)] = sign * sh;
        s[(b, a)] = sign * sh;
    }
    s
}
