use cvgauss::gaussian::symplectic::{beam_splitter, local_rotation, squeezer, two_mode_squeezer};
use cvgauss::gaussian::{
    occupancy, partial_transpose, simon_duan_nu, two_mode_squeezed_thermal, CovarianceMatrix,
};
use cvgauss::ModeLabel;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Thermal state pushed through rotations, squeezers, a beam splitter and a
/// two-mode squeezer with random parameters.
fn random_state(rng: &mut impl Rng) -> CovarianceMatrix {
    let thermal =
        CovarianceMatrix::thermal(&[rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)])
            .unwrap();
    let mut angle = || rng.random_range(0.0..std::f64::consts::TAU);
    let rotations = [
        local_rotation(&[angle(), angle()]),
        local_rotation(&[angle(), angle()]),
    ];
    let mut s: DMatrix<f64> = rotations[0].clone();
    s = squeezer(2, 0, rng.random_range(-1.0..1.0)) * s;
    s = squeezer(2, 1, rng.random_range(-1.0..1.0)) * s;
    s = beam_splitter(2, 0, 1, rng.random_range(0.0..std::f64::consts::PI)) * s;
    s = two_mode_squeezer(2, 0, 1, rng.random_range(0.0..1.2)) * s;
    s = &rotations[1] * s;
    thermal.transform(&s).unwrap()
}

#[test]
fn closed_form_matches_partial_transpose_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let second = ModeLabel::new(1, 2).unwrap();
    for _ in 0..1000 {
        let c = random_state(&mut rng);
        assert!(c.min_symplectic_eigenvalue() >= 0.5 - 1e-9);
        let spectral = partial_transpose(&c, second)
            .unwrap()
            .min_symplectic_eigenvalue();
        let closed = simon_duan_nu(&c).unwrap();
        assert!((closed - spectral).abs() <= 1e-10, "{closed} vs {spectral}");
    }
}

proptest! {
    #[test]
    fn nu_is_invariant_under_local_rotations(seed in any::<u64>(), a in 0.0..6.3f64, b in 0.0..6.3f64) {
        let c = random_state(&mut ChaCha8Rng::seed_from_u64(seed));
        let rotated = c.transform(&local_rotation(&[a, b])).unwrap();
        let (before, after) = (simon_duan_nu(&c).unwrap(), simon_duan_nu(&rotated).unwrap());
        prop_assert!((before - after).abs() <= 1e-10, "{} vs {}", before, after);
    }

    #[test]
    fn partial_transpose_is_an_involution(seed in any::<u64>(), mode in 0usize..2) {
        let c = random_state(&mut ChaCha8Rng::seed_from_u64(seed));
        let m = ModeLabel::new(mode, 2).unwrap();
        let twice = partial_transpose(&partial_transpose(&c, m).unwrap(), m).unwrap();
        prop_assert_eq!(twice, c);
    }

    #[test]
    fn squeezed_vacuum_nu(r in 0.0..=3.0f64) {
        let nu = simon_duan_nu(&two_mode_squeezed_thermal(r, 0.0, 0.0).unwrap()).unwrap();
        prop_assert!((nu - (-2.0 * r).exp() / 2.0).abs() <= 1e-12, "r = {}: {}", r, nu);
    }
}

#[test]
fn vacuum_occupancy_is_exactly_zero() {
    let v = CovarianceMatrix::vacuum(2);
    for mode in 0..2 {
        assert_eq!(
            occupancy(&v, ModeLabel::new(mode, 2).unwrap()).unwrap(),
            0.0
        );
    }
}
