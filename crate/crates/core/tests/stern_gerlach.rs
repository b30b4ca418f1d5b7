use bohmlab::equilibrium::ks_band;
use bohmlab::grid::GaussianPacket;
use bohmlab::stern_gerlach::{
    contextuality_demo, crossing_count, mirror_symmetry, no_crossing_check, outcome_map, run_sg,
    PreparedExperiment, Reversal, SgError, SgSetup,
};
use num_complex::Complex64;
use std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn packet() -> GaussianPacket {
    GaussianPacket::new(0.0, 1.0, 0.0)
}

fn spin(p_up: f64) -> (Complex64, Complex64) {
    (c(p_up.sqrt()), c((1.0 - p_up).sqrt()))
}

#[test]
fn branches_separate_cleanly() {
    let (a, b) = spin(0.5);
    let exp = PreparedExperiment::new(&SgSetup::default(), a, b, &packet()).unwrap();
    assert!(exp.branch_overlap() < 1e-6, "{}", exp.branch_overlap());
    assert!(exp.timeline().boundary_mass_max() < 1e-10);
    // upper spin population sits around +branch_center
    let last = exp.final_field();
    let grid = last.grid();
    let mean_up: f64 = grid.points().zip(last.comp1()).map(|(x, u)| x * u.norm_sqr()).sum::<f64>() * grid.dx() / 0.5;
    assert!((mean_up - SgSetup::default().branch_center()).abs() < 1e-3, "{mean_up}");
}

#[test]
fn born_frequencies_and_calibrated_mean() {
    let (a, b) = spin(0.3);
    let run = run_sg(&SgSetup::default(), a, b, &packet(), 4000, 21).unwrap();
    let s = &run.statistics;
    assert!((s.p_up - 0.3).abs() < 1e-12);
    assert!(s.born_agrees(), "{} vs {}", s.freq_up, s.p_up);
    assert!(s.mean_agrees(), "{} +- {} vs {}", s.calibrated_mean, s.calibrated_stderr, s.expectation);
    assert!((s.expectation - (0.3 - 0.7)).abs() < 1e-12);
    assert_eq!(s.count_up + s.count_down + s.count_null, 4000);
}

#[test]
fn up_spin_always_registers_upper() {
    let run = run_sg(&SgSetup::default(), c(1.0), c(0.0), &packet(), 500, 3).unwrap();
    assert_eq!(run.statistics.count_up, 500);
}

#[test]
fn outcomes_are_monotone_in_initial_position() {
    // trajectories keep their order, so X jumps once from -1 to +1
    let (a, b) = spin(0.4);
    let qs: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
    let xs = outcome_map(&SgSetup::default(), a, b, &packet(), &qs).unwrap();
    let flips = xs.windows(2).filter(|w| w[0] != w[1] && w[0].is_some() && w[1].is_some()).count();
    assert!(flips <= 1);
    assert_eq!(xs[0], Some(-1.0));
    assert_eq!(xs[40], Some(1.0));
}

#[test]
fn reversal_flips_outcome_map() {
    let (a, b) = (c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2));
    let qs: Vec<f64> = (0..21).map(|i| -2.0 + 0.2 * i as f64).collect();
    let setup = SgSetup::default();
    let x = outcome_map(&setup, a, b, &packet(), &qs).unwrap();
    for how in [Reversal::Polarity, Reversal::Geometry] {
        let y = outcome_map(&setup.reversed(how), a, b, &packet(), &qs).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            if let (Some(xi), Some(yi)) = (xi, yi) {
                assert_eq!(*yi, -*xi);
            }
        }
    }
}

#[test]
fn symmetric_ensemble_never_crosses_plane() {
    let (a, b) = (c(FRAC_1_SQRT_2), Complex64::new(0.0, FRAC_1_SQRT_2));
    let run = run_sg(&SgSetup::default(), a, b, &packet(), 2000, 8).unwrap();
    assert_eq!(run.ensemble.mirror_plane, Some(0.0));
    assert!(no_crossing_check(&run.ensemble, 0.0).unwrap());
    assert_eq!(crossing_count(&run.ensemble, 0.0), 0);
}

#[test]
fn no_crossing_refuses_asymmetric_ensemble() {
    let (a, b) = spin(0.7);
    let run = run_sg(&SgSetup::default(), a, b, &packet(), 100, 8).unwrap();
    assert_eq!(run.ensemble.mirror_plane, None);
    assert!(matches!(no_crossing_check(&run.ensemble, 0.0), Err(SgError::NotSymmetric(_))));
}

#[test]
fn contextuality_demo_on_symmetric_state() {
    let (a, b) = (c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2));
    let qs: Vec<f64> = (0..15).map(|i| -2.1 + 0.3 * i as f64).collect();
    let r = contextuality_demo(&SgSetup::default(), a, b, &packet(), &qs, 2000, 4, Reversal::Polarity).unwrap();
    assert!(r.same_operator);
    assert!(r.pointwise_reversed, "{}", r.summary);
    assert!(r.statistics_agree_with_born);
    assert_eq!(r.mismatched_points, 0);
}

#[test]
fn contextuality_demo_refuses_asymmetry() {
    let (a, b) = spin(0.2);
    let res = contextuality_demo(&SgSetup::default(), a, b, &packet(), &[0.0], 10, 0, Reversal::Polarity);
    assert!(matches!(res, Err(SgError::NotSymmetric(_))));
    let mut shifted = SgSetup::default();
    shifted.b0 = 0.5;
    let h = c(FRAC_1_SQRT_2);
    assert!(mirror_symmetry(&shifted, h, h, &packet()).is_err());
}

#[test]
fn detectors_too_far_out_are_rejected() {
    let mut setup = SgSetup::default();
    setup.z_det = setup.branch_center();
    let (a, b) = spin(0.5);
    assert!(matches!(
        run_sg(&setup, a, b, &packet(), 1000, 1),
        Err(SgError::NullFraction { .. })
    ));
}

#[test]
fn stern_gerlach_equivariance() {
    let (a, b) = spin(0.35);
    let exp = PreparedExperiment::new(&SgSetup::default(), a, b, &packet()).unwrap();
    let mut passed = 0;
    for seed in 0..5 {
        if exp.equivariance(4000, seed).unwrap() <= ks_band(4000) {
            passed += 1;
        }
    }
    assert!(passed >= 4, "{passed}/5");
}
