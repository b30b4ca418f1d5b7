use bohmlab::equilibrium::{ks_band, ks_distance, ks_statistic, sample, TrapezoidCdf};
use bohmlab::grid::{gaussian_packet, Configuration, Grid1D, SpinorField};
use bohmlab::guidance::{equivariance_check, velocity, velocity_on_grid, GuidanceField, WaveTimeline};
use bohmlab::propagator::{evolve, HamiltonianSpec};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn free_timeline(sigma0: f64, t: f64) -> WaveTimeline {
    let grid = Grid1D::new(1024, -40.0, 40.0).unwrap();
    let psi0 = gaussian_packet(&grid, 0.0, sigma0, 0.0, c(1.0), c(0.0)).unwrap();
    evolve(&psi0, &HamiltonianSpec::free(&grid), t, 0.01, 1).unwrap()
}

#[test]
fn free_gaussian_velocity_closed_form() {
    let tl = free_timeline(1.0, 2.0);
    let t = tl.t_end();
    for q in [-2.0, -0.5, 0.25, 1.0, 3.0] {
        let v = velocity(tl.last(), q);
        let exact = q * t / (4.0 + t * t);
        // off-node values carry the cubic interpolation error
        assert!((v - exact).abs() < 2e-6, "q = {q}: {v} vs {exact}");
    }
}

#[test]
fn free_gaussian_trajectories_scale_with_width() {
    // Q(t) = q0 sigma(t) / sigma0
    let sigma0 = 1.0;
    let tl = free_timeline(sigma0, 3.0);
    let field = GuidanceField::from_timeline(&tl).unwrap();
    for q0 in [-2.5, -1.0, 0.3, 1.7] {
        let traj = field.integrate(q0, 0.005).unwrap();
        for (t, q) in traj.times.iter().zip(&traj.positions) {
            let width = (1.0 + (t / (2.0 * sigma0 * sigma0)).powi(2)).sqrt();
            assert!((q - q0 * width).abs() < 1e-5 * q0.abs(), "q0 = {q0}, t = {t}: {q}");
        }
    }
}

#[test]
fn trajectory_converges_under_step_refinement() {
    let grid = Grid1D::new(512, -30.0, 30.0).unwrap();
    let a = gaussian_packet(&grid, -3.0, 1.0, 1.5, c(1.0), c(0.0)).unwrap();
    let b = gaussian_packet(&grid, 3.0, 1.0, -1.5, c(1.0), c(0.0)).unwrap();
    let psi0 = SpinorField::combine(c(1.0), &a, c(1.0), &b).unwrap().normalize().unwrap();
    let tl = evolve(&psi0, &HamiltonianSpec::free(&grid), 2.0, 0.005, 2).unwrap();
    let field = GuidanceField::from_timeline(&tl).unwrap();
    let q0 = -2.2;
    let reference = field.integrate(q0, 0.01 / 32.0).unwrap().q_final();
    let coarse = field.integrate(q0, 0.01).unwrap().q_final();
    let fine = field.integrate(q0, 0.005).unwrap().q_final();
    assert!((coarse - reference).abs() < 1e-4, "{coarse} vs {reference}");
    assert!((fine - reference).abs() <= (coarse - reference).abs() + 1e-12);
}

#[test]
fn time_reversal_retraces_path() {
    let grid = Grid1D::new(512, -30.0, 30.0).unwrap();
    let psi0 = gaussian_packet(&grid, 0.0, 1.0, 0.7, c(0.6), c(0.8)).unwrap();
    let h = HamiltonianSpec::with_field(&grid, -1.0, |z| [0.0, 0.0, 0.8 * z]);
    let tl = evolve(&psi0, &h, 2.0, 0.005, 2).unwrap();
    let fwd = GuidanceField::from_timeline(&tl).unwrap().integrate(0.4, 0.005).unwrap();
    let rev_tl = tl.time_reversed();
    let back = GuidanceField::from_timeline(&rev_tl)
        .unwrap()
        .integrate(fwd.q_final(), 0.005)
        .unwrap();
    assert!((back.q_final() - 0.4).abs() < 1e-6, "{}", back.q_final());
}

#[test]
fn mean_momentum_matches_finite_difference_of_mean_position() {
    // d<x>/dt = <p> for the free and harmonic cases
    let grid = Grid1D::new(512, -24.0, 24.0).unwrap();
    let h = HamiltonianSpec::with_potential(&grid, |x| 0.05 * x * x);
    let psi0 = gaussian_packet(&grid, 1.0, 1.0, 0.8, c(1.0), c(0.0)).unwrap();
    let dt = 0.001;
    let tl = evolve(&psi0, &h, 1.0, dt, 1).unwrap();
    for i in (1..tl.len() - 1).step_by(97) {
        let fd = (tl.frames()[i + 1].mean_position() - tl.frames()[i - 1].mean_position()) / (2.0 * dt);
        let p = tl.frames()[i].mean_momentum();
        assert!((fd - p).abs() < 1e-5, "{fd} vs {p}");
    }
}

#[test]
fn grid_velocity_equals_point_velocity_on_nodes() {
    let grid = Grid1D::new(256, -16.0, 16.0).unwrap();
    let psi = gaussian_packet(&grid, 0.5, 1.0, 1.2, c(0.6), Complex64::new(0.0, 0.8)).unwrap();
    let vg = velocity_on_grid(&psi);
    for j in [100, 128, 140] {
        assert!((vg[j] - velocity(&psi, grid.x(j))).abs() < 1e-12);
        assert!((vg[j] - 1.2).abs() < 1e-9);
    }
}

#[test]
fn equilibrium_samples_pass_ks() {
    let grid = Grid1D::new(512, -20.0, 20.0).unwrap();
    let a = gaussian_packet(&grid, -4.0, 1.0, 0.0, c(1.0), c(0.0)).unwrap();
    let b = gaussian_packet(&grid, 3.0, 0.5, 0.0, c(0.0), c(1.0)).unwrap();
    let psi = SpinorField::combine(c(0.8), &a, c(0.6), &b).unwrap().normalize().unwrap();
    let mut passed = 0;
    for seed in 0..20 {
        let s = sample(&psi, 4000, seed).unwrap();
        if ks_distance(&s, &psi) <= ks_band(4000) {
            passed += 1;
        }
    }
    assert!(passed >= 18, "{passed}/20");
}

#[test]
fn trapezoid_cdf_is_monotone_and_closed() {
    let grid = Grid1D::new(128, -10.0, 10.0).unwrap();
    let psi = gaussian_packet(&grid, 1.0, 1.5, 0.0, c(1.0), c(0.0)).unwrap();
    let cdf = TrapezoidCdf::from_field(&psi);
    let mut last = 0.0;
    for i in 0..=400 {
        let q = -10.0 + 0.05 * i as f64;
        let f = cdf.eval(q);
        assert!(f >= last - 1e-15);
        last = f;
    }
    assert_eq!(cdf.eval(-10.0), 0.0);
    assert_eq!(cdf.eval(10.0), 1.0);
    // analytic Gaussian CDF at the mean
    assert!((cdf.eval(1.0) - 0.5).abs() < 1e-3);
}

#[test]
fn ks_statistic_of_uniform_grid_points() {
    // n evenly placed midpoints against the uniform CDF give exactly 1/(2n)
    let n = 50;
    let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let d = ks_statistic(&mut xs, |x| x.clamp(0.0, 1.0));
    assert!((d - 0.5 / n as f64).abs() < 1e-14);
}

#[test]
fn free_equivariance() {
    let tl = free_timeline(1.0, 2.0);
    let mut passed = 0;
    for seed in 0..20 {
        let samples = sample(tl.initial(), 4000, 100 + seed).unwrap();
        let d = equivariance_check(&tl, &samples, 0.01).unwrap();
        if d <= ks_band(4000) {
            passed += 1;
        }
    }
    assert!(passed >= 18, "{passed}/20");
}

#[test]
fn stale_samples_fail_equivariance() {
    // transported positions compared against the wrong (initial) density
    let tl = free_timeline(1.0, 3.0);
    let samples = sample(tl.initial(), 4000, 9).unwrap();
    let field = GuidanceField::from_timeline(&tl).unwrap();
    let starts: Vec<f64> = samples.iter().map(|c| c.q).collect();
    let finals: Vec<Configuration> = field
        .integrate_all(&starts, 0.01)
        .unwrap()
        .iter()
        .map(|t| Configuration::new(t.q_final()))
        .collect();
    assert!(ks_distance(&finals, tl.initial()) > ks_band(4000));
    assert!(ks_distance(&finals, tl.last()) <= ks_band(4000));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn trajectories_never_cross(
        x1 in -4.0f64..-1.0, x2 in 1.0f64..4.0,
        k1 in 0.0f64..2.0, k2 in -2.0f64..0.0,
        qa in -3.0f64..3.0, gap in 0.05f64..1.0,
    ) {
        // two packets heading into each other: interference, but no crossing
        let grid = Grid1D::new(256, -24.0, 24.0).unwrap();
        let a = gaussian_packet(&grid, x1, 0.8, k1, c(1.0), c(0.0)).unwrap();
        let b = gaussian_packet(&grid, x2, 0.8, k2, c(1.0), c(0.0)).unwrap();
        let psi0 = SpinorField::combine(c(1.0), &a, c(0.7), &b).unwrap().normalize().unwrap();
        let tl = evolve(&psi0, &HamiltonianSpec::free(&grid), 1.5, 0.005, 2).unwrap();
        let field = GuidanceField::from_timeline(&tl).unwrap();
        let lower = field.integrate(qa, 0.005).unwrap();
        let upper = field.integrate(qa + gap, 0.005).unwrap();
        for (l, u) in lower.positions.iter().zip(&upper.positions) {
            prop_assert!(u > l, "{} <= {}", u, l);
        }
    }
}
