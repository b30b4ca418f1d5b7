use bohmlab::formalism::{
    born_probabilities, build_observable, collapse, default_tolerance, expectation, hermitian_eigen, pointer_model,
    random_experiment, random_state, reproducibility_check, spectral_decompose, CMatrix, CVector,
    ExperimentOutcome, ExperimentSpec, FormalismError, HermitianOp, PointerApparatus, StateVec,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn case(seed: u64, dim: usize, k: usize) -> (StateVec, ExperimentSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = k.clamp(1, dim);
    let spec = random_experiment(&mut rng, dim, k);
    (random_state(&mut rng, dim), spec)
}

fn direct_quadratic_form(psi: &StateVec, a: &CMatrix) -> f64 {
    // sum_ij conj(psi_i) A_ij psi_j, written out
    let v = psi.vector();
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..v.len() {
        for j in 0..v.len() {
            s += v[i].conj() * a[(i, j)] * v[j];
        }
    }
    s.re
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn expectation_identity(seed in any::<u64>(), dim in 2usize..=8, k in 1usize..=8) {
        let (psi, spec) = case(seed, dim, k);
        let a = build_observable(&spec);
        let lhs = expectation(&psi, &spec).unwrap();
        let rhs = direct_quadratic_form(&psi, a.matrix());
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{} vs {}", lhs, rhs);
        let p = born_probabilities(&psi, &spec).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= -1e-15));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pointer_marginals_equal_born(seed in any::<u64>(), dim in 2usize..=6, k in 1usize..=6) {
        let (psi, spec) = case(seed, dim, k);
        let out = pointer_model(&psi, &spec).unwrap();
        let p = born_probabilities(&psi, &spec).unwrap();
        for (m, b) in out.marginals.iter().zip(&p) {
            prop_assert!((m - b).abs() <= 1e-12);
        }
        prop_assert!(out.ready_weight <= 1e-24);
        prop_assert!((out.final_state.norm() - 1.0).abs() <= 1e-12);
        let app = PointerApparatus::new(&spec, spec.outcomes().len() + 1).unwrap();
        prop_assert!(app.unitarity_error() <= 1e-12);
    }

    #[test]
    fn repetition_reproduces_outcome(seed in any::<u64>(), dim in 2usize..=6, k in 1usize..=6) {
        let (psi, spec) = case(seed, dim, k);
        prop_assert!(reproducibility_check(&psi, &spec).unwrap());
        for a in 0..spec.outcomes().len() {
            if let Some(post) = collapse(&psi, &spec, a).unwrap() {
                // the pointer model run on the collapsed state points at `a` again
                let again = pointer_model(&post, &spec).unwrap();
                prop_assert!((again.marginals[a] - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn spectral_round_trip(seed in any::<u64>(), dim in 2usize..=6, k in 1usize..=6) {
        let (psi, spec) = case(seed, dim, k);
        let a = build_observable(&spec);
        let back = spectral_decompose(&a, default_tolerance(&a));
        let a2 = build_observable(&back);
        let dev = (a.matrix() - a2.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(dev <= 1e-10 * (1.0 + a.spectral_norm()));
        let e1 = expectation(&psi, &spec).unwrap();
        let e2 = expectation(&psi, &back).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-10 * (1.0 + a.spectral_norm()));
    }
}

#[test]
fn degenerate_calibrations_merge_into_one_outcome() {
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let p = |i: usize| {
        let mut m = CMatrix::zeros(3, 3);
        m[(i, i)] = one;
        m
    };
    let spec = ExperimentSpec::new(
        3,
        vec![
            ExperimentOutcome::new("a", p(0), 2.0),
            ExperimentOutcome::new("b", p(1), 2.0),
            ExperimentOutcome::new("c", p(2), -1.0),
        ],
    )
    .unwrap();
    let a = build_observable(&spec);
    let back = spectral_decompose(&a, default_tolerance(&a));
    assert_eq!(back.outcomes().len(), 2);
    assert_eq!(back.outcomes()[0].rank(), 2);
    assert!((back.outcomes()[0].calibration - 2.0).abs() < 1e-12);
    let psi = StateVec::new(CVector::from_vec(vec![zero, zero, one])).unwrap();
    assert!((expectation(&psi, &back).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn non_hermitian_rejected() {
    let m = CMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ],
    );
    assert!(matches!(HermitianOp::new(m), Err(FormalismError::NotHermitian(_))));
}

#[test]
fn incomplete_experiment_rejected() {
    let mut p = CMatrix::zeros(2, 2);
    p[(0, 0)] = Complex64::new(1.0, 0.0);
    let res = ExperimentSpec::new(2, vec![ExperimentOutcome::new("only", p, 1.0)]);
    assert!(matches!(res, Err(FormalismError::Incomplete(_))));
}

#[test]
fn overlapping_projections_rejected() {
    let mut p = CMatrix::zeros(2, 2);
    p[(0, 0)] = Complex64::new(1.0, 0.0);
    let res = ExperimentSpec::new(
        2,
        vec![
            ExperimentOutcome::new("a", p.clone(), 1.0),
            ExperimentOutcome::new("b", p, -1.0),
        ],
    );
    assert!(matches!(res, Err(FormalismError::NotOrthogonal { .. })));
}

#[test]
fn sigma_z_expectations() {
    let spec = ExperimentSpec::sigma_z(1.0);
    let up = StateVec::from_reals(&[1.0, 0.0]).unwrap();
    let plus = StateVec::normalized(CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)])).unwrap();
    assert!((expectation(&up, &spec).unwrap() - 1.0).abs() < 1e-15);
    assert!(expectation(&plus, &spec).unwrap().abs() < 1e-15);
    let p = born_probabilities(&plus, &spec).unwrap();
    assert!((p[0] - 0.5).abs() < 1e-15);
}

#[test]
fn eigen_residual_near_degenerate() {
    // close eigenvalues are where the unpolished QR iteration is weakest
    let (_, spec) = case(14937977859339113519, 3, 3);
    let a = build_observable(&spec);
    let (values, v) = hermitian_eigen(a.matrix());
    let lam = CMatrix::from_diagonal(&CVector::from_iterator(3, values.iter().map(|&x| Complex64::new(x, 0.0))));
    let r = a.matrix() * &v - &v * lam;
    assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
    let o = v.adjoint() * &v - CMatrix::identity(3, 3);
    assert!(o.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
}
