//! Experiments as orthogonal decompositions with calibrations, the operator
//! `A = sum_a lambda_a P_a` they induce, Born probabilities, and a
//! von Neumann pointer model realizing the measurement unitarily.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Entrywise tolerance for the structural checks on projections and operators.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Largest composite (system x pointer) dimension handled by the pointer model.
pub const MAX_COMPOSITE_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormalismError {
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("outcome `{label}`: {violation}")]
    InvalidOutcome { label: String, violation: String },
    #[error("projections of `{a}` and `{b}` are not orthogonal (max |P_a P_b| = {dev:e})")]
    NotOrthogonal { a: String, b: String, dev: f64 },
    #[error("projections do not sum to the identity (max deviation {0:e})")]
    Incomplete(f64),
    #[error("experiment needs at least one outcome")]
    NoOutcomes,
    #[error("duplicate outcome label `{0}`")]
    DuplicateLabel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state norm {0} is not 1")]
    NotUnitNorm(f64),
    #[error("pointer space must have dimension {expected} (outcomes + ready state), got {got}")]
    PointerDimension { expected: usize, got: usize },
    #[error("composite dimension {0} exceeds the supported maximum {MAX_COMPOSITE_DIM}")]
    TooLarge(usize),
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// A self-adjoint operator on `C^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOp {
    matrix: CMatrix,
}

impl HermitianOp {
    pub fn new(matrix: CMatrix) -> Result<Self, FormalismError> {
        if !matrix.is_square() {
            return Err(FormalismError::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let dev = hermitian_deviation(&matrix);
        if dev > STRUCTURE_TOL {
            return Err(FormalismError::NotHermitian(dev));
        }
        Ok(Self { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    /// `<psi, A psi>`.
    pub fn quadratic_form(&self, psi: &StateVec) -> Complex64 {
        psi.vector().dotc(&(&self.matrix * psi.vector()))
    }
}

/// A unit vector in `C^dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVec {
    v: CVector,
}

impl StateVec {
    pub fn new(v: CVector) -> Result<Self, FormalismError> {
        let norm = v.norm();
        if (norm - 1.0).abs() > STRUCTURE_TOL {
            return Err(FormalismError::NotUnitNorm(norm));
        }
        Ok(Self { v })
    }

    pub fn normalized(v: CVector) -> Result<Self, FormalismError> {
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(FormalismError::NotUnitNorm(norm));
        }
        Ok(Self { v: v.unscale(norm) })
    }

    pub fn from_reals(values: &[f64]) -> Result<Self, FormalismError> {
        Self::new(CVector::from_iterator(
            values.len(),
            values.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn vector(&self) -> &CVector {
        &self.v
    }
}

/// One outcome of an experiment: label, projection onto `H_a`, calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub label: String,
    pub projection: CMatrix,
    pub calibration: f64,
}

impl ExperimentOutcome {
    pub fn new(label: impl Into<String>, projection: CMatrix, calibration: f64) -> Self {
        Self {
            label: label.into(),
            projection,
            calibration,
        }
    }

    pub fn rank(&self) -> usize {
        self.projection.trace().re.round() as usize
    }
}

/// An experiment in the abstract: a decomposition of `C^dim` into mutually
/// orthogonal subspaces, one per outcome, with a real calibration each.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    dim: usize,
    outcomes: Vec<ExperimentOutcome>,
}

impl ExperimentSpec {
    /// Validates projections (Hermitian, idempotent), mutual orthogonality and
    /// completeness.
    pub fn new(dim: usize, outcomes: Vec<ExperimentOutcome>) -> Result<Self, FormalismError> {
        if outcomes.is_empty() {
            return Err(FormalismError::NoOutcomes);
        }
        for (i, o) in outcomes.iter().enumerate() {
            if outcomes[..i].iter().any(|p| p.label == o.label) {
                return Err(FormalismError::DuplicateLabel(o.label.clone()));
            }
            let p = &o.projection;
            if p.nrows() != dim || p.ncols() != dim {
                return Err(FormalismError::DimensionMismatch {
                    expected: dim,
                    got: p.nrows().max(p.ncols()),
                });
            }
            if !o.calibration.is_finite() {
                return Err(FormalismError::InvalidOutcome {
                    label: o.label.clone(),
                    violation: "calibration is not finite".into(),
                });
            }
            let herm = hermitian_deviation(p);
            if herm > STRUCTURE_TOL {
                return Err(FormalismError::InvalidOutcome {
                    label: o.label.clone(),
                    violation: format!("projection not Hermitian (deviation {herm:e})"),
                });
            }
            let idem = max_abs(&(p * p - p));
            if idem > STRUCTURE_TOL {
                return Err(FormalismError::InvalidOutcome {
                    label: o.label.clone(),
                    violation: format!("projection not idempotent (|P^2 - P| = {idem:e})"),
                });
            }
        }
        for i in 0..outcomes.len() {
            for j in i + 1..outcomes.len() {
                let dev = max_abs(&(&outcomes[i].projection * &outcomes[j].projection));
                if dev > STRUCTURE_TOL {
                    return Err(FormalismError::NotOrthogonal {
                        a: outcomes[i].label.clone(),
                        b: outcomes[j].label.clone(),
                        dev,
                    });
                }
            }
        }
        let sum = outcomes
            .iter()
            .fold(CMatrix::zeros(dim, dim), |acc, o| acc + &o.projection);
        let dev = max_abs(&(sum - CMatrix::identity(dim, dim)));
        if dev > STRUCTURE_TOL {
            return Err(FormalismError::Incomplete(dev));
        }
        Ok(Self { dim, outcomes })
    }

    /// The `sigma_z` experiment with calibration `scale * (+1, -1)`.
    pub fn sigma_z(scale: f64) -> Self {
        let up = CMatrix::from_diagonal(&CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]));
        let down = CMatrix::identity(2, 2) - &up;
        Self::new(
            2,
            vec![
                ExperimentOutcome::new("up", up, scale),
                ExperimentOutcome::new("down", down, -scale),
            ],
        )
        .expect("sigma_z projections are valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn outcomes(&self) -> &[ExperimentOutcome] {
        &self.outcomes
    }

    pub fn labels(&self) -> Vec<&str> {
        self.outcomes.iter().map(|o| o.label.as_str()).collect()
    }

    pub fn calibrations(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.calibration).collect()
    }

    fn check_state(&self, psi: &StateVec) -> Result<(), FormalismError> {
        if psi.dim() != self.dim {
            return Err(FormalismError::DimensionMismatch {
                expected: self.dim,
                got: psi.dim(),
            });
        }
        Ok(())
    }
}

/// `A = sum_a lambda_a P_a`.
pub fn build_observable(spec: &ExperimentSpec) -> HermitianOp {
    let dim = spec.dim();
    let mut a = spec
        .outcomes()
        .iter()
        .fold(CMatrix::zeros(dim, dim), |acc, o| acc + &o.projection * Complex64::new(o.calibration, 0.0));
    // symmetrize away rounding so the result passes the Hermitian check exactly
    a = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    HermitianOp { matrix: a }
}

/// `p_a = ||P_a psi||^2` for each outcome, in outcome order.
pub fn born_probabilities(psi: &StateVec, spec: &ExperimentSpec) -> Result<Vec<f64>, FormalismError> {
    spec.check_state(psi)?;
    Ok(spec
        .outcomes()
        .iter()
        .map(|o| (&o.projection * psi.vector()).norm_squared())
        .collect())
}

/// `sum_a p_a lambda_a`.
pub fn expectation(psi: &StateVec, spec: &ExperimentSpec) -> Result<f64, FormalismError> {
    let p = born_probabilities(psi, spec)?;
    Ok(p.iter().zip(spec.outcomes()).map(|(p, o)| p * o.calibration).sum())
}

/// Default eigenvalue clustering tolerance `1e-9 ||A||`.
pub fn default_tolerance(a: &HermitianOp) -> f64 {
    (1e-9 * a.spectral_norm()).max(f64::MIN_POSITIVE)
}

/// Eigendecomposition of a Hermitian matrix: nalgebra's QR-based solver
/// followed by cyclic Jacobi sweeps on `V^dagger A V`. The solver alone can
/// leave residuals near 1e-8 when eigenvalues are close; the sweeps converge
/// quadratically from there. Returns `(eigenvalues, eigenvectors)` with
/// eigenvectors as columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let dim = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut v = eig.eigenvectors;
    let mut b = v.adjoint() * m * &v;
    let scale = max_abs(&b).max(f64::MIN_POSITIVE);
    for _ in 0..16 {
        let mut off: f64 = 0.0;
        for p in 0..dim {
            for q in p + 1..dim {
                off = off.max(b[(p, q)].norm());
            }
        }
        if off <= f64::EPSILON * scale * 1e-2 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let bpq = b[(p, q)];
                let r = bpq.norm();
                if r == 0.0 {
                    continue;
                }
                // unit phase making the pivot real, then a real rotation
                let phase = bpq.conj() / r;
                let theta = (b[(q, q)].re - b[(p, p)].re) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let mut j = CMatrix::identity(dim, dim);
                j[(p, p)] = Complex64::new(c, 0.0);
                j[(p, q)] = Complex64::new(s, 0.0);
                j[(q, p)] = phase * -s;
                j[(q, q)] = phase * c;
                b = j.adjoint() * &b * &j;
                v = &v * &j;
            }
        }
    }
    let values = (0..dim).map(|i| b[(i, i)].re).collect();
    (values, v)
}

/// Groups the spectrum of `a` into clusters whose neighboring eigenvalues
/// differ by at most `tol`, returning one outcome per cluster (calibration =
/// cluster mean, projection = spectral projection). Outcomes are ordered by
/// decreasing eigenvalue and labelled `e0, e1, ...`.
pub fn spectral_decompose(a: &HermitianOp, tol: f64) -> ExperimentSpec {
    let dim = a.dim();
    let (values, vectors) = hermitian_eigen(a.matrix());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match clusters.last_mut() {
            Some(c) if values[*c.last().unwrap()] - values[i] <= tol => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    for pair in clusters.windows(2) {
        let gap = values[*pair[0].last().unwrap()] - values[pair[1][0]];
        if gap < 10.0 * tol {
            log::warn!("eigenvalue clusters separated by {gap:e} < 10 tol; grouping is ambiguous");
        }
    }

    let outcomes = clusters
        .iter()
        .enumerate()
        .map(|(k, members)| {
            let mut p = CMatrix::zeros(dim, dim);
            for &i in members {
                let v = vectors.column(i);
                p += &v * v.adjoint();
            }
            let p = (&p + p.adjoint()) * Complex64::new(0.5, 0.0);
            let lambda = members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64;
            ExperimentOutcome::new(format!("e{k}"), p, lambda)
        })
        .collect();
    // eigenvectors from the solver are orthonormal to ~1e-15, so the
    // structural checks hold without re-validation
    ExperimentSpec { dim, outcomes }
}

/// A device coupling the system to a pointer with states
/// `Phi_0` (ready) and `Phi_1..Phi_K` (one per outcome).
#[derive(Debug, Clone)]
pub struct PointerApparatus {
    spec: ExperimentSpec,
    pointer_dim: usize,
    unitary: CMatrix,
}

/// Result of running the pointer model on one initial state.
#[derive(Debug, Clone)]
pub struct PointerOutcome {
    pub final_state: CVector,
    /// `m_a = ||(I (x) |Phi_a><Phi_a|) Psi_f||^2`, in outcome order.
    pub marginals: Vec<f64>,
    /// Weight left on the ready state (zero for a complete experiment).
    pub ready_weight: f64,
}

impl PointerApparatus {
    pub fn new(spec: &ExperimentSpec, pointer_dim: usize) -> Result<Self, FormalismError> {
        let k = spec.outcomes().len();
        if pointer_dim != k + 1 {
            return Err(FormalismError::PointerDimension {
                expected: k + 1,
                got: pointer_dim,
            });
        }
        let dim = spec.dim();
        let total = dim * pointer_dim;
        if total > MAX_COMPOSITE_DIM {
            return Err(FormalismError::TooLarge(total));
        }

        let mut u = CMatrix::zeros(total, total);
        let mut filled = vec![false; total];
        // prescribed isometry: e_i (x) Phi_0  ->  sum_a (P_a e_i) (x) Phi_{a+1}
        for i in 0..dim {
            let col = i * pointer_dim;
            for (a, o) in spec.outcomes().iter().enumerate() {
                for s in 0..dim {
                    u[(s * pointer_dim + a + 1, col)] = o.projection[(s, i)];
                }
            }
            filled[col] = true;
        }
        // orthonormal completion with standard basis candidates
        let mut candidate = 0;
        for col in 0..total {
            if filled[col] {
                continue;
            }
            loop {
                assert!(candidate < total, "basis completion ran out of candidates");
                let mut v = CVector::zeros(total);
                v[candidate] = Complex64::new(1.0, 0.0);
                candidate += 1;
                for _ in 0..2 {
                    for c in (0..total).filter(|&c| filled[c]) {
                        let basis = u.column(c);
                        let overlap = basis.dotc(&v);
                        v -= basis * overlap;
                    }
                }
                let norm = v.norm();
                if norm > 1e-6 {
                    u.set_column(col, &v.unscale(norm));
                    filled[col] = true;
                    break;
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            pointer_dim,
            unitary: u,
        })
    }

    pub fn unitary(&self) -> &CMatrix {
        &self.unitary
    }

    pub fn pointer_dim(&self) -> usize {
        self.pointer_dim
    }

    /// `max |U^dagger U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.unitary.nrows();
        max_abs(&(self.unitary.adjoint() * &self.unitary - CMatrix::identity(n, n)))
    }

    /// `psi (x) Phi_0` in the composite space.
    pub fn initial_state(&self, psi: &StateVec) -> CVector {
        let mut v = CVector::zeros(self.spec.dim() * self.pointer_dim);
        for (i, z) in psi.vector().iter().enumerate() {
            v[i * self.pointer_dim] = *z;
        }
        v
    }

    pub fn apply(&self, psi: &StateVec) -> Result<PointerOutcome, FormalismError> {
        self.spec.check_state(psi)?;
        let final_state = &self.unitary * self.initial_state(psi);
        let weight = |p: usize| -> f64 {
            (0..self.spec.dim())
                .map(|s| final_state[s * self.pointer_dim + p].norm_sqr())
                .sum()
        };
        let marginals = (1..self.pointer_dim).map(weight).collect();
        let ready_weight = weight(0);
        Ok(PointerOutcome {
            final_state,
            marginals,
            ready_weight,
        })
    }
}

/// Runs the pointer model with a pointer of dimension `K + 1`.
pub fn pointer_model(psi: &StateVec, spec: &ExperimentSpec) -> Result<PointerOutcome, FormalismError> {
    PointerApparatus::new(spec, spec.outcomes().len() + 1)?.apply(psi)
}

/// `P_a psi / ||P_a psi||`, the state after outcome `a` was registered.
pub fn collapse(psi: &StateVec, spec: &ExperimentSpec, outcome: usize) -> Result<Option<StateVec>, FormalismError> {
    spec.check_state(psi)?;
    let projected = &spec.outcomes()[outcome].projection * psi.vector();
    let norm = projected.norm();
    if norm == 0.0 {
        return Ok(None);
    }
    Ok(Some(StateVec { v: projected.unscale(norm) }))
}

/// True iff, for every outcome with nonzero probability, repeating the
/// experiment on the collapsed state yields that outcome with probability 1.
pub fn reproducibility_check(psi: &StateVec, spec: &ExperimentSpec) -> Result<bool, FormalismError> {
    Ok(reproducibility_defect(psi, spec)? <= STRUCTURE_TOL)
}

/// Largest `|1 - p_a(repeat)|` over outcomes that can occur.
pub fn reproducibility_defect(psi: &StateVec, spec: &ExperimentSpec) -> Result<f64, FormalismError> {
    let mut worst: f64 = 0.0;
    for a in 0..spec.outcomes().len() {
        if let Some(post) = collapse(psi, spec, a)? {
            let p = born_probabilities(&post, spec)?;
            worst = worst.max((1.0 - p[a]).abs());
        }
    }
    Ok(worst)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-ish random unitary from the QR factorization of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng));
    g.qr().q()
}

pub fn random_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> StateVec {
    let v = CVector::from_fn(dim, |_, _| complex_gaussian(rng));
    StateVec::normalized(v).expect("gaussian vector is nonzero")
}

/// Random valid experiment on `C^dim` with `outcomes` outcomes (each of rank
/// at least one) and standard-normal calibrations. Requires
/// `1 <= outcomes <= dim`.
pub fn random_experiment<R: Rng + ?Sized>(rng: &mut R, dim: usize, outcomes: usize) -> ExperimentSpec {
    assert!(outcomes >= 1 && outcomes <= dim);
    let u = random_unitary(rng, dim);
    // every outcome owns one column; the rest are assigned at random
    let mut owner: Vec<usize> = (0..dim).map(|c| if c < outcomes { c } else { rng.gen_range(0..outcomes) }).collect();
    for i in (1..dim).rev() {
        let j = rng.gen_range(0..=i);
        owner.swap(i, j);
    }
    let parts = (0..outcomes)
        .map(|a| {
            let mut p = CMatrix::zeros(dim, dim);
            for c in (0..dim).filter(|&c| owner[c] == a) {
                let v = u.column(c);
                p += &v * v.adjoint();
            }
            let p = (&p + p.adjoint()) * Complex64::new(0.5, 0.0);
            ExperimentOutcome::new(format!("o{a}"), p, rng.sample(StandardNormal))
        })
        .collect();
    ExperimentSpec::new(dim, parts).expect("random experiment is a valid experiment")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn sigma_z_observable() {
        let a = build_observable(&ExperimentSpec::sigma_z(1.0));
        let expected = CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        assert_eq!(a.matrix(), &expected);
        let half = build_observable(&ExperimentSpec::sigma_z(0.5));
        assert_eq!(half.matrix(), &(expected * c(0.5)));
    }

    #[test]
    fn constant_calibration_gives_multiple_of_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_experiment(&mut rng, 4, 3);
        let flat: Vec<ExperimentOutcome> = spec
            .outcomes()
            .iter()
            .map(|o| ExperimentOutcome::new(o.label.clone(), o.projection.clone(), 2.5))
            .collect();
        let spec = ExperimentSpec::new(4, flat).unwrap();
        let a = build_observable(&spec);
        assert!(max_abs(&(a.matrix() - CMatrix::identity(4, 4) * c(2.5))) < 1e-12);
    }

    #[test]
    fn born_and_expectation_on_qubit() {
        let spec = ExperimentSpec::sigma_z(1.0);
        let psi = StateVec::from_reals(&[0.6, 0.8]).unwrap();
        let p = born_probabilities(&psi, &spec).unwrap();
        assert!((p[0] - 0.36).abs() < 1e-15 && (p[1] - 0.64).abs() < 1e-15);
        assert!((expectation(&psi, &spec).unwrap() + 0.28).abs() < 1e-15);
        let up = StateVec::from_reals(&[1.0, 0.0]).unwrap();
        assert_eq!(born_probabilities(&up, &spec).unwrap(), vec![1.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVec::from_reals(&[h, h]).unwrap();
        assert!(expectation(&plus, &spec).unwrap().abs() < 1e-15);
    }

    #[test]
    fn invalid_specs_are_reported() {
        let not_idem = CMatrix::from_row_slice(2, 2, &[c(0.5), c(0.0), c(0.0), c(0.0)]);
        let rest = CMatrix::from_row_slice(2, 2, &[c(0.5), c(0.0), c(0.0), c(1.0)]);
        let err = ExperimentSpec::new(
            2,
            vec![ExperimentOutcome::new("a", not_idem, 1.0), ExperimentOutcome::new("b", rest, -1.0)],
        )
        .unwrap_err();
        assert!(matches!(err, FormalismError::InvalidOutcome { ref label, .. } if label == "a"));

        let up = ExperimentSpec::sigma_z(1.0).outcomes()[0].projection.clone();
        let err = ExperimentSpec::new(2, vec![ExperimentOutcome::new("up", up.clone(), 1.0)]).unwrap_err();
        assert!(matches!(err, FormalismError::Incomplete(_)));

        let err = ExperimentSpec::new(
            2,
            vec![
                ExperimentOutcome::new("x", up.clone(), 1.0),
                ExperimentOutcome::new("y", up, 1.0),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, FormalismError::NotOrthogonal { .. }));
    }

    #[test]
    fn decompose_sigma_z_and_identity() {
        let sz = build_observable(&ExperimentSpec::sigma_z(1.0));
        let spec = spectral_decompose(&sz, default_tolerance(&sz));
        assert_eq!(spec.calibrations().len(), 2);
        assert!((spec.calibrations()[0] - 1.0).abs() < 1e-14);
        assert!((spec.calibrations()[1] + 1.0).abs() < 1e-14);
        let sz = ExperimentSpec::sigma_z(1.0);
        let up = &sz.outcomes()[0].projection;
        assert!(max_abs(&(&spec.outcomes()[0].projection - up)) < 1e-14);

        let ci = HermitianOp::new(CMatrix::identity(3, 3) * c(-0.7)).unwrap();
        let spec = spectral_decompose(&ci, default_tolerance(&ci));
        assert_eq!(spec.outcomes().len(), 1);
        assert!((spec.calibrations()[0] + 0.7).abs() < 1e-14);
        assert!(max_abs(&(&spec.outcomes()[0].projection - CMatrix::identity(3, 3))) < 1e-13);
    }

    #[test]
    fn pointer_model_eigenstate_is_product() {
        let spec = ExperimentSpec::sigma_z(1.0);
        let down = StateVec::from_reals(&[0.0, 1.0]).unwrap();
        let out = pointer_model(&down, &spec).unwrap();
        // psi (x) Phi_2 with Phi_2 the "down" pointer state: index 1 * 3 + 2
        let mut expected = CVector::zeros(6);
        expected[5] = c(1.0);
        assert!((&out.final_state - expected).norm() < 1e-15);
        assert_eq!(out.marginals, vec![0.0, 1.0]);
    }

    #[test]
    fn pointer_model_marginals_and_unitarity() {
        let spec = ExperimentSpec::sigma_z(1.0);
        let psi = StateVec::from_reals(&[0.6, 0.8]).unwrap();
        let app = PointerApparatus::new(&spec, 3).unwrap();
        assert!(app.unitarity_error() < 1e-12);
        let out = app.apply(&psi).unwrap();
        assert!((out.marginals[0] - 0.36).abs() < 1e-12);
        assert!((out.marginals[1] - 0.64).abs() < 1e-12);
        assert!(out.ready_weight < 1e-24);
    }

    #[test]
    fn pointer_dimension_is_checked() {
        let spec = ExperimentSpec::sigma_z(1.0);
        assert_eq!(
            PointerApparatus::new(&spec, 2).unwrap_err(),
            FormalismError::PointerDimension { expected: 3, got: 2 }
        );
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let big = random_experiment(&mut rng, 16, 4);
        assert_eq!(PointerApparatus::new(&big, 5).unwrap_err(), FormalismError::TooLarge(80));
    }

    #[test]
    fn repeat_after_collapse() {
        let spec = ExperimentSpec::sigma_z(1.0);
        let psi = StateVec::from_reals(&[0.6, 0.8]).unwrap();
        let post = collapse(&psi, &spec, 0).unwrap().unwrap();
        assert!((post.vector() - CVector::from_vec(vec![c(1.0), c(0.0)])).norm() < 1e-15);
        assert_eq!(born_probabilities(&post, &spec).unwrap(), vec![1.0, 0.0]);
        assert!(reproducibility_check(&psi, &spec).unwrap());
    }

    #[test]
    fn state_dimension_mismatch() {
        let spec = ExperimentSpec::sigma_z(1.0);
        let psi = StateVec::from_reals(&[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            born_probabilities(&psi, &spec),
            Err(FormalismError::DimensionMismatch { .. })
        ));
    }
}
