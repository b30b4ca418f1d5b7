//! A Stern-Gerlach experiment reduced to the deflection axis `z`.
//!
//! The magnet is a time window `[0, tau]` with `H_int = mu * polarity *
//! (b0 + g z) sigma_z` (where `g = +-b_grad` depending on the magnet
//! geometry), followed by free flight for `t_drift`. Outcomes are read off the
//! final particle position: `z > z_det` registers in the upper detector,
//! `z < -z_det` in the lower one, anything in between is the null outcome.
//!
//! The calibration attaches a number to each detector. The operator that the
//! experiment defines is `lambda_upper P_(branch reaching upper) +
//! lambda_lower P_(other branch)`, which is `sigma_z` for the default
//! calibrations of both field polarities.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{self, mean_and_stderr, sample, SamplingError};
use crate::formalism::{self, CMatrix, ExperimentOutcome, ExperimentSpec, StateVec};
use crate::grid::{gaussian_packet, GaussianPacket, Grid1D, GridError, SpinorField};
use crate::guidance::{GuidanceError, GuidanceField, TrajectoryEnsemble, WaveTimeline};
use crate::propagator::{evolve_piecewise, HamiltonianSpec, PropagationError, Segment};

/// Largest null fraction accepted before the detector layout is rejected.
pub const MAX_NULL_FRACTION: f64 = 0.05;

/// Number of final-state widths kept between a branch center and its detector edge.
pub const DETECTOR_MARGIN_SIGMAS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgError {
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
    #[error("spinor coefficients must satisfy |a|^2 + |b|^2 = 1, got {0}")]
    SpinorNorm(f64),
    #[error("incoming packet must be centered at 0 with zero mean momentum")]
    PacketNotCentered,
    #[error("null fraction {fraction:.4} exceeds {MAX_NULL_FRACTION}; detectors do not fit tau, gradient and drift")]
    NullFraction { fraction: f64 },
    #[error("configuration is not mirror symmetric: {0}")]
    NotSymmetric(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Which detector (if any) registered the particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Up,
    Down,
    Null,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Up => "up",
            Outcome::Down => "down",
            Outcome::Null => "null",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    Normal,
    Reversed,
}

impl Polarity {
    pub fn sign(&self) -> f64 {
        match self {
            Polarity::Normal => 1.0,
            Polarity::Reversed => -1.0,
        }
    }

    pub fn flipped(&self) -> Self {
        match self {
            Polarity::Normal => Polarity::Reversed,
            Polarity::Reversed => Polarity::Normal,
        }
    }
}

/// How the reversed experiment of the contextuality demonstration is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reversal {
    /// Flip the field polarity.
    Polarity,
    /// Flip the magnet geometry (`b_grad -> -b_grad`), keeping polarity.
    Geometry,
}

/// Discretization used to simulate a setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgNumerics {
    pub grid: Grid1D,
    pub dt: f64,
    pub record_every: usize,
    pub dt_traj: f64,
}

impl Default for SgNumerics {
    fn default() -> Self {
        let dt = 0.0025;
        let record_every = 4;
        Self {
            grid: Grid1D::new(1024, -32.0, 32.0).expect("default grid is valid"),
            dt,
            record_every,
            dt_traj: dt * record_every as f64 / 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgSetup {
    pub b0: f64,
    pub b_grad: f64,
    pub mu: f64,
    pub tau: f64,
    pub t_drift: f64,
    pub z_det: f64,
    pub polarity: Polarity,
    pub geometry_reversed: bool,
    /// Calibration of the upper detector.
    pub calibration_up: f64,
    /// Calibration of the lower detector.
    pub calibration_down: f64,
    pub numerics: SgNumerics,
}

impl Default for SgSetup {
    /// `sigma_0 = 1` incoming packet, momentum kick `|mu b_grad tau| = 4`,
    /// `t_drift = 3`, detector edges three final widths inside the branch
    /// centers.
    fn default() -> Self {
        let mut setup = Self {
            b0: 0.0,
            b_grad: 4.0,
            mu: -1.0,
            tau: 1.0,
            t_drift: 3.0,
            z_det: 0.0,
            polarity: Polarity::Normal,
            geometry_reversed: false,
            calibration_up: 1.0,
            calibration_down: -1.0,
            numerics: SgNumerics::default(),
        };
        setup.z_det = setup.auto_detector_edge(1.0);
        setup
    }
}

impl SgSetup {
    /// Gradient actually applied, including polarity and geometry.
    pub fn effective_gradient(&self) -> f64 {
        let geometry = if self.geometry_reversed { -1.0 } else { 1.0 };
        self.polarity.sign() * geometry * self.b_grad
    }

    pub fn effective_offset(&self) -> f64 {
        self.polarity.sign() * self.b0
    }

    /// Acceleration of the `|up>` branch inside the magnet, `-mu g`.
    pub fn up_acceleration(&self) -> f64 {
        -self.mu * self.effective_gradient()
    }

    /// `+1` if the `|up>` branch is deflected toward `+z`, `-1` otherwise.
    pub fn up_deflection_sign(&self) -> f64 {
        self.up_acceleration().signum()
    }

    /// Center of the upper branch at the end of the run for a packet at rest.
    pub fn branch_center(&self) -> f64 {
        let a = self.up_acceleration().abs();
        0.5 * a * self.tau * self.tau + a * self.tau * self.t_drift
    }

    pub fn total_time(&self) -> f64 {
        self.tau + self.t_drift
    }

    /// Detector edge `branch_center - 3 sigma(T)` for an incoming width `sigma0`.
    pub fn auto_detector_edge(&self, sigma0: f64) -> f64 {
        let t = self.total_time();
        let width = sigma0 * (1.0 + (t / (2.0 * sigma0 * sigma0)).powi(2)).sqrt();
        (self.branch_center() - DETECTOR_MARGIN_SIGMAS * width).max(0.0)
    }

    /// Default calibrations: `+1` on the detector reached by `|up>`.
    pub fn with_default_calibration(mut self) -> Self {
        let s = self.up_deflection_sign();
        self.calibration_up = s;
        self.calibration_down = -s;
        self
    }

    /// The mirrored experiment: polarity or geometry flipped, calibration
    /// flipped with it.
    pub fn reversed(&self, how: Reversal) -> Self {
        let mut out = *self;
        match how {
            Reversal::Polarity => out.polarity = self.polarity.flipped(),
            Reversal::Geometry => out.geometry_reversed = !self.geometry_reversed,
        }
        out.calibration_up = -self.calibration_up;
        out.calibration_down = -self.calibration_down;
        out
    }

    pub fn validate(&self) -> Result<(), SgError> {
        let bad = |m: &str| Err(SgError::InvalidSetup(m.to_string()));
        let finite = [
            self.b0,
            self.b_grad,
            self.mu,
            self.tau,
            self.t_drift,
            self.z_det,
            self.calibration_up,
            self.calibration_down,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if self.tau <= 0.0 {
            return bad("tau must be positive");
        }
        if self.t_drift < 0.0 {
            return bad("t_drift must be non-negative");
        }
        if self.z_det < 0.0 {
            return bad("z_det must be non-negative");
        }
        if self.up_acceleration() == 0.0 {
            return bad("mu * b_grad must be nonzero for the beam to split");
        }
        if self.z_det >= self.numerics.grid.x_max() || -self.z_det <= self.numerics.grid.x_min() {
            return bad("detector edge lies outside the simulation domain");
        }
        Ok(())
    }

    /// Interaction Hamiltonian inside the magnet.
    pub fn interaction(&self) -> HamiltonianSpec {
        let (b0, g) = (self.effective_offset(), self.effective_gradient());
        HamiltonianSpec::with_field(&self.numerics.grid, self.mu, |z| [0.0, 0.0, b0 + g * z])
    }

    pub fn classify(&self, z: f64) -> Outcome {
        if z > self.z_det {
            Outcome::Up
        } else if z < -self.z_det {
            Outcome::Down
        } else {
            Outcome::Null
        }
    }

    /// Calibrated value of an outcome; `None` for the null outcome.
    pub fn calibration(&self, outcome: Outcome) -> Option<f64> {
        match outcome {
            Outcome::Up => Some(self.calibration_up),
            Outcome::Down => Some(self.calibration_down),
            Outcome::Null => None,
        }
    }

    /// The abstract experiment on spin space: outcome "up" (upper detector)
    /// projects onto the spin state that is deflected upward.
    pub fn experiment_spec(&self) -> ExperimentSpec {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let p_up_spin = CMatrix::from_row_slice(2, 2, &[one, zero, zero, zero]);
        let p_down_spin = CMatrix::from_row_slice(2, 2, &[zero, zero, zero, one]);
        let (upper, lower) = if self.up_deflection_sign() > 0.0 {
            (p_up_spin, p_down_spin)
        } else {
            (p_down_spin, p_up_spin)
        };
        ExperimentSpec::new(
            2,
            vec![
                ExperimentOutcome::new("up", upper, self.calibration_up),
                ExperimentOutcome::new("down", lower, self.calibration_down),
            ],
        )
        .expect("diagonal projections form a valid experiment")
    }
}

/// Outcome counts and their comparison with the Born rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeStatistics {
    pub n: usize,
    pub count_up: usize,
    pub count_down: usize,
    pub count_null: usize,
    pub freq_up: f64,
    pub freq_down: f64,
    pub freq_null: f64,
    /// `||P_up psi||^2` for the upper detector.
    pub p_up: f64,
    pub p_down: f64,
    /// Mean calibrated value over non-null outcomes and its standard error.
    pub calibrated_mean: f64,
    pub calibrated_stderr: f64,
    /// `<psi, A psi>`.
    pub expectation: f64,
    /// `int |psi_1| |psi_2| dx` at detection time.
    pub branch_overlap: f64,
    pub boundary_mass_max: f64,
}

impl OutcomeStatistics {
    /// `3 sqrt(p (1 - p) / n)` around `p_up`.
    pub fn born_band(&self) -> f64 {
        3.0 * (self.p_up * (1.0 - self.p_up) / self.n as f64).sqrt()
    }

    pub fn born_agrees(&self) -> bool {
        (self.freq_up - self.p_up).abs() <= self.born_band()
    }

    pub fn mean_agrees(&self) -> bool {
        (self.calibrated_mean - self.expectation).abs() <= 3.0 * self.calibrated_stderr
            || (self.calibrated_stderr == 0.0 && (self.calibrated_mean - self.expectation).abs() < 1e-12)
    }
}

/// Result of [`run_sg`].
#[derive(Debug, Clone)]
pub struct SgRun {
    pub statistics: OutcomeStatistics,
    pub ensemble: TrajectoryEnsemble,
}

fn check_spinor(a: Complex64, b: Complex64) -> Result<(), SgError> {
    let norm = a.norm_sqr() + b.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(SgError::SpinorNorm(norm));
    }
    Ok(())
}

/// A setup with its wave evolution already computed, reusable for ensembles
/// and outcome maps.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    setup: SgSetup,
    a: Complex64,
    b: Complex64,
    timeline: WaveTimeline,
    field: GuidanceField,
    mirror_plane: Option<f64>,
}

impl PreparedExperiment {
    pub fn new(setup: &SgSetup, a: Complex64, b: Complex64, packet: &GaussianPacket) -> Result<Self, SgError> {
        setup.validate()?;
        check_spinor(a, b)?;
        if !packet.is_even() {
            return Err(SgError::PacketNotCentered);
        }
        let grid = setup.numerics.grid;
        let psi0 = gaussian_packet(&grid, packet.center, packet.sigma, packet.k, a, b)?;
        let mut segments = vec![Segment::new(setup.interaction(), setup.tau)];
        if setup.t_drift > 0.0 {
            segments.push(Segment::new(HamiltonianSpec::free(&grid), setup.t_drift));
        }
        let timeline = evolve_piecewise(&psi0, &segments, setup.numerics.dt, setup.numerics.record_every)?;
        let field = GuidanceField::from_timeline(&timeline)?;
        let mirror_plane = mirror_symmetry(setup, a, b, packet).ok().map(|_| 0.0);
        Ok(Self {
            setup: *setup,
            a,
            b,
            timeline,
            field,
            mirror_plane,
        })
    }

    pub fn setup(&self) -> &SgSetup {
        &self.setup
    }

    pub fn timeline(&self) -> &WaveTimeline {
        &self.timeline
    }

    pub fn guidance(&self) -> &GuidanceField {
        &self.field
    }

    pub fn mirror_plane(&self) -> Option<f64> {
        self.mirror_plane
    }

    fn spin_state(&self) -> StateVec {
        StateVec::normalized(formalism::CVector::from_vec(vec![self.a, self.b])).expect("spinor is nonzero")
    }

    /// Born probabilities `(p_up, p_down)` for the two detectors.
    pub fn born(&self) -> (f64, f64) {
        let p = formalism::born_probabilities(&self.spin_state(), &self.setup.experiment_spec())
            .expect("dimensions match");
        (p[0], p[1])
    }

    pub fn expectation(&self) -> f64 {
        formalism::expectation(&self.spin_state(), &self.setup.experiment_spec()).expect("dimensions match")
    }

    /// `int |psi_1| |psi_2| dx` on the final field.
    pub fn branch_overlap(&self) -> f64 {
        let last = self.timeline.last();
        let s: f64 = last
            .comp1()
            .iter()
            .zip(last.comp2())
            .map(|(u, d)| u.norm() * d.norm())
            .sum();
        s * last.grid().dx()
    }

    pub fn final_field(&self) -> &SpinorField {
        self.timeline.last()
    }

    /// Samples `n` equilibrium starts, transports them and classifies the
    /// final positions.
    pub fn run(&self, n: usize, seed: u64) -> Result<SgRun, SgError> {
        let starts: Vec<f64> = sample(self.timeline.initial(), n, seed)?.iter().map(|c| c.q).collect();
        let mut trajectories = self.field.integrate_all(&starts, self.setup.numerics.dt_traj)?;
        for t in trajectories.iter_mut() {
            t.outcome = Some(self.setup.classify(t.q_final()));
        }
        let outcomes: Vec<Outcome> = trajectories.iter().filter_map(|t| t.outcome).collect();
        let count = |o: Outcome| outcomes.iter().filter(|&&x| x == o).count();
        let (count_up, count_down, count_null) = (count(Outcome::Up), count(Outcome::Down), count(Outcome::Null));
        let nf = n as f64;
        let freq_null = count_null as f64 / nf;
        if freq_null > MAX_NULL_FRACTION {
            return Err(SgError::NullFraction { fraction: freq_null });
        }
        let values: Vec<f64> = outcomes.iter().filter_map(|&o| self.setup.calibration(o)).collect();
        let (calibrated_mean, calibrated_stderr) = if values.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            mean_and_stderr(&values)
        };
        let (p_up, p_down) = self.born();
        let statistics = OutcomeStatistics {
            n,
            count_up,
            count_down,
            count_null,
            freq_up: count_up as f64 / nf,
            freq_down: count_down as f64 / nf,
            freq_null,
            p_up,
            p_down,
            calibrated_mean,
            calibrated_stderr,
            expectation: self.expectation(),
            branch_overlap: self.branch_overlap(),
            boundary_mass_max: self.timeline.boundary_mass_max(),
        };
        Ok(SgRun {
            statistics,
            ensemble: TrajectoryEnsemble {
                seed,
                trajectories,
                mirror_plane: self.mirror_plane,
            },
        })
    }

    /// `X(q0)`: calibrated outcome of the trajectory started at each `q0`
    /// (`None` for the null outcome).
    pub fn outcome_map(&self, q_grid: &[f64]) -> Result<Vec<Option<f64>>, SgError> {
        let trajectories = self.field.integrate_all(q_grid, self.setup.numerics.dt_traj)?;
        Ok(trajectories
            .par_iter()
            .map(|t| self.setup.calibration(self.setup.classify(t.q_final())))
            .collect())
    }

    /// KS distance between transported equilibrium samples and `|psi_T|^2`.
    pub fn equivariance(&self, n: usize, seed: u64) -> Result<f64, SgError> {
        let samples = sample(self.timeline.initial(), n, seed)?;
        let starts: Vec<f64> = samples.iter().map(|c| c.q).collect();
        let finals: Vec<crate::grid::Configuration> = self
            .field
            .integrate_all(&starts, self.setup.numerics.dt_traj)?
            .iter()
            .map(|t| crate::grid::Configuration::new(t.q_final()))
            .collect();
        Ok(equilibrium::ks_distance(&finals, self.timeline.last()))
    }
}

/// Checks the mirror-symmetry preconditions: no uniform field, even packet,
/// `|a| = |b|`, and a grid symmetric about `z = 0`.
pub fn mirror_symmetry(setup: &SgSetup, a: Complex64, b: Complex64, packet: &GaussianPacket) -> Result<(), SgError> {
    if setup.b0 != 0.0 {
        return Err(SgError::NotSymmetric(format!("uniform field b0 = {} must vanish", setup.b0)));
    }
    if !packet.is_even() {
        return Err(SgError::NotSymmetric("incoming packet must be even".into()));
    }
    if (a.norm() - b.norm()).abs() > 1e-12 {
        return Err(SgError::NotSymmetric(format!("|a| = {} differs from |b| = {}", a.norm(), b.norm())));
    }
    let g = setup.numerics.grid;
    if g.mirror_index(0).is_none() {
        return Err(SgError::NotSymmetric("grid is not symmetric about z = 0".into()));
    }
    Ok(())
}

pub fn run_sg(
    setup: &SgSetup,
    a: Complex64,
    b: Complex64,
    packet: &GaussianPacket,
    n: usize,
    seed: u64,
) -> Result<SgRun, SgError> {
    PreparedExperiment::new(setup, a, b, packet)?.run(n, seed)
}

pub fn outcome_map(
    setup: &SgSetup,
    a: Complex64,
    b: Complex64,
    packet: &GaussianPacket,
    q_grid: &[f64],
) -> Result<Vec<Option<f64>>, SgError> {
    PreparedExperiment::new(setup, a, b, packet)?.outcome_map(q_grid)
}

/// True iff no trajectory changes side of the plane `z = z_sym`. Points
/// within `1e-9` of the plane are ignored. Refuses ensembles that were not
/// generated by a mirror-symmetric configuration with that plane.
pub fn no_crossing_check(ensemble: &TrajectoryEnsemble, z_sym: f64) -> Result<bool, SgError> {
    match ensemble.mirror_plane {
        Some(p) if (p - z_sym).abs() <= 1e-12 => {}
        _ => {
            return Err(SgError::NotSymmetric(format!(
                "ensemble has no mirror symmetry about z = {z_sym}"
            )))
        }
    }
    Ok(ensemble.trajectories.iter().all(|t| {
        let mut side = 0.0;
        for &q in &t.positions {
            let d = q - z_sym;
            if d.abs() < 1e-9 {
                continue;
            }
            if side == 0.0 {
                side = d.signum();
            } else if d.signum() != side {
                return false;
            }
        }
        true
    }))
}

/// Counts trajectories that change side of `z = z_sym` (no precondition).
pub fn crossing_count(ensemble: &TrajectoryEnsemble, z_sym: f64) -> usize {
    ensemble
        .trajectories
        .iter()
        .filter(|t| {
            let mut signs = t.positions.iter().map(|q| q - z_sym).filter(|d| d.abs() >= 1e-9).map(f64::signum);
            match signs.next() {
                Some(first) => signs.any(|s| s != first),
                None => false,
            }
        })
        .count()
}

/// Outcome of the field-reversal comparison.
#[derive(Debug, Clone, Serialize)]
pub struct ContextualityReport {
    pub reversal: Reversal,
    pub q_grid: Vec<f64>,
    pub x_original: Vec<Option<f64>>,
    pub x_reversed: Vec<Option<f64>>,
    /// Non-null points where `X' = -X` holds / fails.
    pub reversed_points: usize,
    pub mismatched_points: usize,
    pub null_points: usize,
    pub statistics_original: OutcomeStatistics,
    pub statistics_reversed: OutcomeStatistics,
    /// Both experiments define the same operator.
    pub same_operator: bool,
    pub pointwise_reversed: bool,
    pub statistics_agree_with_born: bool,
    pub summary: String,
}

/// Runs the experiment `E` (normal polarity, default calibration) and its
/// mirror `E'` (reversed field, calibration flipped) on the same initial
/// state and compares both the outcome maps and the outcome statistics.
#[allow(clippy::too_many_arguments)]
pub fn contextuality_demo(
    setup: &SgSetup,
    a: Complex64,
    b: Complex64,
    packet: &GaussianPacket,
    q_grid: &[f64],
    n: usize,
    seed: u64,
    reversal: Reversal,
) -> Result<ContextualityReport, SgError> {
    mirror_symmetry(setup, a, b, packet)?;
    let mut base = *setup;
    base.polarity = Polarity::Normal;
    base.geometry_reversed = false;
    let base = base.with_default_calibration();
    let mirrored = base.reversed(reversal);

    let e = PreparedExperiment::new(&base, a, b, packet)?;
    let e_prime = PreparedExperiment::new(&mirrored, a, b, packet)?;
    let x_original = e.outcome_map(q_grid)?;
    let x_reversed = e_prime.outcome_map(q_grid)?;

    let mut reversed_points = 0;
    let mut mismatched_points = 0;
    let mut null_points = 0;
    for (x, y) in x_original.iter().zip(&x_reversed) {
        match (x, y) {
            (Some(x), Some(y)) if *y == -*x => reversed_points += 1,
            (Some(_), Some(_)) => mismatched_points += 1,
            _ => null_points += 1,
        }
    }
    let statistics_original = e.run(n, seed)?.statistics;
    let statistics_reversed = e_prime.run(n, seed)?.statistics;

    let a_e = formalism::build_observable(&base.experiment_spec());
    let a_e_prime = formalism::build_observable(&mirrored.experiment_spec());
    let same_operator = (a_e.matrix() - a_e_prime.matrix()).iter().all(|z| z.norm() < 1e-12);

    let pointwise_reversed = mismatched_points == 0 && reversed_points > 0;
    let statistics_agree_with_born = statistics_original.born_agrees() && statistics_reversed.born_agrees();
    let summary = format!(
        "operators: A(E) {} A(E'); outcome maps: X(E') = -X(E) at {}/{} non-null points ({} mismatches, {} null); \
         upper-detector frequency E = {:.4}, E' = {:.4}, Born p = {:.4} (band +-{:.4}): {}",
        if same_operator { "==" } else { "!=" },
        reversed_points,
        reversed_points + mismatched_points,
        mismatched_points,
        null_points,
        statistics_original.freq_up,
        statistics_reversed.freq_up,
        statistics_original.p_up,
        statistics_original.born_band(),
        if statistics_agree_with_born { "both agree" } else { "disagreement" },
    );
    Ok(ContextualityReport {
        reversal,
        q_grid: q_grid.to_vec(),
        x_original,
        x_reversed,
        reversed_points,
        mismatched_points,
        null_points,
        statistics_original,
        statistics_reversed,
        same_operator,
        pointwise_reversed,
        statistics_agree_with_born,
        summary,
    })
}
