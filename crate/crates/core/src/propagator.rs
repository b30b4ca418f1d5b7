//! Strang-split spectral propagation of spinor fields under
//! `H = -1/2 d^2/dx^2 + V(x) + mu B(x).sigma`.

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{GridError, Grid1D, SpinorField};
use crate::guidance::WaveTimeline;
use crate::spectral::Spectral;

/// Largest tolerated boundary mass before a run is declared corrupted by
/// periodic wrap-around.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;

/// Fraction of the domain (split evenly between both ends) watched by the
/// boundary-mass monitor.
pub const BOUNDARY_FRACTION: f64 = 0.05;

/// `max |V_eff| dt` above which a step is considered inaccurate.
pub const ACCURACY_GUARD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("time step must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("{what} has length {got}, grid has {expected} points")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("duration {duration} is not an integer multiple of dt = {dt}")]
    StepCount { duration: f64, dt: f64 },
    #[error("{steps} steps cannot be recorded every {record_every} steps")]
    RecordSpacing { steps: usize, record_every: usize },
    #[error("boundary mass {mass:e} at t = {time} exceeds {BOUNDARY_MASS_LIMIT:e}; enlarge the domain")]
    BoundaryMass { mass: f64, time: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The Pauli matrices in the standard basis `|up> = (1, 0)`, `|down> = (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliMatrices {
    pub sx: [[Complex64; 2]; 2],
    pub sy: [[Complex64; 2]; 2],
    pub sz: [[Complex64; 2]; 2],
}

impl Default for PauliMatrices {
    fn default() -> Self {
        let o = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        Self {
            sx: [[o, one], [one, o]],
            sy: [[o, -i], [i, o]],
            sz: [[one, o], [o, -one]],
        }
    }
}

impl PauliMatrices {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Scalar potential, magnetic field and Pauli coupling on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    pub potential: Vec<f64>,
    pub field: Vec<[f64; 3]>,
    pub mu: f64,
}

impl HamiltonianSpec {
    pub fn free(grid: &Grid1D) -> Self {
        Self {
            potential: vec![0.0; grid.n()],
            field: vec![[0.0; 3]; grid.n()],
            mu: 0.0,
        }
    }

    pub fn with_potential(grid: &Grid1D, v: impl Fn(f64) -> f64) -> Self {
        Self {
            potential: grid.points().map(v).collect(),
            ..Self::free(grid)
        }
    }

    pub fn with_field(grid: &Grid1D, mu: f64, b: impl Fn(f64) -> [f64; 3]) -> Self {
        Self {
            potential: vec![0.0; grid.n()],
            field: grid.points().map(b).collect(),
            mu,
        }
    }

    fn check(&self, grid: &Grid1D) -> Result<(), PropagationError> {
        if self.potential.len() != grid.n() {
            return Err(PropagationError::LengthMismatch {
                what: "potential",
                expected: grid.n(),
                got: self.potential.len(),
            });
        }
        if self.field.len() != grid.n() {
            return Err(PropagationError::LengthMismatch {
                what: "magnetic field",
                expected: grid.n(),
                got: self.field.len(),
            });
        }
        Ok(())
    }

    /// `max_j (|V_j| + |mu| |B_j|)`, the spectral radius bound of `V_eff`.
    pub fn max_local_energy(&self) -> f64 {
        self.potential
            .iter()
            .zip(&self.field)
            .map(|(v, b)| v.abs() + self.mu.abs() * norm3(b))
            .fold(0.0, f64::max)
    }

    /// `H psi` with the kinetic part applied in Fourier space.
    pub fn apply(&self, psi: &SpinorField) -> Result<SpinorField, PropagationError> {
        let grid = *psi.grid();
        self.check(&grid)?;
        let spectral = Spectral::new(&grid);
        let mut t1 = spectral.kinetic(psi.comp1());
        let mut t2 = spectral.kinetic(psi.comp2());
        for j in 0..grid.n() {
            let u = psi.comp1()[j];
            let d = psi.comp2()[j];
            let v = self.potential[j];
            let [bx, by, bz] = self.field[j];
            let m = self.mu;
            // (V + mu B.sigma) (u, d)
            t1[j] += v * u + m * (Complex64::new(bz, 0.0) * u + Complex64::new(bx, -by) * d);
            t2[j] += v * d + m * (Complex64::new(bx, by) * u - Complex64::new(bz, 0.0) * d);
        }
        Ok(SpinorField::new(grid, t1, t2)?)
    }

    /// `<psi, H psi>` (real for Hermitian `H`).
    pub fn energy(&self, psi: &SpinorField) -> Result<f64, PropagationError> {
        let h_psi = self.apply(psi)?;
        Ok(crate::grid::inner_product(psi, &h_psi)?.re)
    }
}

fn norm3(b: &[f64; 3]) -> f64 {
    (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
}

/// `exp(-i (V + mu B.sigma) tau)` as a row-major 2x2 matrix.
fn local_unitary(v: f64, b: &[f64; 3], mu: f64, tau: f64) -> [Complex64; 4] {
    let phase = Complex64::from_polar(1.0, -v * tau);
    let bn = norm3(b);
    if bn == 0.0 || mu == 0.0 {
        let o = Complex64::new(0.0, 0.0);
        return [phase, o, o, phase];
    }
    let theta = mu * bn * tau;
    let (s, c) = theta.sin_cos();
    let (nx, ny, nz) = (b[0] / bn, b[1] / bn, b[2] / bn);
    // cos(theta) I - i sin(theta) n.sigma
    let m00 = Complex64::new(c, -s * nz);
    let m01 = Complex64::new(-s * ny, -s * nx);
    let m10 = Complex64::new(s * ny, -s * nx);
    let m11 = Complex64::new(c, s * nz);
    [phase * m00, phase * m01, phase * m10, phase * m11]
}

/// Precomputed split factors for one `(H, dt)` pair.
#[derive(Debug, Clone)]
pub struct SplitStepPropagator {
    grid: Grid1D,
    spectral: Spectral,
    half_potential: Vec<[Complex64; 4]>,
    kinetic_phase: Vec<Complex64>,
    dt: f64,
}

impl SplitStepPropagator {
    pub fn new(grid: &Grid1D, h: &HamiltonianSpec, dt: f64) -> Result<Self, PropagationError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PropagationError::BadTimeStep(dt));
        }
        Self::signed(grid, h, dt)
    }

    /// Like [`SplitStepPropagator::new`] but accepts `dt < 0` for backward
    /// evolution.
    pub(crate) fn signed(grid: &Grid1D, h: &HamiltonianSpec, dt: f64) -> Result<Self, PropagationError> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(PropagationError::BadTimeStep(dt));
        }
        h.check(grid)?;
        let guard = h.max_local_energy() * dt.abs();
        if guard >= ACCURACY_GUARD {
            log::warn!("max|V_eff| dt = {guard:.3} exceeds the accuracy guard {ACCURACY_GUARD}");
        }
        let spectral = Spectral::new(grid);
        let n = grid.n() as f64;
        let kinetic_phase = spectral
            .wavenumbers()
            .iter()
            .map(|k| Complex64::from_polar(1.0 / n, -0.5 * k * k * dt))
            .collect();
        let half_potential = h
            .potential
            .iter()
            .zip(&h.field)
            .map(|(v, b)| local_unitary(*v, b, h.mu, 0.5 * dt))
            .collect();
        Ok(Self {
            grid: *grid,
            spectral,
            half_potential,
            kinetic_phase,
            dt,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn apply_half_potential(&self, u: &mut [Complex64], d: &mut [Complex64]) {
        for ((a, b), m) in u.iter_mut().zip(d.iter_mut()).zip(&self.half_potential) {
            let (x, y) = (*a, *b);
            *a = m[0] * x + m[1] * y;
            *b = m[2] * x + m[3] * y;
        }
    }

    fn apply_kinetic(&self, f: &mut [Complex64]) {
        self.spectral.forward(f);
        f.iter_mut().zip(&self.kinetic_phase).for_each(|(z, p)| *z *= p);
        self.spectral.inverse_unnormalized(f);
    }

    pub(crate) fn step_in_place(&self, psi: &mut SpinorField) {
        let (u, d) = psi.components_mut();
        self.apply_half_potential(u, d);
        self.apply_kinetic(u);
        self.apply_kinetic(d);
        self.apply_half_potential(u, d);
    }

    pub fn step(&self, psi: &SpinorField) -> Result<SpinorField, PropagationError> {
        if !psi.grid().same_as(&self.grid) {
            return Err(GridError::GridMismatch.into());
        }
        let mut out = psi.clone();
        self.step_in_place(&mut out);
        Ok(out)
    }
}

/// One Strang step `exp(-i V_eff dt/2) exp(-i T dt) exp(-i V_eff dt/2)`.
pub fn step(psi: &SpinorField, h: &HamiltonianSpec, dt: f64) -> Result<SpinorField, PropagationError> {
    SplitStepPropagator::new(psi.grid(), h, dt)?.step(psi)
}

/// A piece of a piecewise-constant-in-time Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub hamiltonian: HamiltonianSpec,
    pub duration: f64,
}

impl Segment {
    pub fn new(hamiltonian: HamiltonianSpec, duration: f64) -> Self {
        Self { hamiltonian, duration }
    }
}

fn step_count(duration: f64, dt: f64) -> Result<usize, PropagationError> {
    let ratio = duration / dt;
    let steps = ratio.round();
    if !(duration > 0.0 && duration.is_finite()) || steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
        return Err(PropagationError::StepCount { duration, dt });
    }
    Ok(steps as usize)
}

/// Mass in the outer `BOUNDARY_FRACTION` of the domain.
pub fn boundary_mass(psi: &SpinorField) -> f64 {
    let n = psi.grid().n();
    let edge = ((n as f64) * BOUNDARY_FRACTION / 2.0).ceil() as usize;
    let rho = psi.density();
    let s: f64 = rho[..edge].iter().chain(&rho[n - edge..]).sum();
    s * psi.grid().dx()
}

fn evolve_signed(
    psi: &SpinorField,
    segments: &[Segment],
    dt: f64,
    record_every: usize,
) -> Result<WaveTimeline, PropagationError> {
    if !(dt.abs() > 0.0 && dt.is_finite()) {
        return Err(PropagationError::BadTimeStep(dt));
    }
    let grid = *psi.grid();
    let mut plan = Vec::with_capacity(segments.len());
    let mut total_steps = 0;
    for seg in segments {
        let steps = step_count(seg.duration, dt.abs())?;
        plan.push((SplitStepPropagator::signed(&grid, &seg.hamiltonian, dt)?, steps));
        total_steps += steps;
    }
    if record_every == 0 || total_steps % record_every != 0 {
        return Err(PropagationError::RecordSpacing {
            steps: total_steps,
            record_every,
        });
    }

    let record_dt = dt * record_every as f64;
    let mut frames = Vec::with_capacity(total_steps / record_every + 1);
    let mut current = psi.clone();
    let mut max_boundary = boundary_mass(&current);
    frames.push(current.clone());
    let mut done = 0usize;
    for (prop, steps) in &plan {
        for _ in 0..*steps {
            prop.step_in_place(&mut current);
            done += 1;
            let mass = boundary_mass(&current);
            max_boundary = max_boundary.max(mass);
            if mass > BOUNDARY_MASS_LIMIT {
                return Err(PropagationError::BoundaryMass {
                    mass,
                    time: done as f64 * dt,
                });
            }
            if done % record_every == 0 {
                frames.push(current.clone());
            }
        }
    }
    Ok(WaveTimeline::new(0.0, record_dt, frames, max_boundary)?)
}

/// Evolves under a time-independent `H` for `t_total`, recording every
/// `record_every` steps.
pub fn evolve(
    psi: &SpinorField,
    h: &HamiltonianSpec,
    t_total: f64,
    dt: f64,
    record_every: usize,
) -> Result<WaveTimeline, PropagationError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PropagationError::BadTimeStep(dt));
    }
    evolve_signed(psi, &[Segment::new(h.clone(), t_total)], dt, record_every)
}

/// Evolves through consecutive segments, each with its own Hamiltonian.
pub fn evolve_piecewise(
    psi: &SpinorField,
    segments: &[Segment],
    dt: f64,
    record_every: usize,
) -> Result<WaveTimeline, PropagationError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PropagationError::BadTimeStep(dt));
    }
    evolve_signed(psi, segments, dt, record_every)
}

/// Evolves backward in time by `t_total` (steps of `-dt`). Record times in the
/// returned timeline are negative.
pub fn evolve_backward(
    psi: &SpinorField,
    h: &HamiltonianSpec,
    t_total: f64,
    dt: f64,
    record_every: usize,
) -> Result<WaveTimeline, PropagationError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(PropagationError::BadTimeStep(dt));
    }
    evolve_signed(psi, &[Segment::new(h.clone(), t_total)], -dt, record_every)
}
