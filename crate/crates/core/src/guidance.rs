//! The guiding velocity field `v = Im(psi^dagger d_x psi) / (psi^dagger psi)`
//! and RK4 trajectory integration against a recorded wave timeline.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::equilibrium::ks_distance;
use crate::grid::{Configuration, Grid1D, GridError, SpinorField};
use crate::spectral::Spectral;
use crate::stern_gerlach::Outcome;

/// Relative density below which the velocity denominator is clamped.
pub const NODE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("initial position {q} lies outside [{x_min}, {x_max})")]
    OutsideDomain { q: f64, x_min: f64, x_max: f64 },
    #[error("trajectory step must be positive and at most the record spacing {spacing}, got {dt}")]
    BadStep { dt: f64, spacing: f64 },
    #[error("timeline needs at least two frames with increasing record times")]
    TimelineTooShort,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Recorded wave functions at uniformly spaced times `t0 + i * record_dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveTimeline {
    t0: f64,
    record_dt: f64,
    frames: Vec<SpinorField>,
    boundary_mass_max: f64,
}

impl WaveTimeline {
    pub fn new(
        t0: f64,
        record_dt: f64,
        frames: Vec<SpinorField>,
        boundary_mass_max: f64,
    ) -> Result<Self, GridError> {
        if let Some(first) = frames.first() {
            if frames.iter().any(|f| !f.grid().same_as(first.grid())) {
                return Err(GridError::GridMismatch);
            }
        }
        Ok(Self {
            t0,
            record_dt,
            frames,
            boundary_mass_max,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn record_dt(&self) -> f64 {
        self.record_dt
    }

    pub fn frames(&self) -> &[SpinorField] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.record_dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.frames.len()).map(|i| self.time(i)).collect()
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.frames.len().saturating_sub(1))
    }

    pub fn initial(&self) -> &SpinorField {
        &self.frames[0]
    }

    pub fn last(&self) -> &SpinorField {
        self.frames.last().expect("timeline has no frames")
    }

    pub fn grid(&self) -> &Grid1D {
        self.frames[0].grid()
    }

    /// Largest mass seen in the boundary strip during the run.
    pub fn boundary_mass_max(&self) -> f64 {
        self.boundary_mass_max
    }

    /// Time-reversed history: frames in reverse order and complex conjugated,
    /// so that the velocity field changes sign while densities are kept.
    pub fn time_reversed(&self) -> Self {
        Self {
            t0: 0.0,
            record_dt: self.record_dt.abs(),
            frames: self.frames.iter().rev().map(|f| f.conj()).collect(),
            boundary_mass_max: self.boundary_mass_max,
        }
    }
}

/// Per-grid-point density and current of one frame, plus its node threshold.
#[derive(Debug, Clone)]
struct FluxFrame {
    // (rho, j) interleaved for locality
    rho_current: Vec<[f64; 2]>,
    epsilon: f64,
}

impl FluxFrame {
    fn from_field(psi: &SpinorField, spectral: &Spectral) -> Self {
        let d1 = spectral.derivative(psi.comp1());
        let d2 = spectral.derivative(psi.comp2());
        let rho_current: Vec<[f64; 2]> = psi
            .comp1()
            .iter()
            .zip(psi.comp2())
            .zip(d1.iter().zip(&d2))
            .map(|((u, d), (du, dd))| {
                let rho = u.norm_sqr() + d.norm_sqr();
                let current = (u.conj() * du + d.conj() * dd).im;
                [rho, current]
            })
            .collect();
        let max_rho = rho_current.iter().map(|p| p[0]).fold(0.0, f64::max);
        Self {
            rho_current,
            epsilon: NODE_EPSILON * max_rho,
        }
    }

    /// Four-point Lagrange interpolation of `(rho, j)` at offset `u = (q - x_min)/dx`.
    fn at(&self, u: f64) -> [f64; 2] {
        let n = self.rho_current.len();
        let base = u.floor();
        let s = u - base;
        let j = base as isize;
        let w = [
            -s * (s - 1.0) * (s - 2.0) / 6.0,
            (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
            -(s + 1.0) * s * (s - 2.0) / 2.0,
            (s + 1.0) * s * (s - 1.0) / 6.0,
        ];
        let mut out = [0.0; 2];
        for (o, wk) in w.iter().enumerate() {
            let idx = (j - 1 + o as isize).rem_euclid(n as isize) as usize;
            let p = self.rho_current[idx];
            out[0] += wk * p[0];
            out[1] += wk * p[1];
        }
        out
    }
}

fn regularized_velocity(rho: f64, current: f64, epsilon: f64, v_max: f64) -> f64 {
    if rho < epsilon {
        (current / epsilon).clamp(-v_max, v_max)
    } else {
        current / rho
    }
}

/// Guidance data for a whole timeline: densities and currents, linearly
/// interpolated in time and cubically in space.
#[derive(Debug, Clone)]
pub struct GuidanceField {
    grid: Grid1D,
    t0: f64,
    record_dt: f64,
    frames: Vec<FluxFrame>,
    v_max: f64,
}

impl GuidanceField {
    pub fn from_timeline(timeline: &WaveTimeline) -> Result<Self, GuidanceError> {
        if timeline.len() < 2 || !(timeline.record_dt() > 0.0) {
            return Err(GuidanceError::TimelineTooShort);
        }
        let grid = *timeline.grid();
        let spectral = Spectral::new(&grid);
        let frames = timeline
            .frames()
            .par_iter()
            .map(|f| FluxFrame::from_field(f, &spectral))
            .collect();
        Ok(Self {
            grid,
            t0: timeline.t0(),
            record_dt: timeline.record_dt(),
            frames,
            v_max: grid.k_max() / 2.0,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn record_dt(&self) -> f64 {
        self.record_dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.frames.len())
            .map(|i| self.t0 + i as f64 * self.record_dt)
            .collect()
    }

    /// Velocity at time `t` and position `q`.
    pub fn velocity(&self, t: f64, q: f64) -> f64 {
        let u = (self.grid.wrap(q) - self.grid.x_min()) / self.grid.dx();
        let last = self.frames.len() - 2;
        let tau = (t - self.t0) / self.record_dt;
        let f = (tau.floor().max(0.0) as usize).min(last);
        let s = tau - f as f64;
        let a = self.frames[f].at(u);
        let b = self.frames[f + 1].at(u);
        let rho = (1.0 - s) * a[0] + s * b[0];
        let current = (1.0 - s) * a[1] + s * b[1];
        let epsilon = (1.0 - s) * self.frames[f].epsilon + s * self.frames[f + 1].epsilon;
        regularized_velocity(rho, current, epsilon, self.v_max)
    }

    fn check_start(&self, q0: f64) -> Result<(), GuidanceError> {
        if !self.grid.contains(q0) || !q0.is_finite() {
            return Err(GuidanceError::OutsideDomain {
                q: q0,
                x_min: self.grid.x_min(),
                x_max: self.grid.x_max(),
            });
        }
        Ok(())
    }

    fn substeps(&self, dt_traj: f64) -> Result<usize, GuidanceError> {
        if !(dt_traj > 0.0) || dt_traj > self.record_dt * (1.0 + 1e-12) {
            return Err(GuidanceError::BadStep {
                dt: dt_traj,
                spacing: self.record_dt,
            });
        }
        Ok((self.record_dt / dt_traj - 1e-9).ceil().max(1.0) as usize)
    }

    /// Classical RK4 from `q0` over the full timeline span. Positions are
    /// stored at the record times.
    fn path(&self, q0: f64, substeps: usize) -> Vec<f64> {
        let h = self.record_dt / substeps as f64;
        let mut positions = Vec::with_capacity(self.frames.len());
        let mut q = q0;
        positions.push(q);
        for i in 0..self.frames.len() - 1 {
            let t_rec = self.t0 + i as f64 * self.record_dt;
            for k in 0..substeps {
                let t = t_rec + k as f64 * h;
                let k1 = self.velocity(t, q);
                let k2 = self.velocity(t + 0.5 * h, q + 0.5 * h * k1);
                let k3 = self.velocity(t + 0.5 * h, q + 0.5 * h * k2);
                let k4 = self.velocity(t + h, q + h * k3);
                q = self.grid.wrap(q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            }
            positions.push(q);
        }
        positions
    }

    pub fn integrate(&self, q0: f64, dt_traj: f64) -> Result<Trajectory, GuidanceError> {
        self.check_start(q0)?;
        let substeps = self.substeps(dt_traj)?;
        Ok(Trajectory {
            times: self.times().into(),
            positions: self.path(q0, substeps),
            outcome: None,
        })
    }

    /// Integrates many trajectories in parallel. The output order matches
    /// `starts` and each trajectory is computed independently, so the result
    /// does not depend on the number of worker threads.
    pub fn integrate_all(&self, starts: &[f64], dt_traj: f64) -> Result<Vec<Trajectory>, GuidanceError> {
        for &q0 in starts {
            self.check_start(q0)?;
        }
        let substeps = self.substeps(dt_traj)?;
        let times: Arc<[f64]> = self.times().into();
        Ok(starts
            .par_iter()
            .map(|&q0| Trajectory {
                times: Arc::clone(&times),
                positions: self.path(q0, substeps),
                outcome: None,
            })
            .collect())
    }
}

/// A Bohmian trajectory sampled at the timeline's record times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Arc<[f64]>,
    pub positions: Vec<f64>,
    pub outcome: Option<Outcome>,
}

impl Trajectory {
    pub fn q0(&self) -> f64 {
        self.positions[0]
    }

    pub fn q_final(&self) -> f64 {
        *self.positions.last().expect("trajectory has no positions")
    }
}

/// A seeded set of trajectories integrated against one timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    /// Plane of mirror symmetry of the generating wave function, if any.
    pub mirror_plane: Option<f64>,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn final_positions(&self) -> Vec<f64> {
        self.trajectories.iter().map(Trajectory::q_final).collect()
    }
}

/// Guiding velocity of a single field at `q`.
pub fn velocity(psi: &SpinorField, q: f64) -> f64 {
    let grid = psi.grid();
    let frame = FluxFrame::from_field(psi, &Spectral::new(grid));
    let u = (grid.wrap(q) - grid.x_min()) / grid.dx();
    let [rho, current] = frame.at(u);
    regularized_velocity(rho, current, frame.epsilon, grid.k_max() / 2.0)
}

/// Velocity on every grid point (no interpolation).
pub fn velocity_on_grid(psi: &SpinorField) -> Vec<f64> {
    let grid = psi.grid();
    let frame = FluxFrame::from_field(psi, &Spectral::new(grid));
    frame
        .rho_current
        .iter()
        .map(|p| regularized_velocity(p[0], p[1], frame.epsilon, grid.k_max() / 2.0))
        .collect()
}

pub fn integrate(timeline: &WaveTimeline, q0: f64, dt_traj: f64) -> Result<Trajectory, GuidanceError> {
    GuidanceField::from_timeline(timeline)?.integrate(q0, dt_traj)
}

/// Transports `samples` to the end of the timeline and returns the KS
/// distance between their final positions and `|psi_T|^2`.
pub fn equivariance_check(
    timeline: &WaveTimeline,
    samples: &[Configuration],
    dt_traj: f64,
) -> Result<f64, GuidanceError> {
    let field = GuidanceField::from_timeline(timeline)?;
    let starts: Vec<f64> = samples.iter().map(|c| c.q).collect();
    let finals: Vec<Configuration> = field
        .integrate_all(&starts, dt_traj)?
        .iter()
        .map(|t| Configuration::new(t.q_final()))
        .collect();
    Ok(ks_distance(&finals, timeline.last()))
}
