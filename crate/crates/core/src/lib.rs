//! Pilot-wave simulation of spin-1/2 particles on a periodic line.
//!
//! The crate propagates two-component wave functions with a split-step
//! spectral scheme, transports particle positions along the guidance field,
//! samples quantum equilibrium ensembles, and compares the resulting outcome
//! statistics with the operator formalism. It also ships an exhaustive
//! Peres-Mermin value-assignment search and a batch command-line front end.

pub mod cli;
pub mod equilibrium;
pub mod formalism;
pub mod grid;
pub mod guidance;
pub mod nogo;
pub mod propagator;
pub mod spectral;
pub mod stern_gerlach;

pub use equilibrium::{ks_distance, sample, SeededSampler};
pub use formalism::{build_observable, born_probabilities, expectation, ExperimentOutcome, ExperimentSpec, StateVec};
pub use grid::{gaussian_packet, Configuration, GaussianPacket, Grid1D, SpinorField};
pub use guidance::{GuidanceField, Trajectory, TrajectoryEnsemble, WaveTimeline};
pub use propagator::{evolve, HamiltonianSpec, SplitStepPropagator};
pub use stern_gerlach::{run_sg, Outcome, SgSetup};

/// Version string written into every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
