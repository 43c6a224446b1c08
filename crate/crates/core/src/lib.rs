//! Gauge reduction of constrained Hamiltonian systems through relational
//! observables.
//!
//! The crate flows phase-space points along constraint orbits onto gauge
//! cuts, evaluates reduced Hamiltonians, and computes relational reference
//! frame transformations between frames. Built-in models (relativistic
//! particle, Kepler problem, a linear toy, generic energy-constrained
//! mechanics and lattice parametrised field theory) carry closed-form
//! oracles for every map the engine computes.

pub mod error;
pub mod flow;
pub mod gauge;
pub mod models;
pub mod phase;
pub mod relational;
pub mod report;
pub mod rrft;
pub mod run;
pub mod scenario;
pub mod verify;

pub use error::{GaugeError, Result};
pub use flow::{flow, flow_to_cut, trace_orbit, FlowGenerator, FlowOptions, OrbitTrace};
pub use gauge::{
    constraint_residual, gauge_residual, solve_for_momenta, stability_multipliers, BranchSigns,
    ConstraintSystem, FrameTemplate, GaugeClock, GaugeFrame, Sign, StabilityResult,
};
pub use phase::{
    dirac_bracket, gradient, poisson_bracket, CoordinateSplit, PhasePoint, ScalarField,
};
pub use relational::{
    evaluate_observable, evolve_geometric, evolve_hamiltonian, reduced_hamiltonian,
    RelationalObservable, Trajectory,
};
pub use rrft::{
    apply_irft, apply_rrft, check_symplectic, invert_rrft, pullback_hamiltonian, FrameMap,
    FramePair,
};
