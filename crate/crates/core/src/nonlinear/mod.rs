//! Pseudospectral solver for the transformed nonlinear system on a
//! periodic box.
//!
//! Lattice spectra are discrete, so stable-regime perturbations decay
//! exponentially here, at the rate of the least-damped lattice mode; the
//! algebraic rates on R^3 are checked through the radial linear machinery
//! in [`crate::semigroup`] instead.

mod experiments;
mod grid;
mod stepper;
mod terms;

pub use experiments::{
    lattice_decay_rate, propagate_linear, resonant_mode, run_decay_experiment, run_escape_experiment,
    DecayConfig, DecayReport, EscapeConfig, EscapeReport, EscapeRun, COMPONENT_FLOOR, DECAY_RATE_TOL,
    ESCAPE_SLOPE_TOL, LINEAR_PHASE_TOL,
};
pub use grid::{hermitian_defect, l2_norm, symmetrize, ModeInfo, RealFields, TorusField, TorusGrid, Transformer};
pub use stepper::{join_velocity, split_velocity, Scheme, Solver, StepperConfig, TorusNorms, DEFAULT_CFL};
pub use terms::{nonlinear_terms, Nonlinear, VACUUM_FRACTION};
