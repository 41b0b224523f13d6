//! Simulation and analysis of a one-degree-of-freedom parallel-plate MEMS
//! oscillator driven by an AC-DC voltage.
//!
//! * [`model`]: the dimensionless equation of motion and parameter scaling.
//! * [`integrator`]: adaptive DOP853 stepping with pull-in/escape events.
//! * [`thresholds`]: closed-form existence, amplitude and pull-in criteria.
//! * [`poincare`]: the stroboscopic map, periodic orbits and their multipliers.
//! * [`basins`]: grid classification of initial conditions.
//! * [`continuation`]: tracking orbits in the damping and locating their fold.

pub mod basins;
pub mod continuation;
pub mod error;
pub mod integrator;
pub mod model;
pub mod poincare;
pub mod thresholds;

pub use error::{Error, Result};
pub use integrator::{IntegratorConfig, Integrator, OutcomeKind, TrajectoryOutcome};
pub use model::{ModelParams, PhysicalParams, State, Stiffness};
pub use poincare::{PeriodicOrbit, PoincareMapSpec};
