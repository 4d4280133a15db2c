//! Numerical models of a single atom lasing inside a high-finesse optical
//! cavity: operator algebra, master-equation steady states, mean-field
//! equations, two-time correlations and quantum-jump trajectories.

pub mod dynamics;
pub mod error;
pub mod fourstate;
pub mod hilbert;
pub mod liouvillian;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod semiclassical;
pub mod steady;
pub mod symbolic;
pub mod trajectories;
pub mod units;
pub mod zeeman;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
