//! Joint beamforming and element mode switching for a multi-user downlink
//! aided by a reconfigurable distributed antenna and reflecting surface.
//!
//! The solver alternates closed-form WMMSE updates of the active beamformer,
//! a power-iteration update of the reflection phases, and a penalty
//! majorization-minimization update of which surface elements are wired to
//! RF chains. An unrolled fixed-depth variant with a handful of trainable
//! scalars is provided along with a gradient-free trainer.

pub mod active;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mode_switch;
pub mod model;
pub mod parallel;
pub mod passive;
pub mod rng;
pub mod selfcheck;
pub mod solver;
pub mod train;

pub use error::{Error, ParamsError, Result};
pub use model::{ChannelSet, SolverState, SystemConfig};
pub use parallel::Exec;
pub use solver::{solve, IterationTrace, SolveOptions, Variant};
pub use train::TrainableParams;
