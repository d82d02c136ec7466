//! Simulation of long runs of i.i.d. random walks conditioned on the value
//! of their sum (or of the mean of `f` of their summands), with an
//! adaptive-tilting approximation of the run density and a Monte-Carlo
//! certificate for how long a run may be.

pub mod accuracy;
pub mod density;
pub mod error;
pub mod model;
pub mod oracles;
pub mod presets;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod tilted;
pub mod trace;

pub use error::{Error, Result};
