//! Annual average daily truck traffic (AADTT) estimation from a single
//! snapshot of georeferenced truck detections.

pub mod cli;
pub mod counts;
pub mod detect;
pub mod error;
pub mod estimate;
pub mod factors;
pub mod geo;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod validate;

pub use error::Error;
