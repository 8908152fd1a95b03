//! Cheap semantic segmentation: texton forests, decorrelated specialist
//! forests, context-sensitive image-level priors, location potentials and a
//! Potts CRF solved by alpha-expansion.

pub mod bundle;
pub mod codec;
pub mod config;
pub mod crf;
pub mod dataset;
pub mod dstf;
pub mod error;
pub mod eval;
pub mod features;
pub mod ilp;
pub mod image;
pub mod instrument;
pub mod location;
pub mod matrix;
pub mod par;
pub mod pipeline;
pub mod pnm;
pub mod stf;

pub use error::{Error, Result};
