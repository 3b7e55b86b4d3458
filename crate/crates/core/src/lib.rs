//! EO-to-SAR ship chip classification: a small hand-written CNN engine,
//! two-phase transfer training, attribute-stratified evaluation and
//! class activation maps.

pub mod cam;
pub mod dataset;
pub mod error;
pub mod cli;
pub mod eval;
pub mod layers;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
