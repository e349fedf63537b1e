//! Minimal convolutional networks that learn the Game of Life update rule.

pub mod cli;
pub mod data;
pub mod error;
pub mod harness;
pub mod life;
pub mod network;
pub mod optim;
pub mod seed;

pub use error::{Error, Result};
pub use life::{step, step_n, Board, PatchClass};
pub use network::{Activation, ArchMode, ModelArch, NetworkParams};
pub use optim::{Algorithm, OptimizerConfig};
