pub mod cert;
pub mod config;
pub mod error;
pub mod game;
pub mod measure;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod sde;
pub mod solver;

pub use error::{Error, Result};
