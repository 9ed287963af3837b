pub mod env;
pub mod error;
pub mod graphical;
pub mod models;
pub mod path;
pub mod rng;
pub mod stats;
pub mod walk;
pub mod analysis;
pub mod config;
pub mod validate;
