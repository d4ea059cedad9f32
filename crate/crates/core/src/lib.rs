//! Simulation and analysis of two-level-system defects in Josephson junctions.

pub mod analysis;
pub mod config;
pub mod density;
pub mod error;
pub mod field;
pub mod fitting;
pub mod geometry;
pub mod io;
pub mod paper;
pub mod pipeline;
pub mod report;
pub mod spectroscopy;
pub mod tls;

pub use error::{Error, Result};
