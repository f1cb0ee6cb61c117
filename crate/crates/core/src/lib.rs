//! Numerical toolkit for lacunary-polygon bilinear multipliers: periodic grid
//! functions, Whitney decompositions, time-frequency tiles and size audits.

pub mod bilinear;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod interval;
pub mod jet;
pub mod paraproduct;
pub mod records;
pub mod sizes;
pub mod timefreq;

pub use error::{Error, Result};
