//! Numerical laboratory for local Hardy space analysis.

pub mod error;
pub mod grid;

pub use error::{Error, Result};
pub use grid::{Ball, Grid, GridFunction, Point, Region};
pub mod kernels;
pub mod shells;
pub mod operators;
pub mod spaces;
pub mod testfns;
pub mod atoms;
pub mod stats;
pub mod commutators;
pub mod experiment;
