//! Lagrangian basis-flow extraction with block-local termination.

pub mod advect;
pub mod bounds;
pub mod domain;
pub mod extract;
pub mod fields;
pub mod ftle;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod reconstruct;
