//! Coefficient providers.

pub mod lattice;
pub mod op;
pub mod saw;
pub mod srw;
pub mod synthetic;
