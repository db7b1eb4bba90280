//! Explicit Weyl-remainder bounds for the Neumann Laplacian on snowflake domains.
//!
//! The crate builds p-Koch snowflakes with certified polygonal error, dyadic
//! Whitney covers, foliated covers of inner ε-neighbourhoods, and assembles
//! the constants of the resulting eigenvalue-counting bounds. A
//! finite-difference eigensolver serves as an independent numerical check.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod point;
pub mod distance;
pub mod ifs_geometry;
pub mod minkowski;
pub mod whitney;
pub mod foliation;
pub mod constants;
pub mod counting;
pub mod eigensolver;

pub use error::{Error, Result};
pub use point::{Aabb, Point};
