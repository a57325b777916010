//! Mixed-dimensional Darcy flow and tracer transport in fractured porous
//! media, with the grids, solvers and metrics of a set of benchmark cases.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod flow;
pub mod geometry;
pub mod mdgrid;
pub mod metrics;
pub mod mshio;
pub mod scalar;
pub mod sparsela;
pub mod transport;
pub mod verify;

pub use scalar::Scalar;

pub type Point = geometry::Point3<f64>;
pub type Grid = mdgrid::MixedDimGrid<f64>;
pub type Csr = sparsela::CsrMatrix<f64>;
