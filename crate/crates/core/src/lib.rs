//! Building blocks for tomographic reconstruction: labelled data containers
//! with acquisition/image geometry, linear operators with exact adjoints,
//! convex functions with proximal maps, and resumable first-order solvers.

pub mod algorithms;
pub mod containers;
pub mod error;
pub mod fbp;
pub mod functions;
pub mod io;
pub mod operators;
pub mod processors;
pub mod sim;

pub use containers::{
    AcquisitionGeometry, BlockContainer, Data, Geometry, ImageGeometry, LabeledArray, Space,
};
pub use error::{Error, Result};
pub use functions::{Func, FunctionValue};
pub use operators::Operator;
