//! Labelled arrays, geometry descriptors and block containers.

mod array;
mod data;
pub mod geometry;

pub use array::{BinaryOp, LabeledArray, Operand, UnaryFn};
pub use data::{ArraySpace, BlockContainer, Data, Space};
pub use geometry::{
    AcquisitionGeometry, AngleUnit, Angles, BeamType, ConePlacement, Geometry, ImageGeometry,
    Panel, PanelOrigin, ParallelPlacement,
};
