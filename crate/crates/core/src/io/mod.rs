//! Reading and writing arrays: a bit-exact native container, 32-bit float
//! TIFF stacks and 8-bit PNG heatmaps.

mod heatmap;
mod native;
mod stack;

pub use heatmap::{export_png_heatmap, Colormap};
pub use native::{read_native, write_native, SCHEMA_VERSION};
pub use stack::{read_tiff_stack, write_tiff_stack};
