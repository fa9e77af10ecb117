//! Declarative reconstruction pipelines: load → preprocess → reconstruct →
//! evaluate → export, driven by a TOML config.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{load, parse, PipelineConfig};
pub use error::CliError;
pub use pipeline::{run, run_with_threads, PipelineResult};
pub use report::describe_geometry;

pub const FORMATS: &str = "\
native  read/write  header-prefixed JSON + little-endian f64 payload, CRC32-checked, geometry kept
tiff    read/write  one 32-bit float grayscale image per index, <prefix>_<index:04>.tiff
png     write       8-bit RGB heatmap, fixed colormap (gray or viridis), clamped linear range
csv     write       objective history: iteration,primal[,dual,gap]
";
