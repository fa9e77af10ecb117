use std::fmt::Write;

use tomokit::containers::{AcquisitionGeometry, ImageGeometry};

use crate::config::{InputSpec, PipelineConfig};
use crate::error::CliError;

fn num(v: f64) -> String {
    // keep −0 out of reports
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.4}")
}

fn vector(v: [f64; 3]) -> String {
    format!("[{}, {}, {}]", num(v[0]), num(v[1]), num(v[2]))
}

pub fn describe_acquisition(ag: &AcquisitionGeometry) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "beam: {} ({}-D)", ag.beam().name(), ag.dimension());
    if let Some(p) = ag.source_position() {
        let _ = writeln!(s, "source_position: {}", vector(p));
    }
    if let Some(d) = ag.ray_direction() {
        let _ = writeln!(s, "ray_direction: {}", vector(d));
    }
    let _ = writeln!(s, "detector_position: {}", vector(ag.detector_position()));
    let _ = writeln!(s, "detector_direction_x: {}", vector(ag.detector_direction_x()));
    if ag.dimension() == 3 {
        let _ = writeln!(s, "detector_direction_y: {}", vector(ag.detector_direction_y()));
    }
    let _ = writeln!(s, "rotation_axis_position: {}", vector(ag.rotation_axis_position()));
    let _ = writeln!(s, "rotation_axis_direction: {}", vector(ag.rotation_axis_direction()));
    let panel = ag.panel();
    let _ = writeln!(
        s,
        "panel: {} x {} pixels, pixel size {} x {}",
        panel.num_pixels[0],
        panel.num_pixels[1],
        num(panel.pixel_size[0]),
        num(panel.pixel_size[1])
    );
    let degrees: Vec<f64> = ag.angles().to_radians().iter().map(|a| a.to_degrees()).collect();
    let lo = degrees.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = degrees.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let _ = writeln!(
        s,
        "angles: {} from {}° to {}° (first {}°, last {}°)",
        degrees.len(),
        num(lo),
        num(hi),
        num(degrees[0]),
        num(degrees[degrees.len() - 1])
    );
    let _ = writeln!(s, "magnification: {}", num(ag.magnification()));
    let _ = writeln!(s, "data shape: {:?} {:?}", ag.shape(), ag.labels());
    s
}

pub fn describe_image(ig: &ImageGeometry) -> String {
    let n = ig.voxel_num();
    let v = ig.voxel_size();
    let mut s = String::new();
    let _ = writeln!(s, "image: {} x {} x {} voxels of {} x {} x {}", n[0], n[1], n[2], num(v[0]), num(v[1]), num(v[2]));
    let _ = writeln!(s, "image centre offset: {}", vector(ig.center_offset()));
    s
}

/// Text report of the geometry a config declares.
pub fn describe_geometry(config: &PipelineConfig) -> Result<String, CliError> {
    let spec = config
        .geometry()
        .ok_or_else(|| CliError::config("the config declares no acquisition geometry"))?;
    let mut s = describe_acquisition(&spec.build()?);
    if let InputSpec::Phantom { image, .. } = &config.input {
        s.push_str(&describe_image(&image.build()?));
    }
    Ok(s)
}
