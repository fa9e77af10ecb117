use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::containers::LabeledArray;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    Gray,
    #[default]
    Viridis,
}

// Viridis sampled at nine evenly spaced points; the 256-entry table
// interpolates linearly between them.
const VIRIDIS_ANCHORS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

impl Colormap {
    pub fn lookup(self) -> [[u8; 3]; 256] {
        let mut table = [[0u8; 3]; 256];
        for (i, entry) in table.iter_mut().enumerate() {
            *entry = match self {
                Colormap::Gray => [i as u8; 3],
                Colormap::Viridis => {
                    let x = i as f64 * (VIRIDIS_ANCHORS.len() - 1) as f64 / 255.0;
                    let k = (x.floor() as usize).min(VIRIDIS_ANCHORS.len() - 2);
                    let t = x - k as f64;
                    let (a, b) = (VIRIDIS_ANCHORS[k], VIRIDIS_ANCHORS[k + 1]);
                    std::array::from_fn(|c| (a[c] as f64 + t * (b[c] as f64 - a[c] as f64)).round() as u8)
                }
            };
        }
        table
    }
}

/// Table index for `v`: linear on `[lo, hi]`, clamped outside, NaN at the bottom.
fn level(v: f64, lo: f64, hi: f64) -> usize {
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    if t.is_nan() {
        0
    } else {
        (t * 255.0).round() as usize
    }
}

/// Write a 2-D array as an 8-bit RGB PNG, first axis down the image.
pub fn export_png_heatmap(
    a: &LabeledArray,
    path: impl AsRef<Path>,
    value_range: (f64, f64),
    colormap: Colormap,
) -> Result<()> {
    let (lo, hi) = value_range;
    if a.shape().len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "heatmaps need a 2-D array, got shape {:?}",
            a.shape()
        )));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid value range [{lo}, {hi}]")));
    }
    let (h, w) = (a.shape()[0], a.shape()[1]);
    let table = colormap.lookup();
    let pixels: Vec<u8> = a.as_slice().iter().flat_map(|&v| table[level(v, lo, hi)]).collect();

    let mut enc = png::Encoder::new(BufWriter::new(File::create(path)?), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let format = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => Error::Io(e),
        other => Error::Format(other.to_string()),
    };
    let mut writer = enc.write_header().map_err(format)?;
    writer.write_image_data(&pixels).map_err(format)?;
    writer.finish().map_err(format)?;
    Ok(())
}
