use crate::containers::geometry::{vec3, ANGLE, HORIZONTAL, VERTICAL};
use crate::containers::{AcquisitionGeometry, Geometry, LabeledArray};
use crate::error::{Error, Result};

/// Largest deviation from 180° accepted for an opposing projection pair.
pub const PAIR_TOLERANCE_DEG: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SliceChoice {
    #[default]
    Centre,
    Index(usize),
}

#[derive(Clone, Debug)]
pub struct CentreEstimate {
    /// Detector column of the rotation axis relative to the detector centre.
    pub offset_pixels: f64,
    /// Indices of the projections that were correlated.
    pub pair: (usize, usize),
    /// The input with its rotation axis moved; values are untouched.
    pub data: LabeledArray,
}

/// Estimate the rotation-axis column by cross-correlating a projection with
/// the mirrored projection taken 180° later, then move the axis in the
/// geometry to match.
///
/// The correlation peak is located to sub-pixel precision with a three-point
/// parabola. Its lag is twice the axis offset.
pub fn centre_of_rotation(data: &LabeledArray, slice: SliceChoice) -> Result<CentreEstimate> {
    let ag = data
        .geometry()
        .and_then(Geometry::as_acquisition)
        .ok_or_else(|| Error::Geometry("centre of rotation needs acquisition geometry".into()))?;

    let sinogram = if ag.dimension() == 3 {
        let rows = ag.panel().num_pixels[1];
        let row = match slice {
            SliceChoice::Centre => rows / 2,
            SliceChoice::Index(r) => r,
        };
        data.get_slice(VERTICAL, row)?
    } else {
        data.clone()
    };
    let sinogram = sinogram.reorder(&[ANGLE, HORIZONTAL])?;
    let n = sinogram.shape()[1];

    let (i, j) = opposing_pair(ag)?;
    let row = |k: usize| &sinogram.as_slice()[k * n..(k + 1) * n];
    let p = row(i);
    let mirrored: Vec<f64> = row(j).iter().rev().copied().collect();

    // corr[s + n − 1] = Σ_k mirrored[k]·p[k + s]
    let corr: Vec<f64> = (0..2 * n - 1)
        .map(|idx| {
            let s = idx as isize - (n as isize - 1);
            (0..n)
                .filter_map(|k| {
                    let t = k as isize + s;
                    (0..n as isize).contains(&t).then(|| mirrored[k] * p[t as usize])
                })
                .sum()
        })
        .collect();
    let peak = corr
        .iter()
        .enumerate()
        .fold(0, |best, (k, &c)| if c > corr[best] { k } else { best });
    let mut lag = peak as f64 - (n as f64 - 1.0);
    if peak > 0 && peak + 1 < corr.len() {
        let (a, b, c) = (corr[peak - 1], corr[peak], corr[peak + 1]);
        let curvature = a - 2.0 * b + c;
        if curvature < 0.0 {
            lag += 0.5 * (a - c) / curvature;
        }
    }
    let offset = 0.5 * lag;

    let mut corrected = ag.clone();
    let current = projected_column(ag, ag.rotation_axis_position())?;
    let shift = vec3::scale(ag.column_step(), (offset - current) / ag.magnification());
    corrected.set_rotation_axis_position(vec3::add(ag.rotation_axis_position(), shift));
    log::info!(
        "centre of rotation: axis at {offset:+.3} px from detector centre (projections {i} and {j})"
    );

    let mut out = data.clone();
    out.set_geometry(Some(corrected.into()))?;
    Ok(CentreEstimate {
        offset_pixels: offset,
        pair: (i, j),
        data: out,
    })
}

/// The projection pair whose separation is closest to 180° (mod 360°).
fn opposing_pair(ag: &AcquisitionGeometry) -> Result<(usize, usize)> {
    let degrees: Vec<f64> = ag.angles().to_radians().iter().map(|a| a.to_degrees()).collect();
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..degrees.len() {
        for j in i + 1..degrees.len() {
            let deviation = ((degrees[j] - degrees[i]).rem_euclid(360.0) - 180.0).abs();
            if best.is_none_or(|b| deviation < b.0) {
                best = Some((deviation, i, j));
            }
        }
    }
    match best {
        Some((d, i, j)) if d <= PAIR_TOLERANCE_DEG => Ok((i, j)),
        _ => Err(Error::Geometry(format!(
            "no pair of projections 180° apart within {PAIR_TOLERANCE_DEG}°"
        ))),
    }
}

/// Detector column (relative to the centre) onto which a world point projects.
fn projected_column(ag: &AcquisitionGeometry, point: [f64; 3]) -> Result<f64> {
    let d = ag.detector_position();
    let normal = vec3::cross(ag.detector_direction_x(), ag.detector_direction_y());
    let (origin, direction) = match ag.source_position() {
        Some(s) => (s, vec3::sub(point, s)),
        None => (point, ag.ray_direction().expect("parallel geometry has a ray direction")),
    };
    let denom = vec3::dot(direction, normal);
    if denom == 0.0 {
        return Err(Error::Geometry("rays run parallel to the detector".into()));
    }
    let t = vec3::dot(vec3::sub(d, origin), normal) / denom;
    let hit = vec3::add(origin, vec3::scale(direction, t));
    let step = ag.column_step();
    Ok(vec3::dot(vec3::sub(hit, d), step) / vec3::dot(step, step))
}
