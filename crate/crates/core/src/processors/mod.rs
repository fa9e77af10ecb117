//! Preprocessing stages. Each takes a labelled array and returns a new one
//! whose geometry (if any) is recomputed to describe the transformed shape.

mod centre;
mod rings;

use ndarray::{ArrayD, ArrayView1, Axis, IxDyn, Zip};

use crate::containers::geometry::ANGLE;
use crate::containers::{Geometry, LabeledArray};
use crate::error::{Error, Result};

pub use centre::{centre_of_rotation, CentreEstimate, SliceChoice, PAIR_TOLERANCE_DEG};
pub use rings::{ring_remove, DEFAULT_RING_WIDTH};

/// `(start, stop, step)` along one axis; `stop` is exclusive.
pub type AxisRange = (usize, usize, usize);

enum Remap {
    Angles(Vec<f64>),
    /// New index `i` sits at old fractional index `first + i·spacing`.
    Grid { count: usize, first: f64, spacing: f64 },
}

fn remap_geometry(g: &Geometry, label: &str, remap: Remap) -> Result<Geometry> {
    let unsupported = || Error::Geometry(format!("cannot resample axis `{label}` of this geometry"));
    match (g, remap) {
        (Geometry::Acquisition(ag), Remap::Angles(values)) if label == ANGLE => {
            let out = ag.with_angles(values);
            out.validate()?;
            Ok(out.into())
        }
        (Geometry::Acquisition(ag), Remap::Grid { count, first, spacing }) => ag
            .remap_detector_axis(label, count, first, spacing)
            .map(Geometry::from)
            .ok_or_else(unsupported),
        (Geometry::Image(ig), Remap::Grid { count, first, spacing }) => ig
            .remap_axis(label, count, first, spacing)
            .map(Geometry::from)
            .ok_or_else(unsupported),
        _ => Err(unsupported()),
    }
}

/// Rebuild every lane along `axis` with `count` entries produced by `f`.
fn map_lanes(
    values: &ArrayD<f64>,
    axis: usize,
    count: usize,
    mut f: impl FnMut(ArrayView1<f64>, &mut [f64]),
) -> ArrayD<f64> {
    let mut shape = values.shape().to_vec();
    shape[axis] = count;
    let mut out = ArrayD::zeros(IxDyn(&shape));
    let mut buf = vec![0.0; count];
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(values.lanes(Axis(axis)))
        .for_each(|mut o, lane| {
            f(lane, &mut buf);
            o.iter_mut().zip(&buf).for_each(|(o, b)| *o = *b);
        });
    out
}

fn find_axes<'a, T: Copy>(data: &LabeledArray, spec: &[(&'a str, T)]) -> Result<Vec<(usize, &'a str, T)>> {
    let mut out: Vec<(usize, &str, T)> = Vec::with_capacity(spec.len());
    for &(label, v) in spec {
        let axis = data.axis_index(label)?;
        if out.iter().any(|e| e.0 == axis) {
            return Err(Error::InvalidArgument(format!("axis `{label}` given twice")));
        }
        out.push((axis, label, v));
    }
    Ok(out)
}

fn check_range(data: &LabeledArray, axis: usize, label: &str, (start, stop, step): AxisRange) -> Result<()> {
    let extent = data.shape()[axis];
    if step == 0 {
        return Err(Error::InvalidArgument(format!("step for `{label}` must be at least 1")));
    }
    if start >= stop || stop > extent {
        return Err(Error::InvalidArgument(format!(
            "range {start}..{stop} is empty or exceeds extent {extent} of `{label}`"
        )));
    }
    Ok(())
}

fn rebuild(data: &LabeledArray, values: ArrayD<f64>, geometry: Option<Geometry>) -> Result<LabeledArray> {
    LabeledArray::from_parts_unchecked(values, data.labels().to_vec(), geometry)
}

/// Keep indices `start, start + step, …` below `stop` along each listed axis.
pub fn slice(data: &LabeledArray, roi: &[(&str, AxisRange)]) -> Result<LabeledArray> {
    let axes = find_axes(data, roi)?;
    let mut values = data.values().clone();
    let mut geometry = data.geometry().cloned();
    for (axis, label, range) in axes {
        check_range(data, axis, label, range)?;
        let (start, stop, step) = range;
        let count = (stop - start).div_ceil(step);
        values = map_lanes(&values, axis, count, |lane, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = lane[start + i * step];
            }
        });
        if let Some(g) = &geometry {
            let remap = if label == ANGLE {
                let angles = &g.as_acquisition().expect("angle axis implies acquisition").angles().values;
                Remap::Angles((0..count).map(|i| angles[start + i * step]).collect())
            } else {
                Remap::Grid {
                    count,
                    first: start as f64,
                    spacing: step as f64,
                }
            };
            geometry = Some(remap_geometry(g, label, remap)?);
        }
    }
    rebuild(data, values, geometry)
}

/// Average non-overlapping windows of `step` entries inside `start..stop`;
/// a trailing partial window is dropped. Angles are averaged per window.
pub fn bin(data: &LabeledArray, roi: &[(&str, AxisRange)]) -> Result<LabeledArray> {
    let axes = find_axes(data, roi)?;
    let mut values = data.values().clone();
    let mut geometry = data.geometry().cloned();
    for (axis, label, range) in axes {
        check_range(data, axis, label, range)?;
        let (start, stop, width) = range;
        let count = (stop - start) / width;
        if count == 0 {
            return Err(Error::InvalidArgument(format!(
                "bin width {width} leaves no output along `{label}`"
            )));
        }
        let window_mean = |lane: &[f64], i: usize| {
            let first = start + i * width;
            lane[first..first + width].iter().sum::<f64>() / width as f64
        };
        values = map_lanes(&values, axis, count, |lane, out| {
            let lane = lane.to_vec();
            for (i, o) in out.iter_mut().enumerate() {
                *o = window_mean(&lane, i);
            }
        });
        if let Some(g) = &geometry {
            let remap = if label == ANGLE {
                let angles = &g.as_acquisition().expect("angle axis implies acquisition").angles().values;
                Remap::Angles((0..count).map(|i| window_mean(angles, i)).collect())
            } else {
                Remap::Grid {
                    count,
                    first: start as f64 + 0.5 * (width as f64 - 1.0),
                    spacing: width as f64,
                }
            };
            geometry = Some(remap_geometry(g, label, remap)?);
        }
    }
    rebuild(data, values, geometry)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PadMode {
    Constant(f64),
    Edge,
}

/// Extend axes by `(before, after)` entries.
///
/// The angle axis of acquisition data cannot be padded because there are no
/// angles to assign to the new entries.
pub fn pad(data: &LabeledArray, widths: &[(&str, (usize, usize))], mode: PadMode) -> Result<LabeledArray> {
    let axes = find_axes(data, widths)?;
    let mut values = data.values().clone();
    let mut geometry = data.geometry().cloned();
    for (axis, label, (before, after)) in axes {
        if before == 0 && after == 0 {
            continue;
        }
        let n = values.shape()[axis];
        let count = n + before + after;
        values = map_lanes(&values, axis, count, |lane, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = match (i.checked_sub(before).filter(|&k| k < n), mode) {
                    (Some(k), _) => lane[k],
                    (None, PadMode::Constant(c)) => c,
                    (None, PadMode::Edge) => lane[i.saturating_sub(before).min(n - 1)],
                };
            }
        });
        if let Some(g) = &geometry {
            if label == ANGLE {
                return Err(Error::Geometry("the angle axis cannot be padded".into()));
            }
            let remap = Remap::Grid {
                count,
                first: -(before as f64),
                spacing: 1.0,
            };
            geometry = Some(remap_geometry(g, label, remap)?);
        }
    }
    rebuild(data, values, geometry)
}

/// A flat or dark field: a constant, an array of the full data shape, or one
/// projection (data shape without the angle axis) broadcast over angles.
#[derive(Clone, Copy, Debug)]
pub enum Reference<'a> {
    Value(f64),
    Array(&'a LabeledArray),
}

impl Reference<'_> {
    fn broadcast(&self, data: &LabeledArray) -> Result<ArrayD<f64>> {
        match *self {
            Reference::Value(v) => Ok(ArrayD::from_elem(IxDyn(data.shape()), v)),
            Reference::Array(a) if a.shape() == data.shape() => {
                if a.labels() != data.labels() {
                    return Err(Error::LabelMismatch {
                        expected: data.labels().to_vec(),
                        found: a.labels().to_vec(),
                    });
                }
                Ok(a.values().clone())
            }
            Reference::Array(a) => {
                let angle = data.axis_index(ANGLE).map_err(|_| Error::ShapeMismatch {
                    expected: data.shape().to_vec(),
                    found: a.shape().to_vec(),
                })?;
                let mut labels = data.labels().to_vec();
                labels.remove(angle);
                if a.labels() != labels.as_slice() {
                    return Err(Error::LabelMismatch {
                        expected: labels,
                        found: a.labels().to_vec(),
                    });
                }
                let expanded = a.values().view().insert_axis(Axis(angle));
                let view = expanded.broadcast(IxDyn(data.shape())).ok_or_else(|| Error::ShapeMismatch {
                    expected: data.shape().to_vec(),
                    found: a.shape().to_vec(),
                })?;
                Ok(view.to_owned())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Normalised {
    pub data: LabeledArray,
    /// Entries where `flat − dark` vanished and `fill` was written.
    pub zero_denominators: usize,
}

/// `(data − dark)/(flat − dark)`, writing `fill` where the denominator is zero.
pub fn normalise(data: &LabeledArray, flat: Reference, dark: Reference, fill: f64) -> Result<Normalised> {
    let flat = flat.broadcast(data)?;
    let dark = dark.broadcast(data)?;
    let mut zero_denominators = 0;
    let values: Vec<f64> = data
        .as_slice()
        .iter()
        .zip(flat.iter().zip(dark.iter()))
        .map(|(&d, (&f, &k))| {
            let den = f - k;
            if den == 0.0 {
                zero_denominators += 1;
                fill
            } else {
                (d - k) / den
            }
        })
        .collect();
    if zero_denominators > 0 {
        log::warn!("normalise: {zero_denominators} zero denominator(s) set to {fill}");
    }
    Ok(Normalised {
        data: data.with_values(values)?,
        zero_denominators,
    })
}

/// Convert transmission to absorption, `−ln(max(v, floor))`.
pub fn absorption(data: &LabeledArray, floor: f64) -> Result<LabeledArray> {
    if !(floor > 0.0) {
        return Err(Error::InvalidArgument(format!("absorption floor must be positive, got {floor}")));
    }
    Ok(data.map(|v| -(v.max(floor)).ln()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskMethod {
    /// Keep values inside `[lo, hi]`.
    Threshold { lo: f64, hi: f64 },
    /// Keep finite values.
    NonFinite,
}

/// Binary mask with 1 = keep, carrying the data's labels and geometry.
pub fn make_mask(data: &LabeledArray, method: MaskMethod) -> Result<LabeledArray> {
    match method {
        MaskMethod::Threshold { lo, hi } => {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidArgument(format!("invalid threshold [{lo}, {hi}]")));
            }
            Ok(data.map(|v| if v >= lo && v <= hi { 1.0 } else { 0.0 }))
        }
        MaskMethod::NonFinite => Ok(data.map(|v| if v.is_finite() { 1.0 } else { 0.0 })),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaskFill {
    Value(f64),
    /// Mean of kept entries in the smallest surrounding cube that has any.
    LocalMean,
}

pub fn apply_mask(data: &LabeledArray, mask: &LabeledArray, fill: MaskFill) -> Result<LabeledArray> {
    if mask.shape() != data.shape() {
        return Err(Error::ShapeMismatch {
            expected: data.shape().to_vec(),
            found: mask.shape().to_vec(),
        });
    }
    let keep: Vec<bool> = mask.as_slice().iter().map(|&m| m != 0.0).collect();
    let src = data.as_slice();
    let mut out = src.to_vec();
    match fill {
        MaskFill::Value(v) => out.iter_mut().zip(&keep).filter(|(_, k)| !**k).for_each(|(o, _)| *o = v),
        MaskFill::LocalMean => {
            if !keep.iter().any(|&k| k) {
                return Err(Error::InvalidArgument("mask removes every entry".into()));
            }
            let shape = data.shape();
            for (i, o) in out.iter_mut().enumerate() {
                if !keep[i] {
                    *o = local_mean(shape, i, &keep, src);
                }
            }
        }
    }
    data.with_values(out)
}

fn local_mean(shape: &[usize], flat: usize, keep: &[bool], values: &[f64]) -> f64 {
    let mut centre = vec![0; shape.len()];
    let mut rem = flat;
    for d in (0..shape.len()).rev() {
        centre[d] = rem % shape[d];
        rem /= shape[d];
    }
    let max_extent = shape.iter().copied().max().unwrap_or(1);
    for radius in 1..=max_extent {
        let lo: Vec<usize> = centre.iter().map(|&c| c.saturating_sub(radius)).collect();
        let hi: Vec<usize> = centre.iter().zip(shape).map(|(&c, &n)| (c + radius).min(n - 1)).collect();
        let (mut sum, mut count) = (0.0, 0usize);
        let mut index = lo.clone();
        'cube: loop {
            let f = index.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i);
            if keep[f] {
                sum += values[f];
                count += 1;
            }
            for d in (0..shape.len()).rev() {
                if index[d] < hi[d] {
                    index[d] += 1;
                    continue 'cube;
                }
                index[d] = lo[d];
            }
            break;
        }
        if count > 0 {
            return sum / count as f64;
        }
    }
    unreachable!("a kept entry exists somewhere in the array")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{AcquisitionGeometry, Angles, ImageGeometry, Panel, ParallelPlacement};
    use proptest::prelude::*;

    fn v(x: Vec<f64>) -> LabeledArray {
        LabeledArray::vector(x, "x")
    }

    fn scan(angles: usize, cols: usize, rows: usize) -> LabeledArray {
        let ag = AcquisitionGeometry::parallel(
            3,
            Panel::new([cols, rows], [1.0, 1.0]).unwrap(),
            Angles::linspace(0.0, 178.0, angles),
            ParallelPlacement::default(),
        )
        .unwrap();
        let g = Geometry::from(ag);
        let n: usize = g.shape().iter().product();
        LabeledArray::with_geometry(
            ArrayD::from_shape_vec(IxDyn(&g.shape()), (0..n).map(|i| i as f64).collect()).unwrap(),
            g,
        )
        .unwrap()
    }

    #[test]
    fn normalise_examples() {
        let d = v(vec![0.5, 1.0, 0.0]);
        let n = normalise(&d, Reference::Value(1.0), Reference::Value(0.0), 1.0).unwrap();
        assert_eq!(n.data.as_slice(), &[0.5, 1.0, 0.0]);
        assert_eq!(n.zero_denominators, 0);
        let flat = v(vec![2.0, 4.0, 3.0]);
        let dark = v(vec![1.0, 1.0, 3.0]);
        let n = normalise(&flat, Reference::Array(&flat), Reference::Array(&dark), 1.0).unwrap();
        assert_eq!(n.data.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(n.zero_denominators, 1);
        let n = normalise(&dark, Reference::Array(&flat), Reference::Array(&dark), 7.0).unwrap();
        assert_eq!(n.data.as_slice(), &[0.0, 0.0, 7.0]);
    }

    #[test]
    fn normalise_broadcasts_one_projection() {
        let data = scan(3, 4, 2);
        let flat = data.get_slice(ANGLE, 0).unwrap().map(|_| 2.0);
        let n = normalise(&data, Reference::Array(&flat), Reference::Value(0.0), 1.0).unwrap();
        assert_eq!(n.data.as_slice()[9], 4.5);
        assert_eq!(n.data.geometry(), data.geometry());
        let wrong = v(vec![1.0; 5]);
        assert!(normalise(&data, Reference::Array(&wrong), Reference::Value(0.0), 1.0).is_err());
    }

    #[test]
    fn bin_examples() {
        let b = bin(&v(vec![1.0, 2.0, 3.0, 4.0]), &[("x", (0, 4, 2))]).unwrap();
        assert_eq!(b.as_slice(), &[1.5, 3.5]);
        let b = bin(&v(vec![1.0, 2.0, 3.0, 4.0, 5.0]), &[("x", (0, 5, 2))]).unwrap();
        assert_eq!(b.as_slice(), &[1.5, 3.5]);
        assert!(bin(&v(vec![1.0, 2.0]), &[("x", (0, 2, 3))]).is_err());
        assert!(bin(&v(vec![1.0, 2.0]), &[("y", (0, 2, 1))]).is_err());
    }

    #[test]
    fn bin_updates_detector_and_image_geometry() {
        let data = scan(4, 8, 6);
        let b = bin(&data, &[("horizontal", (0, 8, 2)), ("angle", (0, 4, 2))]).unwrap();
        assert_eq!(b.shape(), &[2, 6, 4]);
        let ag = b.geometry().unwrap().as_acquisition().unwrap();
        assert_eq!(ag.panel().pixel_size, [2.0, 1.0]);
        assert_eq!(ag.detector_position(), [0.0; 3]);
        let step = 178.0 / 3.0;
        assert!((ag.angles().values[1] - 2.5 * step).abs() < 1e-12);

        // dropping the first column shifts the detector centre by half a binned pixel
        let b = bin(&data, &[("horizontal", (1, 7, 3))]).unwrap();
        let ag = b.geometry().unwrap().as_acquisition().unwrap();
        assert_eq!(ag.panel().num_pixels, [2, 6]);
        assert!((ag.pixel_centre(0, 0)[0] - (-1.5)).abs() < 1e-12);

        let ig = ImageGeometry::new_2d([4, 4], [0.5, 0.5]).unwrap();
        let img = LabeledArray::zeros(&ig.into());
        let b = bin(&img, &[("horizontal_x", (0, 4, 2))]).unwrap();
        let ig = b.geometry().unwrap().as_image().unwrap();
        assert_eq!(ig.voxel_num(), [2, 4, 1]);
        assert_eq!(ig.voxel_size()[0], 1.0);
        assert_eq!(ig.center_offset(), [0.0; 3]);
    }

    #[test]
    fn slice_subsets_angles() {
        let ag = AcquisitionGeometry::parallel(
            3,
            Panel::new([160, 135], [1.0, 1.0]).unwrap(),
            Angles::linspace(-88.2, 91.8, 91),
            ParallelPlacement::default(),
        )
        .unwrap();
        let data = LabeledArray::zeros(&ag.into());
        let s = slice(&data, &[("angle", (0, 90, 6)), ("horizontal", (20, 140, 1))]).unwrap();
        assert_eq!(s.shape(), &[15, 135, 120]);
        let ag = s.geometry().unwrap().as_acquisition().unwrap();
        assert_eq!(ag.num_angles(), 15);
        assert!((ag.angles().values[1] - (-88.2 + 12.0)).abs() < 1e-9);
        assert_eq!(ag.detector_position(), [0.0; 3]);
    }

    #[test]
    fn slice_values_and_offset_crop() {
        let s = slice(&v((0..10).map(f64::from).collect()), &[("x", (1, 8, 3))]).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 4.0, 7.0]);
        let data = scan(2, 10, 1);
        let s = slice(&data, &[("horizontal", (0, 4, 1))]).unwrap();
        let ag = s.geometry().unwrap().as_acquisition().unwrap();
        assert_eq!(ag.pixel_centre(0, 0), data.geometry().unwrap().as_acquisition().unwrap().pixel_centre(0, 0));
        assert!(slice(&data, &[("horizontal", (4, 4, 1))]).is_err());
        assert!(slice(&data, &[("horizontal", (0, 11, 1))]).is_err());
    }

    #[test]
    fn pad_examples() {
        let x = v(vec![1.0, 2.0]);
        assert_eq!(pad(&x, &[("x", (1, 1))], PadMode::Constant(0.0)).unwrap().as_slice(), &[0.0, 1.0, 2.0, 0.0]);
        assert_eq!(pad(&x, &[("x", (1, 1))], PadMode::Edge).unwrap().as_slice(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(pad(&x, &[("x", (0, 0))], PadMode::Edge).unwrap(), x);
        let data = scan(2, 4, 3);
        let p = pad(&data, &[("horizontal", (2, 0))], PadMode::Edge).unwrap();
        let ag = p.geometry().unwrap().as_acquisition().unwrap();
        assert_eq!(ag.panel().num_pixels, [6, 3]);
        assert_eq!(ag.pixel_centre(2, 0), data.geometry().unwrap().as_acquisition().unwrap().pixel_centre(0, 0));
        assert!(pad(&data, &[("angle", (1, 0))], PadMode::Edge).is_err());
    }

    #[test]
    fn mask_examples() {
        let x = v(vec![1.0, f64::NAN, 3.0]);
        let m = make_mask(&x, MaskMethod::NonFinite).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(apply_mask(&x, &m, MaskFill::Value(0.0)).unwrap().as_slice(), &[1.0, 0.0, 3.0]);
        assert_eq!(apply_mask(&x, &m, MaskFill::LocalMean).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        let t = make_mask(&v(vec![-5.0, 5.0, 50.0]), MaskMethod::Threshold { lo: 0.0, hi: 10.0 }).unwrap();
        assert_eq!(t.as_slice(), &[0.0, 1.0, 0.0]);
        let y = v(vec![4.0, 5.0]);
        assert_eq!(apply_mask(&y, &y.map(|_| 1.0), MaskFill::LocalMean).unwrap(), y);
        assert!(apply_mask(&y, &y.map(|_| 0.0), MaskFill::LocalMean).is_err());
    }

    #[test]
    fn local_mean_grows_until_it_finds_data() {
        let x = LabeledArray::from_vec(&[3, 3], (0..9).map(f64::from).collect(), &["a", "b"]).unwrap();
        let mut keep = vec![0.0; 9];
        keep[8] = 1.0;
        let mask = x.with_values(keep).unwrap();
        let out = apply_mask(&x, &mask, MaskFill::LocalMean).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn absorption_clips_at_floor() {
        let a = absorption(&v(vec![1.0, (-2f64).exp(), 0.0]), 1e-6).unwrap();
        assert_eq!(a.as_slice()[0], 0.0);
        assert!((a.as_slice()[1] - 2.0).abs() < 1e-15);
        assert!((a.as_slice()[2] - 6.0 * 10f64.ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn identity_settings_are_exact(values in prop::collection::vec(-1e3..1e3f64, 1..40)) {
            let n = values.len();
            let x = v(values);
            prop_assert_eq!(&slice(&x, &[("x", (0, n, 1))]).unwrap(), &x);
            prop_assert_eq!(&bin(&x, &[("x", (0, n, 1))]).unwrap(), &x);
            prop_assert_eq!(&pad(&x, &[("x", (0, 0))], PadMode::Constant(3.0)).unwrap(), &x);
        }

        #[test]
        fn geometry_stays_consistent(step in 1usize..4, start in 0usize..3, pad_by in 0usize..3) {
            let data = scan(7, 9, 4);
            let s = slice(&data, &[("angle", (start, 7, step)), ("vertical", (start, 4, step))]).unwrap();
            prop_assert_eq!(s.geometry().unwrap().shape(), s.shape().to_vec());
            let p = pad(&s, &[("horizontal", (pad_by, 1))], PadMode::Edge).unwrap();
            prop_assert_eq!(p.geometry().unwrap().shape(), p.shape().to_vec());
            let b = bin(&p, &[("horizontal", (0, p.shape()[2], step))]).unwrap();
            prop_assert_eq!(b.geometry().unwrap().shape(), b.shape().to_vec());
        }
    }
}
