use ndarray::{ArrayD, Axis};

use crate::containers::geometry::{ANGLE, HORIZONTAL};
use crate::containers::LabeledArray;
use crate::error::{Error, Result};

pub const DEFAULT_RING_WIDTH: usize = 11;

fn median(window: &mut [f64]) -> f64 {
    window.sort_by(f64::total_cmp);
    let m = window.len() / 2;
    if window.len() % 2 == 1 {
        window[m]
    } else {
        0.5 * (window[m - 1] + window[m])
    }
}

/// Moving median along a lane; windows are truncated at the ends.
fn moving_median(lane: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut buf = Vec::with_capacity(width);
    (0..lane.len())
        .map(|i| {
            buf.clear();
            buf.extend_from_slice(&lane[i.saturating_sub(half)..(i + half + 1).min(lane.len())]);
            median(&mut buf)
        })
        .collect()
}

/// Suppress detector stripes (ring artefacts after reconstruction).
///
/// For every detector column the mean over angles is compared with a moving
/// median of width `width` across neighbouring columns; the difference is
/// taken to be a stripe and subtracted from every angle.
pub fn ring_remove(data: &LabeledArray, width: usize) -> Result<LabeledArray> {
    if width < 3 || width.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "ring filter width must be odd and at least 3, got {width}"
        )));
    }
    let angle = data.axis_index(ANGLE)?;
    let horizontal = data.axis_index(HORIZONTAL)?;
    let means = data
        .values()
        .mean_axis(Axis(angle))
        .expect("the angle axis of a valid geometry is non-empty");
    let h = if horizontal > angle { horizontal - 1 } else { horizontal };
    let mut stripes: ArrayD<f64> = means.clone();
    for (mut s, m) in stripes.lanes_mut(Axis(h)).into_iter().zip(means.lanes(Axis(h))) {
        let m = m.to_vec();
        for ((s, smooth), raw) in s.iter_mut().zip(moving_median(&m, width)).zip(&m) {
            *s = raw - smooth;
        }
    }
    let stripes = stripes.insert_axis(Axis(angle));
    let values = data.values() - &stripes;
    LabeledArray::from_parts_unchecked(values, data.labels().to_vec(), data.geometry().cloned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{AcquisitionGeometry, Angles, Data, ImageGeometry, Panel, ParallelPlacement};
    use crate::operators::{Operator, Projector};

    fn sinogram() -> LabeledArray {
        let ig = ImageGeometry::new_2d([64, 64], [1.0, 1.0]).unwrap();
        let ag = AcquisitionGeometry::parallel(
            2,
            Panel::line(96, 1.0).unwrap(),
            Angles::uniform(0.0, 180.0, 90),
            ParallelPlacement::default(),
        )
        .unwrap();
        // smooth ellipse with a gentle intensity ramp
        let values: Vec<f64> = (0..64 * 64)
            .map(|k| {
                let (x, y) = (ig.voxel_centre(0, k % 64), ig.voxel_centre(1, k / 64));
                let r = (x / 26.0).powi(2) + (y / 20.0).powi(2);
                if r <= 1.0 { 0.02 * (1.0 - r) + 0.01 } else { 0.0 }
            })
            .collect();
        let mut x = Data::from(LabeledArray::zeros(&ig.clone().into()));
        x.set_from_slice(&values).unwrap();
        Operator::new(Projector::new(&ig, &ag).unwrap()).direct(&x).unwrap().into_array().unwrap()
    }

    fn rms(a: &[f64]) -> f64 {
        (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
    }

    #[test]
    fn constant_sinogram_is_unchanged() {
        let s = sinogram().map(|_| 0.37);
        let out = ring_remove(&s, DEFAULT_RING_WIDTH).unwrap();
        let err = out.sub(&s).unwrap().as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err <= 1e-12);
    }

    #[test]
    fn clean_sinogram_changes_little() {
        let s = sinogram();
        let out = ring_remove(&s, DEFAULT_RING_WIDTH).unwrap();
        let change = rms(out.sub(&s).unwrap().as_slice()) / rms(s.as_slice());
        assert!(change <= 0.01, "{change}");
    }

    #[test]
    fn stripe_is_attenuated() {
        let clean = sinogram();
        let column = 40;
        let mut striped = clean.clone();
        let n = striped.shape()[1];
        for (k, v) in striped.as_slice_mut().iter_mut().enumerate() {
            if k % n == column {
                *v += 0.5;
            }
        }
        let out = ring_remove(&striped, DEFAULT_RING_WIDTH).unwrap();
        let residual: f64 = (0..clean.shape()[0])
            .map(|a| out.as_slice()[a * n + column] - clean.as_slice()[a * n + column])
            .sum::<f64>()
            / clean.shape()[0] as f64;
        assert!(residual.abs() <= 0.05, "{residual}");
    }

    #[test]
    fn width_validation() {
        let s = sinogram();
        assert!(ring_remove(&s, 4).is_err());
        assert!(ring_remove(&s, 1).is_err());
        assert!(ring_remove(&LabeledArray::vector(vec![1.0], "x"), 3).is_err());
        assert_eq!(moving_median(&[1.0, 9.0, 2.0, 3.0], 3), vec![5.0, 2.0, 3.0, 2.5]);
    }
}
