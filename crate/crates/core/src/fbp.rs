//! Filtered back-projection for parallel-beam data.
//!
//! Each projection row is zero-padded, multiplied by a windowed ramp in the
//! frequency domain and back-projected with the projector's adjoint. 3-D data
//! is reconstructed one image slice at a time from (interpolated) detector rows.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::containers::{AcquisitionGeometry, Data, Geometry, ImageGeometry, LabeledArray};
use crate::error::{Error, Result};
use crate::operators::{LinearOperator, Projector};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    #[default]
    RamLak,
    SheppLogan,
    Cosine,
    Hann,
    Hamming,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default)]
    pub kind: FilterKind,
    /// Fraction of the Nyquist frequency above which the filter is zero.
    #[serde(default = "full_band")]
    pub cutoff: f64,
}

fn full_band() -> f64 {
    1.0
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            kind: FilterKind::RamLak,
            cutoff: 1.0,
        }
    }
}

impl FilterSpec {
    pub fn new(kind: FilterKind, cutoff: f64) -> Result<Self> {
        let f = FilterSpec { kind, cutoff };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "filter cutoff must lie in (0, 1], got {}",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Window at normalised frequency `nu = f / f_Nyquist`.
    fn window(&self, nu: f64) -> f64 {
        let c = self.cutoff;
        if nu > c {
            return 0.0;
        }
        match self.kind {
            FilterKind::RamLak => 1.0,
            FilterKind::SheppLogan => {
                let x = PI * nu / (2.0 * c);
                if x == 0.0 {
                    1.0
                } else {
                    x.sin() / x
                }
            }
            FilterKind::Cosine => (PI * nu / (2.0 * c)).cos(),
            FilterKind::Hann => 0.5 + 0.5 * (PI * nu / c).cos(),
            FilterKind::Hamming => 0.54 + 0.46 * (PI * nu / c).cos(),
        }
    }

    /// Frequency response on a padded grid of `len` samples spaced `spacing`
    /// apart. The ramp is the transform of the band-limited spatial kernel
    /// (1/4d² at 0, −1/(πnd)² at odd n), which avoids the DC bias of sampling
    /// |f| directly. The window multiplies it afterwards.
    fn response(&self, len: usize, spacing: f64) -> Vec<f64> {
        let mut kernel = vec![Complex::new(0.0, 0.0); len];
        kernel[0].re = 0.25 / (spacing * spacing);
        for n in (1..len / 2).step_by(2) {
            let v = -1.0 / (PI * n as f64 * spacing).powi(2);
            kernel[n].re = v;
            kernel[len - n].re = v;
        }
        FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
        // the truncated kernel leaves a tiny residual at DC; the ramp has none
        kernel[0] = Complex::new(0.0, 0.0);
        kernel
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let signed = if k <= len / 2 { k as f64 } else { k as f64 - len as f64 };
                let nu = 2.0 * signed.abs() / len as f64;
                // scaled so that the continuous convolution is approximated
                h.re * spacing * self.window(nu)
            })
            .collect()
    }
}

/// Zero-padded length. Eight times the next power of two keeps the periodic
/// wrap of the ramp kernel tails well below the disk-recovery tolerance.
fn padded_len(n: usize) -> usize {
    8 * n.next_power_of_two()
}

struct RowFilter {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    response: Vec<f64>,
}

impl RowFilter {
    fn new(spec: &FilterSpec, n: usize, spacing: f64) -> Self {
        let len = padded_len(n);
        let mut planner = FftPlanner::new();
        RowFilter {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            response: spec.response(len, spacing),
        }
    }

    /// Filter one row; returns the full padded result.
    fn apply_padded(&self, row: &[f64]) -> Vec<f64> {
        let len = self.response.len();
        let mut buf: Vec<Complex<f64>> = row
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(len)
            .collect();
        self.forward.process(&mut buf);
        buf.iter_mut().zip(&self.response).for_each(|(b, h)| *b *= h);
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / len as f64).collect()
    }

    fn apply(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.apply_padded(row)[..row.len()]);
    }
}

/// Quadrature weights for a parallel-beam angle list (radians).
///
/// Angles are folded modulo π; each receives half the gap to its neighbours
/// on that circle, so the weights always sum to π. Repeated angles (for
/// example a full 360° scan) share their gap.
pub fn angular_weights(angles: &[f64]) -> Vec<f64> {
    let n = angles.len();
    if n == 1 {
        return vec![PI];
    }
    let folded: Vec<f64> = angles.iter().map(|a| a.rem_euclid(PI)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| folded[a].total_cmp(&folded[b]).then(a.cmp(&b)));
    let mut weights = vec![0.0; n];
    for (k, &i) in order.iter().enumerate() {
        let prev = folded[order[(k + n - 1) % n]];
        let next = folded[order[(k + 1) % n]];
        let before = if k == 0 { folded[i] - prev + PI } else { folded[i] - prev };
        let after = if k == n - 1 { next + PI - folded[i] } else { next - folded[i] };
        weights[i] = 0.5 * (before + after);
    }
    weights
}

fn largest_gap(angles: &[f64]) -> f64 {
    let mut folded: Vec<f64> = angles.iter().map(|a| a.rem_euclid(PI)).collect();
    folded.sort_by(f64::total_cmp);
    let wrap = folded[0] + PI - folded[folded.len() - 1];
    folded.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}

/// Filtered back-projection of parallel-beam data onto `ig`.
///
/// Scaling follows the continuous inversion formula, so a uniform object
/// reconstructs to its attenuation value.
pub fn fbp(data: &LabeledArray, ig: &ImageGeometry, filter: FilterSpec) -> Result<LabeledArray> {
    filter.validate()?;
    let ag = data
        .geometry()
        .and_then(Geometry::as_acquisition)
        .ok_or_else(|| Error::Geometry("FBP needs data with acquisition geometry".into()))?;
    if !ag.beam().is_parallel() {
        return Err(Error::Geometry(format!(
            "FBP handles parallel beams only, got {}",
            ag.beam().name()
        )));
    }
    if ag.dimension() != ig.dimension() {
        return Err(Error::Geometry(format!(
            "{}-D data cannot be reconstructed on a {}-D grid",
            ag.dimension(),
            ig.dimension()
        )));
    }
    let angles = ag.angles().to_radians();
    let n_angles = angles.len();
    if largest_gap(&angles) > 10.0 * PI / n_angles as f64 {
        log::warn!("FBP: angles do not cover 180° evenly; expect limited-angle artefacts");
    }
    let weights = angular_weights(&angles);
    let [cols, rows] = ag.panel().num_pixels;
    let spacing = ag.panel().pixel_size[0];
    let [vx, vy, _] = ig.voxel_size();
    let scale = spacing / (vx * vy);

    let row_filter = RowFilter::new(&filter, cols, spacing);
    let mut filtered = data.as_slice().to_vec();
    filtered
        .par_chunks_mut(cols)
        .zip(data.as_slice().par_chunks(cols))
        .enumerate()
        .for_each(|(k, (out, row))| {
            row_filter.apply(row, out);
            let w = weights[k / rows] * scale;
            out.iter_mut().for_each(|v| *v *= w);
        });

    if ag.dimension() == 2 {
        let projector = Projector::new(ig, ag)?;
        let mut q = Data::from(data.clone());
        q.set_from_slice(&filtered)?;
        let mut out = Data::from(LabeledArray::zeros(&ig.clone().into()));
        projector.adjoint_into(&q, &mut out)?;
        return out.into_array();
    }
    reconstruct_slices(ag, ig, &filtered)
}

/// 3-D parallel data: every image slice back-projects the filtered detector
/// row at its height, linearly interpolated between rows.
fn reconstruct_slices(ag: &AcquisitionGeometry, ig: &ImageGeometry, filtered: &[f64]) -> Result<LabeledArray> {
    let row_step = ag.row_step();
    if row_step[0] != 0.0 || row_step[1] != 0.0 {
        return Err(Error::Geometry("FBP needs detector rows parallel to the rotation axis".into()));
    }
    let row_geometry = ag
        .row_geometry(0)
        .ok_or_else(|| Error::Geometry("FBP needs an untilted rotation axis and in-plane rays".into()))?;
    let slice_geometry = ig.slice_geometry().expect("3-D grid");
    let projector = Projector::new(&slice_geometry, &row_geometry)?;
    let [cols, rows] = ag.panel().num_pixels;
    let n_angles = ag.num_angles();
    let z0 = ag.pixel_centre(0, 0)[2];
    let dz = row_step[2];
    let axis_z = ag.rotation_axis_position()[2];
    let nz = ig.voxel_num()[2];

    let slices: Vec<Result<Vec<f64>>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let r = (axis_z + ig.voxel_centre(2, k) - z0) / dz;
            let mut sino = vec![0.0; n_angles * cols];
            let lower = r.floor();
            let t = r - lower;
            for (row, w) in [(lower, 1.0 - t), (lower + 1.0, t)] {
                if w == 0.0 || row < 0.0 || row >= rows as f64 {
                    continue;
                }
                let row = row as usize;
                for a in 0..n_angles {
                    let src = &filtered[(a * rows + row) * cols..][..cols];
                    sino[a * cols..(a + 1) * cols]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(s, v)| *s += w * v);
                }
            }
            let mut q = Data::from(LabeledArray::zeros(&row_geometry.clone().into()));
            q.set_from_slice(&sino)?;
            let mut out = Data::from(LabeledArray::zeros(&slice_geometry.clone().into()));
            projector.adjoint_into(&q, &mut out)?;
            Ok(out.to_vec())
        })
        .collect();
    let mut values = Vec::with_capacity(ig.num_voxels());
    for s in slices {
        values.extend(s?);
    }
    LabeledArray::zeros(&ig.clone().into()).with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{Angles, Panel, ParallelPlacement};
    use crate::operators::Operator;
    use crate::sim::{make_phantom, metrics, Phantom};

    fn parallel(cols: usize, angles: Angles) -> AcquisitionGeometry {
        AcquisitionGeometry::parallel(2, Panel::line(cols, 1.0).unwrap(), angles, ParallelPlacement::default())
            .unwrap()
    }

    /// Exact line integrals of a centred disk at detector pixel centres.
    fn disk_sinogram(ag: &AcquisitionGeometry, mu: f64, radius: f64) -> LabeledArray {
        let cols = ag.panel().num_pixels[0];
        let mut s = LabeledArray::zeros(&ag.clone().into());
        for (k, v) in s.as_slice_mut().iter_mut().enumerate() {
            let u = ag.pixel_centre(k % cols, 0)[0];
            *v = 2.0 * mu * (radius * radius - u * u).max(0.0).sqrt();
        }
        s
    }

    #[test]
    fn disk_recovers_attenuation() {
        let (mu, radius) = (0.05, 80.0);
        let ag = parallel(256, Angles::uniform(0.0, 180.0, 360));
        let ig = ImageGeometry::new_2d([256, 256], [1.0, 1.0]).unwrap();
        let rec = fbp(&disk_sinogram(&ag, mu, radius), &ig, FilterSpec::default()).unwrap();
        let (mut inside, mut outside) = (Vec::new(), Vec::new());
        for (k, &v) in rec.as_slice().iter().enumerate() {
            let r = ig.voxel_centre(0, k % 256).hypot(ig.voxel_centre(1, k / 256));
            if r < 0.9 * radius {
                inside.push(v);
            } else if r > 1.1 * radius && r < 120.0 {
                outside.push(v);
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean(&inside) - mu).abs() <= 0.02 * mu, "{}", mean(&inside));
        assert!(mean(&outside).abs() <= 0.002, "{}", mean(&outside));
    }

    #[test]
    fn zero_in_zero_out_and_linearity() {
        let ag = parallel(32, Angles::uniform(0.0, 180.0, 20));
        let ig = ImageGeometry::new_2d([32, 32], [1.0, 1.0]).unwrap();
        let zero = LabeledArray::zeros(&ag.clone().into());
        assert!(fbp(&zero, &ig, FilterSpec::default()).unwrap().as_slice().iter().all(|&v| v == 0.0));
        let s = disk_sinogram(&ag, 1.0, 10.0);
        let a = fbp(&s, &ig, FilterSpec::default()).unwrap();
        let b = fbp(&s.map(|v| 3.7 * v), &ig, FilterSpec::default()).unwrap();
        let diff = b.sub(&a.map(|v| 3.7 * v)).unwrap().norm();
        assert!(diff <= 1e-12 * b.norm());
    }

    #[test]
    fn ram_lak_removes_dc() {
        let f = RowFilter::new(&FilterSpec::default(), 100, 0.5);
        assert_eq!(f.response[0], 0.0);
        let out = f.apply_padded(&[2.5; 100]);
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        assert!(mean.abs() <= 1e-10, "{mean}");
        assert_eq!(out.len(), 1024);
    }

    #[test]
    fn windows_at_the_band_edges() {
        for kind in [FilterKind::RamLak, FilterKind::SheppLogan, FilterKind::Cosine, FilterKind::Hann, FilterKind::Hamming] {
            let spec = FilterSpec::new(kind, 0.5).unwrap();
            assert_eq!(spec.window(0.0), 1.0);
            assert_eq!(spec.window(0.6), 0.0);
        }
        assert!(FilterSpec::new(FilterKind::Hann, 0.5).unwrap().window(0.5).abs() < 1e-15);
        assert!((FilterSpec::new(FilterKind::Hamming, 1.0).unwrap().window(1.0) - 0.08).abs() < 1e-15);
        assert!(FilterSpec::new(FilterKind::RamLak, 0.0).is_err());
        assert!(FilterSpec::new(FilterKind::RamLak, 1.5).is_err());
    }

    #[test]
    fn angular_weights_cover_half_turn() {
        let golden = Angles::golden(186).to_radians();
        let w = angular_weights(&golden);
        assert!((w.iter().sum::<f64>() - PI).abs() <= 1e-9);
        assert!(w.iter().all(|&x| x > 0.0));
        let uniform = angular_weights(&Angles::uniform(0.0, 180.0, 12).to_radians());
        assert!(uniform.iter().all(|x| (x - PI / 12.0).abs() < 1e-15));
        let full = angular_weights(&Angles::uniform(0.0, 360.0, 12).to_radians());
        assert!(full.iter().all(|x| (x - PI / 12.0).abs() < 1e-12), "{full:?}");
        assert_eq!(angular_weights(&[0.3]), vec![PI]);
    }

    #[test]
    fn fewer_views_give_lower_psnr() {
        let ig = ImageGeometry::new_2d([128, 128], [1.0, 1.0]).unwrap();
        let wire = Phantom::WireInCylinder {
            cylinder_value: 0.05,
            wire_value: 0.1,
            cylinder_radius: 50.0,
            wire_radius: 4.0,
            wire_offset: [15.0, -10.0],
        };
        let truth = make_phantom(&wire, &ig).unwrap();
        let psnr = |views: usize| {
            let ag = parallel(160, Angles::uniform(0.0, 180.0, views));
            let a = Operator::new(Projector::new(&ig, &ag).unwrap());
            let sino = a.direct(&truth.clone().into()).unwrap().into_array().unwrap();
            let rec = fbp(&sino, &ig, FilterSpec::default()).unwrap();
            metrics(&rec, &truth, None).unwrap().psnr.as_f64()
        };
        let (few, many) = (psnr(15), psnr(90));
        assert!(few < many, "{few} vs {many}");
    }

    #[test]
    fn rejects_divergent_beams() {
        use crate::containers::ConePlacement;
        let ag = AcquisitionGeometry::fan(
            ConePlacement::new([0.0, -50.0, 0.0], [0.0, 50.0, 0.0]),
            Panel::line(16, 1.0).unwrap(),
            Angles::uniform(0.0, 360.0, 8),
        )
        .unwrap();
        let ig = ag.default_image_geometry();
        assert!(fbp(&LabeledArray::zeros(&ag.into()), &ig, FilterSpec::default()).is_err());
    }

    #[test]
    fn three_dimensional_slices_match_two_dimensional() {
        let angles = Angles::uniform(0.0, 180.0, 30);
        let ag3 = AcquisitionGeometry::parallel(
            3,
            Panel::new([24, 4], [1.0, 1.0]).unwrap(),
            angles.clone(),
            ParallelPlacement::default(),
        )
        .unwrap();
        let ig3 = ImageGeometry::new_3d([20, 20, 4], [1.0; 3]).unwrap();
        let mut sino = LabeledArray::zeros(&ag3.clone().into());
        let s2 = disk_sinogram(&parallel(24, angles.clone()), 0.1, 7.0);
        for (k, v) in sino.as_slice_mut().iter_mut().enumerate() {
            let (a, row, c) = (k / 96, (k / 24) % 4, k % 24);
            *v = s2.as_slice()[a * 24 + c] * (row + 1) as f64;
        }
        let rec3 = fbp(&sino, &ig3, FilterSpec::default()).unwrap();
        let rec2 = fbp(&s2, &ig3.slice_geometry().unwrap(), FilterSpec::default()).unwrap();
        for z in 0..4 {
            let slice = &rec3.as_slice()[z * 400..(z + 1) * 400];
            for (a, b) in slice.iter().zip(rec2.as_slice()) {
                assert!((a - b * (z + 1) as f64).abs() < 1e-12);
            }
        }
    }
}
