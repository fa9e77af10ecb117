//! Acquisition and image geometry descriptors.
//!
//! World coordinates follow the usual bench convention: the beam travels
//! along +y, the detector columns run along +x and rows along +z, and the
//! default rotation axis is the z-axis through the origin. Voxel and pixel
//! values are sampled at cell centres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ANGLE: &str = "angle";
pub const VERTICAL: &str = "vertical";
pub const HORIZONTAL: &str = "horizontal";
pub const HORIZONTAL_X: &str = "horizontal_x";
pub const HORIZONTAL_Y: &str = "horizontal_y";

const UNIT_TOL: f64 = 1e-12;

pub(crate) mod vec3 {
    pub type V3 = [f64; 3];

    pub fn dot(a: V3, b: V3) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }
    pub fn norm(a: V3) -> f64 {
        dot(a, a).sqrt()
    }
    pub fn sub(a: V3, b: V3) -> V3 {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }
    pub fn add(a: V3, b: V3) -> V3 {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }
    pub fn scale(a: V3, s: f64) -> V3 {
        [a[0] * s, a[1] * s, a[2] * s]
    }
    pub fn cross(a: V3, b: V3) -> V3 {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }
    pub fn normalize(a: V3) -> V3 {
        scale(a, 1.0 / norm(a))
    }
}

use vec3::V3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BeamType {
    #[serde(rename = "parallel2D")]
    Parallel2D,
    #[serde(rename = "parallel3D")]
    Parallel3D,
    #[serde(rename = "fan")]
    Fan,
    #[serde(rename = "cone")]
    Cone,
}

impl BeamType {
    pub fn dimension(self) -> usize {
        match self {
            BeamType::Parallel2D | BeamType::Fan => 2,
            BeamType::Parallel3D | BeamType::Cone => 3,
        }
    }

    pub fn is_parallel(self) -> bool {
        matches!(self, BeamType::Parallel2D | BeamType::Parallel3D)
    }

    pub fn name(self) -> &'static str {
        match self {
            BeamType::Parallel2D => "parallel2D",
            BeamType::Parallel3D => "parallel3D",
            BeamType::Fan => "fan",
            BeamType::Cone => "cone",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    #[default]
    Degree,
    Radian,
}

/// Which detector corner holds pixel (0, 0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanelOrigin {
    TopLeft,
    #[default]
    BottomLeft,
    TopRight,
    BottomRight,
}

impl PanelOrigin {
    fn horizontal_sign(self) -> f64 {
        match self {
            PanelOrigin::TopLeft | PanelOrigin::BottomLeft => 1.0,
            PanelOrigin::TopRight | PanelOrigin::BottomRight => -1.0,
        }
    }

    fn vertical_sign(self) -> f64 {
        match self {
            PanelOrigin::BottomLeft | PanelOrigin::BottomRight => 1.0,
            PanelOrigin::TopLeft | PanelOrigin::TopRight => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    /// (columns, rows); rows is 1 for 2-D geometries.
    pub num_pixels: [usize; 2],
    pub pixel_size: [f64; 2],
    #[serde(default)]
    pub origin: PanelOrigin,
}

impl Panel {
    pub fn new(num_pixels: [usize; 2], pixel_size: [f64; 2]) -> Result<Self> {
        let panel = Panel {
            num_pixels,
            pixel_size,
            origin: PanelOrigin::default(),
        };
        panel.validate()?;
        Ok(panel)
    }

    /// A single detector row, for 2-D geometries.
    pub fn line(num_pixels: usize, pixel_size: f64) -> Result<Self> {
        Self::new([num_pixels, 1], [pixel_size, pixel_size])
    }

    pub fn with_origin(mut self, origin: PanelOrigin) -> Self {
        self.origin = origin;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.num_pixels.contains(&0) {
            return Err(Error::Geometry(format!(
                "pixel counts must be at least 1, got {:?}",
                self.num_pixels
            )));
        }
        if self.pixel_size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Geometry(format!(
                "pixel sizes must be strictly positive, got {:?}",
                self.pixel_size
            )));
        }
        Ok(())
    }
}

/// An ordered list of projection angles. Spacing may be arbitrary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub values: Vec<f64>,
    #[serde(default)]
    pub unit: AngleUnit,
}

impl Angles {
    pub fn degrees(values: Vec<f64>) -> Self {
        Angles {
            values,
            unit: AngleUnit::Degree,
        }
    }

    pub fn radians(values: Vec<f64>) -> Self {
        Angles {
            values,
            unit: AngleUnit::Radian,
        }
    }

    /// `count` evenly spaced degrees from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Self {
        let values = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => {
                let step = (stop - start) / (count - 1) as f64;
                (0..count).map(|k| start + step * k as f64).collect()
            }
        };
        Self::degrees(values)
    }

    /// `count` evenly spaced degrees starting at `start`, excluding `start + range`.
    pub fn uniform(start: f64, range: f64, count: usize) -> Self {
        let step = range / count as f64;
        Self::degrees((0..count).map(|k| start + step * k as f64).collect())
    }

    /// Golden-angle sequence k·(√5−1)/2·180°, not reduced modulo 360.
    pub fn golden(count: usize) -> Self {
        let step = 0.5 * (5f64.sqrt() - 1.0) * 180.0;
        Self::degrees((0..count).map(|k| k as f64 * step).collect())
    }

    pub fn to_radians(&self) -> Vec<f64> {
        match self.unit {
            AngleUnit::Degree => self.values.iter().map(|a| a.to_radians()).collect(),
            AngleUnit::Radian => self.values.clone(),
        }
    }
}

/// Optional placement overrides for parallel-beam geometries.
#[derive(Clone, Debug, Default)]
pub struct ParallelPlacement {
    pub ray_direction: Option<V3>,
    pub detector_position: Option<V3>,
    pub detector_direction_x: Option<V3>,
    pub detector_direction_y: Option<V3>,
    pub rotation_axis_position: Option<V3>,
    pub rotation_axis_direction: Option<V3>,
}

/// Source, detector and rotation-axis placement for divergent beams.
#[derive(Clone, Debug)]
pub struct ConePlacement {
    pub source_position: V3,
    pub detector_position: V3,
    pub rotation_axis_position: V3,
    pub rotation_axis_direction: V3,
    pub detector_direction_x: V3,
    pub detector_direction_y: V3,
}

impl ConePlacement {
    pub fn new(source: V3, detector: V3) -> Self {
        ConePlacement {
            source_position: source,
            detector_position: detector,
            rotation_axis_position: [0.0; 3],
            rotation_axis_direction: [0.0, 0.0, 1.0],
            detector_direction_x: [1.0, 0.0, 0.0],
            detector_direction_y: [0.0, 0.0, 1.0],
        }
    }

    pub fn rotation_axis(mut self, position: V3, direction: V3) -> Self {
        self.rotation_axis_position = position;
        self.rotation_axis_direction = direction;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionGeometry {
    beam: BeamType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_position: Option<V3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ray_direction: Option<V3>,
    detector_position: V3,
    detector_direction_x: V3,
    detector_direction_y: V3,
    rotation_axis_position: V3,
    rotation_axis_direction: V3,
    angles: Angles,
    panel: Panel,
}

impl AcquisitionGeometry {
    /// Parallel-beam geometry in 2 or 3 dimensions.
    pub fn parallel(
        dim: usize,
        panel: Panel,
        angles: Angles,
        placement: ParallelPlacement,
    ) -> Result<Self> {
        let beam = match dim {
            2 => BeamType::Parallel2D,
            3 => BeamType::Parallel3D,
            _ => return Err(Error::Geometry(format!("dimension must be 2 or 3, got {dim}"))),
        };
        let geometry = AcquisitionGeometry {
            beam,
            source_position: None,
            ray_direction: Some(placement.ray_direction.unwrap_or([0.0, 1.0, 0.0])),
            detector_position: placement.detector_position.unwrap_or([0.0; 3]),
            detector_direction_x: placement.detector_direction_x.unwrap_or([1.0, 0.0, 0.0]),
            detector_direction_y: placement.detector_direction_y.unwrap_or([0.0, 0.0, 1.0]),
            rotation_axis_position: placement.rotation_axis_position.unwrap_or([0.0; 3]),
            rotation_axis_direction: placement
                .rotation_axis_direction
                .unwrap_or([0.0, 0.0, 1.0]),
            angles,
            panel,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// 3-D cone beam with an arbitrarily placed (possibly tilted) rotation axis.
    pub fn cone(placement: ConePlacement, panel: Panel, angles: Angles) -> Result<Self> {
        Self::divergent(BeamType::Cone, placement, panel, angles)
    }

    /// 2-D fan beam; all placements must lie in the z = 0 plane.
    pub fn fan(placement: ConePlacement, panel: Panel, angles: Angles) -> Result<Self> {
        Self::divergent(BeamType::Fan, placement, panel, angles)
    }

    fn divergent(
        beam: BeamType,
        placement: ConePlacement,
        panel: Panel,
        angles: Angles,
    ) -> Result<Self> {
        let geometry = AcquisitionGeometry {
            beam,
            source_position: Some(placement.source_position),
            ray_direction: None,
            detector_position: placement.detector_position,
            detector_direction_x: placement.detector_direction_x,
            detector_direction_y: placement.detector_direction_y,
            rotation_axis_position: placement.rotation_axis_position,
            rotation_axis_direction: placement.rotation_axis_direction,
            angles,
            panel,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn validate(&self) -> Result<()> {
        self.panel.validate()?;
        if self.angles.values.is_empty() {
            return Err(Error::Geometry("angle list is empty".into()));
        }
        if self.angles.values.iter().any(|a| !a.is_finite()) {
            return Err(Error::Geometry("angles must be finite".into()));
        }
        check_unit("rotation_axis_direction", self.rotation_axis_direction)?;
        check_unit("detector_direction_x", self.detector_direction_x)?;
        check_unit("detector_direction_y", self.detector_direction_y)?;
        match self.beam {
            BeamType::Parallel2D | BeamType::Parallel3D => {
                let ray = self
                    .ray_direction
                    .ok_or_else(|| Error::Geometry("parallel beam needs a ray direction".into()))?;
                check_unit("ray_direction", ray)?;
            }
            BeamType::Fan | BeamType::Cone => {
                let source = self
                    .source_position
                    .ok_or_else(|| Error::Geometry("divergent beam needs a source".into()))?;
                if vec3::norm(vec3::sub(source, self.detector_position)) == 0.0 {
                    return Err(Error::Geometry(
                        "source and detector positions coincide".into(),
                    ));
                }
            }
        }
        if self.beam.dimension() == 2 {
            if self.panel.num_pixels[1] != 1 {
                return Err(Error::Geometry("2-D geometry needs a single detector row".into()));
            }
            let planar = |v: V3| v[2] == 0.0;
            let mut ok = planar(self.detector_position)
                && planar(self.rotation_axis_position)
                && planar(self.detector_direction_x)
                && self.rotation_axis_direction == [0.0, 0.0, 1.0];
            if let Some(s) = self.source_position {
                ok &= planar(s);
            }
            if let Some(r) = self.ray_direction {
                ok &= planar(r);
            }
            if !ok {
                return Err(Error::Geometry(
                    "2-D geometry must lie in the z = 0 plane with axis [0, 0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn beam(&self) -> BeamType {
        self.beam
    }
    pub fn dimension(&self) -> usize {
        self.beam.dimension()
    }
    pub fn source_position(&self) -> Option<V3> {
        self.source_position
    }
    pub fn ray_direction(&self) -> Option<V3> {
        self.ray_direction
    }
    pub fn detector_position(&self) -> V3 {
        self.detector_position
    }
    pub fn detector_direction_x(&self) -> V3 {
        self.detector_direction_x
    }
    pub fn detector_direction_y(&self) -> V3 {
        self.detector_direction_y
    }
    pub fn rotation_axis_position(&self) -> V3 {
        self.rotation_axis_position
    }
    pub fn rotation_axis_direction(&self) -> V3 {
        self.rotation_axis_direction
    }
    pub fn angles(&self) -> &Angles {
        &self.angles
    }
    pub fn panel(&self) -> &Panel {
        &self.panel
    }
    pub fn num_angles(&self) -> usize {
        self.angles.values.len()
    }

    pub fn set_rotation_axis_position(&mut self, position: V3) {
        self.rotation_axis_position = position;
    }

    pub fn shape(&self) -> Vec<usize> {
        let [nx, ny] = self.panel.num_pixels;
        match self.dimension() {
            2 => vec![self.num_angles(), nx],
            _ => vec![self.num_angles(), ny, nx],
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self.dimension() {
            2 => vec![ANGLE.into(), HORIZONTAL.into()],
            _ => vec![ANGLE.into(), VERTICAL.into(), HORIZONTAL.into()],
        }
    }

    /// World-space step between neighbouring detector columns (index order).
    pub fn column_step(&self) -> V3 {
        vec3::scale(
            self.detector_direction_x,
            self.panel.pixel_size[0] * self.panel.origin.horizontal_sign(),
        )
    }

    /// World-space step between neighbouring detector rows (index order).
    pub fn row_step(&self) -> V3 {
        vec3::scale(
            self.detector_direction_y,
            self.panel.pixel_size[1] * self.panel.origin.vertical_sign(),
        )
    }

    /// World position of the centre of detector pixel (column, row) before rotation.
    pub fn pixel_centre(&self, column: usize, row: usize) -> V3 {
        let [nx, ny] = self.panel.num_pixels;
        let u = column as f64 - 0.5 * (nx as f64 - 1.0);
        let v = row as f64 - 0.5 * (ny as f64 - 1.0);
        vec3::add(
            self.detector_position,
            vec3::add(
                vec3::scale(self.column_step(), u),
                vec3::scale(self.row_step(), v),
            ),
        )
    }

    /// Orthonormal frame (x', y', z') attached to the sample; z' is the rotation axis.
    pub fn object_frame(&self) -> [V3; 3] {
        let ez = self.rotation_axis_direction;
        let project_out = |v: V3| vec3::sub(v, vec3::scale(ez, vec3::dot(v, ez)));
        let mut ex = project_out([1.0, 0.0, 0.0]);
        if vec3::norm(ex) < 1e-6 {
            ex = project_out([0.0, 1.0, 0.0]);
        }
        let ex = vec3::normalize(ex);
        let ey = vec3::cross(ez, ex);
        [ex, ey, ez]
    }

    /// Geometric magnification at the rotation axis (1 for parallel beams).
    pub fn magnification(&self) -> f64 {
        match self.source_position {
            None => 1.0,
            Some(source) => {
                let sd = vec3::norm(vec3::sub(self.detector_position, source));
                let so = vec3::norm(vec3::sub(self.rotation_axis_position, source));
                if so > 0.0 {
                    sd / so
                } else {
                    1.0
                }
            }
        }
    }

    /// Default reconstruction grid matched to the detector sampling.
    pub fn default_image_geometry(&self) -> ImageGeometry {
        let [nx, ny] = self.panel.num_pixels;
        let m = self.magnification();
        let [sx, sy] = self.panel.pixel_size;
        match self.dimension() {
            2 => ImageGeometry::new_2d([nx, nx], [sx / m, sx / m])
                .expect("panel invariants imply a valid image grid"),
            _ => ImageGeometry::new_3d([nx, nx, ny], [sx / m, sx / m, sy / m])
                .expect("panel invariants imply a valid image grid"),
        }
    }

    pub(crate) fn with_angles(&self, angles: Vec<f64>) -> Self {
        let mut g = self.clone();
        g.angles.values = angles;
        g
    }

    /// Re-sample one detector axis: the new pixel `i` sits at old (fractional)
    /// index `first + i * spacing`, and pixel size scales by `spacing`.
    pub(crate) fn remap_detector_axis(
        &self,
        label: &str,
        count: usize,
        first: f64,
        spacing: f64,
    ) -> Option<Self> {
        let mut g = self.clone();
        let (axis, step) = match label {
            HORIZONTAL => (0, self.column_step()),
            VERTICAL if self.dimension() == 3 => (1, self.row_step()),
            _ => return None,
        };
        let old_centre = 0.5 * (self.panel.num_pixels[axis] as f64 - 1.0);
        let new_centre = first + 0.5 * spacing * (count as f64 - 1.0);
        g.detector_position = vec3::add(
            self.detector_position,
            vec3::scale(step, new_centre - old_centre),
        );
        g.panel.num_pixels[axis] = count;
        g.panel.pixel_size[axis] *= spacing;
        Some(g)
    }

    /// Geometry of a single detector row of a parallel 3-D scan.
    pub(crate) fn row_geometry(&self, row: usize) -> Option<Self> {
        if self.beam != BeamType::Parallel3D {
            return None;
        }
        let [nx, _] = self.panel.num_pixels;
        let centre = self.pixel_centre(0, row);
        let row_centre = vec3::add(
            centre,
            vec3::scale(self.column_step(), 0.5 * (nx as f64 - 1.0)),
        );
        let flat = |v: V3| [v[0], v[1], 0.0];
        let ray = self.ray_direction.unwrap_or([0.0, 1.0, 0.0]);
        if self.rotation_axis_direction != [0.0, 0.0, 1.0]
            || ray[2] != 0.0
            || self.detector_direction_x[2] != 0.0
        {
            return None;
        }
        let g = AcquisitionGeometry {
            beam: BeamType::Parallel2D,
            source_position: None,
            ray_direction: Some(ray),
            detector_position: flat(row_centre),
            detector_direction_x: self.detector_direction_x,
            detector_direction_y: [0.0, 0.0, 1.0],
            rotation_axis_position: flat(self.rotation_axis_position),
            rotation_axis_direction: [0.0, 0.0, 1.0],
            angles: self.angles.clone(),
            panel: Panel {
                num_pixels: [nx, 1],
                pixel_size: self.panel.pixel_size,
                origin: self.panel.origin,
            },
        };
        g.validate().ok()?;
        Some(g)
    }
}

fn check_unit(name: &str, v: V3) -> Result<()> {
    let n = vec3::norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Geometry(format!("{name} has zero or non-finite length")));
    }
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Geometry(format!(
            "{name} must be a unit vector (norm {n})"
        )));
    }
    Ok(())
}

/// Voxel grid of a reconstructed volume. Counts and sizes are stored (x, y, z);
/// 2-D grids keep z at one voxel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageGeometry {
    dim: usize,
    voxel_num: [usize; 3],
    voxel_size: [f64; 3],
    #[serde(default)]
    center_offset: [f64; 3],
}

impl ImageGeometry {
    pub fn new_2d(voxel_num: [usize; 2], voxel_size: [f64; 2]) -> Result<Self> {
        let g = ImageGeometry {
            dim: 2,
            voxel_num: [voxel_num[0], voxel_num[1], 1],
            voxel_size: [voxel_size[0], voxel_size[1], 1.0],
            center_offset: [0.0; 3],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn new_3d(voxel_num: [usize; 3], voxel_size: [f64; 3]) -> Result<Self> {
        let g = ImageGeometry {
            dim: 3,
            voxel_num,
            voxel_size,
            center_offset: [0.0; 3],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_center_offset(mut self, offset: [f64; 3]) -> Self {
        self.center_offset = offset;
        if self.dim == 2 {
            self.center_offset[2] = 0.0;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Geometry(format!("image dimension {} unsupported", self.dim)));
        }
        if self.voxel_num.contains(&0) {
            return Err(Error::Geometry("voxel counts must be at least 1".into()));
        }
        if self.voxel_size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Geometry("voxel sizes must be strictly positive".into()));
        }
        if self.center_offset.iter().any(|c| !c.is_finite()) {
            return Err(Error::Geometry("centre offset must be finite".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }
    pub fn voxel_num(&self) -> [usize; 3] {
        self.voxel_num
    }
    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }
    pub fn center_offset(&self) -> [f64; 3] {
        self.center_offset
    }

    pub fn shape(&self) -> Vec<usize> {
        let [nx, ny, nz] = self.voxel_num;
        match self.dim {
            2 => vec![ny, nx],
            _ => vec![nz, ny, nx],
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self.dim {
            2 => vec![HORIZONTAL_Y.into(), HORIZONTAL_X.into()],
            _ => vec![VERTICAL.into(), HORIZONTAL_Y.into(), HORIZONTAL_X.into()],
        }
    }

    pub fn num_voxels(&self) -> usize {
        self.voxel_num.iter().product()
    }

    /// Grid spacing along each array axis, in array order.
    pub fn spacing(&self) -> Vec<f64> {
        let [sx, sy, sz] = self.voxel_size;
        match self.dim {
            2 => vec![sy, sx],
            _ => vec![sz, sy, sx],
        }
    }

    /// Coordinate of the lower corner of the grid, (x, y, z).
    pub fn lower_corner(&self) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (i, item) in c.iter_mut().enumerate() {
            *item = self.center_offset[i] - 0.5 * self.voxel_num[i] as f64 * self.voxel_size[i];
        }
        if self.dim == 2 {
            c[2] = -0.5 * self.voxel_size[2];
        }
        c
    }

    /// Coordinate of the centre of voxel `index` along component `axis` (0 = x).
    pub fn voxel_centre(&self, axis: usize, index: usize) -> f64 {
        self.center_offset[axis]
            + (index as f64 - 0.5 * (self.voxel_num[axis] as f64 - 1.0)) * self.voxel_size[axis]
    }

    fn component(&self, label: &str) -> Option<usize> {
        match label {
            HORIZONTAL_X => Some(0),
            HORIZONTAL_Y => Some(1),
            VERTICAL if self.dim == 3 => Some(2),
            _ => None,
        }
    }

    pub(crate) fn remap_axis(
        &self,
        label: &str,
        count: usize,
        first: f64,
        spacing: f64,
    ) -> Option<Self> {
        let c = self.component(label)?;
        let mut g = self.clone();
        let old_centre = 0.5 * (self.voxel_num[c] as f64 - 1.0);
        let new_centre = first + 0.5 * spacing * (count as f64 - 1.0);
        g.center_offset[c] += (new_centre - old_centre) * self.voxel_size[c];
        g.voxel_num[c] = count;
        g.voxel_size[c] *= spacing;
        Some(g)
    }

    /// 2-D grid of a single z-slice.
    pub(crate) fn slice_geometry(&self) -> Option<Self> {
        if self.dim != 3 {
            return None;
        }
        Some(ImageGeometry {
            dim: 2,
            voxel_num: [self.voxel_num[0], self.voxel_num[1], 1],
            voxel_size: [self.voxel_size[0], self.voxel_size[1], 1.0],
            center_offset: [self.center_offset[0], self.center_offset[1], 0.0],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    Acquisition(AcquisitionGeometry),
    Image(ImageGeometry),
}

impl Geometry {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            Geometry::Acquisition(g) => g.shape(),
            Geometry::Image(g) => g.shape(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            Geometry::Acquisition(g) => g.labels(),
            Geometry::Image(g) => g.labels(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Geometry::Acquisition(g) => g.validate(),
            Geometry::Image(g) => g.validate(),
        }
    }

    pub fn as_acquisition(&self) -> Option<&AcquisitionGeometry> {
        match self {
            Geometry::Acquisition(g) => Some(g),
            Geometry::Image(_) => None,
        }
    }

    pub fn as_image(&self) -> Option<&ImageGeometry> {
        match self {
            Geometry::Image(g) => Some(g),
            Geometry::Acquisition(_) => None,
        }
    }
}

impl From<AcquisitionGeometry> for Geometry {
    fn from(g: AcquisitionGeometry) -> Self {
        Geometry::Acquisition(g)
    }
}

impl From<ImageGeometry> for Geometry {
    fn from(g: ImageGeometry) -> Self {
        Geometry::Image(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_3d_shape_matches_panel_and_angles() {
        let panel = Panel::new([160, 135], [1.0, 1.0]).unwrap();
        let ag = AcquisitionGeometry::parallel(
            3,
            panel,
            Angles::linspace(-88.2, 91.8, 91),
            ParallelPlacement::default(),
        )
        .unwrap();
        assert_eq!(ag.shape(), vec![91, 135, 160]);
        assert_eq!(ag.labels(), vec!["angle", "vertical", "horizontal"]);
        let ig = ag.default_image_geometry();
        assert_eq!(ig.voxel_num(), [160, 160, 135]);
        assert_eq!(ig.voxel_size(), [1.0, 1.0, 1.0]);
        assert_eq!(ig.shape(), vec![135, 160, 160]);
    }

    #[test]
    fn parallel_2d_defaults() {
        let ag = AcquisitionGeometry::parallel(
            2,
            Panel::line(4, 1.0).unwrap(),
            Angles::degrees(vec![0.0]),
            ParallelPlacement::default(),
        )
        .unwrap();
        assert_eq!(ag.shape(), vec![1, 4]);
        assert_eq!(ag.ray_direction(), Some([0.0, 1.0, 0.0]));
        assert_eq!(ag.default_image_geometry().shape(), vec![4, 4]);
    }

    #[test]
    fn golden_angles_are_stored_verbatim() {
        let angles = Angles::golden(186);
        let ag = AcquisitionGeometry::parallel(
            2,
            Panel::line(8, 1.0).unwrap(),
            angles.clone(),
            ParallelPlacement::default(),
        )
        .unwrap();
        assert_eq!(ag.angles(), &angles);
        assert_eq!(ag.num_angles(), 186);
        assert!((ag.angles().values[1] - 111.24611797498107).abs() < 1e-9);
    }

    #[test]
    fn rejects_empty_angles_and_non_unit_axis() {
        let panel = Panel::line(4, 1.0).unwrap();
        assert!(AcquisitionGeometry::parallel(
            2,
            panel.clone(),
            Angles::degrees(vec![]),
            ParallelPlacement::default()
        )
        .is_err());
        let placement = ParallelPlacement {
            rotation_axis_direction: Some([0.0, 0.0, 2.0]),
            ..Default::default()
        };
        let panel3 = Panel::new([4, 4], [1.0, 1.0]).unwrap();
        assert!(
            AcquisitionGeometry::parallel(3, panel3, Angles::degrees(vec![0.0]), placement)
                .is_err()
        );
        assert!(Panel::new([0, 4], [1.0, 1.0]).is_err());
        assert!(Panel::new([4, 4], [0.0, 1.0]).is_err());
    }

    #[test]
    fn tilted_cone_axis_is_stored_exactly() {
        let tilt = 30f64.to_radians();
        let axis = [0.0, -tilt.sin(), tilt.cos()];
        let placement = ConePlacement::new([0.0, -100.0, 0.0], [0.0, 200.0, 0.0])
            .rotation_axis([0.0; 3], axis);
        let panel = Panel::new([798, 574], [0.508, 0.508]).unwrap();
        let ag = AcquisitionGeometry::cone(placement, panel, Angles::uniform(0.0, 360.0, 2512))
            .unwrap();
        let stored = ag.rotation_axis_direction();
        assert!((stored[1] + 0.5).abs() < 1e-12);
        assert!((stored[2] - 0.8660254037844386).abs() < 1e-12);
        assert_eq!(ag.shape(), vec![2512, 574, 798]);
        let [ex, ey, ez] = ag.object_frame();
        assert_eq!(ex, [1.0, 0.0, 0.0]);
        assert!((vec3::dot(ey, ez)).abs() < 1e-15);
    }

    #[test]
    fn cone_rejects_coincident_source_and_zero_axis() {
        let panel = Panel::new([4, 4], [1.0, 1.0]).unwrap();
        let bad = ConePlacement::new([0.0, 5.0, 0.0], [0.0, 5.0, 0.0]);
        assert!(
            AcquisitionGeometry::cone(bad, panel.clone(), Angles::degrees(vec![0.0])).is_err()
        );
        let zero_axis =
            ConePlacement::new([0.0, -5.0, 0.0], [0.0, 5.0, 0.0]).rotation_axis([0.0; 3], [0.0; 3]);
        assert!(AcquisitionGeometry::cone(zero_axis, panel, Angles::degrees(vec![0.0])).is_err());
    }

    #[test]
    fn fan_beam_default_voxels_use_magnification() {
        let placement = ConePlacement::new([0.0, -50.0, 0.0], [0.0, 50.0, 0.0]);
        let ag = AcquisitionGeometry::fan(
            placement,
            Panel::line(16, 1.0).unwrap(),
            Angles::uniform(0.0, 360.0, 8),
        )
        .unwrap();
        let ig = ag.default_image_geometry();
        assert_eq!(ig.voxel_size()[0], 0.5);
        assert_eq!(ig.shape(), vec![16, 16]);
    }

    #[test]
    fn panel_origin_flips_index_direction() {
        let panel = Panel::new([3, 2], [1.0, 2.0])
            .unwrap()
            .with_origin(PanelOrigin::TopLeft);
        let ag = AcquisitionGeometry::parallel(
            3,
            panel,
            Angles::degrees(vec![0.0]),
            ParallelPlacement::default(),
        )
        .unwrap();
        assert_eq!(ag.pixel_centre(0, 0), [-1.0, 0.0, 1.0]);
        assert_eq!(ag.pixel_centre(2, 1), [1.0, 0.0, -1.0]);
    }
}
