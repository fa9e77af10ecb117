//! Pipeline configuration: a TOML document whose leaves can be overridden
//! from the command line by dotted path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tomokit::containers::{
    AcquisitionGeometry, Angles, ConePlacement, ImageGeometry, Panel, ParallelPlacement,
};
use tomokit::fbp::FilterKind;
use tomokit::io::Colormap;
use tomokit::sim::{Noise, Phantom};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for noise; `--seed` takes precedence.
    #[serde(default)]
    pub seed: u64,
    pub input: InputSpec,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
    pub recon: Option<ReconSpec>,
    #[serde(default)]
    pub outputs: Vec<OutputSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Native {
        path: PathBuf,
    },
    Tiff {
        /// Directory or glob pattern.
        path: PathBuf,
        #[serde(default = "acquisition_labels")]
        labels: Vec<String>,
        geometry: Option<GeometrySpec>,
    },
    Phantom {
        phantom: Phantom,
        image: ImageSpec,
        geometry: GeometrySpec,
        noise: Option<Noise>,
        /// Convert line integrals to counts `flat·exp(−p)` before the stages.
        transmission: Option<f64>,
    },
}

fn acquisition_labels() -> Vec<String> {
    ["angle", "vertical", "horizontal"].map(String::from).to_vec()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSpec {
    /// `[nx, ny]` or `[nx, ny, nz]`.
    pub voxels: Vec<usize>,
    pub voxel_size: Option<Vec<f64>>,
    #[serde(default)]
    pub center_offset: [f64; 3],
}

impl ImageSpec {
    pub fn build(&self) -> Result<ImageGeometry, CliError> {
        let size = self.voxel_size.clone().unwrap_or_else(|| vec![1.0; self.voxels.len()]);
        if size.len() != self.voxels.len() {
            return Err(CliError::config("image.voxel_size must match image.voxels in length"));
        }
        let ig = match self.voxels[..] {
            [nx, ny] => ImageGeometry::new_2d([nx, ny], [size[0], size[1]]),
            [nx, ny, nz] => ImageGeometry::new_3d([nx, ny, nz], [size[0], size[1], size[2]]),
            _ => return Err(CliError::config("image.voxels needs 2 or 3 entries")),
        }
        .map_err(|e| CliError::config(format!("image: {e}")))?;
        Ok(ig.with_center_offset(self.center_offset))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beam {
    Parallel,
    Fan,
    Cone,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AngleSpec {
    /// `count` angles from `start`, spaced `range/count` apart.
    Uniform {
        #[serde(default)]
        start: f64,
        range: f64,
        count: usize,
    },
    Linspace {
        start: f64,
        stop: f64,
        count: usize,
    },
    Golden {
        count: usize,
    },
    List {
        degrees: Vec<f64>,
    },
}

impl AngleSpec {
    pub fn build(&self) -> Angles {
        match self {
            AngleSpec::Uniform { start, range, count } => Angles::uniform(*start, *range, *count),
            AngleSpec::Linspace { start, stop, count } => Angles::linspace(*start, *stop, *count),
            AngleSpec::Golden { count } => Angles::golden(*count),
            AngleSpec::List { degrees } => Angles::degrees(degrees.clone()),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub beam: Beam,
    /// Parallel beams only: 2 or 3.
    pub dimension: Option<usize>,
    /// `[columns]` or `[columns, rows]`.
    pub pixels: Vec<usize>,
    pub pixel_size: Option<Vec<f64>>,
    pub angles: AngleSpec,
    pub source_position: Option<[f64; 3]>,
    pub detector_position: Option<[f64; 3]>,
    pub ray_direction: Option<[f64; 3]>,
    pub rotation_axis_position: Option<[f64; 3]>,
    pub rotation_axis_direction: Option<[f64; 3]>,
    /// Tilt of the rotation axis away from z towards −y, in degrees.
    pub tilt: Option<f64>,
}

impl GeometrySpec {
    pub fn build(&self) -> Result<AcquisitionGeometry, CliError> {
        let bad = |m: String| CliError::config(format!("geometry: {m}"));
        let (cols, rows) = match self.pixels[..] {
            [c] => (c, 1),
            [c, r] => (c, r),
            _ => return Err(bad("pixels needs 1 or 2 entries".into())),
        };
        let size = match self.pixel_size.as_deref() {
            None => [1.0, 1.0],
            Some([s]) => [*s, *s],
            Some([sx, sy]) => [*sx, *sy],
            Some(_) => return Err(bad("pixel_size needs 1 or 2 entries".into())),
        };
        if self.rotation_axis_direction.is_some() && self.tilt.is_some() {
            return Err(bad("give either rotation_axis_direction or tilt, not both".into()));
        }
        let axis_direction = self.rotation_axis_direction.or_else(|| {
            self.tilt.map(|t| {
                let t = t.to_radians();
                [0.0, -t.sin(), t.cos()]
            })
        });
        let panel = Panel::new([cols, rows], size).map_err(|e| bad(e.to_string()))?;
        let angles = self.angles.build();
        let divergent = || -> Result<ConePlacement, CliError> {
            if self.dimension.is_some() {
                return Err(bad("dimension is implied by fan and cone beams".into()));
            }
            if self.ray_direction.is_some() {
                return Err(bad("ray_direction applies to parallel beams only".into()));
            }
            let (Some(s), Some(d)) = (self.source_position, self.detector_position) else {
                return Err(bad("fan and cone beams need source_position and detector_position".into()));
            };
            Ok(ConePlacement::new(s, d).rotation_axis(
                self.rotation_axis_position.unwrap_or([0.0; 3]),
                axis_direction.unwrap_or([0.0, 0.0, 1.0]),
            ))
        };
        let ag = match self.beam {
            Beam::Parallel => {
                if self.source_position.is_some() {
                    return Err(bad("parallel beams have no source_position".into()));
                }
                let dim = self.dimension.unwrap_or(if rows > 1 { 3 } else { 2 });
                if dim == 2 && rows != 1 {
                    return Err(bad("2-D geometries have a single detector row".into()));
                }
                AcquisitionGeometry::parallel(
                    dim,
                    panel,
                    angles,
                    ParallelPlacement {
                        ray_direction: self.ray_direction,
                        detector_position: self.detector_position,
                        rotation_axis_position: self.rotation_axis_position,
                        rotation_axis_direction: axis_direction,
                        ..Default::default()
                    },
                )
            }
            Beam::Fan => AcquisitionGeometry::fan(divergent()?, panel, angles),
            Beam::Cone => AcquisitionGeometry::cone(divergent()?, panel, angles),
        };
        ag.map_err(|e| bad(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ReferenceSpec {
    Value(f64),
    /// `"mean"`: the mean of the data entering the stage.
    Named(String),
    /// `{ slice_mean = { vertical = 20 } }`: the mean of one slice of the data,
    /// e.g. a detector row above the sample.
    SliceMean { slice_mean: BTreeMap<String, usize> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SliceSpec {
    Index(usize),
    /// `"centre"`.
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FillSpec {
    Value(f64),
    /// `"local_mean"`.
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadModeSpec {
    Constant,
    Edge,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageSpec {
    Normalise {
        flat: ReferenceSpec,
        #[serde(default = "zero_reference")]
        dark: ReferenceSpec,
        #[serde(default = "one")]
        fill: f64,
    },
    Absorption {
        #[serde(default = "absorption_floor")]
        floor: f64,
    },
    Centre {
        #[serde(default = "centre_slice")]
        slice: SliceSpec,
    },
    /// Per-label `[start, stop]` or `[start, stop, step]`.
    Slice {
        roi: BTreeMap<String, Vec<usize>>,
    },
    /// Per-label `[start, stop, width]`.
    Bin {
        roi: BTreeMap<String, Vec<usize>>,
    },
    Pad {
        widths: BTreeMap<String, [usize; 2]>,
        #[serde(default = "constant_mode")]
        mode: PadModeSpec,
        #[serde(default)]
        value: f64,
    },
    Mask {
        /// Keep entries inside `[lower, upper]`; without bounds only non-finite
        /// entries are masked.
        lower: Option<f64>,
        upper: Option<f64>,
        #[serde(default = "zero_fill")]
        fill: FillSpec,
    },
    RingRemove {
        #[serde(default = "ring_width")]
        width: usize,
    },
}

impl StageSpec {
    pub fn name(&self) -> &'static str {
        match self {
            StageSpec::Normalise { .. } => "normalise",
            StageSpec::Absorption { .. } => "absorption",
            StageSpec::Centre { .. } => "centre",
            StageSpec::Slice { .. } => "slice",
            StageSpec::Bin { .. } => "bin",
            StageSpec::Pad { .. } => "pad",
            StageSpec::Mask { .. } => "mask",
            StageSpec::RingRemove { .. } => "ring_remove",
        }
    }
}

fn zero_reference() -> ReferenceSpec {
    ReferenceSpec::Value(0.0)
}
fn one() -> f64 {
    1.0
}
fn absorption_floor() -> f64 {
    1e-6
}
fn centre_slice() -> SliceSpec {
    SliceSpec::Named("centre".into())
}
fn constant_mode() -> PadModeSpec {
    PadModeSpec::Constant
}
fn zero_fill() -> FillSpec {
    FillSpec::Value(0.0)
}
fn ring_width() -> usize {
    tomokit::processors::DEFAULT_RING_WIDTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fbp,
    Cgls,
    Sirt,
    Gd,
    Fista,
    Pdhg,
    Ladmm,
}

impl Method {
    pub fn is_iterative(self) -> bool {
        self != Method::Fbp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataTerm {
    #[default]
    LeastSquares,
    KullbackLeibler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regulariser {
    #[default]
    None,
    /// α‖∇x‖₂,₁
    Tv,
    /// α‖x‖₁
    L1,
    /// α‖∇x‖₂²
    Tikhonov,
}

/// The reconstruction solves `min D(Ax, b) + α R(x)` subject to optional
/// bounds, where `D` is the data term (least squares without a ½ factor, or
/// Kullback–Leibler) and `R` the regulariser.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconSpec {
    pub method: Method,
    pub image: Option<ImageSpec>,
    #[serde(default)]
    pub filter: FilterKind,
    #[serde(default = "one")]
    pub cutoff: f64,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub data: DataTerm,
    #[serde(default)]
    pub regulariser: Regulariser,
    #[serde(default)]
    pub alpha: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub sigma: Option<f64>,
    pub tau: Option<f64>,
    pub relaxation: Option<f64>,
    /// Inner iterations of the TV proximal map.
    #[serde(default = "tv_iterations")]
    pub tv_iterations: usize,
    /// Record the objective every n iterations instead of the default cadence.
    pub log_every: Option<usize>,
}

fn tv_iterations() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Recon,
    /// The data after the last stage.
    Data,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputSpec {
    Native {
        path: PathBuf,
        #[serde(default)]
        source: Source,
    },
    Tiff {
        dir: PathBuf,
        #[serde(default = "tiff_prefix")]
        prefix: String,
        /// Stacking label; defaults to the first axis.
        axis: Option<String>,
        #[serde(default)]
        source: Source,
    },
    Png {
        path: PathBuf,
        /// Fixed indices for all but two axes; unspecified axes take their centre.
        #[serde(default)]
        slice: BTreeMap<String, usize>,
        /// Defaults to the data range of the exported slice.
        range: Option<[f64; 2]>,
        #[serde(default)]
        colormap: Colormap,
        #[serde(default)]
        source: Source,
    },
    /// Objective history of an iterative solver.
    Csv {
        path: PathBuf,
    },
    Metrics {
        path: Option<PathBuf>,
        /// `"phantom"` or a native file on the reconstruction grid.
        #[serde(default = "phantom_reference")]
        reference: String,
        peak: Option<f64>,
    },
}

fn tiff_prefix() -> String {
    "slice".into()
}
fn phantom_reference() -> String {
    "phantom".into()
}

/// Parse `text`, apply `key=value` overrides, deserialise and validate.
pub fn parse(text: &str, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let config: PipelineConfig = toml::Table::try_into(doc).map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load(path: &Path, overrides: &[String]) -> Result<PipelineConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
    let mut config = parse(&text, overrides)?;
    if let Some(base) = path.parent() {
        config.resolve_paths(base);
    }
    Ok(config)
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let path: Vec<&str> = key.split('.').collect();
    let mut root = toml::Value::Table(std::mem::take(doc));
    let done = set_leaf(&mut root, &path, value);
    let toml::Value::Table(t) = root else { unreachable!() };
    *doc = t;
    done.ok_or_else(|| CliError::config(format!("override `{key}` does not name a config entry")))
}

/// Tables take new leaves; numeric segments index existing array entries
/// (`stages.0.width`).
fn set_leaf(node: &mut toml::Value, path: &[&str], value: toml::Value) -> Option<()> {
    let (head, rest) = path.split_first()?;
    let child = match node {
        toml::Value::Table(t) if rest.is_empty() => {
            t.insert(head.to_string(), value);
            return Some(());
        }
        toml::Value::Table(t) => t.get_mut(*head)?,
        toml::Value::Array(items) => items.get_mut(head.parse::<usize>().ok()?)?,
        _ => return None,
    };
    if rest.is_empty() {
        *child = value;
        return Some(());
    }
    set_leaf(child, rest, value)
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), CliError> {
        if let InputSpec::Phantom { image, geometry, transmission, noise, .. } = &self.input {
            image.build()?;
            geometry.build()?;
            if transmission.is_some_and(|t| !(t > 0.0)) {
                return Err(CliError::config("input.transmission must be positive"));
            }
            match noise {
                Some(Noise::Gaussian { sigma }) if !(*sigma >= 0.0) => {
                    return Err(CliError::config("input.noise.sigma must be non-negative"))
                }
                Some(Noise::Poisson { incident }) if !(*incident > 0.0) => {
                    return Err(CliError::config("input.noise.incident must be positive"))
                }
                _ => {}
            }
        }
        if let InputSpec::Tiff { labels, geometry, .. } = &self.input {
            if labels.len() != 3 {
                return Err(CliError::config("input.labels needs three entries"));
            }
            if let Some(g) = geometry {
                g.build()?;
            }
        }
        for (i, s) in self.stages.iter().enumerate() {
            s.validate().map_err(|m| CliError::config(format!("stages[{i}] ({}): {m}", s.name())))?;
        }
        if let Some(r) = &self.recon {
            r.validate().map_err(|m| CliError::config(format!("recon: {m}")))?;
        }
        let iterative = self.recon.as_ref().is_some_and(|r| r.method.is_iterative());
        for (i, o) in self.outputs.iter().enumerate() {
            let fail = |m: &str| Err(CliError::config(format!("outputs[{i}]: {m}")));
            let source = match o {
                OutputSpec::Native { source, .. }
                | OutputSpec::Tiff { source, .. }
                | OutputSpec::Png { source, .. } => Some(*source),
                _ => None,
            };
            if source == Some(Source::Recon) && self.recon.is_none() {
                return fail("there is no recon section to export");
            }
            match o {
                OutputSpec::Csv { .. } if !iterative => return fail("csv history needs an iterative solver"),
                OutputSpec::Metrics { .. } if self.recon.is_none() => return fail("metrics need a reconstruction"),
                OutputSpec::Metrics { reference, .. }
                    if reference == "phantom" && !matches!(self.input, InputSpec::Phantom { .. }) =>
                {
                    return fail("reference \"phantom\" needs a phantom input")
                }
                OutputSpec::Png { range: Some([lo, hi]), .. } if !(lo < hi) => {
                    return fail("png range must be increasing")
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.input {
            InputSpec::Native { path } | InputSpec::Tiff { path, .. } => fix(path),
            InputSpec::Phantom { .. } => {}
        }
        for o in &mut self.outputs {
            match o {
                OutputSpec::Native { path, .. } | OutputSpec::Png { path, .. } | OutputSpec::Csv { path } => fix(path),
                OutputSpec::Tiff { dir, .. } => fix(dir),
                OutputSpec::Metrics { path, reference, .. } => {
                    if let Some(p) = path {
                        fix(p);
                    }
                    if reference != "phantom" {
                        let mut r = PathBuf::from(&*reference);
                        fix(&mut r);
                        *reference = r.to_string_lossy().into_owned();
                    }
                }
            }
        }
    }

    /// The acquisition geometry declared in the config, if any.
    pub fn geometry(&self) -> Option<&GeometrySpec> {
        match &self.input {
            InputSpec::Phantom { geometry, .. } => Some(geometry),
            InputSpec::Tiff { geometry, .. } => geometry.as_ref(),
            InputSpec::Native { .. } => None,
        }
    }
}

impl StageSpec {
    fn validate(&self) -> Result<(), String> {
        match self {
            StageSpec::Normalise { flat, dark, fill } => {
                for r in [flat, dark] {
                    match r {
                        ReferenceSpec::Named(n) if n != "mean" => {
                            return Err(format!("unknown reference `{n}` (expected a number or \"mean\")"))
                        }
                        ReferenceSpec::SliceMean { slice_mean } if slice_mean.len() != 1 => {
                            return Err("slice_mean takes exactly one label = index".into())
                        }
                        _ => {}
                    }
                }
                if !fill.is_finite() {
                    return Err("fill must be finite".into());
                }
            }
            StageSpec::Absorption { floor } if !(*floor > 0.0) => return Err("floor must be positive".into()),
            StageSpec::Centre { slice: SliceSpec::Named(n) } if n != "centre" => {
                return Err(format!("unknown slice `{n}` (expected an index or \"centre\")"))
            }
            StageSpec::Slice { roi } | StageSpec::Bin { roi } => {
                for (label, r) in roi {
                    if !(2..=3).contains(&r.len()) {
                        return Err(format!("roi.{label} needs [start, stop] or [start, stop, step]"));
                    }
                }
            }
            StageSpec::Mask { lower, upper, fill } => {
                if lower.is_some() != upper.is_some() {
                    return Err("give both lower and upper, or neither".into());
                }
                if let FillSpec::Named(n) = fill {
                    if n != "local_mean" {
                        return Err(format!("unknown fill `{n}` (expected a number or \"local_mean\")"));
                    }
                }
            }
            StageSpec::RingRemove { width } if *width < 3 || width % 2 == 0 => {
                return Err(format!("width must be odd and at least 3, got {width}"))
            }
            _ => {}
        }
        Ok(())
    }
}

impl ReconSpec {
    fn validate(&self) -> Result<(), String> {
        if let Some(image) = &self.image {
            image.build().map_err(|e| e.to_string())?;
        }
        if self.method == Method::Fbp {
            if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
                return Err(format!("cutoff must lie in (0, 1], got {}", self.cutoff));
            }
            return Ok(());
        }
        if self.iterations == 0 {
            return Err("iterative methods need iterations > 0".into());
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if let (Some(lo), Some(hi)) = (self.lower, self.upper) {
            if lo > hi {
                return Err(format!("lower bound {lo} exceeds upper bound {hi}"));
            }
        }
        let bounded = self.lower.is_some() || self.upper.is_some();
        let kl = self.data == DataTerm::KullbackLeibler;
        let reg = self.regulariser;
        let unsupported = |what: &str| Err(format!("{what} is not available with {:?}", self.method).to_lowercase());
        match self.method {
            Method::Cgls => {
                if kl || bounded || !matches!(reg, Regulariser::None | Regulariser::Tikhonov) {
                    return unsupported("only unconstrained least squares with optional tikhonov");
                }
            }
            Method::Sirt => {
                if kl || reg != Regulariser::None {
                    return unsupported("a regulariser or KL data term");
                }
            }
            Method::Gd => {
                if kl || bounded || !matches!(reg, Regulariser::None | Regulariser::Tikhonov) {
                    return unsupported("only smooth objectives; use tikhonov or none, without bounds");
                }
            }
            Method::Fista => {
                if kl {
                    return unsupported("the KL data term (its gradient is not Lipschitz)");
                }
                if bounded && reg == Regulariser::L1 {
                    return unsupported("bounds combined with l1");
                }
            }
            Method::Pdhg | Method::Ladmm | Method::Fbp => {}
        }
        if self.relaxation.is_some() && self.method != Method::Sirt {
            return Err("relaxation applies to sirt only".into());
        }
        if (self.sigma.is_some() || self.tau.is_some()) && !matches!(self.method, Method::Pdhg | Method::Ladmm) {
            return Err("sigma and tau apply to pdhg and ladmm only".into());
        }
        if reg != Regulariser::None && self.alpha == 0.0 {
            log::warn!("recon: regulariser set with alpha = 0");
        }
        Ok(())
    }
}
