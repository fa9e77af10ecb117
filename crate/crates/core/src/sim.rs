//! Phantoms, noise models and image-quality metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::containers::{Geometry, ImageGeometry, LabeledArray};
use crate::error::{Error, Result};

/// Modified Shepp–Logan ellipses (Toft's higher-contrast intensities):
/// value, semi-axes a, b, centre x, y, rotation in degrees.
const SHEPP_LOGAN_2D: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Ellipsoids: value, semi-axes a, b, c, centre x, y, z, Euler angles φ, θ, ψ in degrees.
const SHEPP_LOGAN_3D: [[f64; 10]; 10] = [
    [1.0, 0.69, 0.92, 0.81, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.78, 0.0, -0.0184, 0.0, 0.0, 0.0, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.22, 0.0, 0.0, -18.0, 0.0, 10.0],
    [-0.2, 0.16, 0.41, 0.28, -0.22, 0.0, 0.0, 18.0, 0.0, 10.0],
    [0.1, 0.21, 0.25, 0.41, 0.0, 0.35, -0.15, 0.0, 0.0, 0.0],
    [0.1, 0.046, 0.046, 0.05, 0.0, 0.1, 0.25, 0.0, 0.0, 0.0],
    [0.1, 0.046, 0.046, 0.05, 0.0, -0.1, 0.25, 0.0, 0.0, 0.0],
    [0.1, 0.046, 0.023, 0.05, -0.08, -0.605, 0.0, 0.0, 0.0, 0.0],
    [0.1, 0.023, 0.023, 0.02, 0.0, -0.606, 0.0, 0.0, 0.0, 0.0],
    [0.1, 0.023, 0.046, 0.02, 0.06, -0.605, 0.0, 0.0, 0.0, 0.0],
];

fn one() -> f64 {
    1.0
}

/// Test objects. Shepp–Logan coordinates are normalised so that ±1 spans the
/// grid; disk and wire dimensions are in world units and extend along z on
/// 3-D grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phantom {
    SheppLogan2d {
        #[serde(default = "one")]
        scale: f64,
    },
    SheppLogan3d {
        #[serde(default = "one")]
        scale: f64,
    },
    Disk {
        value: f64,
        radius: f64,
    },
    /// A cylinder of one material with an off-centre wire of another running
    /// through it, like a metal wire pushed into an aluminium rod.
    WireInCylinder {
        cylinder_value: f64,
        wire_value: f64,
        cylinder_radius: f64,
        wire_radius: f64,
        #[serde(default)]
        wire_offset: [f64; 2],
    },
}

impl Phantom {
    fn validate(&self, ig: &ImageGeometry) -> Result<()> {
        let [nx, ny, _] = ig.voxel_num();
        let [sx, sy, _] = ig.voxel_size();
        let half = 0.5 * (nx as f64 * sx).min(ny as f64 * sy);
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match *self {
            Phantom::SheppLogan2d { scale } => {
                if ig.dimension() != 2 {
                    return Err(Error::InvalidArgument("shepp_logan_2d needs a 2-D grid".into()));
                }
                finite(&[scale])
            }
            Phantom::SheppLogan3d { scale } => {
                if ig.dimension() != 3 {
                    return Err(Error::InvalidArgument("shepp_logan_3d needs a 3-D grid".into()));
                }
                finite(&[scale])
            }
            Phantom::Disk { value, radius } => finite(&[value, radius]) && radius > 0.0 && radius <= half,
            Phantom::WireInCylinder {
                cylinder_value,
                wire_value,
                cylinder_radius,
                wire_radius,
                wire_offset,
            } => {
                finite(&[cylinder_value, wire_value, cylinder_radius, wire_radius, wire_offset[0], wire_offset[1]])
                    && cylinder_radius > 0.0
                    && cylinder_radius <= half
                    && wire_radius > 0.0
                    && wire_offset[0].hypot(wire_offset[1]) + wire_radius <= half
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "phantom {self:?} has non-finite values or radii outside the grid (half-width {half})"
            )))
        }
    }

    /// Value at a world point.
    fn sample(&self, p: [f64; 3], half: [f64; 3]) -> f64 {
        match *self {
            Phantom::SheppLogan2d { scale } => {
                let (x, y) = (p[0] / half[0], p[1] / half[1]);
                scale
                    * SHEPP_LOGAN_2D
                        .iter()
                        .filter(|e| {
                            let (s, c) = e[5].to_radians().sin_cos();
                            let (dx, dy) = (x - e[3], y - e[4]);
                            let u = dx * c + dy * s;
                            let v = -dx * s + dy * c;
                            (u / e[1]).powi(2) + (v / e[2]).powi(2) <= 1.0
                        })
                        .map(|e| e[0])
                        .sum::<f64>()
            }
            Phantom::SheppLogan3d { scale } => {
                let q = [p[0] / half[0], p[1] / half[1], p[2] / half[2]];
                scale
                    * SHEPP_LOGAN_3D
                        .iter()
                        .filter(|e| {
                            let r = euler(e[7], e[8], e[9]);
                            let mut inside = 0.0;
                            for (k, row) in r.iter().enumerate() {
                                let rotated = row[0] * q[0] + row[1] * q[1] + row[2] * q[2];
                                inside += ((rotated - e[4 + k]) / e[1 + k]).powi(2);
                            }
                            inside <= 1.0
                        })
                        .map(|e| e[0])
                        .sum::<f64>()
            }
            Phantom::Disk { value, radius } => {
                if p[0].hypot(p[1]) <= radius {
                    value
                } else {
                    0.0
                }
            }
            Phantom::WireInCylinder {
                cylinder_value,
                wire_value,
                cylinder_radius,
                wire_radius,
                wire_offset,
            } => {
                if (p[0] - wire_offset[0]).hypot(p[1] - wire_offset[1]) <= wire_radius {
                    wire_value
                } else if p[0].hypot(p[1]) <= cylinder_radius {
                    cylinder_value
                } else {
                    0.0
                }
            }
        }
    }
}

/// Rotation matrix for z-x-z Euler angles in degrees.
fn euler(phi: f64, theta: f64, psi: f64) -> [[f64; 3]; 3] {
    let (sp, cp) = phi.to_radians().sin_cos();
    let (st, ct) = theta.to_radians().sin_cos();
    let (ss, cs) = psi.to_radians().sin_cos();
    [
        [cs * cp - ct * sp * ss, cs * sp + ct * cp * ss, ss * st],
        [-ss * cp - ct * sp * cs, -ss * sp + ct * cp * cs, cs * st],
        [st * sp, -st * cp, ct],
    ]
}

/// Rasterise a phantom by sampling every voxel centre (no anti-aliasing).
pub fn make_phantom(phantom: &Phantom, ig: &ImageGeometry) -> Result<LabeledArray> {
    phantom.validate(ig)?;
    let [nx, ny, nz] = ig.voxel_num();
    let size = ig.voxel_size();
    let offset = ig.center_offset();
    let half = [
        0.5 * nx as f64 * size[0],
        0.5 * ny as f64 * size[1],
        0.5 * nz as f64 * size[2],
    ];
    let mut values = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                // phantom coordinates are relative to the grid centre
                let p = [
                    ig.voxel_centre(0, x) - offset[0],
                    ig.voxel_centre(1, y) - offset[1],
                    if ig.dimension() == 3 { ig.voxel_centre(2, z) - offset[2] } else { 0.0 },
                ];
                values.push(phantom.sample(p, half));
            }
        }
    }
    LabeledArray::filled(&Geometry::from(ig.clone()), 0.0).with_values(values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Noise {
    Gaussian { sigma: f64 },
    /// Counts `I₀·exp(−p)` are Poisson-sampled and converted back by `−ln(n/I₀)`.
    Poisson { incident: f64 },
}

#[derive(Clone, Debug)]
pub struct Noisy {
    pub data: LabeledArray,
    /// Zero-count samples raised to one count before the logarithm.
    pub clipped: usize,
}

pub fn add_noise(data: &LabeledArray, noise: Noise, seed: u64) -> Result<Noisy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match noise {
        Noise::Gaussian { sigma } => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise σ must be ≥ 0, got {sigma}")));
            }
            if sigma == 0.0 {
                return Ok(Noisy { data: data.clone(), clipped: 0 });
            }
            let normal = Normal::new(0.0, sigma).expect("σ validated above");
            let values = data.as_slice().iter().map(|v| v + normal.sample(&mut rng)).collect();
            Ok(Noisy {
                data: data.with_values(values)?,
                clipped: 0,
            })
        }
        Noise::Poisson { incident } => {
            if !(incident > 0.0 && incident.is_finite()) {
                return Err(Error::InvalidArgument(format!("incident intensity must be > 0, got {incident}")));
            }
            let mut clipped = 0;
            let mut values = Vec::with_capacity(data.len());
            for &p in data.as_slice() {
                let mean = incident * (-p).exp();
                let counts = match Poisson::new(mean) {
                    Ok(d) => d.sample(&mut rng),
                    Err(_) if mean == 0.0 => 0.0,
                    Err(e) => return Err(Error::InvalidArgument(format!("Poisson mean {mean}: {e}"))),
                };
                let counts = if counts < 1.0 {
                    clipped += 1;
                    1.0
                } else {
                    counts
                };
                values.push(-(counts / incident).ln());
            }
            if clipped > 0 {
                log::warn!("poisson noise: {clipped} zero-count sample(s) clipped to one count");
            }
            Ok(Noisy {
                data: data.with_values(values)?,
                clipped,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Finite(f64),
    /// The images are identical.
    Infinite,
}

impl Psnr {
    pub fn as_f64(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub psnr: Psnr,
}

/// MSE and PSNR of `x` against `reference`; the peak defaults to `max(reference)`.
pub fn metrics(x: &LabeledArray, reference: &LabeledArray, peak: Option<f64>) -> Result<Metrics> {
    if x.shape() != reference.shape() {
        return Err(Error::ShapeMismatch {
            expected: reference.shape().to_vec(),
            found: x.shape().to_vec(),
        });
    }
    let n = x.len() as f64;
    let mse = x
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n;
    let peak = peak.unwrap_or_else(|| reference.max());
    let psnr = if mse == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Finite(10.0 * (peak * peak / mse).log10())
    };
    Ok(Metrics { mse, psnr })
}
