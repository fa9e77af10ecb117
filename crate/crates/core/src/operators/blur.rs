use crate::containers::{Data, LabeledArray, Space};
use crate::error::{Error, Result};

use super::LinearOperator;

/// Point-spread-function blur: correlation with a small odd-sized kernel and
/// zero padding. The adjoint correlates with the flipped kernel.
#[derive(Debug, Clone)]
pub struct BlurringOperator {
    space: Space,
    shape: [usize; 3],
    kernel: Vec<f64>,
    kshape: [usize; 3],
}

/// Pad a shape of rank ≤ 3 to rank 3 with leading ones.
fn as_3d(shape: &[usize]) -> Option<[usize; 3]> {
    match *shape {
        [n] => Some([1, 1, n]),
        [a, b] => Some([1, a, b]),
        [a, b, c] => Some([a, b, c]),
        _ => None,
    }
}

impl BlurringOperator {
    pub fn new(space: impl Into<Space>, psf: &LabeledArray) -> Result<Self> {
        let space = space.into();
        let image_shape = match &space {
            Space::Array(s) => s.shape.clone(),
            Space::Block(_) => {
                return Err(Error::InvalidArgument("blurring acts on a single image".into()))
            }
        };
        if psf.ndim() != image_shape.len() {
            return Err(Error::InvalidArgument(format!(
                "kernel rank {} differs from image rank {}",
                psf.ndim(),
                image_shape.len()
            )));
        }
        let shape = as_3d(&image_shape)
            .ok_or_else(|| Error::InvalidArgument("blurring supports 1-3 dimensions".into()))?;
        let kshape = as_3d(psf.shape()).expect("rank checked above");
        for (k, n) in kshape.iter().zip(&shape) {
            if k % 2 == 0 {
                return Err(Error::InvalidArgument("kernel extents must be odd".into()));
            }
            if k > n {
                return Err(Error::InvalidArgument("kernel larger than image".into()));
            }
        }
        Ok(BlurringOperator {
            space,
            shape,
            kernel: psf.as_slice().to_vec(),
            kshape,
        })
    }

    fn correlate(&self, x: &[f64], out: &mut [f64], flip: bool) {
        let [nz, ny, nx] = self.shape;
        let [kz, ky, kx] = self.kshape;
        let (cz, cy, cx) = ((kz / 2) as isize, (ky / 2) as isize, (kx / 2) as isize);
        let sign: isize = if flip { -1 } else { 1 };
        for z in 0..nz {
            for y in 0..ny {
                for xi in 0..nx {
                    let mut acc = 0.0;
                    for a in 0..kz {
                        let zz = z as isize + sign * (a as isize - cz);
                        if zz < 0 || zz >= nz as isize {
                            continue;
                        }
                        for b in 0..ky {
                            let yy = y as isize + sign * (b as isize - cy);
                            if yy < 0 || yy >= ny as isize {
                                continue;
                            }
                            for c in 0..kx {
                                let xx = xi as isize + sign * (c as isize - cx);
                                if xx < 0 || xx >= nx as isize {
                                    continue;
                                }
                                let w = self.kernel[(a * ky + b) * kx + c];
                                acc += w * x[((zz as usize) * ny + yy as usize) * nx + xx as usize];
                            }
                        }
                    }
                    out[(z * ny + y) * nx + xi] = acc;
                }
            }
        }
    }
}

impl LinearOperator for BlurringOperator {
    fn domain(&self) -> &Space {
        &self.space
    }
    fn range(&self) -> &Space {
        &self.space
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.correlate(x.as_array()?.as_slice(), out.as_array_mut()?.as_slice_mut(), false);
        Ok(())
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        self.correlate(y.as_array()?.as_slice(), out.as_array_mut()?.as_slice_mut(), true);
        Ok(())
    }
}
