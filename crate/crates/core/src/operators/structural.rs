use crate::containers::{Data, LabeledArray, Space};
use crate::error::{Error, Result};

use super::LinearOperator;

#[derive(Debug, Clone)]
pub struct IdentityOperator {
    space: Space,
}

impl IdentityOperator {
    pub fn new(space: Space) -> Self {
        IdentityOperator { space }
    }
}

impl LinearOperator for IdentityOperator {
    fn domain(&self) -> &Space {
        &self.space
    }
    fn range(&self) -> &Space {
        &self.space
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        out.copy_from(x)
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        out.copy_from(y)
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Maps everything to zero.
#[derive(Debug, Clone)]
pub struct ZeroOperator {
    domain: Space,
    range: Space,
}

impl ZeroOperator {
    pub fn new(domain: Space, range: Space) -> Self {
        ZeroOperator { domain, range }
    }
}

impl LinearOperator for ZeroOperator {
    fn domain(&self) -> &Space {
        &self.domain
    }
    fn range(&self) -> &Space {
        &self.range
    }
    fn direct_into(&self, _x: &Data, out: &mut Data) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
    fn adjoint_into(&self, _y: &Data, out: &mut Data) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Elementwise multiplication by a fixed array; self-adjoint.
#[derive(Debug, Clone)]
pub struct DiagonalOperator {
    diagonal: LabeledArray,
    space: Space,
}

impl DiagonalOperator {
    pub fn new(diagonal: LabeledArray) -> Result<Self> {
        let space = Data::Array(diagonal.clone()).space();
        Ok(DiagonalOperator { diagonal, space })
    }

    pub fn diagonal(&self) -> &LabeledArray {
        &self.diagonal
    }
}

fn multiply(diag: &LabeledArray, x: &Data, out: &mut Data) -> Result<()> {
    let x = x.as_array()?.as_slice();
    let out = out.as_array_mut()?.as_slice_mut();
    for ((o, &v), &d) in out.iter_mut().zip(x).zip(diag.as_slice()) {
        *o = d * v;
    }
    Ok(())
}

impl LinearOperator for DiagonalOperator {
    fn domain(&self) -> &Space {
        &self.space
    }
    fn range(&self) -> &Space {
        &self.space
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        multiply(&self.diagonal, x, out)
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        multiply(&self.diagonal, y, out)
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(self.diagonal.as_slice().iter().fold(0.0, |m, d| m.max(d.abs())))
    }
}

/// Keeps entries where the mask is 1 and zeroes the rest.
#[derive(Debug, Clone)]
pub struct MaskOperator {
    inner: DiagonalOperator,
}

impl MaskOperator {
    pub fn new(mask: LabeledArray) -> Result<Self> {
        if mask.as_slice().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::InvalidArgument("mask must contain only 0 and 1".into()));
        }
        Ok(MaskOperator {
            inner: DiagonalOperator::new(mask)?,
        })
    }
}

impl LinearOperator for MaskOperator {
    fn domain(&self) -> &Space {
        self.inner.domain()
    }
    fn range(&self) -> &Space {
        self.inner.range()
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.inner.direct_into(x, out)
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        self.inner.adjoint_into(y, out)
    }
    fn norm_hint(&self) -> Option<f64> {
        self.inner.norm_hint()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::testing::{dense, dense_adjoint_transposed, dot_test, random_like};
    use crate::operators::Operator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: Vec<f64>) -> Data {
        LabeledArray::vector(x, "x").into()
    }

    #[test]
    fn identity_and_zero() {
        let id = Operator::identity(Space::vector(3));
        let x = v(vec![1.5, -2.0, 3.25]);
        assert_eq!(id.direct(&x).unwrap(), x);
        let z = Operator::zero(Space::vector(3), Space::vector(2));
        assert_eq!(z.direct(&x).unwrap().to_vec(), vec![0.0, 0.0]);
        assert_eq!(z.adjoint(&v(vec![1.0, 1.0])).unwrap().to_vec(), vec![0.0; 3]);
        assert!(id.direct(&v(vec![1.0])).is_err());
    }

    #[test]
    fn diagonal_and_mask() {
        let d = Operator::new(DiagonalOperator::new(LabeledArray::vector(vec![1.0, 2.0, 3.0], "x")).unwrap());
        assert_eq!(d.direct(&v(vec![1.0; 3])).unwrap().to_vec(), vec![1.0, 2.0, 3.0]);
        let m = Operator::new(MaskOperator::new(LabeledArray::vector(vec![1.0, 0.0, 1.0], "x")).unwrap());
        assert_eq!(m.direct(&v(vec![5.0, 7.0, 9.0])).unwrap().to_vec(), vec![5.0, 0.0, 9.0]);
        assert!(MaskOperator::new(LabeledArray::vector(vec![0.5], "x")).is_err());
        assert!(d.direct(&v(vec![1.0; 4])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_like(d.domain(), &mut rng);
        assert_eq!(d.direct(&x).unwrap(), d.adjoint(&x).unwrap());
        for seed in 0..20 {
            assert!(dot_test(&d, seed) < 1e-10);
            assert!(dot_test(&m, seed) < 1e-10);
        }
        assert_eq!(dense(&d).2, dense_adjoint_transposed(&d));
    }
}
