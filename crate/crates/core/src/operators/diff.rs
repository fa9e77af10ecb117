//! Finite differences, the gradient and the symmetrised gradient.

use std::f64::consts::SQRT_2;

use crate::containers::{ArraySpace, Data, Geometry, Space};
use crate::error::{Error, Result};

use super::LinearOperator;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Boundary {
    #[default]
    Neumann,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

/// One-dimensional difference stencil along `axis` of an n-D array.
#[derive(Clone, Copy, Debug)]
struct Stencil {
    axis: usize,
    spacing: f64,
    boundary: Boundary,
    direction: Direction,
}

/// Split `shape` around `axis` into (outer, extent, inner) strides.
fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Stencil {
    fn direct(&self, shape: &[usize], x: &[f64], out: &mut [f64]) {
        let (outer, n, inner) = split(shape, self.axis);
        let inv = 1.0 / self.spacing;
        for o in 0..outer {
            let base = o * n * inner;
            for k in 0..inner {
                let at = |i: usize| base + i * inner + k;
                for i in 0..n {
                    out[at(i)] = match (self.direction, self.boundary) {
                        (Direction::Forward, Boundary::Neumann) => {
                            if i + 1 < n {
                                (x[at(i + 1)] - x[at(i)]) * inv
                            } else {
                                0.0
                            }
                        }
                        (Direction::Forward, Boundary::Periodic) => {
                            (x[at((i + 1) % n)] - x[at(i)]) * inv
                        }
                        (Direction::Backward, Boundary::Neumann) => {
                            if i > 0 {
                                (x[at(i)] - x[at(i - 1)]) * inv
                            } else {
                                0.0
                            }
                        }
                        (Direction::Backward, Boundary::Periodic) => {
                            (x[at(i)] - x[at((i + n - 1) % n)]) * inv
                        }
                    };
                }
            }
        }
    }

    fn adjoint(&self, shape: &[usize], y: &[f64], out: &mut [f64]) {
        let (outer, n, inner) = split(shape, self.axis);
        let inv = 1.0 / self.spacing;
        for o in 0..outer {
            let base = o * n * inner;
            for k in 0..inner {
                let at = |i: usize| base + i * inner + k;
                for i in 0..n {
                    out[at(i)] = match (self.direction, self.boundary) {
                        (Direction::Forward, Boundary::Neumann) => {
                            let prev = if i > 0 { y[at(i - 1)] } else { 0.0 };
                            let here = if i + 1 < n { y[at(i)] } else { 0.0 };
                            (prev - here) * inv
                        }
                        (Direction::Forward, Boundary::Periodic) => {
                            (y[at((i + n - 1) % n)] - y[at(i)]) * inv
                        }
                        (Direction::Backward, Boundary::Neumann) => {
                            let here = if i > 0 { y[at(i)] } else { 0.0 };
                            let next = if i + 1 < n { y[at(i + 1)] } else { 0.0 };
                            (here - next) * inv
                        }
                        (Direction::Backward, Boundary::Periodic) => {
                            (y[at(i)] - y[at((i + 1) % n)]) * inv
                        }
                    };
                }
            }
        }
    }
}

fn array_space(space: &Space) -> Result<&ArraySpace> {
    match space {
        Space::Array(s) => Ok(s),
        Space::Block(_) => Err(Error::InvalidArgument(
            "differential operators act on single arrays".into(),
        )),
    }
}

/// Grid spacing per array axis: voxel sizes for image geometries, 1 otherwise.
fn spacing_of(space: &ArraySpace) -> Vec<f64> {
    match &space.geometry {
        Some(Geometry::Image(ig)) => ig.spacing(),
        _ => vec![1.0; space.shape.len()],
    }
}

/// Forward (or backward) difference along one labelled axis.
#[derive(Debug, Clone)]
pub struct FiniteDifference {
    space: Space,
    shape: Vec<usize>,
    stencil: Stencil,
}

impl FiniteDifference {
    pub fn new(space: Space, axis: &str, boundary: Boundary) -> Result<Self> {
        let s = array_space(&space)?;
        let index = s
            .labels
            .iter()
            .position(|l| l == axis)
            .ok_or_else(|| Error::UnknownLabel(axis.to_string()))?;
        let spacing = spacing_of(s)[index];
        let shape = s.shape.clone();
        Ok(FiniteDifference {
            space,
            shape,
            stencil: Stencil {
                axis: index,
                spacing,
                boundary,
                direction: Direction::Forward,
            },
        })
    }

    pub fn with_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument("spacing must be positive".into()));
        }
        self.stencil.spacing = spacing;
        Ok(self)
    }

    /// Use backward differences (first entry zero under Neumann boundary).
    pub fn backward(mut self) -> Self {
        self.stencil.direction = Direction::Backward;
        self
    }
}

impl LinearOperator for FiniteDifference {
    fn domain(&self) -> &Space {
        &self.space
    }
    fn range(&self) -> &Space {
        &self.space
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.stencil.direct(
            &self.shape,
            x.as_array()?.as_slice(),
            out.as_array_mut()?.as_slice_mut(),
        );
        Ok(())
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        self.stencil.adjoint(
            &self.shape,
            y.as_array()?.as_slice(),
            out.as_array_mut()?.as_slice_mut(),
        );
        Ok(())
    }
}

/// Forward differences along every axis; the range is a block with one entry per axis.
#[derive(Debug, Clone)]
pub struct GradientOperator {
    domain: Space,
    range: Space,
    shape: Vec<usize>,
    stencils: Vec<Stencil>,
}

impl GradientOperator {
    pub fn new(space: impl Into<Space>) -> Result<Self> {
        Self::with_boundary(space, Boundary::Neumann)
    }

    pub fn with_boundary(space: impl Into<Space>, boundary: Boundary) -> Result<Self> {
        let domain = space.into();
        let s = array_space(&domain)?;
        if s.shape.is_empty() {
            return Err(Error::InvalidArgument("gradient needs at least one axis".into()));
        }
        let stencils = spacing_of(s)
            .into_iter()
            .enumerate()
            .map(|(axis, spacing)| Stencil {
                axis,
                spacing,
                boundary,
                direction: Direction::Forward,
            })
            .collect::<Vec<_>>();
        let shape = s.shape.clone();
        let range = Space::Block(vec![domain.clone(); stencils.len()]);
        Ok(GradientOperator {
            domain,
            range,
            shape,
            stencils,
        })
    }

    /// Upper bound on ‖∇‖² (4 / h² per axis).
    pub fn squared_norm_bound(&self) -> f64 {
        self.stencils
            .iter()
            .map(|s| 4.0 / (s.spacing * s.spacing))
            .sum()
    }
}

impl LinearOperator for GradientOperator {
    fn domain(&self) -> &Space {
        &self.domain
    }
    fn range(&self) -> &Space {
        &self.range
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        let x = x.as_array()?.as_slice();
        let block = out.as_block_mut()?;
        for (stencil, entry) in self.stencils.iter().zip(block.entries_mut()) {
            stencil.direct(&self.shape, x, entry.as_array_mut()?.as_slice_mut());
        }
        Ok(())
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        let block = y.as_block()?;
        let out = out.as_array_mut()?.as_slice_mut();
        let mut tmp = vec![0.0; out.len()];
        out.fill(0.0);
        for (stencil, entry) in self.stencils.iter().zip(block.entries()) {
            stencil.adjoint(&self.shape, entry.as_array()?.as_slice(), &mut tmp);
            out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        }
        Ok(())
    }
}

/// Symmetrised Jacobian ½(J + Jᵀ) of a vector field, using backward differences.
///
/// The output block holds the d diagonal components followed by the
/// off-diagonal pairs (i < j) scaled by √2, so the Euclidean norm of the
/// block equals the Frobenius norm of the symmetric tensor.
#[derive(Debug, Clone)]
pub struct SymmetrisedGradient {
    domain: Space,
    range: Space,
    shape: Vec<usize>,
    stencils: Vec<Stencil>,
}

impl SymmetrisedGradient {
    pub fn new(image_space: impl Into<Space>) -> Result<Self> {
        let image = image_space.into();
        let s = array_space(&image)?;
        let d = s.shape.len();
        if d != 2 && d != 3 {
            return Err(Error::InvalidArgument(
                "symmetrised gradient needs a 2-D or 3-D image".into(),
            ));
        }
        let stencils = spacing_of(s)
            .into_iter()
            .enumerate()
            .map(|(axis, spacing)| Stencil {
                axis,
                spacing,
                boundary: Boundary::Neumann,
                direction: Direction::Backward,
            })
            .collect();
        let shape = s.shape.clone();
        Ok(SymmetrisedGradient {
            domain: Space::Block(vec![image.clone(); d]),
            range: Space::Block(vec![image; d + d * (d - 1) / 2]),
            shape,
            stencils,
        })
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let d = self.stencils.len();
        let mut pairs: Vec<_> = (0..d).map(|i| (i, i)).collect();
        for i in 0..d {
            for j in i + 1..d {
                pairs.push((i, j));
            }
        }
        pairs
    }
}

impl LinearOperator for SymmetrisedGradient {
    fn domain(&self) -> &Space {
        &self.domain
    }
    fn range(&self) -> &Space {
        &self.range
    }
    fn direct_into(&self, w: &Data, out: &mut Data) -> Result<()> {
        let w = w.as_block()?;
        let out = out.as_block_mut()?;
        let n: usize = self.shape.iter().product();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for (k, (i, j)) in self.pairs().into_iter().enumerate() {
            let target = out.entries_mut()[k].as_array_mut()?.as_slice_mut();
            if i == j {
                self.stencils[i].direct(&self.shape, w.entries()[i].as_array()?.as_slice(), target);
            } else {
                self.stencils[j].direct(&self.shape, w.entries()[i].as_array()?.as_slice(), &mut a);
                self.stencils[i].direct(&self.shape, w.entries()[j].as_array()?.as_slice(), &mut b);
                for ((t, x), y) in target.iter_mut().zip(&a).zip(&b) {
                    *t = (x + y) / SQRT_2;
                }
            }
        }
        Ok(())
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        let y = y.as_block()?;
        let out = out.as_block_mut()?;
        let n: usize = self.shape.iter().product();
        let mut tmp = vec![0.0; n];
        for e in out.entries_mut() {
            e.fill(0.0);
        }
        for (k, (i, j)) in self.pairs().into_iter().enumerate() {
            let src = y.entries()[k].as_array()?.as_slice();
            if i == j {
                self.stencils[i].adjoint(&self.shape, src, &mut tmp);
                add_into(out.entries_mut()[i].as_array_mut()?.as_slice_mut(), &tmp, 1.0);
            } else {
                self.stencils[j].adjoint(&self.shape, src, &mut tmp);
                add_into(out.entries_mut()[i].as_array_mut()?.as_slice_mut(), &tmp, 1.0 / SQRT_2);
                self.stencils[i].adjoint(&self.shape, src, &mut tmp);
                add_into(out.entries_mut()[j].as_array_mut()?.as_slice_mut(), &tmp, 1.0 / SQRT_2);
            }
        }
        Ok(())
    }
}

fn add_into(out: &mut [f64], x: &[f64], scale: f64) {
    out.iter_mut().zip(x).for_each(|(o, v)| *o += scale * v);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{ImageGeometry, LabeledArray};
    use crate::operators::testing::{dense, dense_adjoint_transposed, dot_test};
    use crate::operators::Operator;

    #[test]
    fn forward_difference_neumann() {
        let fd = Operator::new(FiniteDifference::new(Space::vector(3), "x", Boundary::Neumann).unwrap());
        let x: Data = LabeledArray::vector(vec![1.0, 3.0, 6.0], "x").into();
        assert_eq!(fd.direct(&x).unwrap().to_vec(), vec![2.0, 3.0, 0.0]);
        let c: Data = LabeledArray::vector(vec![4.0; 5], "x").into();
        let fd5 = Operator::new(FiniteDifference::new(Space::vector(5), "x", Boundary::Periodic).unwrap());
        assert!(fd5.direct(&c).unwrap().to_vec().iter().all(|&v| v == 0.0));
        assert!(matches!(
            FiniteDifference::new(Space::vector(3), "y", Boundary::Neumann),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn difference_adjoints_match_dense_transpose() {
        for boundary in [Boundary::Neumann, Boundary::Periodic] {
            let fwd = FiniteDifference::new(Space::vector(8), "x", boundary).unwrap();
            for op in [Operator::new(fwd.clone()), Operator::new(fwd.backward())] {
                assert_eq!(dense(&op).2, dense_adjoint_transposed(&op));
            }
        }
        let scaled = Operator::new(
            FiniteDifference::new(Space::array(&[3, 4], &["a", "b"]), "a", Boundary::Neumann)
                .unwrap()
                .with_spacing(0.5)
                .unwrap(),
        );
        assert_eq!(dense(&scaled).2, dense_adjoint_transposed(&scaled));
    }

    #[test]
    fn gradient_of_constant_is_zero_and_adjoint_matches_dense() {
        let ig = ImageGeometry::new_2d([6, 6], [1.0, 1.0]).unwrap();
        let grad = Operator::new(GradientOperator::new(ig.clone()).unwrap());
        let c = Space::from(ig).allocate(3.7);
        let g = grad.direct(&c).unwrap();
        assert_eq!(g.as_block().unwrap().len(), 2);
        assert!(g.to_vec().iter().all(|&v| v == 0.0));
        let (_, _, d) = dense(&grad);
        let dt = dense_adjoint_transposed(&grad);
        for (a, b) in d.iter().zip(&dt) {
            assert!((a - b).abs() <= 1e-12);
        }
        for seed in 0..20 {
            assert!(dot_test(&grad, seed) < 1e-10);
        }
    }

    #[test]
    fn single_axis_gradient_is_one_difference() {
        let grad = Operator::new(GradientOperator::new(Space::vector(4)).unwrap());
        let fd = Operator::new(FiniteDifference::new(Space::vector(4), "x", Boundary::Neumann).unwrap());
        let x: Data = LabeledArray::vector(vec![1.0, 4.0, 2.0, 8.0], "x").into();
        let g = grad.direct(&x).unwrap();
        assert_eq!(g.as_block().unwrap().entries()[0], fd.direct(&x).unwrap());
    }

    #[test]
    fn symmetrised_gradient_behaviour() {
        let ig = ImageGeometry::new_2d([5, 5], [1.0, 1.0]).unwrap();
        let e = Operator::new(SymmetrisedGradient::new(ig.clone()).unwrap());
        let constant = e.domain().allocate(2.0);
        assert!(e.direct(&constant).unwrap().to_vec().iter().all(|&v| v == 0.0));

        // field w = (x-coordinate, 0) with components in array-axis order (y, x)
        let img = Space::from(ig);
        let mut wx = img.zeros().into_array().unwrap();
        for (k, v) in wx.as_slice_mut().iter_mut().enumerate() {
            *v = (k % 5) as f64;
        }
        let w = Data::block(vec![img.zeros(), wx.into()]).unwrap();
        let out = e.direct(&w).unwrap();
        let comps = out.as_block().unwrap().entries();
        assert_eq!(comps.len(), 3);
        assert!(comps[0].to_vec().iter().all(|&v| v == 0.0));
        assert!(comps[2].to_vec().iter().all(|&v| v == 0.0));
        let exx = comps[1].as_array().unwrap();
        for row in 0..5 {
            for col in 1..5 {
                assert_eq!(exx.as_slice()[row * 5 + col], 1.0);
            }
        }
        let (_, _, d) = dense(&e);
        let dt = dense_adjoint_transposed(&e);
        for (a, b) in d.iter().zip(&dt) {
            assert!((a - b).abs() <= 1e-12);
        }
        for seed in 0..20 {
            assert!(dot_test(&e, seed) < 1e-10);
        }
        let scalar: Data = Space::vector(5).zeros();
        assert!(e.direct(&scalar).is_err());
    }
}
