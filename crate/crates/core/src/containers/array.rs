use ndarray::{ArrayD, Axis, IxDyn};

use super::geometry::{Geometry, VERTICAL};
#[cfg(test)]
use super::geometry::{ANGLE, HORIZONTAL};
use crate::error::{Error, Result};

/// Dense n-D array of `f64` with named axes and an optional geometry.
///
/// Values are always kept in standard (row-major) layout in label order.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledArray {
    values: ArrayD<f64>,
    labels: Vec<String>,
    geometry: Option<Geometry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Gt,
    Ge,
    Lt,
    Le,
    Max,
    Min,
}

impl BinaryOp {
    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        let flag = |c: bool| if c { 1.0 } else { 0.0 };
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Gt => flag(a > b),
            BinaryOp::Ge => flag(a >= b),
            BinaryOp::Lt => flag(a < b),
            BinaryOp::Le => flag(a <= b),
            BinaryOp::Max => a.max(b),
            BinaryOp::Min => a.min(b),
        }
    }
}

/// Right-hand side of an elementwise binary operation.
#[derive(Clone, Copy, Debug)]
pub enum Operand<'a> {
    Array(&'a LabeledArray),
    Scalar(f64),
}

impl<'a> From<&'a LabeledArray> for Operand<'a> {
    fn from(a: &'a LabeledArray) -> Self {
        Operand::Array(a)
    }
}

impl From<f64> for Operand<'_> {
    fn from(s: f64) -> Self {
        Operand::Scalar(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Log,
    Abs,
}

impl LabeledArray {
    pub fn new(values: ArrayD<f64>, labels: Vec<String>) -> Result<Self> {
        Self::build(values, labels, None)
    }

    pub fn with_geometry(values: ArrayD<f64>, geometry: Geometry) -> Result<Self> {
        let labels = geometry.labels();
        Self::build(values, labels, Some(geometry))
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>, labels: &[&str]) -> Result<Self> {
        let values = ArrayD::from_shape_vec(IxDyn(shape), data)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(values, labels.iter().map(|s| s.to_string()).collect())
    }

    /// 1-D array with a single axis named `label`.
    pub fn vector(data: Vec<f64>, label: &str) -> Self {
        let n = data.len();
        Self::from_vec(&[n], data, &[label]).expect("1-D shape always matches")
    }

    /// Zero-filled array shaped by `geometry`.
    pub fn zeros(geometry: &Geometry) -> Self {
        Self::filled(geometry, 0.0)
    }

    pub fn filled(geometry: &Geometry, value: f64) -> Self {
        let values = ArrayD::from_elem(IxDyn(&geometry.shape()), value);
        LabeledArray {
            values,
            labels: geometry.labels(),
            geometry: Some(geometry.clone()),
        }
    }

    fn build(values: ArrayD<f64>, labels: Vec<String>, geometry: Option<Geometry>) -> Result<Self> {
        if labels.len() != values.ndim() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for a {}-dimensional array",
                labels.len(),
                values.ndim()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidArgument(format!("duplicate axis label `{l}`")));
            }
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        let array = LabeledArray {
            values,
            labels,
            geometry,
        };
        array.check_geometry()?;
        Ok(array)
    }

    fn check_geometry(&self) -> Result<()> {
        if let Some(g) = &self.geometry {
            g.validate()?;
            let shape = g.shape();
            if shape != self.shape() {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    found: self.shape().to_vec(),
                });
            }
            let labels = g.labels();
            if labels != self.labels {
                return Err(Error::LabelMismatch {
                    expected: labels,
                    found: self.labels.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &ArrayD<f64> {
        &self.values
    }

    pub fn into_values(self) -> ArrayD<f64> {
        self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        self.geometry.as_ref()
    }

    /// Replace the geometry, revalidating shape and labels.
    pub fn set_geometry(&mut self, geometry: Option<Geometry>) -> Result<()> {
        let previous = std::mem::replace(&mut self.geometry, geometry);
        if let Err(e) = self.check_geometry() {
            self.geometry = previous;
            return Err(e);
        }
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn ndim(&self) -> usize {
        self.values.ndim()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values
            .as_slice()
            .expect("values are kept in standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        self.values
            .as_slice_mut()
            .expect("values are kept in standard layout")
    }

    pub fn axis_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Same storage, values replaced; geometry and labels carried over.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.len()],
                found: vec![values.len()],
            });
        }
        let values = ArrayD::from_shape_vec(IxDyn(self.shape()), values)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(LabeledArray {
            values,
            labels: self.labels.clone(),
            geometry: self.geometry.clone(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        LabeledArray {
            values: ArrayD::zeros(self.values.raw_dim()),
            labels: self.labels.clone(),
            geometry: self.geometry.clone(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.values.fill(value);
    }

    pub fn same_layout(&self, other: &LabeledArray) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape().to_vec(),
                found: other.shape().to_vec(),
            });
        }
        if self.labels != other.labels {
            return Err(Error::LabelMismatch {
                expected: self.labels.clone(),
                found: other.labels.clone(),
            });
        }
        Ok(())
    }

    /// Elementwise `self op rhs`. Division by an exact zero is an error.
    pub fn binary<'a>(&self, op: BinaryOp, rhs: impl Into<Operand<'a>>) -> Result<Self> {
        let mut out = self.clone();
        out.binary_in_place(op, rhs)?;
        Ok(out)
    }

    /// In-place `self ← self op rhs`, reusing the existing buffer.
    pub fn binary_in_place<'a>(&mut self, op: BinaryOp, rhs: impl Into<Operand<'a>>) -> Result<()> {
        match rhs.into() {
            Operand::Scalar(s) => {
                if op == BinaryOp::Div && s == 0.0 {
                    return Err(Error::DivisionByZero { count: self.len() });
                }
                self.as_slice_mut().iter_mut().for_each(|a| *a = op.apply(*a, s));
            }
            Operand::Array(other) => {
                self.same_layout(other)?;
                if op == BinaryOp::Div {
                    let zeros = other.as_slice().iter().filter(|&&b| b == 0.0).count();
                    if zeros > 0 {
                        return Err(Error::DivisionByZero { count: zeros });
                    }
                }
                self.as_slice_mut()
                    .iter_mut()
                    .zip(other.as_slice())
                    .for_each(|(a, &b)| *a = op.apply(*a, b));
            }
        }
        Ok(())
    }

    pub fn add<'a>(&self, rhs: impl Into<Operand<'a>>) -> Result<Self> {
        self.binary(BinaryOp::Add, rhs)
    }
    pub fn sub<'a>(&self, rhs: impl Into<Operand<'a>>) -> Result<Self> {
        self.binary(BinaryOp::Sub, rhs)
    }
    pub fn mul<'a>(&self, rhs: impl Into<Operand<'a>>) -> Result<Self> {
        self.binary(BinaryOp::Mul, rhs)
    }
    pub fn div<'a>(&self, rhs: impl Into<Operand<'a>>) -> Result<Self> {
        self.binary(BinaryOp::Div, rhs)
    }

    pub fn apply(&self, f: UnaryFn) -> Result<Self> {
        let mut out = self.clone();
        out.apply_in_place(f)?;
        Ok(out)
    }

    pub fn apply_in_place(&mut self, f: UnaryFn) -> Result<()> {
        match f {
            UnaryFn::Exp => self.map_in_place(f64::exp),
            UnaryFn::Abs => self.map_in_place(f64::abs),
            UnaryFn::Log => {
                let bad = self.as_slice().iter().filter(|&&v| !(v > 0.0)).count();
                if bad > 0 {
                    return Err(Error::Domain(format!(
                        "log of {bad} non-positive element(s)"
                    )));
                }
                self.map_in_place(f64::ln)
            }
        }
        Ok(())
    }

    pub fn map_in_place(&mut self, f: impl Fn(f64) -> f64) {
        self.as_slice_mut().iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.map_in_place(f);
        out
    }

    pub fn sum(&self) -> f64 {
        self.as_slice().iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dot(&self, other: &LabeledArray) -> Result<f64> {
        self.same_layout(other)?;
        Ok(self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn squared_norm(&self) -> f64 {
        self.as_slice().iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    /// Remove axis `label` by taking the hyperplane at `index`.
    pub fn get_slice(&self, label: &str, index: usize) -> Result<Self> {
        let axis = self.axis_index(label)?;
        let extent = self.shape()[axis];
        if index >= extent {
            return Err(Error::IndexOutOfRange {
                label: label.to_string(),
                index,
                extent,
            });
        }
        let values = self.values.index_axis(Axis(axis), index).to_owned();
        let mut labels = self.labels.clone();
        labels.remove(axis);
        let geometry = self.geometry.as_ref().and_then(|g| sliced_geometry(g, label, index));
        let mut out = LabeledArray::build(values, labels, None)?;
        if let Some(g) = geometry {
            // drop rather than fail when the reduced geometry cannot describe the slice
            let _ = out.set_geometry(Some(g));
        }
        Ok(out)
    }

    /// Physically transpose to `order`, which must be a permutation of the labels.
    pub fn reorder(&self, order: &[&str]) -> Result<Self> {
        if order.len() != self.ndim() {
            return Err(Error::InvalidArgument(format!(
                "{order:?} is not a permutation of {:?}",
                self.labels
            )));
        }
        let mut perm = Vec::with_capacity(order.len());
        for l in order {
            let i = self.axis_index(l)?;
            if perm.contains(&i) {
                return Err(Error::InvalidArgument(format!(
                    "{order:?} is not a permutation of {:?}",
                    self.labels
                )));
            }
            perm.push(i);
        }
        let values = self
            .values
            .clone()
            .permuted_axes(IxDyn(&perm))
            .as_standard_layout()
            .into_owned();
        let labels = order.iter().map(|s| s.to_string()).collect();
        let mut out = LabeledArray::build(values, labels, None)?;
        // geometry shape conventions are tied to the canonical axis order
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            out.geometry = self.geometry.clone();
        }
        Ok(out)
    }

    /// Stack arrays of identical layout along a new leading axis.
    pub fn stack(parts: &[LabeledArray], label: &str) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero arrays".into()))?;
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            first.same_layout(p)?;
            data.extend_from_slice(p.as_slice());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(first.shape());
        let mut labels = vec![label.to_string()];
        labels.extend(first.labels.iter().cloned());
        let values = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        LabeledArray::build(values, labels, None)
    }

    pub(crate) fn from_parts_unchecked(
        values: ArrayD<f64>,
        labels: Vec<String>,
        geometry: Option<Geometry>,
    ) -> Result<Self> {
        Self::build(values, labels, geometry)
    }
}

fn sliced_geometry(g: &Geometry, label: &str, index: usize) -> Option<Geometry> {
    match g {
        Geometry::Acquisition(ag) => match label {
            VERTICAL => ag.row_geometry(index).map(Geometry::Acquisition),
            _ => None,
        },
        Geometry::Image(ig) => match label {
            VERTICAL => ig.slice_geometry().map(Geometry::Image),
            _ => None,
        },
    }
}
