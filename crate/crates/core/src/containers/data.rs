//! `Data` is what operators and functions consume: either a single labelled
//! array or a (possibly nested) block of them. `Space` describes the shape of
//! a `Data` value without holding any numbers.

use ndarray::{ArrayD, IxDyn};

use super::array::LabeledArray;
use super::geometry::Geometry;
use crate::error::{Error, Result};

/// Ordered, non-empty list of containers. Entries may themselves be blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockContainer {
    entries: Vec<Data>,
}

impl BlockContainer {
    pub fn new(entries: Vec<Data>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::BlockMismatch("block container must be non-empty".into()));
        }
        Ok(BlockContainer { entries })
    }

    pub fn entries(&self) -> &[Data] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Data] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<Data> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Data {
    Array(LabeledArray),
    Block(BlockContainer),
}

impl From<LabeledArray> for Data {
    fn from(a: LabeledArray) -> Self {
        Data::Array(a)
    }
}

impl From<BlockContainer> for Data {
    fn from(b: BlockContainer) -> Self {
        Data::Block(b)
    }
}

impl Data {
    pub fn block(entries: Vec<Data>) -> Result<Self> {
        Ok(Data::Block(BlockContainer::new(entries)?))
    }

    pub fn as_array(&self) -> Result<&LabeledArray> {
        match self {
            Data::Array(a) => Ok(a),
            Data::Block(_) => Err(Error::BlockMismatch("expected an array, got a block".into())),
        }
    }

    pub fn as_array_mut(&mut self) -> Result<&mut LabeledArray> {
        match self {
            Data::Array(a) => Ok(a),
            Data::Block(_) => Err(Error::BlockMismatch("expected an array, got a block".into())),
        }
    }

    pub fn into_array(self) -> Result<LabeledArray> {
        match self {
            Data::Array(a) => Ok(a),
            Data::Block(_) => Err(Error::BlockMismatch("expected an array, got a block".into())),
        }
    }

    pub fn as_block(&self) -> Result<&BlockContainer> {
        match self {
            Data::Block(b) => Ok(b),
            Data::Array(_) => Err(Error::BlockMismatch("expected a block, got an array".into())),
        }
    }

    pub fn as_block_mut(&mut self) -> Result<&mut BlockContainer> {
        match self {
            Data::Block(b) => Ok(b),
            Data::Array(_) => Err(Error::BlockMismatch("expected a block, got an array".into())),
        }
    }

    pub fn space(&self) -> Space {
        match self {
            Data::Array(a) => Space::Array(ArraySpace {
                shape: a.shape().to_vec(),
                labels: a.labels().to_vec(),
                geometry: a.geometry().cloned(),
            }),
            Data::Block(b) => Space::Block(b.entries.iter().map(Data::space).collect()),
        }
    }

    /// Total number of scalar entries.
    pub fn size(&self) -> usize {
        match self {
            Data::Array(a) => a.len(),
            Data::Block(b) => b.entries.iter().map(Data::size).sum(),
        }
    }

    /// Check that `other` has the same tree shape, array shapes and labels.
    pub fn same_layout(&self, other: &Data) -> Result<()> {
        match (self, other) {
            (Data::Array(a), Data::Array(b)) => a.same_layout(b),
            (Data::Block(a), Data::Block(b)) => {
                if a.len() != b.len() {
                    return Err(Error::BlockMismatch(format!(
                        "block lengths differ: {} vs {}",
                        a.len(),
                        b.len()
                    )));
                }
                a.entries
                    .iter()
                    .zip(&b.entries)
                    .try_for_each(|(x, y)| x.same_layout(y))
            }
            _ => Err(Error::BlockMismatch(
                "cannot combine an array with a block".into(),
            )),
        }
    }

    pub fn zeros_like(&self) -> Data {
        self.map(|_| 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Data {
        match self {
            Data::Array(a) => Data::Array(a.map(f)),
            Data::Block(b) => Data::Block(BlockContainer {
                entries: b.entries.iter().map(|e| e.map(f)).collect(),
            }),
        }
    }

    pub fn map_in_place(&mut self, f: impl Fn(f64) -> f64 + Copy) {
        self.for_each_array_mut(&mut |a| a.map_in_place(f));
    }

    fn for_each_array_mut(&mut self, f: &mut impl FnMut(&mut LabeledArray)) {
        match self {
            Data::Array(a) => f(a),
            Data::Block(b) => b.entries.iter_mut().for_each(|e| e.for_each_array_mut(f)),
        }
    }

    /// Visit leaf arrays in depth-first order.
    pub fn arrays(&self) -> Vec<&LabeledArray> {
        let mut out = Vec::new();
        self.collect_arrays(&mut out);
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut LabeledArray> {
        let mut out = Vec::new();
        self.collect_arrays_mut(&mut out);
        out
    }

    fn collect_arrays_mut<'a>(&'a mut self, out: &mut Vec<&'a mut LabeledArray>) {
        match self {
            Data::Array(a) => out.push(a),
            Data::Block(b) => b.entries.iter_mut().for_each(|e| e.collect_arrays_mut(out)),
        }
    }

    fn collect_arrays<'a>(&'a self, out: &mut Vec<&'a LabeledArray>) {
        match self {
            Data::Array(a) => out.push(a),
            Data::Block(b) => b.entries.iter().for_each(|e| e.collect_arrays(out)),
        }
    }

    /// `self[i] ← f(self[i], other[i])` over matching leaves.
    pub fn zip_in_place(&mut self, other: &Data, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<()> {
        self.same_layout(other)?;
        self.zip_unchecked(other, f);
        Ok(())
    }

    fn zip_unchecked(&mut self, other: &Data, f: impl Fn(f64, f64) -> f64 + Copy) {
        match (self, other) {
            (Data::Array(a), Data::Array(b)) => a
                .as_slice_mut()
                .iter_mut()
                .zip(b.as_slice())
                .for_each(|(x, &y)| *x = f(*x, y)),
            (Data::Block(a), Data::Block(b)) => a
                .entries
                .iter_mut()
                .zip(&b.entries)
                .for_each(|(x, y)| x.zip_unchecked(y, f)),
            _ => unreachable!("layout checked by caller"),
        }
    }

    pub fn zip_with(&self, other: &Data, f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Data> {
        let mut out = self.clone();
        out.zip_in_place(other, f)?;
        Ok(out)
    }

    pub fn add(&self, other: &Data) -> Result<Data> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Data) -> Result<Data> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Data) -> Result<Data> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scaled(&self, s: f64) -> Data {
        self.map(move |a| a * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.map_in_place(move |a| a * s);
    }

    /// `a·x + b·y` as a new container.
    pub fn axpby(a: f64, x: &Data, b: f64, y: &Data) -> Result<Data> {
        x.zip_with(y, move |u, v| a * u + b * v)
    }

    /// `self ← a·self + b·y`.
    pub fn axpby_in_place(&mut self, a: f64, b: f64, y: &Data) -> Result<()> {
        self.zip_in_place(y, move |u, v| a * u + b * v)
    }

    pub fn copy_from(&mut self, other: &Data) -> Result<()> {
        self.zip_in_place(other, |_, v| v)
    }

    pub fn fill(&mut self, value: f64) {
        self.map_in_place(move |_| value);
    }

    pub fn dot(&self, other: &Data) -> Result<f64> {
        self.same_layout(other)?;
        Ok(self
            .arrays()
            .into_iter()
            .zip(other.arrays())
            .map(|(a, b)| {
                a.as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(x, y)| x * y)
                    .sum::<f64>()
            })
            .sum())
    }

    pub fn squared_norm(&self) -> f64 {
        self.arrays().into_iter().map(LabeledArray::squared_norm).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.arrays().into_iter().map(LabeledArray::sum).sum()
    }

    pub fn max(&self) -> f64 {
        self.arrays()
            .into_iter()
            .map(LabeledArray::max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.arrays()
            .into_iter()
            .map(LabeledArray::min)
            .fold(f64::INFINITY, f64::min)
    }

    /// Flatten all leaves in depth-first order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size());
        for a in self.arrays() {
            out.extend_from_slice(a.as_slice());
        }
        out
    }

    /// Overwrite leaves from a flat vector produced by [`Data::to_vec`].
    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.size() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.size()],
                found: vec![values.len()],
            });
        }
        let mut offset = 0;
        self.for_each_array_mut(&mut |a| {
            let n = a.len();
            a.as_slice_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        });
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArraySpace {
    pub shape: Vec<usize>,
    pub labels: Vec<String>,
    pub geometry: Option<Geometry>,
}

/// Layout of a `Data` value: array shape, labels and geometry, or a block of those.
#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    Array(ArraySpace),
    Block(Vec<Space>),
}

impl From<Geometry> for Space {
    fn from(g: Geometry) -> Self {
        Space::Array(ArraySpace {
            shape: g.shape(),
            labels: g.labels(),
            geometry: Some(g),
        })
    }
}

impl From<super::geometry::ImageGeometry> for Space {
    fn from(g: super::geometry::ImageGeometry) -> Self {
        Geometry::Image(g).into()
    }
}

impl From<super::geometry::AcquisitionGeometry> for Space {
    fn from(g: super::geometry::AcquisitionGeometry) -> Self {
        Geometry::Acquisition(g).into()
    }
}

impl Space {
    pub fn array(shape: &[usize], labels: &[&str]) -> Self {
        Space::Array(ArraySpace {
            shape: shape.to_vec(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            geometry: None,
        })
    }

    /// 1-D space of length `n` labelled "x"; handy for matrix-style operators.
    pub fn vector(n: usize) -> Self {
        Space::array(&[n], &["x"])
    }

    pub fn allocate(&self, value: f64) -> Data {
        match self {
            Space::Array(s) => {
                let values = ArrayD::from_elem(IxDyn(&s.shape), value);
                Data::Array(
                    LabeledArray::from_parts_unchecked(values, s.labels.clone(), s.geometry.clone())
                        .expect("space invariants guarantee a consistent array"),
                )
            }
            Space::Block(entries) => Data::Block(BlockContainer {
                entries: entries.iter().map(|e| e.allocate(value)).collect(),
            }),
        }
    }

    pub fn zeros(&self) -> Data {
        self.allocate(0.0)
    }

    pub fn size(&self) -> usize {
        match self {
            Space::Array(s) => s.shape.iter().product(),
            Space::Block(entries) => entries.iter().map(Space::size).sum(),
        }
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        match self {
            Space::Array(s) => s.geometry.as_ref(),
            Space::Block(_) => None,
        }
    }

    /// Layout equality ignoring geometry details.
    pub fn compatible(&self, other: &Space) -> bool {
        match (self, other) {
            (Space::Array(a), Space::Array(b)) => a.shape == b.shape && a.labels == b.labels,
            (Space::Block(a), Space::Block(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.compatible(y))
            }
            _ => false,
        }
    }

    /// Check that `data` lives in this space.
    pub fn check(&self, data: &Data) -> Result<()> {
        match (self, data) {
            (Space::Array(s), Data::Array(a)) => {
                if s.shape != a.shape() {
                    return Err(Error::ShapeMismatch {
                        expected: s.shape.clone(),
                        found: a.shape().to_vec(),
                    });
                }
                if s.labels != a.labels() {
                    return Err(Error::LabelMismatch {
                        expected: s.labels.clone(),
                        found: a.labels().to_vec(),
                    });
                }
                Ok(())
            }
            (Space::Block(s), Data::Block(b)) => {
                if s.len() != b.len() {
                    return Err(Error::BlockMismatch(format!(
                        "expected block of {}, got {}",
                        s.len(),
                        b.len()
                    )));
                }
                s.iter().zip(b.entries()).try_for_each(|(s, d)| s.check(d))
            }
            (Space::Array(_), Data::Block(_)) => {
                Err(Error::BlockMismatch("expected an array, got a block".into()))
            }
            (Space::Block(_), Data::Array(_)) => {
                Err(Error::BlockMismatch("expected a block, got an array".into()))
            }
        }
    }

    pub fn entries(&self) -> Option<&[Space]> {
        match self {
            Space::Block(e) => Some(e),
            Space::Array(_) => None,
        }
    }
}
