use crate::containers::{Data, Space};
use crate::error::{Error, Result};

use super::{LinearOperator, Operator};

/// A rows × cols grid of operators acting on block containers.
///
/// A single column takes a plain (non-block) input, so a column vector
/// `(A; αI)` maps an image to a block; a single row likewise produces a
/// plain output.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    grid: Vec<Vec<Operator>>,
    domain: Space,
    range: Space,
}

impl BlockOperator {
    pub fn new(grid: Vec<Vec<Operator>>) -> Result<Self> {
        let rows = grid.len();
        if rows == 0 || grid[0].is_empty() {
            return Err(Error::BlockMismatch("block operator must be non-empty".into()));
        }
        let cols = grid[0].len();
        if grid.iter().any(|r| r.len() != cols) {
            return Err(Error::BlockMismatch("ragged block operator grid".into()));
        }
        for j in 0..cols {
            let d = grid[0][j].domain();
            if (1..rows).any(|i| !grid[i][j].domain().compatible(d)) {
                return Err(Error::BlockMismatch(format!("column {j} has inconsistent domains")));
            }
        }
        for (i, row) in grid.iter().enumerate() {
            let r = row[0].range();
            if row.iter().any(|op| !op.range().compatible(r)) {
                return Err(Error::BlockMismatch(format!("row {i} has inconsistent ranges")));
            }
        }
        let domain = if cols == 1 {
            grid[0][0].domain().clone()
        } else {
            Space::Block((0..cols).map(|j| grid[0][j].domain().clone()).collect())
        };
        let range = if rows == 1 {
            grid[0][0].range().clone()
        } else {
            Space::Block(grid.iter().map(|r| r[0].range().clone()).collect())
        };
        Ok(BlockOperator {
            grid,
            domain,
            range,
        })
    }

    /// Stack operators vertically: `(A₁; A₂; …)`.
    pub fn column(ops: Vec<Operator>) -> Result<Self> {
        Self::new(ops.into_iter().map(|op| vec![op]).collect())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid.len(), self.grid[0].len())
    }

    fn rows(&self) -> usize {
        self.grid.len()
    }

    fn cols(&self) -> usize {
        self.grid[0].len()
    }
}

fn part(data: &Data, index: usize, whole: bool) -> Result<&Data> {
    if whole {
        Ok(data)
    } else {
        Ok(&data.as_block()?.entries()[index])
    }
}

fn part_mut(data: &mut Data, index: usize, whole: bool) -> Result<&mut Data> {
    if whole {
        Ok(data)
    } else {
        Ok(&mut data.as_block_mut()?.entries_mut()[index])
    }
}

impl LinearOperator for BlockOperator {
    fn domain(&self) -> &Space {
        &self.domain
    }
    fn range(&self) -> &Space {
        &self.range
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        let (single_row, single_col) = (self.rows() == 1, self.cols() == 1);
        for (i, row) in self.grid.iter().enumerate() {
            let target = part_mut(out, i, single_row)?;
            let mut tmp: Option<Data> = None;
            for (j, op) in row.iter().enumerate() {
                let xj = part(x, j, single_col)?;
                if j == 0 {
                    op.inner.direct_into(xj, target)?;
                } else {
                    let buf = tmp.get_or_insert_with(|| op.range().zeros());
                    op.inner.direct_into(xj, buf)?;
                    target.axpby_in_place(1.0, 1.0, buf)?;
                }
            }
        }
        Ok(())
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        let (single_row, single_col) = (self.rows() == 1, self.cols() == 1);
        for j in 0..self.cols() {
            let target = part_mut(out, j, single_col)?;
            let mut tmp: Option<Data> = None;
            for i in 0..self.rows() {
                let op = &self.grid[i][j];
                let yi = part(y, i, single_row)?;
                if i == 0 {
                    op.inner.adjoint_into(yi, target)?;
                } else {
                    let buf = tmp.get_or_insert_with(|| op.domain().zeros());
                    op.inner.adjoint_into(yi, buf)?;
                    target.axpby_in_place(1.0, 1.0, buf)?;
                }
            }
        }
        Ok(())
    }
    fn norm_hint(&self) -> Option<f64> {
        if self.rows() == 1 && self.cols() == 1 {
            Some(self.grid[0][0].norm())
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{ImageGeometry, LabeledArray};
    use crate::operators::testing::{dense, dense_adjoint_transposed, dot_test, random_like};
    use crate::operators::{FiniteDifference, Boundary, MatrixOperator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(rows: usize, cols: usize, seed: u64) -> Operator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Operator::new(MatrixOperator::new(rows, cols, e).unwrap())
    }

    #[test]
    fn tikhonov_stack() {
        let a = matrix(5, 3, 1);
        let alpha = 0.7;
        let stack = Operator::new(
            BlockOperator::column(vec![a.clone(), Operator::identity(Space::vector(3)).scale(alpha)]).unwrap(),
        );
        let u: Data = LabeledArray::vector(vec![1.0, -2.0, 0.5], "x").into();
        let out = stack.direct(&u).unwrap();
        let parts = out.as_block().unwrap().entries();
        assert_eq!(parts[0], a.direct(&u).unwrap());
        assert_eq!(parts[1].to_vec(), vec![0.7, -1.4, 0.35]);
    }

    #[test]
    fn one_by_one_identity_is_identity() {
        let id = Operator::identity(Space::vector(4));
        let b = Operator::new(BlockOperator::new(vec![vec![id.clone()]]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_like(b.domain(), &mut rng);
        assert_eq!(b.direct(&x).unwrap(), x);
        assert_eq!(b.norm(), 1.0);
    }

    #[test]
    fn anisotropic_stack_has_four_entries() {
        let ig = ImageGeometry::new_3d([3, 3, 3], [1.0; 3]).unwrap();
        let space = Space::from(ig);
        let a = Operator::identity(space.clone());
        let mut ops = vec![a];
        for (axis, w) in [("horizontal_x", 0.1), ("horizontal_y", 0.1), ("vertical", 2.0)] {
            ops.push(Operator::new(FiniteDifference::new(space.clone(), axis, Boundary::Neumann).unwrap()).scale(w));
        }
        let k = Operator::new(BlockOperator::column(ops).unwrap());
        assert_eq!(k.range().entries().unwrap().len(), 4);
        for seed in 0..20 {
            assert!(dot_test(&k, seed) < 1e-10);
        }
    }

    #[test]
    fn dense_block_matrix_and_nesting() {
        let a = matrix(3, 2, 2);
        let b = matrix(3, 4, 3);
        let c = matrix(2, 2, 4);
        let d = matrix(2, 4, 5);
        let k = Operator::new(BlockOperator::new(vec![vec![a.clone(), b.clone()], vec![c.clone(), d.clone()]]).unwrap());
        let (m, n, dk) = dense(&k);
        assert_eq!((m, n), (5, 6));
        let blocks = [[&a, &b], [&c, &d]];
        let row_off = [0, 3];
        let col_off = [0, 2];
        for (bi, brow) in blocks.iter().enumerate() {
            for (bj, op) in brow.iter().enumerate() {
                let (bm, bn, db) = dense(op);
                for i in 0..bm {
                    for j in 0..bn {
                        let got = dk[(row_off[bi] + i) * n + col_off[bj] + j];
                        assert!((got - db[i * bn + j]).abs() <= 1e-12);
                    }
                }
            }
        }
        let dt = dense_adjoint_transposed(&k);
        for (x, y) in dk.iter().zip(&dt) {
            assert!((x - y).abs() <= 1e-12);
        }
        let nested = Operator::new(BlockOperator::column(vec![k.clone(), k.scale(2.0)]).unwrap());
        for seed in 0..20 {
            assert!(dot_test(&nested, seed) < 1e-10);
        }
    }

    #[test]
    fn inconsistent_grid_is_rejected() {
        let a = matrix(3, 2, 2);
        let b = matrix(4, 2, 3);
        assert!(BlockOperator::new(vec![vec![a.clone(), b.clone()]]).is_err());
        assert!(BlockOperator::new(vec![vec![a.clone()], vec![matrix(3, 3, 1)]]).is_err());
        assert!(BlockOperator::new(vec![]).is_err());
    }
}
