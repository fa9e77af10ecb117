//! Linear operators with exact adjoints, and the algebra to combine them.

mod blur;
mod block;
mod diff;
mod projector;
mod structural;

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::containers::{Data, Space};
use crate::error::{Error, Result};

pub use blur::BlurringOperator;
pub use block::BlockOperator;
pub use diff::{Boundary, FiniteDifference, GradientOperator, SymmetrisedGradient};
pub use projector::Projector;
pub use structural::{DiagonalOperator, IdentityOperator, MaskOperator, ZeroOperator};

/// A linear map between two spaces.
///
/// Implementations may assume inputs and outputs have already been checked
/// against `domain()`/`range()`; `out` must be fully overwritten.
pub trait LinearOperator: Send + Sync + fmt::Debug {
    fn domain(&self) -> &Space;
    fn range(&self) -> &Space;
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()>;
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()>;

    /// Exact operator norm, when known in closed form.
    fn norm_hint(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Direct,
    Adjoint,
}

/// Iteration budget for the cached norm that feeds default step sizes.
const CACHED_NORM_ITERATIONS: usize = 1000;

/// Options for power-iteration norm estimation.
#[derive(Clone, Copy, Debug)]
pub struct NormOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            tolerance: 1e-4,
            max_iterations: 100,
            seed: 5489,
        }
    }
}

/// Shared handle to a linear operator, caching its norm after first use.
#[derive(Clone)]
pub struct Operator {
    inner: Arc<dyn LinearOperator>,
    norm: Arc<OnceLock<f64>>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.inner.fmt(f)
    }
}

impl Operator {
    pub fn new(op: impl LinearOperator + 'static) -> Self {
        Operator {
            inner: Arc::new(op),
            norm: Arc::new(OnceLock::new()),
        }
    }

    pub fn domain(&self) -> &Space {
        self.inner.domain()
    }

    pub fn range(&self) -> &Space {
        self.inner.range()
    }

    pub fn direct(&self, x: &Data) -> Result<Data> {
        self.domain().check(x)?;
        let mut out = self.range().zeros();
        self.inner.direct_into(x, &mut out)?;
        Ok(out)
    }

    pub fn adjoint(&self, y: &Data) -> Result<Data> {
        self.range().check(y)?;
        let mut out = self.domain().zeros();
        self.inner.adjoint_into(y, &mut out)?;
        Ok(out)
    }

    pub fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.domain().check(x)?;
        self.range().check(out)?;
        self.inner.direct_into(x, out)
    }

    pub fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        self.range().check(y)?;
        self.domain().check(out)?;
        self.inner.adjoint_into(y, out)
    }

    pub fn apply(&self, x: &Data, mode: Mode) -> Result<Data> {
        match mode {
            Mode::Direct => self.direct(x),
            Mode::Adjoint => self.adjoint(x),
        }
    }

    /// `α·A`.
    pub fn scale(&self, alpha: f64) -> Operator {
        Operator::new(ScaledOperator {
            alpha,
            op: self.clone(),
        })
    }

    /// `A + B`; both must share domain and range.
    pub fn sum(&self, other: &Operator) -> Result<Operator> {
        if !self.domain().compatible(other.domain()) || !self.range().compatible(other.range()) {
            return Err(Error::InvalidArgument(
                "operator sum needs equal domains and ranges".into(),
            ));
        }
        Ok(Operator::new(SumOperator {
            left: self.clone(),
            right: other.clone(),
        }))
    }

    /// `A ∘ B`, i.e. apply `inner` first.
    pub fn compose(&self, inner: &Operator) -> Result<Operator> {
        if !inner.range().compatible(self.domain()) {
            return Err(Error::InvalidArgument(
                "composition needs the inner range to equal the outer domain".into(),
            ));
        }
        Ok(Operator::new(CompositionOperator {
            outer: self.clone(),
            inner: inner.clone(),
        }))
    }

    /// Operator 2-norm, computed once and cached on the handle.
    pub fn norm(&self) -> f64 {
        *self.norm.get_or_init(|| {
            if let Some(n) = self.inner.norm_hint() {
                return n;
            }
            let options = NormOptions {
                max_iterations: CACHED_NORM_ITERATIONS,
                ..Default::default()
            };
            match self.estimate_norm(options) {
                Ok(n) => n,
                Err(Error::NormNotConverged { estimate, .. }) => {
                    log::warn!("operator norm estimate not converged, using {estimate}");
                    estimate
                }
                Err(e) => panic!("norm estimation failed: {e}"),
            }
        })
    }

    /// Largest singular value by power iteration on `A*A`.
    pub fn estimate_norm(&self, options: NormOptions) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let mut x = self.domain().zeros();
        let start: Vec<f64> = (0..x.size()).map(|_| StandardNormal.sample(&mut rng)).collect();
        x.set_from_slice(&start)?;
        let n0 = x.norm();
        if n0 == 0.0 {
            return Ok(0.0);
        }
        x.scale_in_place(1.0 / n0);
        let mut ax = self.range().zeros();
        let mut y = self.domain().zeros();
        let mut previous = f64::NAN;
        let mut previous_change = f64::NAN;
        let mut estimate = 0.0;
        for _ in 0..options.max_iterations {
            self.inner.direct_into(&x, &mut ax)?;
            // Rayleigh quotient of A*A at the unit vector x
            estimate = ax.norm();
            self.inner.adjoint_into(&ax, &mut y)?;
            let s = y.norm();
            if s == 0.0 {
                return Ok(0.0);
            }
            std::mem::swap(&mut x, &mut y);
            x.scale_in_place(1.0 / s);
            // The estimate converges geometrically; bound the remaining error
            // by the tail of that series, using the observed contraction ratio.
            let change = (estimate - previous).abs();
            let ratio = (change / previous_change).clamp(0.0, 0.999);
            let ratio = if ratio.is_nan() { 0.9 } else { ratio };
            if change / (1.0 - ratio) <= 0.5 * options.tolerance * estimate {
                return Ok(estimate);
            }
            previous = estimate;
            previous_change = change;
        }
        Err(Error::NormNotConverged {
            iterations: options.max_iterations,
            estimate,
        })
    }

    pub fn identity(space: impl Into<Space>) -> Operator {
        Operator::new(IdentityOperator::new(space.into()))
    }

    pub fn zero(domain: impl Into<Space>, range: impl Into<Space>) -> Operator {
        Operator::new(ZeroOperator::new(domain.into(), range.into()))
    }
}

#[derive(Debug)]
struct ScaledOperator {
    alpha: f64,
    op: Operator,
}

impl LinearOperator for ScaledOperator {
    fn domain(&self) -> &Space {
        self.op.domain()
    }
    fn range(&self) -> &Space {
        self.op.range()
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.op.inner.direct_into(x, out)?;
        out.scale_in_place(self.alpha);
        Ok(())
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        self.op.inner.adjoint_into(y, out)?;
        out.scale_in_place(self.alpha);
        Ok(())
    }
    fn norm_hint(&self) -> Option<f64> {
        Some(self.alpha.abs() * self.op.norm())
    }
}

#[derive(Debug)]
struct SumOperator {
    left: Operator,
    right: Operator,
}

impl LinearOperator for SumOperator {
    fn domain(&self) -> &Space {
        self.left.domain()
    }
    fn range(&self) -> &Space {
        self.left.range()
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.left.inner.direct_into(x, out)?;
        let mut tmp = self.range().zeros();
        self.right.inner.direct_into(x, &mut tmp)?;
        out.axpby_in_place(1.0, 1.0, &tmp)
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        self.left.inner.adjoint_into(y, out)?;
        let mut tmp = self.domain().zeros();
        self.right.inner.adjoint_into(y, &mut tmp)?;
        out.axpby_in_place(1.0, 1.0, &tmp)
    }
}

#[derive(Debug)]
struct CompositionOperator {
    outer: Operator,
    inner: Operator,
}

impl LinearOperator for CompositionOperator {
    fn domain(&self) -> &Space {
        self.inner.domain()
    }
    fn range(&self) -> &Space {
        self.outer.range()
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        let mut mid = self.inner.range().zeros();
        self.inner.inner.direct_into(x, &mut mid)?;
        self.outer.inner.direct_into(&mid, out)
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        let mut mid = self.outer.domain().zeros();
        self.outer.inner.adjoint_into(y, &mut mid)?;
        self.inner.inner.adjoint_into(&mid, out)
    }
}

/// Dense matrix acting on 1-D vectors; mainly a reference for tests and oracles.
#[derive(Debug, Clone)]
pub struct MatrixOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    domain: Space,
    range: Space,
}

impl MatrixOperator {
    /// Row-major `rows × cols` matrix.
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: vec![rows, cols],
                found: vec![entries.len()],
            });
        }
        Ok(MatrixOperator {
            rows,
            cols,
            entries,
            domain: Space::vector(cols),
            range: Space::vector(rows),
        })
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

impl LinearOperator for MatrixOperator {
    fn domain(&self) -> &Space {
        &self.domain
    }
    fn range(&self) -> &Space {
        &self.range
    }
    fn direct_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        let x = x.as_array()?.as_slice();
        let out = out.as_array_mut()?.as_slice_mut();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i * self.cols..(i + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }
    fn adjoint_into(&self, y: &Data, out: &mut Data) -> Result<()> {
        let y = y.as_array()?.as_slice();
        let out = out.as_array_mut()?.as_slice_mut();
        out.fill(0.0);
        for i in 0..self.rows {
            let row = &self.entries[i * self.cols..(i + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * y[i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use rand::Rng;

    pub fn random_like(space: &Space, rng: &mut ChaCha8Rng) -> Data {
        let mut d = space.zeros();
        let v: Vec<f64> = (0..d.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        d.set_from_slice(&v).unwrap();
        d
    }

    /// Relative adjoint mismatch |⟨Ax,y⟩ − ⟨x,A*y⟩| / (‖Ax‖‖y‖ + ‖x‖‖A*y‖).
    pub fn dot_test(op: &Operator, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_like(op.domain(), &mut rng);
        let y = random_like(op.range(), &mut rng);
        let ax = op.direct(&x).unwrap();
        let aty = op.adjoint(&y).unwrap();
        let lhs = ax.dot(&y).unwrap();
        let rhs = x.dot(&aty).unwrap();
        let scale = ax.norm() * y.norm() + x.norm() * aty.norm();
        if scale == 0.0 {
            (lhs - rhs).abs()
        } else {
            (lhs - rhs).abs() / scale
        }
    }

    /// Dense matrix of `op`, built column by column from basis vectors (row-major).
    pub fn dense(op: &Operator) -> (usize, usize, Vec<f64>) {
        let n = op.domain().size();
        let m = op.range().size();
        let mut mat = vec![0.0; m * n];
        let mut e = op.domain().zeros();
        let mut basis = vec![0.0; n];
        for j in 0..n {
            basis[j] = 1.0;
            e.set_from_slice(&basis).unwrap();
            basis[j] = 0.0;
            let col = op.direct(&e).unwrap().to_vec();
            for i in 0..m {
                mat[i * n + j] = col[i];
            }
        }
        (m, n, mat)
    }

    /// Dense matrix of the adjoint, built from range basis vectors, transposed back.
    pub fn dense_adjoint_transposed(op: &Operator) -> Vec<f64> {
        let n = op.domain().size();
        let m = op.range().size();
        let mut mat = vec![0.0; m * n];
        let mut e = op.range().zeros();
        let mut basis = vec![0.0; m];
        for i in 0..m {
            basis[i] = 1.0;
            e.set_from_slice(&basis).unwrap();
            basis[i] = 0.0;
            let row = op.adjoint(&e).unwrap().to_vec();
            mat[i * n..(i + 1) * n].copy_from_slice(&row);
        }
        mat
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use crate::containers::LabeledArray;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Operator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Operator::new(MatrixOperator::new(rows, cols, entries).unwrap())
    }

    /// Largest singular value from the eigenvalues of the Gram matrix by Jacobi rotations.
    fn svd_max(rows: usize, cols: usize, a: &[f64]) -> f64 {
        let mut g = vec![0.0; cols * cols];
        for i in 0..cols {
            for j in 0..cols {
                g[i * cols + j] = (0..rows).map(|k| a[k * cols + i] * a[k * cols + j]).sum();
            }
        }
        for _ in 0..100 {
            for p in 0..cols {
                for q in p + 1..cols {
                    let apq = g[p * cols + q];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (g[q * cols + q] - g[p * cols + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..cols {
                        let gkp = g[k * cols + p];
                        let gkq = g[k * cols + q];
                        g[k * cols + p] = c * gkp - s * gkq;
                        g[k * cols + q] = s * gkp + c * gkq;
                    }
                    for k in 0..cols {
                        let gpk = g[p * cols + k];
                        let gqk = g[q * cols + k];
                        g[p * cols + k] = c * gpk - s * gqk;
                        g[q * cols + k] = s * gpk + c * gqk;
                    }
                }
            }
        }
        (0..cols).map(|i| g[i * cols + i]).fold(0.0, f64::max).sqrt()
    }

    #[test]
    fn scaled_identity() {
        let id = Operator::identity(Space::vector(2));
        let x: Data = LabeledArray::vector(vec![1.0, 2.0], "x").into();
        assert_eq!(id.scale(2.0).direct(&x).unwrap().to_vec(), vec![2.0, 4.0]);
        assert_eq!(id.direct(&x).unwrap(), x);
    }

    #[test]
    fn a_minus_a_is_zero() {
        let a = random_matrix(4, 3, 1);
        let z = a.sum(&a.scale(-1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_like(z.domain(), &mut rng);
        assert!(z.direct(&x).unwrap().to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn composition_matches_dense_product_and_passes_dot_test() {
        let a = random_matrix(4, 4, 2);
        let b = random_matrix(4, 4, 3);
        let ab = a.compose(&b).unwrap();
        let (_, _, da) = dense(&a);
        let (_, _, db) = dense(&b);
        let (_, _, dab) = dense(&ab);
        for i in 0..4 {
            for j in 0..4 {
                let expect: f64 = (0..4).map(|k| da[i * 4 + k] * db[k * 4 + j]).sum();
                assert!((dab[i * 4 + j] - expect).abs() < 1e-14);
            }
        }
        for seed in 0..20 {
            assert!(dot_test(&ab, seed) < 1e-10);
        }
        assert!(a.compose(&random_matrix(3, 5, 4)).is_err());
        assert!(a.sum(&random_matrix(4, 3, 4)).is_err());
    }

    #[test]
    fn norm_estimates() {
        let id = Operator::identity(Space::vector(5));
        assert!((id.estimate_norm(NormOptions::default()).unwrap() - 1.0).abs() < 1e-12);
        let d = Operator::new(
            DiagonalOperator::new(LabeledArray::vector(vec![1.0, 2.0, 3.0], "x")).unwrap(),
        );
        let est = d.estimate_norm(NormOptions::default()).unwrap();
        assert!((est - 3.0).abs() / 3.0 < 1e-4, "{est}");

        // the top two singular values of this matrix are close, so power
        // iteration needs more than the default budget
        let long = NormOptions {
            max_iterations: 2000,
            ..Default::default()
        };
        let a = random_matrix(6, 4, 11);
        let (m, n, dense_a) = dense(&a);
        let truth = svd_max(m, n, &dense_a);
        let est = a.estimate_norm(long).unwrap();
        assert!((est - truth).abs() / truth < 1e-4, "{est} vs {truth}");

        let scaled = a.scale(-3.5).estimate_norm(long).unwrap();
        assert!((scaled - 3.5 * est).abs() <= 2e-4 * 3.5 * est);
    }

    #[test]
    fn norm_non_convergence_is_flagged() {
        let a = random_matrix(6, 4, 11);
        let opts = NormOptions {
            max_iterations: 1,
            ..Default::default()
        };
        match a.estimate_norm(opts) {
            Err(Error::NormNotConverged { estimate, .. }) => assert!(estimate > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn norm_is_cached() {
        let a = random_matrix(5, 5, 7);
        let n1 = a.norm();
        let clone = a.clone();
        assert_eq!(clone.norm().to_bits(), n1.to_bits());
    }
}
