//! Convex functions: values, gradients, proximal maps and their algebra.
//!
//! A [`Function`] implements whichever of value/gradient/prox/conjugate it can
//! evaluate; [`Func`] is the shared handle used to build objectives out of
//! sums, scalings, translations, operator compositions and block functions.

mod indicator;
mod kl;
mod norms;
mod tv;

use std::fmt;
use std::ops::Add;
use std::sync::Arc;

use crate::containers::Data;
use crate::error::{Error, Result};
use crate::operators::Operator;

pub use indicator::IndicatorBox;
pub use kl::KullbackLeibler;
pub use norms::{L1Norm, L2Squared, LeastSquares, MixedL21, SmoothMixedL21};
pub use tv::TotalVariation;

/// Function value; indicator functions report `Infeasible` instead of +∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionValue {
    Finite(f64),
    Infeasible,
}

impl FunctionValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            FunctionValue::Finite(v) => Some(v),
            FunctionValue::Infeasible => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, FunctionValue::Finite(_))
    }

    /// Multiply by a non-negative weight.
    pub fn scale(self, alpha: f64) -> FunctionValue {
        match self {
            FunctionValue::Finite(v) => FunctionValue::Finite(alpha * v),
            FunctionValue::Infeasible => FunctionValue::Infeasible,
        }
    }

    /// Finite value or `f64::INFINITY`, for reporting.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

impl Add for FunctionValue {
    type Output = FunctionValue;
    fn add(self, rhs: FunctionValue) -> FunctionValue {
        match (self, rhs) {
            (FunctionValue::Finite(a), FunctionValue::Finite(b)) => FunctionValue::Finite(a + b),
            _ => FunctionValue::Infeasible,
        }
    }
}

impl std::iter::Sum for FunctionValue {
    fn sum<I: Iterator<Item = FunctionValue>>(iter: I) -> FunctionValue {
        iter.fold(FunctionValue::Finite(0.0), |a, b| a + b)
    }
}

impl fmt::Display for FunctionValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionValue::Finite(v) => write!(f, "{v}"),
            FunctionValue::Infeasible => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub gradient: bool,
    pub prox: bool,
    pub prox_conjugate: bool,
    pub conjugate: bool,
}

/// A proper convex function on a [`Data`] space.
///
/// Only `value` is mandatory. `prox_conjugate_into` defaults to the Moreau
/// identity whenever `prox_into` is available.
pub trait Function: Send + Sync + fmt::Debug {
    fn value(&self, x: &Data) -> Result<FunctionValue>;

    fn capabilities(&self) -> Capabilities;

    fn gradient_into(&self, _x: &Data, _out: &mut Data) -> Result<()> {
        Err(Error::unsupported("gradient", format!("{self:?}")))
    }

    /// `argmin_v τf(v) + ½‖v − x‖²`
    fn prox_into(&self, _x: &Data, _tau: f64, _out: &mut Data) -> Result<()> {
        Err(Error::unsupported("prox", format!("{self:?}")))
    }

    /// Proximal map of the convex conjugate with step σ.
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        if !self.capabilities().prox {
            return Err(Error::unsupported("prox_conjugate", format!("{self:?}")));
        }
        moreau(self, x, sigma, out)
    }

    /// Convex conjugate `f*(y) = sup_x ⟨x, y⟩ − f(x)`.
    fn convex_conjugate(&self, _y: &Data) -> Result<FunctionValue> {
        Err(Error::unsupported("convex_conjugate", format!("{self:?}")))
    }

    /// Lipschitz constant of the gradient, when the function is smooth.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// `prox_{σf*}(x) = x − σ·prox_{f/σ}(x/σ)`
pub fn moreau<F: Function + ?Sized>(f: &F, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
    let scaled = x.scaled(1.0 / sigma);
    f.prox_into(&scaled, 1.0 / sigma, out)?;
    out.axpby_in_place(-sigma, 1.0, x)
}

fn check_step(step: f64) -> Result<()> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive, got {step}")))
    }
}

/// Shared, immutable handle to a [`Function`].
#[derive(Clone)]
pub struct Func(Arc<dyn Function>);

impl fmt::Debug for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl<F: Function + 'static> From<F> for Func {
    fn from(f: F) -> Self {
        Func(Arc::new(f))
    }
}

impl Func {
    pub fn new(f: impl Function + 'static) -> Self {
        Func(Arc::new(f))
    }

    pub fn capabilities(&self) -> Capabilities {
        self.0.capabilities()
    }

    pub fn value(&self, x: &Data) -> Result<FunctionValue> {
        self.0.value(x)
    }

    pub fn gradient(&self, x: &Data) -> Result<Data> {
        let mut out = x.zeros_like();
        self.0.gradient_into(x, &mut out)?;
        Ok(out)
    }

    pub fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.0.gradient_into(x, out)
    }

    pub fn prox(&self, x: &Data, tau: f64) -> Result<Data> {
        let mut out = x.zeros_like();
        self.prox_into(x, tau, &mut out)?;
        Ok(out)
    }

    pub fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        check_step(tau)?;
        self.0.prox_into(x, tau, out)
    }

    pub fn prox_conjugate(&self, x: &Data, sigma: f64) -> Result<Data> {
        let mut out = x.zeros_like();
        self.prox_conjugate_into(x, sigma, &mut out)?;
        Ok(out)
    }

    pub fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        check_step(sigma)?;
        self.0.prox_conjugate_into(x, sigma, out)
    }

    pub fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        self.0.convex_conjugate(y)
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.0.lipschitz()
    }

    /// `α·f`; α must be non-negative to keep the result convex.
    pub fn scale(&self, alpha: f64) -> Result<Func> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor must be ≥ 0, got {alpha}")));
        }
        Ok(Func::new(Scaled {
            alpha,
            f: self.clone(),
        }))
    }

    /// `f + g`; exposes value, gradient and Lipschitz constant only.
    pub fn add(&self, other: &Func) -> Func {
        Func::new(Sum {
            terms: vec![self.clone(), other.clone()],
        })
    }

    /// `x ↦ f(x − b)`
    pub fn translate(&self, b: Data) -> Func {
        Func::new(Translated {
            f: self.clone(),
            b,
        })
    }

    /// `x ↦ f(Ax)`
    pub fn compose(&self, a: &Operator) -> Func {
        Func::new(Composed {
            f: self.clone(),
            a: a.clone(),
        })
    }

    pub fn zero() -> Func {
        Func::new(ConstantFunction::new(0.0))
    }
}

/// Takes the constant value `c` everywhere.
///
/// Its true conjugate is the indicator of {0} shifted by −c. The conjugate
/// reported here drops the indicator so that duality gaps stay finite; the
/// two coincide at any saddle point where the dual constraint holds.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFunction {
    c: f64,
}

impl ConstantFunction {
    pub fn new(c: f64) -> Self {
        ConstantFunction { c }
    }
}

impl Function for ConstantFunction {
    fn value(&self, _x: &Data) -> Result<FunctionValue> {
        Ok(FunctionValue::Finite(self.c))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: true,
            prox: true,
            prox_conjugate: true,
            conjugate: true,
        }
    }
    fn gradient_into(&self, _x: &Data, out: &mut Data) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
    fn prox_into(&self, x: &Data, _tau: f64, out: &mut Data) -> Result<()> {
        out.copy_from(x)
    }
    fn prox_conjugate_into(&self, _x: &Data, _sigma: f64, out: &mut Data) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
    fn convex_conjugate(&self, _y: &Data) -> Result<FunctionValue> {
        Ok(FunctionValue::Finite(-self.c))
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Debug)]
struct Scaled {
    alpha: f64,
    f: Func,
}

impl Function for Scaled {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        if self.alpha == 0.0 {
            return Ok(FunctionValue::Finite(0.0));
        }
        Ok(self.f.value(x)?.scale(self.alpha))
    }
    fn capabilities(&self) -> Capabilities {
        self.f.capabilities()
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.f.gradient_into(x, out)?;
        out.scale_in_place(self.alpha);
        Ok(())
    }
    fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        if self.alpha == 0.0 {
            return out.copy_from(x);
        }
        self.f.0.prox_into(x, tau * self.alpha, out)
    }
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        // (αf)*(y) = α f*(y/α)
        if self.alpha == 0.0 {
            out.fill(0.0);
            return Ok(());
        }
        let scaled = x.scaled(1.0 / self.alpha);
        self.f.0.prox_conjugate_into(&scaled, sigma / self.alpha, out)?;
        out.scale_in_place(self.alpha);
        Ok(())
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        if self.alpha == 0.0 {
            return Ok(if y.norm() == 0.0 {
                FunctionValue::Finite(0.0)
            } else {
                FunctionValue::Infeasible
            });
        }
        Ok(self.f.convex_conjugate(&y.scaled(1.0 / self.alpha))?.scale(self.alpha))
    }
    fn lipschitz(&self) -> Option<f64> {
        self.f.lipschitz().map(|l| self.alpha * l)
    }
}

#[derive(Debug)]
struct Sum {
    terms: Vec<Func>,
}

impl Function for Sum {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        self.terms.iter().map(|f| f.value(x)).sum()
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: self.terms.iter().all(|f| f.capabilities().gradient),
            ..Default::default()
        }
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.terms[0].gradient_into(x, out)?;
        let mut tmp = x.zeros_like();
        for f in &self.terms[1..] {
            f.gradient_into(x, &mut tmp)?;
            out.axpby_in_place(1.0, 1.0, &tmp)?;
        }
        Ok(())
    }
    fn lipschitz(&self) -> Option<f64> {
        self.terms.iter().map(|f| f.lipschitz()).sum()
    }
}

#[derive(Debug)]
struct Translated {
    f: Func,
    b: Data,
}

impl Function for Translated {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        self.f.value(&x.sub(&self.b)?)
    }
    fn capabilities(&self) -> Capabilities {
        self.f.capabilities()
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.f.gradient_into(&x.sub(&self.b)?, out)
    }
    fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        self.f.0.prox_into(&x.sub(&self.b)?, tau, out)?;
        out.axpby_in_place(1.0, 1.0, &self.b)
    }
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        // (f(· − b))*(y) = f*(y) + ⟨y, b⟩
        let shifted = Data::axpby(1.0, x, -sigma, &self.b)?;
        self.f.0.prox_conjugate_into(&shifted, sigma, out)
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        Ok(self.f.convex_conjugate(y)? + FunctionValue::Finite(y.dot(&self.b)?))
    }
    fn lipschitz(&self) -> Option<f64> {
        self.f.lipschitz()
    }
}

#[derive(Debug)]
struct Composed {
    f: Func,
    a: Operator,
}

impl Function for Composed {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        self.f.value(&self.a.direct(x)?)
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: self.f.capabilities().gradient,
            ..Default::default()
        }
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        let ax = self.a.direct(x)?;
        let g = self.f.gradient(&ax)?;
        self.a.adjoint_into(&g, out)
    }
    fn lipschitz(&self) -> Option<f64> {
        self.f.lipschitz().map(|l| l * self.a.norm().powi(2))
    }
}

/// Separable sum `Σᵢ fᵢ(xᵢ)` over the entries of a block container.
#[derive(Debug, Clone)]
pub struct BlockFunction {
    parts: Vec<Func>,
}

impl BlockFunction {
    pub fn new(parts: Vec<Func>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::BlockMismatch("block function needs at least one part".into()));
        }
        Ok(BlockFunction { parts })
    }

    pub fn parts(&self) -> &[Func] {
        &self.parts
    }

    fn entries<'a>(&self, x: &'a Data) -> Result<&'a [Data]> {
        let entries = x.as_block()?.entries();
        if entries.len() != self.parts.len() {
            return Err(Error::BlockMismatch(format!(
                "block function has {} parts, container has {} entries",
                self.parts.len(),
                entries.len()
            )));
        }
        Ok(entries)
    }

    fn entrywise(
        &self,
        x: &Data,
        out: &mut Data,
        f: impl Fn(&Func, &Data, &mut Data) -> Result<()>,
    ) -> Result<()> {
        let inputs = self.entries(x)?;
        let outputs = out.as_block_mut()?.entries_mut();
        for ((part, xi), oi) in self.parts.iter().zip(inputs).zip(outputs) {
            f(part, xi, oi)?;
        }
        Ok(())
    }
}

impl Function for BlockFunction {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        let entries = self.entries(x)?;
        self.parts.iter().zip(entries).map(|(f, xi)| f.value(xi)).sum()
    }
    fn capabilities(&self) -> Capabilities {
        let caps: Vec<_> = self.parts.iter().map(|f| f.capabilities()).collect();
        Capabilities {
            gradient: caps.iter().all(|c| c.gradient),
            prox: caps.iter().all(|c| c.prox),
            prox_conjugate: caps.iter().all(|c| c.prox_conjugate),
            conjugate: caps.iter().all(|c| c.conjugate),
        }
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.entrywise(x, out, |f, xi, oi| f.gradient_into(xi, oi))
    }
    fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        self.entrywise(x, out, |f, xi, oi| f.prox_into(xi, tau, oi))
    }
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        self.entrywise(x, out, |f, xi, oi| f.prox_conjugate_into(xi, sigma, oi))
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        let entries = self.entries(y)?;
        self.parts
            .iter()
            .zip(entries)
            .map(|(f, yi)| f.convex_conjugate(yi))
            .sum()
    }
    fn lipschitz(&self) -> Option<f64> {
        self.parts
            .iter()
            .map(|f| f.lipschitz())
            .try_fold(0.0f64, |m, l| l.map(|l| m.max(l)))
    }
}
