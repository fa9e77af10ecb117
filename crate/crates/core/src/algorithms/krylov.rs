use crate::containers::Data;
use crate::error::{Error, Result};
use crate::functions::FunctionValue;
use crate::operators::Operator;

use super::{Algorithm, Objective, Status};

fn initial_or_zero(a: &Operator, initial: Option<Data>) -> Result<Data> {
    match initial {
        Some(x) => {
            a.domain().check(&x)?;
            Ok(x)
        }
        None => Ok(a.domain().zeros()),
    }
}

/// Conjugate gradient least squares for `min ‖Ax − b‖²`.
pub struct Cgls {
    a: Operator,
    x: Data,
    r: Data,
    s: Data,
    p: Data,
    q: Data,
    gamma: f64,
    initial_gamma: f64,
    tolerance: Option<f64>,
}

impl Cgls {
    pub fn new(a: Operator, b: Data, initial: Option<Data>) -> Result<Self> {
        a.range().check(&b)?;
        let x = initial_or_zero(&a, initial)?;
        let mut r = b;
        r.axpby_in_place(1.0, -1.0, &a.direct(&x)?)?;
        let s = a.adjoint(&r)?;
        let gamma = s.squared_norm();
        Ok(Cgls {
            p: s.clone(),
            q: a.range().zeros(),
            x,
            r,
            s,
            gamma,
            initial_gamma: gamma,
            tolerance: None,
            a,
        })
    }

    /// Stop once `‖Aᵀr‖ ≤ tol·‖Aᵀr₀‖`.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn residual(&self) -> &Data {
        &self.r
    }
}

impl Algorithm for Cgls {
    fn update(&mut self) -> Result<Status> {
        if self.gamma == 0.0 {
            return Ok(Status::Converged);
        }
        self.a.direct_into(&self.p, &mut self.q)?;
        let qq = self.q.squared_norm();
        if qq == 0.0 {
            return Ok(Status::Converged);
        }
        let alpha = self.gamma / qq;
        self.x.axpby_in_place(1.0, alpha, &self.p)?;
        self.r.axpby_in_place(1.0, -alpha, &self.q)?;
        self.a.adjoint_into(&self.r, &mut self.s)?;
        let gamma = self.s.squared_norm();
        let beta = gamma / self.gamma;
        self.p.axpby_in_place(beta, 1.0, &self.s)?;
        self.gamma = gamma;
        let done = gamma == 0.0
            || self
                .tolerance
                .is_some_and(|t| gamma.sqrt() <= t * self.initial_gamma.sqrt());
        Ok(if done { Status::Converged } else { Status::Running })
    }

    fn objective(&self) -> Result<Objective> {
        Ok(Objective::primal(FunctionValue::Finite(self.r.squared_norm())))
    }

    fn solution(&self) -> &Data {
        &self.x
    }

    fn name(&self) -> &'static str {
        "CGLS"
    }
}

/// Simultaneous iterative reconstruction:
/// `x ← clamp(x + ω·C·Aᵀ·R·(b − Ax))` with `R = 1/(A·1)`, `C = 1/(Aᵀ·1)`.
///
/// Zero row or column sums give zero weights. For operators with non-negative
/// entries, such as the projector, these sums equal the absolute sums.
pub struct Sirt {
    a: Operator,
    b: Data,
    x: Data,
    row_weights: Data,
    column_weights: Data,
    relaxation: f64,
    lower: f64,
    upper: f64,
    residual: Data,
    update: Data,
}

fn reciprocal_or_zero(d: &mut Data) {
    d.map_in_place(|v| if v == 0.0 { 0.0 } else { 1.0 / v });
}

impl Sirt {
    pub fn new(a: Operator, b: Data, initial: Option<Data>) -> Result<Self> {
        a.range().check(&b)?;
        let x = initial_or_zero(&a, initial)?;
        let mut row_weights = a.direct(&a.domain().allocate(1.0))?;
        reciprocal_or_zero(&mut row_weights);
        let mut column_weights = a.adjoint(&a.range().allocate(1.0))?;
        reciprocal_or_zero(&mut column_weights);
        Ok(Sirt {
            residual: a.range().zeros(),
            update: a.domain().zeros(),
            a,
            b,
            x,
            row_weights,
            column_weights,
            relaxation: 1.0,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        })
    }

    pub fn with_bounds(mut self, lower: Option<f64>, upper: Option<f64>) -> Result<Self> {
        let lower = lower.unwrap_or(f64::NEG_INFINITY);
        let upper = upper.unwrap_or(f64::INFINITY);
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidArgument(format!("invalid SIRT box [{lower}, {upper}]")));
        }
        self.lower = lower;
        self.upper = upper;
        self.x.map_in_place(|v| v.clamp(lower, upper));
        Ok(self)
    }

    pub fn with_relaxation(mut self, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(Error::InvalidArgument(format!("relaxation must lie in (0, 2), got {omega}")));
        }
        self.relaxation = omega;
        Ok(self)
    }
}

impl Algorithm for Sirt {
    fn update(&mut self) -> Result<Status> {
        self.a.direct_into(&self.x, &mut self.residual)?;
        self.residual.axpby_in_place(-1.0, 1.0, &self.b)?;
        self.residual.zip_in_place(&self.row_weights, |r, w| r * w)?;
        self.a.adjoint_into(&self.residual, &mut self.update)?;
        let (omega, lo, hi) = (self.relaxation, self.lower, self.upper);
        self.update.zip_in_place(&self.column_weights, |u, c| omega * u * c)?;
        self.x.zip_in_place(&self.update, |x, u| (x + u).clamp(lo, hi))?;
        Ok(Status::Running)
    }

    fn objective(&self) -> Result<Objective> {
        let mut r = self.a.direct(&self.x)?;
        r.axpby_in_place(1.0, -1.0, &self.b)?;
        Ok(Objective::primal(FunctionValue::Finite(r.squared_norm())))
    }

    fn solution(&self) -> &Data {
        &self.x
    }

    fn name(&self) -> &'static str {
        "SIRT"
    }
}
