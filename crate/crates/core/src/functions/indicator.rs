use crate::containers::Data;
use crate::error::{Error, Result};

use super::norms::{flat, write_flat};
use super::{Capabilities, Function, FunctionValue};

/// Indicator of the box `lower ≤ x ≤ upper`; either bound may be infinite.
#[derive(Debug, Clone, Copy)]
pub struct IndicatorBox {
    lower: f64,
    upper: f64,
}

impl IndicatorBox {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidArgument(format!(
                "box bounds must satisfy lower ≤ upper, got [{lower}, {upper}]"
            )));
        }
        Ok(IndicatorBox { lower, upper })
    }

    pub fn non_negative() -> Self {
        IndicatorBox {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn project(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    /// `sup_{lower ≤ x ≤ upper} x·y`, or `None` when unbounded.
    fn support(&self, y: f64) -> Option<f64> {
        let s = if y > 0.0 {
            self.upper * y
        } else if y < 0.0 {
            self.lower * y
        } else {
            0.0
        };
        s.is_finite().then_some(s)
    }
}

impl Function for IndicatorBox {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        let inside = flat(x).iter().all(|&v| v >= self.lower && v <= self.upper);
        Ok(if inside {
            FunctionValue::Finite(0.0)
        } else {
            FunctionValue::Infeasible
        })
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: false,
            prox: true,
            prox_conjugate: true,
            conjugate: true,
        }
    }
    fn prox_into(&self, x: &Data, _tau: f64, out: &mut Data) -> Result<()> {
        let u = flat(x);
        write_flat(out, |i| self.project(u[i]));
        Ok(())
    }
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        let y = flat(x);
        write_flat(out, |i| y[i] - sigma * self.project(y[i] / sigma));
        Ok(())
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        let mut total = 0.0;
        for &v in flat(y).iter() {
            match self.support(v) {
                Some(s) => total += s,
                None => return Ok(FunctionValue::Infeasible),
            }
        }
        Ok(FunctionValue::Finite(total))
    }
}
