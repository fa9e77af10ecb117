use crate::containers::Data;
use crate::error::{Error, Result};
use crate::operators::{GradientOperator, LinearOperator};

use super::norms::MixedL21;
use super::{Capabilities, Function, FunctionValue};

/// Isotropic total variation `‖∇x‖_{2,1}` with forward Neumann differences.
///
/// The proximal map is computed by fast gradient projection on the dual
/// problem for a fixed number of iterations, optionally projecting onto a
/// box, so results are reproducible bit for bit.
#[derive(Debug, Clone, Copy)]
pub struct TotalVariation {
    iterations: usize,
    lower: f64,
    upper: f64,
    tolerance: Option<f64>,
}

impl Default for TotalVariation {
    fn default() -> Self {
        TotalVariation {
            iterations: 100,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            tolerance: None,
        }
    }
}

impl TotalVariation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_iterations(mut self, iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::InvalidArgument("TV prox needs at least one iteration".into()));
        }
        self.iterations = iterations;
        Ok(self)
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return Err(Error::InvalidArgument(format!("invalid TV box [{lower}, {upper}]")));
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    /// Stop early once the relative change of the primal estimate is below `tol`.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    fn gradient(x: &Data) -> Result<GradientOperator> {
        match x {
            Data::Array(a) => GradientOperator::new(Data::Array(a.clone()).space()),
            Data::Block(_) => Err(Error::InvalidArgument("total variation acts on a single image".into())),
        }
    }
}

fn project_ball(p: &mut Data) -> Result<()> {
    let leaves: Vec<&[f64]> = p.arrays().into_iter().map(|a| a.as_slice()).collect();
    let n = leaves[0].len();
    let scale: Vec<f64> = (0..n)
        .map(|v| 1.0 / leaves.iter().map(|l| l[v] * l[v]).sum::<f64>().sqrt().max(1.0))
        .collect();
    for a in p.arrays_mut() {
        a.as_slice_mut().iter_mut().zip(&scale).for_each(|(x, s)| *x *= s);
    }
    Ok(())
}

impl Function for TotalVariation {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        let d = Self::gradient(x)?;
        let mut dx = d.range().zeros();
        d.direct_into(x, &mut dx)?;
        MixedL21.value(&dx)
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: false,
            prox: true,
            prox_conjugate: true,
            conjugate: false,
        }
    }
    fn prox_into(&self, b: &Data, tau: f64, out: &mut Data) -> Result<()> {
        let d = Self::gradient(b)?;
        let step = 1.0 / (tau * d.squared_norm_bound());
        let (lo, hi) = (self.lower, self.upper);
        let mut p = d.range().zeros();
        let mut p_prev = p.clone();
        let mut r = p.clone();
        let mut dx = p.clone();
        let mut x = b.zeros_like();
        let mut x_prev = x.clone();
        let mut dtr = b.zeros_like();
        let mut t = 1.0f64;

        // x = P_C(b − τ Dᵀ r)
        let primal = |r: &Data, dtr: &mut Data, x: &mut Data| -> Result<()> {
            d.adjoint_into(r, dtr)?;
            x.copy_from(b)?;
            x.axpby_in_place(1.0, -tau, dtr)?;
            x.map_in_place(|v| v.clamp(lo, hi));
            Ok(())
        };

        for _ in 0..self.iterations {
            primal(&r, &mut dtr, &mut x)?;
            d.direct_into(&x, &mut dx)?;
            std::mem::swap(&mut p, &mut p_prev);
            p.copy_from(&r)?;
            p.axpby_in_place(1.0, step, &dx)?;
            project_ball(&mut p)?;
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            r.copy_from(&p)?;
            r.axpby_in_place(1.0 + momentum, -momentum, &p_prev)?;
            t = t_next;
            if let Some(tol) = self.tolerance {
                let change = x.sub(&x_prev)?.norm();
                if change <= tol * x.norm() {
                    break;
                }
                x_prev.copy_from(&x)?;
            }
        }
        primal(&p, &mut dtr, out)
    }
}
