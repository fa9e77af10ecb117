use crate::containers::Data;
use crate::error::{Error, Result};
use crate::functions::{Func, FunctionValue};

use super::{Algorithm, Objective, Status};

fn require_finite(v: FunctionValue, what: &str) -> Result<f64> {
    v.finite()
        .ok_or_else(|| Error::Domain(format!("{what} is infeasible at the current iterate")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Fixed step γ; `None` uses 1/L.
    Constant(Option<f64>),
    /// Armijo backtracking: shrink until `f(x − γg) ≤ f(x) − cγ‖g‖²`,
    /// starting each iteration from the previous step times `growth`.
    Backtracking { c: f64, shrink: f64, growth: f64 },
}

impl StepRule {
    pub fn backtracking() -> Self {
        StepRule::Backtracking {
            c: 1e-4,
            shrink: 0.5,
            growth: 1.1,
        }
    }
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Constant(None)
    }
}

/// Gradient descent `x ← x − γ∇f(x)`.
pub struct Gd {
    f: Func,
    x: Data,
    gradient: Data,
    trial: Data,
    rule: StepRule,
    step: f64,
}

impl Gd {
    pub fn new(f: Func, initial: Data, rule: StepRule) -> Result<Self> {
        if !f.capabilities().gradient {
            return Err(Error::unsupported("gradient", format!("{f:?}")));
        }
        let step = match rule {
            StepRule::Constant(Some(g)) => g,
            StepRule::Constant(None) => match f.lipschitz() {
                Some(l) if l > 0.0 => 1.0 / l,
                _ => {
                    return Err(Error::StepSize(
                        "no Lipschitz constant available; give a step size or use backtracking".into(),
                    ))
                }
            },
            StepRule::Backtracking { c, shrink, growth } => {
                if !(c > 0.0 && c < 1.0 && shrink > 0.0 && shrink < 1.0 && growth >= 1.0) {
                    return Err(Error::StepSize("invalid backtracking parameters".into()));
                }
                f.lipschitz().filter(|&l| l > 0.0).map_or(1.0, |l| 1.0 / l)
            }
        };
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::StepSize(format!("step must be positive, got {step}")));
        }
        Ok(Gd {
            gradient: initial.zeros_like(),
            trial: initial.zeros_like(),
            x: initial,
            f,
            rule,
            step,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }
}

impl Algorithm for Gd {
    fn update(&mut self) -> Result<Status> {
        self.f.gradient_into(&self.x, &mut self.gradient)?;
        match self.rule {
            StepRule::Constant(_) => {
                self.x.axpby_in_place(1.0, -self.step, &self.gradient)?;
            }
            StepRule::Backtracking { c, shrink, growth } => {
                let g2 = self.gradient.squared_norm();
                if g2 == 0.0 {
                    return Ok(Status::Converged);
                }
                let fx = require_finite(self.f.value(&self.x)?, "objective")?;
                let mut step = self.step * growth;
                loop {
                    self.trial.copy_from(&self.x)?;
                    self.trial.axpby_in_place(1.0, -step, &self.gradient)?;
                    let accept = match self.f.value(&self.trial) {
                        Ok(FunctionValue::Finite(ft)) => ft <= fx - c * step * g2,
                        Ok(FunctionValue::Infeasible) | Err(Error::Domain(_)) => false,
                        Err(e) => return Err(e),
                    };
                    if accept {
                        break;
                    }
                    step *= shrink;
                    if step < f64::MIN_POSITIVE {
                        return Ok(Status::Converged);
                    }
                }
                self.step = step;
                std::mem::swap(&mut self.x, &mut self.trial);
            }
        }
        Ok(Status::Running)
    }

    fn objective(&self) -> Result<Objective> {
        Ok(Objective::primal(self.f.value(&self.x)?))
    }

    fn solution(&self) -> &Data {
        &self.x
    }

    fn name(&self) -> &'static str {
        "GD"
    }
}

/// FISTA for `min f(x) + g(x)` with L-smooth `f` and prox-capable `g`.
pub struct Fista {
    f: Func,
    g: Func,
    x: Data,
    x_prev: Data,
    y: Data,
    gradient: Data,
    t: f64,
    step: f64,
}

impl Fista {
    /// `step` defaults to 1/L.
    pub fn new(f: Func, g: Func, initial: Data, step: Option<f64>) -> Result<Self> {
        if !f.capabilities().gradient {
            return Err(Error::unsupported("gradient", format!("{f:?}")));
        }
        if !g.capabilities().prox {
            return Err(Error::unsupported("prox", format!("{g:?}")));
        }
        let step = match step {
            Some(s) => s,
            None => match f.lipschitz() {
                Some(l) if l > 0.0 && l.is_finite() => 1.0 / l,
                _ => return Err(Error::StepSize("smooth term has no Lipschitz constant".into())),
            },
        };
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::StepSize(format!("step must be positive, got {step}")));
        }
        Ok(Fista {
            x_prev: initial.clone(),
            y: initial.clone(),
            gradient: initial.zeros_like(),
            x: initial,
            f,
            g,
            t: 1.0,
            step,
        })
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }
}

impl Algorithm for Fista {
    fn update(&mut self) -> Result<Status> {
        self.f.gradient_into(&self.y, &mut self.gradient)?;
        // gradient ← y − step·∇f(y), reusing the buffer
        self.gradient.axpby_in_place(-self.step, 1.0, &self.y)?;
        std::mem::swap(&mut self.x_prev, &mut self.x);
        self.g.prox_into(&self.gradient, self.step, &mut self.x)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * self.t * self.t).sqrt());
        let momentum = (self.t - 1.0) / t_next;
        self.y.copy_from(&self.x)?;
        self.y.axpby_in_place(1.0 + momentum, -momentum, &self.x_prev)?;
        self.t = t_next;
        Ok(Status::Running)
    }

    fn objective(&self) -> Result<Objective> {
        Ok(Objective::primal(self.f.value(&self.x)? + self.g.value(&self.x)?))
    }

    fn solution(&self) -> &Data {
        &self.x
    }

    fn name(&self) -> &'static str {
        "FISTA"
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::Solver;
    use super::*;
    use crate::containers::Space;
    use crate::functions::{IndicatorBox, L1Norm, L2Squared, LeastSquares};
    use crate::operators::Operator;

    #[test]
    fn gd_exact_step_on_quadratic() {
        let c = vector(vec![1.0, -2.0, 3.5]);
        let f = Func::new(L2Squared::new().with_shift(c.clone()));
        let gd = Gd::new(f, vector(vec![0.0; 3]), StepRule::default()).unwrap();
        assert_eq!(gd.step_size(), 0.5);
        let mut s = Solver::new(gd, 10).unwrap();
        s.run(1).unwrap();
        assert_eq!(s.solution(), &c);
    }

    #[test]
    fn gd_requires_gradient() {
        let f = Func::new(L1Norm::new());
        assert!(Gd::new(f, vector(vec![0.0]), StepRule::default()).is_err());
    }

    #[test]
    fn backtracking_is_monotone() {
        let (a, _) = matrix(8, 5, 4, false);
        let b = vector((0..8).map(|i| i as f64 * 0.3).collect());
        let f = Func::new(LeastSquares::new(a, b));
        let gd = Gd::new(f, vector(vec![0.0; 5]), StepRule::backtracking()).unwrap();
        let mut s = Solver::new(gd, 200).unwrap();
        s.run(200).unwrap();
        let values: Vec<f64> = s.history().iter().map(|r| r.objective.primal.as_f64()).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fista_lasso_with_identity_is_soft_threshold() {
        let b = vector(vec![3.0, -0.2, 0.05, -1.5, 0.0, 0.7]);
        let alpha = 0.5;
        let f = Func::new(LeastSquares::new(Operator::identity(Space::vector(6)), b.clone()));
        let g = Func::new(L1Norm::new()).scale(alpha).unwrap();
        let mut s = Solver::new(Fista::new(f, g, vector(vec![0.0; 6]), None).unwrap(), 500).unwrap();
        s.run(500).unwrap();
        let expect: Vec<f64> = b
            .to_vec()
            .iter()
            .map(|v| v.signum() * (v.abs() - alpha / 2.0).max(0.0))
            .collect();
        for (x, e) in s.solution().to_vec().iter().zip(&expect) {
            assert!((x - e).abs() < 1e-8, "{x} vs {e}");
        }
    }

    #[test]
    fn fista_with_zero_g_beats_gd() {
        let (a, _) = matrix(20, 12, 5, false);
        let b = vector((0..20).map(|i| (i as f64 * 0.7).cos()).collect());
        let f = Func::new(LeastSquares::new(a, b));
        let mut gd = Solver::new(Gd::new(f.clone(), vector(vec![0.0; 12]), StepRule::default()).unwrap(), 100).unwrap();
        let mut fista = Solver::new(Fista::new(f, Func::zero(), vector(vec![0.0; 12]), None).unwrap(), 100).unwrap();
        gd.run(100).unwrap();
        fista.run(100).unwrap();
        let last = |h: &[super::super::Record]| h.last().unwrap().objective.primal.as_f64();
        assert!(last(fista.history()) <= last(gd.history()));
    }

    #[test]
    fn fista_non_negative_iterates() {
        let (a, _) = matrix(10, 6, 6, false);
        let b = vector((0..10).map(|i| (i as f64).sin()).collect());
        let f = Func::new(LeastSquares::new(a, b));
        let g = Func::new(IndicatorBox::non_negative());
        let mut s = Solver::new(Fista::new(f, g, vector(vec![0.0; 6]), None).unwrap(), 300).unwrap();
        let mut ok = true;
        s.run_with(300, |o| ok &= o.solution.min() >= 0.0).unwrap();
        assert!(ok);
    }
}
