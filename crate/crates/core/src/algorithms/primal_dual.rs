use crate::containers::Data;
use crate::error::{Error, Result};
use crate::functions::{Func, FunctionValue};
use crate::operators::Operator;

use super::{Algorithm, Objective, Status};

/// Relative slack on step-size conditions, absorbing rounding in norm estimates.
const STEP_SLACK: f64 = 1e-9;

fn initial_or_zero(k: &Operator, initial: Option<Data>) -> Result<Data> {
    match initial {
        Some(x) => {
            k.domain().check(&x)?;
            Ok(x)
        }
        None => Ok(k.domain().zeros()),
    }
}

/// Chambolle–Pock primal-dual hybrid gradient for `min_x f(Kx) + g(x)`.
pub struct Pdhg {
    f: Func,
    g: Func,
    k: Operator,
    x: Data,
    x_old: Data,
    x_bar: Data,
    y: Data,
    dual_arg: Data,
    primal_arg: Data,
    sigma: f64,
    tau: f64,
    theta: f64,
}

impl Pdhg {
    /// σ and τ default to 0.99/‖K‖ each; σ·τ·‖K‖² ≤ 1 is enforced.
    pub fn new(
        f: Func,
        k: Operator,
        g: Func,
        initial: Option<Data>,
        sigma: Option<f64>,
        tau: Option<f64>,
    ) -> Result<Self> {
        if !f.capabilities().prox_conjugate {
            return Err(Error::unsupported("prox_conjugate", format!("{f:?}")));
        }
        if !g.capabilities().prox {
            return Err(Error::unsupported("prox", format!("{g:?}")));
        }
        let norm = k.norm();
        let default = if norm > 0.0 { 0.99 / norm } else { 1.0 };
        let sigma = sigma.unwrap_or(default);
        let tau = tau.unwrap_or(default);
        if !(sigma > 0.0 && tau > 0.0 && sigma.is_finite() && tau.is_finite()) {
            return Err(Error::StepSize(format!("σ = {sigma} and τ = {tau} must be positive")));
        }
        if sigma * tau * norm * norm > 1.0 + STEP_SLACK {
            return Err(Error::StepSize(format!(
                "σ·τ·‖K‖² = {} exceeds 1",
                sigma * tau * norm * norm
            )));
        }
        let x = initial_or_zero(&k, initial)?;
        Ok(Pdhg {
            x_old: x.clone(),
            x_bar: x.clone(),
            primal_arg: x.clone(),
            y: k.range().zeros(),
            dual_arg: k.range().zeros(),
            x,
            f,
            g,
            k,
            sigma,
            tau,
            theta: 1.0,
        })
    }

    pub fn steps(&self) -> (f64, f64) {
        (self.sigma, self.tau)
    }

    pub fn dual(&self) -> &Data {
        &self.y
    }
}

/// `−f*(y) − g*(−K*y)`; `None` when a conjugate is not available.
fn dual_objective(f: &Func, g: &Func, k: &Operator, y: &Data) -> Result<Option<FunctionValue>> {
    if !(f.capabilities().conjugate && g.capabilities().conjugate) {
        return Ok(None);
    }
    let fs = f.convex_conjugate(y)?;
    let kty = k.adjoint(y)?.scaled(-1.0);
    let gs = g.convex_conjugate(&kty)?;
    Ok(Some(match fs + gs {
        FunctionValue::Finite(v) => FunctionValue::Finite(-v),
        FunctionValue::Infeasible => FunctionValue::Infeasible,
    }))
}

impl Algorithm for Pdhg {
    fn update(&mut self) -> Result<Status> {
        // y ← prox_{σf*}(y + σK x̄)
        self.k.direct_into(&self.x_bar, &mut self.dual_arg)?;
        self.dual_arg.axpby_in_place(self.sigma, 1.0, &self.y)?;
        self.f.prox_conjugate_into(&self.dual_arg, self.sigma, &mut self.y)?;
        // x ← prox_{τg}(x − τK*y)
        self.k.adjoint_into(&self.y, &mut self.primal_arg)?;
        self.primal_arg.axpby_in_place(-self.tau, 1.0, &self.x)?;
        std::mem::swap(&mut self.x_old, &mut self.x);
        self.g.prox_into(&self.primal_arg, self.tau, &mut self.x)?;
        // x̄ ← x + θ(x − x_old)
        self.x_bar.copy_from(&self.x)?;
        self.x_bar.axpby_in_place(1.0 + self.theta, -self.theta, &self.x_old)?;
        Ok(Status::Running)
    }

    fn objective(&self) -> Result<Objective> {
        let primal = self.f.value(&self.k.direct(&self.x)?)? + self.g.value(&self.x)?;
        let dual = dual_objective(&self.f, &self.g, &self.k, &self.y)?;
        Ok(Objective { primal, dual })
    }

    fn solution(&self) -> &Data {
        &self.x
    }

    fn name(&self) -> &'static str {
        "PDHG"
    }
}

/// Linearised ADMM for `min_x f(Kx) + g(x)` with `τ ≤ σ/‖K‖²`:
///
/// ```text
/// x ← prox_{τg}(x − (τ/σ)K*(Kx − z + u))
/// z ← prox_{σf}(Kx + u)
/// u ← u + Kx − z
/// ```
pub struct Ladmm {
    f: Func,
    g: Func,
    k: Operator,
    x: Data,
    z: Data,
    u: Data,
    kx: Data,
    range_tmp: Data,
    domain_tmp: Data,
    sigma: f64,
    tau: f64,
}

impl Ladmm {
    /// σ defaults to 1 and τ to 0.99·σ/‖K‖².
    pub fn new(
        f: Func,
        k: Operator,
        g: Func,
        initial: Option<Data>,
        sigma: Option<f64>,
        tau: Option<f64>,
    ) -> Result<Self> {
        if !f.capabilities().prox {
            return Err(Error::unsupported("prox", format!("{f:?}")));
        }
        if !g.capabilities().prox {
            return Err(Error::unsupported("prox", format!("{g:?}")));
        }
        let norm2 = k.norm().powi(2);
        let sigma = sigma.unwrap_or(1.0);
        let limit = if norm2 > 0.0 { sigma / norm2 } else { f64::INFINITY };
        let tau = tau.unwrap_or(if norm2 > 0.0 { 0.99 * limit } else { 1.0 });
        if !(sigma > 0.0 && tau > 0.0 && sigma.is_finite() && tau.is_finite()) {
            return Err(Error::StepSize(format!("σ = {sigma} and τ = {tau} must be positive")));
        }
        if tau > limit * (1.0 + STEP_SLACK) {
            return Err(Error::StepSize(format!("τ = {tau} exceeds σ/‖K‖² = {limit}")));
        }
        let x = initial_or_zero(&k, initial)?;
        let kx = k.direct(&x)?;
        Ok(Ladmm {
            z: kx.clone(),
            u: kx.zeros_like(),
            range_tmp: kx.zeros_like(),
            domain_tmp: x.zeros_like(),
            kx,
            x,
            f,
            g,
            k,
            sigma,
            tau,
        })
    }

    pub fn steps(&self) -> (f64, f64) {
        (self.sigma, self.tau)
    }
}

impl Algorithm for Ladmm {
    fn update(&mut self) -> Result<Status> {
        // Kx is current from the previous update (or construction)
        self.range_tmp.copy_from(&self.kx)?;
        self.range_tmp.axpby_in_place(1.0, -1.0, &self.z)?;
        self.range_tmp.axpby_in_place(1.0, 1.0, &self.u)?;
        self.k.adjoint_into(&self.range_tmp, &mut self.domain_tmp)?;
        self.domain_tmp.axpby_in_place(-self.tau / self.sigma, 1.0, &self.x)?;
        self.g.prox_into(&self.domain_tmp, self.tau, &mut self.x)?;

        self.k.direct_into(&self.x, &mut self.kx)?;
        self.range_tmp.copy_from(&self.kx)?;
        self.range_tmp.axpby_in_place(1.0, 1.0, &self.u)?;
        self.f.prox_into(&self.range_tmp, self.sigma, &mut self.z)?;

        self.u.axpby_in_place(1.0, 1.0, &self.kx)?;
        self.u.axpby_in_place(1.0, -1.0, &self.z)?;
        Ok(Status::Running)
    }

    fn objective(&self) -> Result<Objective> {
        Ok(Objective::primal(self.f.value(&self.kx)? + self.g.value(&self.x)?))
    }

    fn solution(&self) -> &Data {
        &self.x
    }

    fn name(&self) -> &'static str {
        "LADMM"
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::Solver;
    use super::*;
    use crate::containers::Space;
    use crate::functions::{BlockFunction, IndicatorBox, L1Norm, L2Squared};
    use crate::operators::{BlockOperator, Boundary, FiniteDifference};

    const ALPHA: f64 = 0.4;

    /// `‖Ax − b‖² + α‖Dx‖₁` on a 4-vector, A 5×4, D forward differences.
    fn tv_instance() -> (Operator, Vec<f64>, Operator, Data) {
        let (a, e) = matrix(5, 4, 40, false);
        let b = vector(vec![1.0, 0.2, -0.5, 0.9, 0.3]);
        let d = Operator::new(FiniteDifference::new(Space::vector(4), "x", Boundary::Neumann).unwrap());
        (a, e, d, b)
    }

    fn objective(e: &[f64], b: &[f64], x: &[f64]) -> f64 {
        let fit: f64 = (0..5)
            .map(|i| ((0..4).map(|j| e[i * 4 + j] * x[j]).sum::<f64>() - b[i]).powi(2))
            .sum();
        fit + ALPHA * (0..3).map(|i| (x[i + 1] - x[i]).abs()).sum::<f64>()
    }

    /// Enumerate sign patterns of the three differences; for each, solve the
    /// equality-constrained quadratic by its KKT system. The minimiser is one
    /// of the candidates.
    fn dense_oracle(e: &[f64], b: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for pattern in 0..27 {
            let signs: Vec<i32> = (0..3).map(|i| (pattern / 3i32.pow(i)) % 3 - 1).collect();
            let active: Vec<usize> = (0..3).filter(|&i| signs[i] == 0).collect();
            let n = 4 + active.len();
            let mut m = vec![0.0; n * n];
            let mut r = vec![0.0; n];
            for i in 0..4 {
                for j in 0..4 {
                    m[i * n + j] = 2.0 * (0..5).map(|k| e[k * 4 + i] * e[k * 4 + j]).sum::<f64>();
                }
                r[i] = 2.0 * (0..5).map(|k| e[k * 4 + i] * b[k]).sum::<f64>();
            }
            // linear term α sᵀDx: d/dx_i of Σ s_j (x_{j+1} − x_j)
            for (j, &s) in signs.iter().enumerate() {
                r[j] += ALPHA * s as f64;
                r[j + 1] -= ALPHA * s as f64;
            }
            for (c, &j) in active.iter().enumerate() {
                let row = 4 + c;
                m[row * n + j] = -1.0;
                m[row * n + j + 1] = 1.0;
                m[j * n + row] = -1.0;
                m[(j + 1) * n + row] = 1.0;
            }
            let sol = solve(n, m, r);
            best = best.min(objective(e, b, &sol[..4]));
        }
        best
    }

    fn pdhg_solver(g: Func) -> Solver<Pdhg> {
        let (a, _, d, b) = tv_instance();
        let k = Operator::new(BlockOperator::column(vec![a, d]).unwrap());
        let f = Func::new(
            BlockFunction::new(vec![
                Func::new(L2Squared::new()).translate(b),
                Func::new(L1Norm::new()).scale(ALPHA).unwrap(),
            ])
            .unwrap(),
        );
        Solver::new(Pdhg::new(f, k, g, None, None, None).unwrap(), 20000).unwrap()
    }

    #[test]
    fn pdhg_matches_dense_oracle() {
        let (_, e, _, b) = tv_instance();
        let oracle = dense_oracle(&e, &b.to_vec());
        let mut s = pdhg_solver(Func::zero());
        s.run(20000).unwrap();
        let got = objective(&e, &b.to_vec(), &s.solution().to_vec());
        assert!((got - oracle).abs() <= 1e-6 * oracle.abs(), "{got} vs {oracle}");
        let last = s.history().last().unwrap().objective;
        assert!(last.gap().unwrap().as_f64().abs() < 1e-8);
    }

    #[test]
    fn pdhg_weak_duality() {
        let mut s = pdhg_solver(Func::new(IndicatorBox::new(-10.0, 10.0).unwrap()));
        s.run(5000).unwrap();
        for r in &s.history()[1..] {
            let (p, d) = (r.objective.primal.as_f64(), r.objective.dual.unwrap().as_f64());
            assert!(p >= d - 1e-8, "iteration {}: {p} < {d}", r.iteration);
        }
    }

    #[test]
    fn pdhg_rejects_large_steps() {
        let (a, _, _, b) = tv_instance();
        let f = Func::new(L2Squared::new()).translate(b);
        let n = a.norm();
        assert!(Pdhg::new(f.clone(), a.clone(), Func::zero(), None, Some(1.0 / n), Some(1.1 / n)).is_err());
        assert!(Pdhg::new(f, a, Func::zero(), None, Some(0.5 / n), Some(2.0 / n)).is_ok());
    }

    #[test]
    fn ladmm_agrees_with_pdhg() {
        let (a, e, d, b) = tv_instance();
        let oracle = dense_oracle(&e, &b.to_vec());
        let k = Operator::new(BlockOperator::column(vec![a, d]).unwrap());
        let f = Func::new(
            BlockFunction::new(vec![
                Func::new(L2Squared::new()).translate(b.clone()),
                Func::new(L1Norm::new()).scale(ALPHA).unwrap(),
            ])
            .unwrap(),
        );
        let mut s = Solver::new(Ladmm::new(f, k, Func::zero(), None, None, None).unwrap(), 20000).unwrap();
        s.run(20000).unwrap();
        let got = objective(&e, &b.to_vec(), &s.solution().to_vec());
        assert!((got - oracle).abs() <= 1e-4 * oracle.abs(), "{got} vs {oracle}");
    }

    #[test]
    fn ladmm_identity_quadratic() {
        let c = vector(vec![0.5, -1.0, 2.0]);
        let k = Operator::identity(Space::vector(3));
        let f = Func::new(L2Squared::new().with_shift(c.clone())).scale(0.5).unwrap();
        let mut s = Solver::new(Ladmm::new(f, k, Func::zero(), None, None, None).unwrap(), 500).unwrap();
        s.run(500).unwrap();
        assert!(s.solution().sub(&c).unwrap().norm() < 1e-10);
    }

    #[test]
    fn ladmm_box_iterates_are_feasible() {
        let (a, _, _, b) = tv_instance();
        let f = Func::new(L1Norm::with_shift(b));
        let g = Func::new(IndicatorBox::new(0.0, 0.5).unwrap());
        let mut s = Solver::new(Ladmm::new(f, a, g, None, None, None).unwrap(), 300).unwrap();
        let mut feasible = true;
        s.run_with(300, |o| feasible &= o.solution.to_vec().iter().all(|&v| (0.0..=0.5).contains(&v)))
            .unwrap();
        assert!(feasible);
    }
}
