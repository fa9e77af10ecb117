use crate::containers::Data;
use crate::error::{Error, Result};

use super::norms::{flat, write_flat};
use super::{Capabilities, Function, FunctionValue};

/// Poisson divergence `Σ (vᵢ+ηᵢ) − bᵢ + bᵢ log(bᵢ/(vᵢ+ηᵢ))` with `0·log 0 = 0`.
///
/// Points with `v + η ≤ 0` where `b > 0` are a domain error; points with
/// `v + η < 0` where `b = 0` are outside the domain and report `Infeasible`.
#[derive(Debug, Clone)]
pub struct KullbackLeibler {
    b: Data,
    eta: Option<Data>,
}

impl KullbackLeibler {
    pub fn new(b: Data) -> Result<Self> {
        if b.to_vec().iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("KL data must be non-negative".into()));
        }
        Ok(KullbackLeibler { b, eta: None })
    }

    pub fn with_background(mut self, eta: Data) -> Result<Self> {
        self.b.same_layout(&eta)?;
        if eta.to_vec().iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidArgument("KL background must be non-negative".into()));
        }
        self.eta = Some(eta);
        Ok(self)
    }

    pub fn data(&self) -> &Data {
        &self.b
    }

    fn check(&self, x: &Data) -> Result<()> {
        self.b.same_layout(x)
    }

    fn eta(&self) -> Option<std::borrow::Cow<'_, [f64]>> {
        self.eta.as_ref().map(flat)
    }

    /// Whether `v + η > 0` wherever `b > 0`.
    pub fn feasible(&self, v: &Data) -> Result<bool> {
        self.check(v)?;
        let (b, eta, v) = (flat(&self.b), self.eta(), flat(v));
        Ok((0..v.len()).all(|i| b[i] == 0.0 || v[i] + eta.as_ref().map_or(0.0, |e| e[i]) > 0.0))
    }
}

fn domain_error(i: usize) -> Error {
    Error::Domain(format!("KL divergence undefined: v + η ≤ 0 where b > 0 (element {i})"))
}

impl Function for KullbackLeibler {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        self.check(x)?;
        let (b, eta, v) = (flat(&self.b), self.eta(), flat(x));
        let mut total = 0.0;
        for i in 0..v.len() {
            let s = v[i] + eta.as_ref().map_or(0.0, |e| e[i]);
            if b[i] > 0.0 {
                if s <= 0.0 {
                    return Err(domain_error(i));
                }
                total += s - b[i] + b[i] * (b[i] / s).ln();
            } else if s < 0.0 {
                return Ok(FunctionValue::Infeasible);
            } else {
                total += s;
            }
        }
        Ok(FunctionValue::Finite(total))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: true,
            prox: true,
            prox_conjugate: true,
            conjugate: true,
        }
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        self.check(x)?;
        let (b, eta, v) = (flat(&self.b), self.eta(), flat(x));
        if let Some(i) = (0..v.len()).find(|&i| b[i] > 0.0 && v[i] + eta.as_ref().map_or(0.0, |e| e[i]) <= 0.0) {
            return Err(domain_error(i));
        }
        write_flat(out, |i| {
            if b[i] == 0.0 {
                1.0
            } else {
                1.0 - b[i] / (v[i] + eta.as_ref().map_or(0.0, |e| e[i]))
            }
        });
        Ok(())
    }
    fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        // positive root of s² + (τ − η − u)s − τb = 0 with s = v + η
        self.check(x)?;
        let (b, eta, u) = (flat(&self.b), self.eta(), flat(x));
        write_flat(out, |i| {
            let e = eta.as_ref().map_or(0.0, |e| e[i]);
            let p = tau - e - u[i];
            let s = 0.5 * (-p + (p * p + 4.0 * tau * b[i]).sqrt());
            s - e
        });
        Ok(())
    }
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        // f*(y) = −ηy − b log(1 − y); solve for w = 1 − y > 0
        self.check(x)?;
        let (b, eta, z) = (flat(&self.b), self.eta(), flat(x));
        write_flat(out, |i| {
            let e = eta.as_ref().map_or(0.0, |e| e[i]);
            let p = 1.0 - z[i] - sigma * e;
            let w = 0.5 * (p + (p * p + 4.0 * sigma * b[i]).sqrt());
            1.0 - w
        });
        Ok(())
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        self.check(y)?;
        let (b, eta, y) = (flat(&self.b), self.eta(), flat(y));
        let mut total = 0.0;
        for i in 0..y.len() {
            let e = eta.as_ref().map_or(0.0, |e| e[i]);
            if b[i] > 0.0 {
                if y[i] >= 1.0 {
                    return Ok(FunctionValue::Infeasible);
                }
                total += -e * y[i] - b[i] * (1.0 - y[i]).ln();
            } else {
                if y[i] > 1.0 {
                    return Ok(FunctionValue::Infeasible);
                }
                total += -e * y[i];
            }
        }
        Ok(FunctionValue::Finite(total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{LabeledArray, Space};
    use crate::functions::testing::*;
    use crate::functions::Func;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: Vec<f64>) -> Data {
        LabeledArray::vector(x, "x").into()
    }

    #[test]
    fn value_examples() {
        let b = v(vec![1.0, 2.5, 0.0]);
        let eta = v(vec![0.5, 0.5, 0.0]);
        let f = Func::new(KullbackLeibler::new(b).unwrap().with_background(eta).unwrap());
        assert_eq!(f.value(&v(vec![0.5, 2.0, 0.0])).unwrap(), FunctionValue::Finite(0.0));
        let g = Func::new(KullbackLeibler::new(v(vec![0.0])).unwrap());
        assert_eq!(g.value(&v(vec![2.0])).unwrap(), FunctionValue::Finite(2.0));
        assert_eq!(g.value(&v(vec![-2.0])).unwrap(), FunctionValue::Infeasible);
        let h = Func::new(KullbackLeibler::new(v(vec![1.0])).unwrap());
        assert!(matches!(h.value(&v(vec![0.0])), Err(Error::Domain(_))));
        assert!(h.gradient(&v(vec![-1.0])).is_err());
        assert!(KullbackLeibler::new(v(vec![-1.0])).is_err());
    }

    fn instance(rng: &mut ChaCha8Rng, n: usize) -> KullbackLeibler {
        let b: Vec<f64> = (0..n).map(|i| if i % 4 == 0 { 0.0 } else { rng.random_range(0.1..5.0) }).collect();
        let eta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        KullbackLeibler::new(v(b)).unwrap().with_background(v(eta)).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let f = Func::new(instance(&mut rng, 12));
        let err = gradient_check(&f, 10, |r| v((0..12).map(|_| r.random_range(0.5..4.0)).collect()));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn primal_prox_is_optimal_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let kl = instance(&mut rng, 10);
        let f = Func::new(kl.clone());
        for _ in 0..10 {
            let u = random_point(&Space::vector(10), &mut rng).scaled(3.0);
            let tau = rng.random_range(0.1..2.0);
            let p = f.prox(&u, tau).unwrap();
            assert!(kl.feasible(&p).unwrap());
            assert!(prox_is_optimal(&f, &u, tau, &mut rng));
            assert!(moreau_residual(&f, &u, tau) < 1e-10);
        }
    }

    #[test]
    fn conjugate_prox_minimises_conjugate_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let kl = instance(&mut rng, 8);
        let f = Func::new(kl);
        let sigma = 0.7;
        let z = random_point(&Space::vector(8), &mut rng).scaled(2.0);
        let y = f.prox_conjugate(&z, sigma).unwrap();
        let obj = |w: &Data| sigma * f.convex_conjugate(w).unwrap().as_f64() + 0.5 * w.sub(&z).unwrap().squared_norm();
        let best = obj(&y);
        assert!(best.is_finite());
        for k in 0..100 {
            let mut d = random_point(&Space::vector(8), &mut rng);
            d.scale_in_place(10f64.powi(-(k % 5) - 1));
            assert!(best <= obj(&y.add(&d).unwrap()) + 1e-12);
        }
    }
}
