//! Resumable iterative solvers sharing one run loop.
//!
//! An [`Algorithm`] knows how to perform a single update and how to evaluate
//! its objective; [`Solver`] owns the iteration counter, the budget and the
//! objective history. Because logging depends only on the iteration number,
//! `run(a)` followed by `run(b)` is indistinguishable from `run(a + b)`.

mod krylov;
mod primal_dual;
mod smooth;

use std::io::Write;

use crate::containers::Data;
use crate::error::Result;
use crate::functions::FunctionValue;

pub use krylov::{Cgls, Sirt};
pub use primal_dual::{Ladmm, Pdhg};
pub use smooth::{Fista, Gd, StepRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    /// The method cannot make further progress (e.g. CGLS breakdown).
    Converged,
}

/// Objective values at one iterate.
///
/// For `dual`, `Infeasible` stands for an unbounded-below dual objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub primal: FunctionValue,
    pub dual: Option<FunctionValue>,
}

impl Objective {
    pub fn primal(value: FunctionValue) -> Self {
        Objective { primal: value, dual: None }
    }

    /// Primal minus dual, or `Infeasible` when either side is unbounded.
    pub fn gap(&self) -> Option<FunctionValue> {
        let dual = self.dual?;
        Some(match (self.primal, dual) {
            (FunctionValue::Finite(p), FunctionValue::Finite(d)) => FunctionValue::Finite(p - d),
            _ => FunctionValue::Infeasible,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub iteration: usize,
    pub objective: Objective,
}

pub trait Algorithm: Send {
    fn update(&mut self) -> Result<Status>;
    fn objective(&self) -> Result<Objective>;
    fn solution(&self) -> &Data;
    fn name(&self) -> &'static str;
}

impl Algorithm for Box<dyn Algorithm> {
    fn update(&mut self) -> Result<Status> {
        (**self).update()
    }
    fn objective(&self) -> Result<Objective> {
        (**self).objective()
    }
    fn solution(&self) -> &Data {
        (**self).solution()
    }
    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// When to evaluate and record the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogCadence {
    /// Every iteration up to 99, then every tenth.
    #[default]
    Standard,
    Every(usize),
    Never,
}

impl LogCadence {
    fn logs(self, iteration: usize) -> bool {
        match self {
            LogCadence::Standard => iteration < 100 || iteration.is_multiple_of(10),
            LogCadence::Every(n) => n > 0 && iteration.is_multiple_of(n),
            LogCadence::Never => false,
        }
    }
}

/// Read-only view handed to run callbacks after every update.
pub struct Observation<'a> {
    pub iteration: usize,
    pub solution: &'a Data,
    pub record: Option<&'a Record>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunReport {
    pub performed: usize,
    /// The request exceeded the remaining budget and was cut short.
    pub truncated: bool,
    pub converged: bool,
}

pub struct Solver<A: Algorithm> {
    algorithm: A,
    iteration: usize,
    max_iteration: usize,
    cadence: LogCadence,
    history: Vec<Record>,
    converged: bool,
}

impl<A: Algorithm> Solver<A> {
    /// Wrap an algorithm with an iteration budget; records the initial objective.
    pub fn new(algorithm: A, max_iteration: usize) -> Result<Self> {
        Self::with_cadence(algorithm, max_iteration, LogCadence::Standard)
    }

    pub fn with_cadence(algorithm: A, max_iteration: usize, cadence: LogCadence) -> Result<Self> {
        let mut solver = Solver {
            algorithm,
            iteration: 0,
            max_iteration,
            cadence,
            history: Vec::new(),
            converged: false,
        };
        if cadence.logs(0) {
            let objective = solver.algorithm.objective()?;
            solver.history.push(Record { iteration: 0, objective });
        }
        Ok(solver)
    }

    pub fn run(&mut self, n: usize) -> Result<RunReport> {
        self.run_with(n, |_| {})
    }

    pub fn run_with(&mut self, n: usize, mut callback: impl FnMut(&Observation<'_>)) -> Result<RunReport> {
        let remaining = self.max_iteration - self.iteration;
        let truncated = n > remaining;
        if truncated {
            log::warn!(
                "{}: requested {n} iterations but only {remaining} remain of {}",
                self.algorithm.name(),
                self.max_iteration
            );
        }
        let mut performed = 0;
        for _ in 0..n.min(remaining) {
            if self.converged {
                break;
            }
            let status = self.algorithm.update()?;
            self.iteration += 1;
            performed += 1;
            self.converged = status == Status::Converged;
            let logged = self.cadence.logs(self.iteration) || self.converged;
            if logged {
                let objective = self.algorithm.objective()?;
                self.history.push(Record {
                    iteration: self.iteration,
                    objective,
                });
                log::debug!("{} {:>6}  {}", self.algorithm.name(), self.iteration, objective.primal);
            }
            callback(&Observation {
                iteration: self.iteration,
                solution: self.algorithm.solution(),
                record: if logged { self.history.last() } else { None },
            });
        }
        Ok(RunReport {
            performed,
            truncated,
            converged: self.converged,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn max_iteration(&self) -> usize {
        self.max_iteration
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn history(&self) -> &[Record] {
        &self.history
    }

    pub fn solution(&self) -> &Data {
        self.algorithm.solution()
    }

    pub fn algorithm(&self) -> &A {
        &self.algorithm
    }

    pub fn into_algorithm(self) -> A {
        self.algorithm
    }

    /// Objective history as CSV: `iteration,primal[,dual,gap]`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        write_history_csv(&self.history, out)
    }
}

fn csv_value(v: FunctionValue, infeasible: &str) -> String {
    match v {
        FunctionValue::Finite(x) => format!("{x:e}"),
        FunctionValue::Infeasible => infeasible.to_string(),
    }
}

pub fn write_history_csv(history: &[Record], mut out: impl Write) -> Result<()> {
    let with_dual = history.iter().any(|r| r.objective.dual.is_some());
    if with_dual {
        writeln!(out, "iteration,primal,dual,gap")?;
    } else {
        writeln!(out, "iteration,primal")?;
    }
    for r in history {
        write!(out, "{},{}", r.iteration, csv_value(r.objective.primal, "inf"))?;
        if with_dual {
            let dual = r.objective.dual.map_or(String::new(), |d| csv_value(d, "-inf"));
            let gap = r.objective.gap().map_or(String::new(), |g| csv_value(g, "inf"));
            write!(out, ",{dual},{gap}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testing {
    use crate::containers::LabeledArray;
    use crate::operators::{MatrixOperator, Operator};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn matrix(rows: usize, cols: usize, seed: u64, non_negative: bool) -> (Operator, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = if non_negative { 0.0 } else { -1.0 };
        let e: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(lo..1.0)).collect();
        (Operator::new(MatrixOperator::new(rows, cols, e.clone()).unwrap()), e)
    }

    pub fn vector(x: Vec<f64>) -> crate::containers::Data {
        LabeledArray::vector(x, "x").into()
    }

    /// Solve the symmetric positive definite system `M x = r` by Gaussian elimination.
    pub fn solve(n: usize, mut m: Vec<f64>, mut r: Vec<f64>) -> Vec<f64> {
        for k in 0..n {
            let p = (k..n).max_by(|&a, &b| m[a * n + k].abs().total_cmp(&m[b * n + k].abs())).unwrap();
            for j in 0..n {
                m.swap(k * n + j, p * n + j);
            }
            r.swap(k, p);
            for i in k + 1..n {
                let f = m[i * n + k] / m[k * n + k];
                for j in k..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
                r[i] -= f * r[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i * n + j] * x[j]).sum();
            x[i] = (r[i] - s) / m[i * n + i];
        }
        x
    }

    /// `AᵀWA` and `AᵀWb` for a row-major dense A and diagonal W.
    pub fn normal_equations(rows: usize, cols: usize, a: &[f64], w: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut m = vec![0.0; cols * cols];
        let mut r = vec![0.0; cols];
        for i in 0..cols {
            for j in 0..cols {
                m[i * cols + j] = (0..rows).map(|k| a[k * cols + i] * w[k] * a[k * cols + j]).sum();
            }
            r[i] = (0..rows).map(|k| a[k * cols + i] * w[k] * b[k]).sum();
        }
        (m, r)
    }

    pub fn relative_error(x: &[f64], truth: &[f64]) -> f64 {
        let d: f64 = x.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        d / truth.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn cadence() {
        let s = LogCadence::Standard;
        assert!((0..100).all(|k| s.logs(k)));
        assert!(s.logs(110) && !s.logs(111));
        assert!(LogCadence::Every(5).logs(10) && !LogCadence::Every(5).logs(11));
        assert!(!LogCadence::Never.logs(0));
    }

    #[test]
    fn run_zero_and_truncation() {
        let (a, _) = matrix(6, 3, 1, false);
        let b = vector(vec![1.0, 0.0, 2.0, -1.0, 0.5, 0.0]);
        let mut s = Solver::new(Cgls::new(a, b, None).unwrap(), 5).unwrap();
        let before = s.solution().clone();
        let r = s.run(0).unwrap();
        assert_eq!((r.performed, r.truncated), (0, false));
        assert_eq!(s.solution(), &before);
        assert_eq!(s.history().len(), 1);
        let r = s.run(2).unwrap();
        assert_eq!(r.performed, 2);
        let r = s.run(10).unwrap();
        assert!(r.truncated);
        assert!(r.performed <= 3);
        assert!(s.iteration() <= 5);
    }

    #[test]
    fn split_runs_are_bitwise_identical() {
        let (a, _) = matrix(12, 8, 2, false);
        let b = vector((0..12).map(|i| (i as f64).sin()).collect());
        let mut one = Solver::new(Cgls::new(a.clone(), b.clone(), None).unwrap(), 100).unwrap();
        one.run(7).unwrap();
        let mut two = Solver::new(Cgls::new(a, b, None).unwrap(), 100).unwrap();
        two.run(3).unwrap();
        two.run(4).unwrap();
        assert_eq!(one.solution(), two.solution());
        assert_eq!(one.history(), two.history());
    }

    #[test]
    fn callback_sees_every_iteration() {
        let (a, _) = matrix(5, 5, 3, false);
        let b = vector(vec![1.0; 5]);
        let mut s = Solver::with_cadence(Cgls::new(a, b, None).unwrap(), 10, LogCadence::Every(2)).unwrap();
        let mut seen = Vec::new();
        s.run_with(4, |o| seen.push((o.iteration, o.record.is_some()))).unwrap();
        assert_eq!(seen, vec![(1, false), (2, true), (3, false), (4, true)]);
    }

    #[test]
    fn csv_export() {
        let history = vec![
            Record {
                iteration: 0,
                objective: Objective {
                    primal: FunctionValue::Finite(2.0),
                    dual: Some(FunctionValue::Finite(1.5)),
                },
            },
            Record {
                iteration: 10,
                objective: Objective {
                    primal: FunctionValue::Finite(1.0),
                    dual: Some(FunctionValue::Infeasible),
                },
            },
        ];
        let mut buf = Vec::new();
        write_history_csv(&history, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "iteration,primal,dual,gap\n0,2e0,1.5e0,5e-1\n10,1e0,-inf,inf\n");
    }
}
