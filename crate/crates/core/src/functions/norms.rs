use std::borrow::Cow;

use crate::containers::Data;
use crate::error::{Error, Result};
use crate::operators::Operator;

use super::{Capabilities, Function, FunctionValue};

/// Slack allowed when testing dual-norm balls, to absorb rounding in scaled conjugates.
const BALL_SLACK: f64 = 1e-12;

pub(crate) fn flat(d: &Data) -> Cow<'_, [f64]> {
    match d {
        Data::Array(a) => Cow::Borrowed(a.as_slice()),
        Data::Block(_) => Cow::Owned(d.to_vec()),
    }
}

/// Overwrite `out` elementwise with `f(global index)`.
pub(crate) fn write_flat(out: &mut Data, mut f: impl FnMut(usize) -> f64) {
    let mut offset = 0;
    for a in out.arrays_mut() {
        for (i, o) in a.as_slice_mut().iter_mut().enumerate() {
            *o = f(offset + i);
        }
        offset += a.len();
    }
}

fn check_param(x: &Data, p: &Option<Data>) -> Result<()> {
    match p {
        Some(p) => x.same_layout(p),
        None => Ok(()),
    }
}

fn param(p: &Option<Data>) -> Option<Cow<'_, [f64]>> {
    p.as_ref().map(flat)
}

fn at(p: &Option<Cow<'_, [f64]>>, i: usize, default: f64) -> f64 {
    p.as_ref().map_or(default, |v| v[i])
}

fn check_weights(w: &Data) -> Result<()> {
    if w.to_vec().iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be non-negative".into()));
    }
    Ok(())
}

/// `Σ wᵢ (xᵢ − bᵢ)²`
#[derive(Debug, Clone, Default)]
pub struct L2Squared {
    b: Option<Data>,
    w: Option<Data>,
}

impl L2Squared {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_shift(mut self, b: Data) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_weights(mut self, w: Data) -> Result<Self> {
        check_weights(&w)?;
        self.w = Some(w);
        Ok(self)
    }

    fn check(&self, x: &Data) -> Result<()> {
        check_param(x, &self.b)?;
        check_param(x, &self.w)
    }
}

impl Function for L2Squared {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        self.check(x)?;
        let (b, w) = (param(&self.b), param(&self.w));
        let v = flat(x)
            .iter()
            .enumerate()
            .map(|(i, &u)| at(&w, i, 1.0) * (u - at(&b, i, 0.0)).powi(2))
            .sum();
        Ok(FunctionValue::Finite(v))
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
        let (b, w) = (param(&self.b), param(&self.w));
        let u = flat(x);
        write_flat(out, |i| 2.0 * at(&w, i, 1.0) * (u[i] - at(&b, i, 0.0)));
        Ok(())
    }
    fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        self.check(x)?;
        let (b, w) = (param(&self.b), param(&self.w));
        let u = flat(x);
        write_flat(out, |i| {
            let tw = 2.0 * tau * at(&w, i, 1.0);
            (u[i] + tw * at(&b, i, 0.0)) / (1.0 + tw)
        });
        Ok(())
    }
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        // f*(y) = Σ yᵢ²/(4wᵢ) + yᵢbᵢ
        self.check(x)?;
        let (b, w) = (param(&self.b), param(&self.w));
        let y = flat(x);
        write_flat(out, |i| {
            let wi = at(&w, i, 1.0);
            if wi == 0.0 {
                0.0
            } else {
                2.0 * wi * (y[i] - sigma * at(&b, i, 0.0)) / (2.0 * wi + sigma)
            }
        });
        Ok(())
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        self.check(y)?;
        let (b, w) = (param(&self.b), param(&self.w));
        let mut total = 0.0;
        for (i, &v) in flat(y).iter().enumerate() {
            let wi = at(&w, i, 1.0);
            if wi == 0.0 {
                if v != 0.0 {
                    return Ok(FunctionValue::Infeasible);
                }
                continue;
            }
            total += v * v / (4.0 * wi) + v * at(&b, i, 0.0);
        }
        Ok(FunctionValue::Finite(total))
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(2.0 * self.w.as_ref().map_or(1.0, |w| w.max()))
    }
}

/// `c‖Ax − b‖²_w` (no ½ factor).
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: Operator,
    b: Data,
    c: f64,
    w: Option<Data>,
}

impl LeastSquares {
    pub fn new(a: Operator, b: Data) -> Self {
        LeastSquares { a, b, c: 1.0, w: None }
    }

    pub fn with_scale(mut self, c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be ≥ 0, got {c}")));
        }
        self.c = c;
        Ok(self)
    }

    pub fn with_weights(mut self, w: Data) -> Result<Self> {
        check_weights(&w)?;
        self.b.same_layout(&w)?;
        self.w = Some(w);
        Ok(self)
    }

    pub fn operator(&self) -> &Operator {
        &self.a
    }

    pub fn data(&self) -> &Data {
        &self.b
    }

    fn residual(&self, x: &Data) -> Result<Data> {
        let mut r = self.a.direct(x)?;
        r.axpby_in_place(1.0, -1.0, &self.b)?;
        Ok(r)
    }
}

impl Function for LeastSquares {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        let r = self.residual(x)?;
        let v = match &self.w {
            None => r.squared_norm(),
            Some(w) => r.mul(&r)?.dot(w)?,
        };
        Ok(FunctionValue::Finite(self.c * v))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: true,
            ..Default::default()
        }
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        let mut r = self.residual(x)?;
        if let Some(w) = &self.w {
            r.zip_in_place(w, |a, b| a * b)?;
        }
        self.a.adjoint_into(&r, out)?;
        out.scale_in_place(2.0 * self.c);
        Ok(())
    }
    fn lipschitz(&self) -> Option<f64> {
        let wmax = self.w.as_ref().map_or(1.0, |w| w.max());
        Some(2.0 * self.c * wmax * self.a.norm().powi(2))
    }
}

/// `Σ |xᵢ − bᵢ|`
#[derive(Debug, Clone, Default)]
pub struct L1Norm {
    b: Option<Data>,
}

impl L1Norm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_shift(b: Data) -> Self {
        L1Norm { b: Some(b) }
    }
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

impl Function for L1Norm {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        check_param(x, &self.b)?;
        let b = param(&self.b);
        let v = flat(x).iter().enumerate().map(|(i, &u)| (u - at(&b, i, 0.0)).abs()).sum();
        Ok(FunctionValue::Finite(v))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: false,
            prox: true,
            prox_conjugate: true,
            conjugate: true,
        }
    }
    fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        check_param(x, &self.b)?;
        let b = param(&self.b);
        let u = flat(x);
        write_flat(out, |i| {
            let bi = at(&b, i, 0.0);
            bi + soft(u[i] - bi, tau)
        });
        Ok(())
    }
    fn prox_conjugate_into(&self, x: &Data, sigma: f64, out: &mut Data) -> Result<()> {
        // f* = indicator{|y| ≤ 1} + ⟨y, b⟩
        check_param(x, &self.b)?;
        let b = param(&self.b);
        let y = flat(x);
        write_flat(out, |i| (y[i] - sigma * at(&b, i, 0.0)).clamp(-1.0, 1.0));
        Ok(())
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        check_param(y, &self.b)?;
        let b = param(&self.b);
        let mut total = 0.0;
        for (i, &v) in flat(y).iter().enumerate() {
            if v.abs() > 1.0 + BALL_SLACK {
                return Ok(FunctionValue::Infeasible);
            }
            total += v * at(&b, i, 0.0);
        }
        Ok(FunctionValue::Finite(total))
    }
}

/// Leaf slices of a container whose leaves all share one length.
fn voxel_groups(x: &Data) -> Result<Vec<&[f64]>> {
    let leaves: Vec<&[f64]> = x.arrays().into_iter().map(|a| a.as_slice()).collect();
    let n = leaves[0].len();
    if leaves.iter().any(|l| l.len() != n) {
        return Err(Error::BlockMismatch("mixed-norm entries must share one shape".into()));
    }
    Ok(leaves)
}

fn voxel_norms(leaves: &[&[f64]], beta: f64) -> Vec<f64> {
    let n = leaves[0].len();
    (0..n)
        .map(|v| (leaves.iter().map(|l| l[v] * l[v]).sum::<f64>() + beta * beta).sqrt())
        .collect()
}

/// Write `scale[v] · x_k[v]` into every entry k of `out`.
fn write_scaled(out: &mut Data, leaves: &[&[f64]], scale: &[f64]) {
    for (o, l) in out.arrays_mut().into_iter().zip(leaves) {
        for ((o, &x), &s) in o.as_slice_mut().iter_mut().zip(l.iter()).zip(scale) {
            *o = s * x;
        }
    }
}

/// `Σ_v ‖(x₁[v], …, x_n[v])‖₂`, the isotropic mixed norm over block entries.
#[derive(Debug, Clone, Copy, Default)]
pub struct MixedL21;

impl MixedL21 {
    pub fn new() -> Self {
        MixedL21
    }
}

impl Function for MixedL21 {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        let leaves = voxel_groups(x)?;
        Ok(FunctionValue::Finite(voxel_norms(&leaves, 0.0).iter().sum()))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: false,
            prox: true,
            prox_conjugate: true,
            conjugate: true,
        }
    }
    fn prox_into(&self, x: &Data, tau: f64, out: &mut Data) -> Result<()> {
        let leaves = voxel_groups(x)?;
        let scale: Vec<f64> = voxel_norms(&leaves, 0.0)
            .into_iter()
            .map(|n| if n == 0.0 { 0.0 } else { (n - tau).max(0.0) / n })
            .collect();
        write_scaled(out, &leaves, &scale);
        Ok(())
    }
    fn prox_conjugate_into(&self, x: &Data, _sigma: f64, out: &mut Data) -> Result<()> {
        // projection onto the unit ball of the dual norm, voxel by voxel
        let leaves = voxel_groups(x)?;
        let scale: Vec<f64> = voxel_norms(&leaves, 0.0).into_iter().map(|n| 1.0 / n.max(1.0)).collect();
        write_scaled(out, &leaves, &scale);
        Ok(())
    }
    fn convex_conjugate(&self, y: &Data) -> Result<FunctionValue> {
        let leaves = voxel_groups(y)?;
        Ok(if voxel_norms(&leaves, 0.0).iter().all(|&n| n <= 1.0 + BALL_SLACK) {
            FunctionValue::Finite(0.0)
        } else {
            FunctionValue::Infeasible
        })
    }
}

/// `Σ_v sqrt(‖x[v]‖² + β²)`, a differentiable surrogate of [`MixedL21`].
#[derive(Debug, Clone, Copy)]
pub struct SmoothMixedL21 {
    beta: f64,
}

impl SmoothMixedL21 {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("β must be positive, got {beta}")));
        }
        Ok(SmoothMixedL21 { beta })
    }
}

impl Function for SmoothMixedL21 {
    fn value(&self, x: &Data) -> Result<FunctionValue> {
        let leaves = voxel_groups(x)?;
        Ok(FunctionValue::Finite(voxel_norms(&leaves, self.beta).iter().sum()))
    }
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            gradient: true,
            ..Default::default()
        }
    }
    fn gradient_into(&self, x: &Data, out: &mut Data) -> Result<()> {
        let leaves = voxel_groups(x)?;
        let scale: Vec<f64> = voxel_norms(&leaves, self.beta).into_iter().map(|n| 1.0 / n).collect();
        write_scaled(out, &leaves, &scale);
        Ok(())
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(1.0 / self.beta)
    }
}
