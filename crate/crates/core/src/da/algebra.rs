use std::fmt;

use smallvec::SmallVec;

use super::{DAScalar, DaError, Intrinsic};

/// Element type that the integrators and models are written against.
///
/// Implemented for plain reals, for [`DAScalar`] polynomials and for the
/// dense first-order jet [`Jet1`], so a single model body yields values,
/// Jacobians or full Taylor maps depending on what it is fed.
pub trait Algebra: Clone + Send + Sync + fmt::Debug {
    fn constant_part(&self) -> f64;
    /// A constant in the same algebra (and context) as `self`.
    fn constant_like(&self, value: f64) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    fn add_scalar(&self, s: f64) -> Self;
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    fn is_finite(&self) -> bool;
    fn intrinsic(&self, f: Intrinsic) -> Result<Self, DaError>;

    fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    fn sqrt(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Sqrt)
    }

    fn recip(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Reciprocal)
    }
}

impl Algebra for f64 {
    fn constant_part(&self) -> f64 {
        *self
    }
    fn constant_like(&self, value: f64) -> Self {
        value
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn add_scalar(&self, s: f64) -> Self {
        self + s
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    fn intrinsic(&self, f: Intrinsic) -> Result<Self, DaError> {
        Ok(f.series(*self, 0)?[0])
    }
}

impl Algebra for DAScalar {
    fn constant_part(&self) -> f64 {
        DAScalar::constant_part(self)
    }
    fn constant_like(&self, value: f64) -> Self {
        DAScalar::constant(self.context(), value)
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn scale(&self, s: f64) -> Self {
        DAScalar::scale(self, s)
    }
    fn add_scalar(&self, s: f64) -> Self {
        DAScalar::add_scalar(self, s)
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        DAScalar::axpy(self, a, x)
    }
    fn is_finite(&self) -> bool {
        DAScalar::is_finite(self)
    }
    fn intrinsic(&self, f: Intrinsic) -> Result<Self, DaError> {
        DAScalar::intrinsic(self, f)
    }
}

/// Dense order-1 truncated polynomial: a value and its gradient.
///
/// Equivalent to a [`DAScalar`] in a context of order 1, without the sparse
/// bookkeeping. Used for per-particle Jacobians where the context is tiny
/// and the call count is large.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet1 {
    pub value: f64,
    pub grad: SmallVec<[f64; 12]>,
}

impl Jet1 {
    pub fn constant(value: f64, n_vars: usize) -> Self {
        Jet1 { value, grad: SmallVec::from_elem(0.0, n_vars) }
    }

    pub fn variable(value: f64, var: usize, n_vars: usize) -> Self {
        let mut j = Jet1::constant(value, n_vars);
        j.grad[var] = 1.0;
        j
    }

    /// Seeds `x + δ` for every component of `x`.
    pub fn seed(x: &[f64]) -> Vec<Jet1> {
        x.iter().enumerate().map(|(i, &v)| Jet1::variable(v, i, x.len())).collect()
    }

    fn zip(&self, rhs: &Self, value: f64, fa: f64, fb: f64) -> Self {
        let n = self.grad.len().max(rhs.grad.len());
        let mut grad = SmallVec::with_capacity(n);
        for i in 0..n {
            let a = self.grad.get(i).copied().unwrap_or(0.0);
            let b = rhs.grad.get(i).copied().unwrap_or(0.0);
            grad.push(fa * a + fb * b);
        }
        Jet1 { value, grad }
    }
}

impl Algebra for Jet1 {
    fn constant_part(&self) -> f64 {
        self.value
    }
    fn constant_like(&self, value: f64) -> Self {
        Jet1::constant(value, self.grad.len())
    }
    fn add(&self, rhs: &Self) -> Self {
        self.zip(rhs, self.value + rhs.value, 1.0, 1.0)
    }
    fn sub(&self, rhs: &Self) -> Self {
        self.zip(rhs, self.value - rhs.value, 1.0, -1.0)
    }
    fn mul(&self, rhs: &Self) -> Self {
        self.zip(rhs, self.value * rhs.value, rhs.value, self.value)
    }
    fn scale(&self, s: f64) -> Self {
        Jet1 { value: self.value * s, grad: self.grad.iter().map(|g| g * s).collect() }
    }
    fn add_scalar(&self, s: f64) -> Self {
        Jet1 { value: self.value + s, grad: self.grad.clone() }
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.value += a * x.value;
        if self.grad.len() < x.grad.len() {
            self.grad.resize(x.grad.len(), 0.0);
        }
        for (g, xg) in self.grad.iter_mut().zip(&x.grad) {
            *g += a * xg;
        }
    }
    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
    fn intrinsic(&self, f: Intrinsic) -> Result<Self, DaError> {
        let c = f.series(self.value, 1)?;
        Ok(Jet1 { value: c[0], grad: self.grad.iter().map(|g| g * c[1]).collect() })
    }
}
