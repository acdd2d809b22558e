use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::{AlgebraContext, DaError};

/// Coefficients below this fraction of the largest coefficient are dropped.
pub const PRUNE_RELATIVE: f64 = 1e-14;
/// Above this many monomials, products accumulate into a map instead of a dense buffer.
const DENSE_ACCUMULATOR_LIMIT: usize = 1 << 16;

/// Intrinsic functions supported by [`DAScalar::intrinsic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intrinsic {
    Reciprocal,
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
}

impl Intrinsic {
    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Reciprocal => "reciprocal",
            Intrinsic::Sqrt => "sqrt",
            Intrinsic::Exp => "exp",
            Intrinsic::Log => "log",
            Intrinsic::Sin => "sin",
            Intrinsic::Cos => "cos",
        }
    }

    /// Taylor coefficients `f⁽ʲ⁾(a)/j!` for `j = 0..=order`.
    pub(crate) fn series(self, a: f64, order: usize) -> Result<Vec<f64>, DaError> {
        let domain = |ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(DaError::Domain { function: self.name(), value: a })
            }
        };
        let mut c = Vec::with_capacity(order + 1);
        match self {
            Intrinsic::Reciprocal => {
                domain(a != 0.0 && a.is_finite())?;
                let inv = 1.0 / a;
                let mut term = inv;
                for _ in 0..=order {
                    c.push(term);
                    term *= -inv;
                }
            }
            Intrinsic::Sqrt => {
                domain(a > 0.0 && a.is_finite())?;
                // sqrt(a)·binom(1/2, j)/aʲ
                let mut term = a.sqrt();
                for j in 0..=order {
                    c.push(term);
                    term *= (0.5 - j as f64) / ((j + 1) as f64 * a);
                }
            }
            Intrinsic::Exp => {
                domain(a.is_finite())?;
                let mut term = a.exp();
                for j in 0..=order {
                    c.push(term);
                    term /= (j + 1) as f64;
                }
            }
            Intrinsic::Log => {
                domain(a > 0.0 && a.is_finite())?;
                c.push(a.ln());
                let mut pow = 1.0;
                for j in 1..=order {
                    pow /= a;
                    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                    c.push(sign * pow / j as f64);
                }
            }
            Intrinsic::Sin | Intrinsic::Cos => {
                domain(a.is_finite())?;
                let (s, co) = a.sin_cos();
                let cycle = if self == Intrinsic::Sin { [s, co, -s, -co] } else { [co, -s, -co, s] };
                let mut fact = 1.0;
                for j in 0..=order {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    c.push(cycle[j % 4] / fact);
                }
            }
        }
        Ok(c)
    }
}

/// A truncated multivariate Taylor polynomial.
///
/// Terms are stored sparsely as `(rank, coefficient)` pairs sorted by the
/// graded-lex rank of their monomial in the owning [`AlgebraContext`].
#[derive(Clone)]
pub struct DAScalar {
    ctx: AlgebraContext,
    terms: Vec<(u32, f64)>,
}

impl DAScalar {
    pub fn zero(ctx: &AlgebraContext) -> Self {
        DAScalar { ctx: ctx.clone(), terms: Vec::new() }
    }

    pub fn constant(ctx: &AlgebraContext, value: f64) -> Self {
        let terms = if value != 0.0 { vec![(0, value)] } else { Vec::new() };
        DAScalar { ctx: ctx.clone(), terms }
    }

    /// The polynomial `center + δ_var`.
    pub fn variable(ctx: &AlgebraContext, center: f64, var: usize) -> Result<Self, DaError> {
        if var >= ctx.n_vars() {
            return Err(DaError::VariableIndex { index: var, n_vars: ctx.n_vars() });
        }
        let mut terms = Vec::with_capacity(2);
        if center != 0.0 {
            terms.push((0, center));
        }
        terms.push((1 + var as u32, 1.0));
        Ok(DAScalar { ctx: ctx.clone(), terms })
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs. Repeated
    /// exponents are summed; monomials above the truncation order are rejected.
    pub fn from_terms<'a, I>(ctx: &AlgebraContext, terms: I) -> Result<Self, DaError>
    where
        I: IntoIterator<Item = (&'a [u8], f64)>,
    {
        let mut out: Vec<(u32, f64)> = Vec::new();
        for (e, c) in terms {
            if e.len() != ctx.n_vars() {
                return Err(DaError::Dimension { expected: ctx.n_vars(), got: e.len() });
            }
            let rank = ctx.rank_of(e).ok_or(DaError::OrderExceeded {
                degree: e.iter().map(|&x| x as usize).sum(),
                max_order: ctx.max_order(),
            })?;
            out.push((rank, c));
        }
        out.sort_by_key(|t| t.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(out.len());
        for (r, c) in out {
            match merged.last_mut() {
                Some(last) if last.0 == r => last.1 += c,
                _ => merged.push((r, c)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        Ok(DAScalar { ctx: ctx.clone(), terms: merged })
    }

    pub fn context(&self) -> &AlgebraContext {
        &self.ctx
    }

    pub fn constant_part(&self) -> f64 {
        match self.terms.first() {
            Some(&(0, c)) => c,
            _ => 0.0,
        }
    }

    pub fn coefficient(&self, exponents: &[u8]) -> f64 {
        self.ctx
            .rank_of(exponents)
            .and_then(|r| self.terms.binary_search_by_key(&r, |t| t.0).ok())
            .map_or(0.0, |i| self.terms[i].1)
    }

    /// Coefficient of `δ_var`.
    pub fn linear_coefficient(&self, var: usize) -> f64 {
        let r = 1 + var as u32;
        self.terms.binary_search_by_key(&r, |t| t.0).map_or(0.0, |i| self.terms[i].1)
    }

    /// Nonzero terms as `(exponents, coefficient)` in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> + '_ {
        self.terms.iter().map(move |&(r, c)| (self.ctx.exponents(r), c))
    }

    pub(crate) fn raw_terms(&self) -> &[(u32, f64)] {
        &self.terms
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest total degree among stored terms (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.terms.last().map_or(0, |&(r, _)| self.ctx.degree(r))
    }

    pub fn is_finite(&self) -> bool {
        self.terms.iter().all(|t| t.1.is_finite())
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.1.abs()))
    }

    fn check_ctx(&self, other: &Self) -> Result<(), DaError> {
        if self.ctx == other.ctx {
            Ok(())
        } else {
            Err(DaError::ContextMismatch {
                left: (self.ctx.n_vars(), self.ctx.max_order()),
                right: (other.ctx.n_vars(), other.ctx.max_order()),
            })
        }
    }

    fn merge(&self, other: &Self, sign: f64) -> Self {
        let (a, b) = (&self.terms, &other.terms);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let (ra, ca) = a[i];
            let (rb, cb) = b[j];
            if ra < rb {
                out.push((ra, ca));
                i += 1;
            } else if rb < ra {
                out.push((rb, sign * cb));
                j += 1;
            } else {
                let c = ca + sign * cb;
                if c != 0.0 {
                    out.push((ra, c));
                }
                i += 1;
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend(b[j..].iter().map(|&(r, c)| (r, sign * c)));
        DAScalar { ctx: self.ctx.clone(), terms: out }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, DaError> {
        self.check_ctx(other)?;
        Ok(self.merge(other, 1.0))
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, DaError> {
        self.check_ctx(other)?;
        Ok(self.merge(other, -1.0))
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, DaError> {
        self.check_ctx(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub fn checked_div(&self, other: &Self) -> Result<Self, DaError> {
        self.check_ctx(other)?;
        Ok(self.mul_unchecked(&other.recip()?))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let (a, b) = (&self.terms, &other.terms);
        if a.is_empty() || b.is_empty() {
            return DAScalar::zero(&self.ctx);
        }
        // Constant factor shortcut.
        if b.len() == 1 && b[0].0 == 0 {
            return self.scale(b[0].1);
        }
        if a.len() == 1 && a[0].0 == 0 {
            return other.scale(a[0].1);
        }
        let ctx = &self.ctx;
        let k = ctx.max_order();
        let n = ctx.n_monomials();
        if n <= DENSE_ACCUMULATOR_LIMIT {
            let mut acc = vec![0.0; n];
            let mut touched = false;
            for &(ri, ci) in a {
                let di = ctx.degree(ri);
                for &(rj, cj) in b {
                    if di + ctx.degree(rj) > k {
                        break;
                    }
                    if let Some(r) = ctx.product(ri, rj) {
                        acc[r as usize] += ci * cj;
                        touched = true;
                    }
                }
            }
            if !touched {
                return DAScalar::zero(ctx);
            }
            let terms = acc.into_iter().enumerate().filter(|t| t.1 != 0.0).map(|(r, c)| (r as u32, c)).collect();
            let mut out = DAScalar { ctx: ctx.clone(), terms };
            out.prune();
            out
        } else {
            let mut acc = std::collections::BTreeMap::new();
            for &(ri, ci) in a {
                let di = ctx.degree(ri);
                for &(rj, cj) in b {
                    if di + ctx.degree(rj) > k {
                        break;
                    }
                    if let Some(r) = ctx.product(ri, rj) {
                        *acc.entry(r).or_insert(0.0) += ci * cj;
                    }
                }
            }
            let terms = acc.into_iter().filter(|t| t.1 != 0.0).collect();
            let mut out = DAScalar { ctx: ctx.clone(), terms };
            out.prune();
            out
        }
    }

    /// Drops coefficients smaller than `PRUNE_RELATIVE` times the largest one.
    pub fn prune(&mut self) {
        let threshold = self.max_abs() * PRUNE_RELATIVE;
        self.terms.retain(|t| t.1 != 0.0 && t.1.abs() >= threshold);
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return DAScalar::zero(&self.ctx);
        }
        DAScalar { ctx: self.ctx.clone(), terms: self.terms.iter().map(|&(r, c)| (r, c * s)).collect() }
    }

    pub fn add_scalar(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.add_scalar_assign(s);
        out
    }

    fn add_scalar_assign(&mut self, s: f64) {
        match self.terms.first_mut() {
            Some(t) if t.0 == 0 => {
                t.1 += s;
                if t.1 == 0.0 {
                    self.terms.remove(0);
                }
            }
            _ if s != 0.0 => self.terms.insert(0, (0, s)),
            _ => {}
        }
    }

    /// `self += a * x`. Panics on context mismatch.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        assert!(self.ctx == x.ctx, "axpy across different algebra contexts");
        if a == 0.0 || x.terms.is_empty() {
            return;
        }
        if self.terms.is_empty() {
            *self = x.scale(a);
            return;
        }
        *self = self.merge(x, a);
    }

    /// The nilpotent part `self − constant_part()`.
    pub fn nilpotent(&self) -> Self {
        let mut out = self.clone();
        if matches!(out.terms.first(), Some(&(0, _))) {
            out.terms.remove(0);
        }
        out
    }

    /// Truncated composition `f(ā + p) = Σ f⁽ʲ⁾(ā)/j! pʲ`, evaluated by Horner on `p`.
    pub fn intrinsic(&self, f: Intrinsic) -> Result<Self, DaError> {
        let a0 = self.constant_part();
        let k = self.ctx.max_order();
        let coeffs = f.series(a0, k)?;
        let p = self.nilpotent();
        if p.is_zero() {
            return Ok(DAScalar::constant(&self.ctx, coeffs[0]));
        }
        let mut acc = DAScalar::constant(&self.ctx, coeffs[k]);
        for j in (0..k).rev() {
            acc = acc.mul_unchecked(&p);
            acc.add_scalar_assign(coeffs[j]);
        }
        acc.prune();
        Ok(acc)
    }

    pub fn recip(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Reciprocal)
    }

    pub fn sqrt(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Sqrt)
    }

    pub fn exp(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Exp)
    }

    pub fn ln(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Log)
    }

    pub fn sin(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Sin)
    }

    pub fn cos(&self) -> Result<Self, DaError> {
        self.intrinsic(Intrinsic::Cos)
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut out = DAScalar::constant(&self.ctx, 1.0);
        for _ in 0..n {
            out = out.mul_unchecked(self);
        }
        out
    }

    /// Formal partial derivative with respect to `δ_var`.
    pub fn derivative(&self, var: usize) -> Result<Self, DaError> {
        let n = self.ctx.n_vars();
        if var >= n {
            return Err(DaError::VariableIndex { index: var, n_vars: n });
        }
        let mut scratch = vec![0u8; n];
        let mut terms = Vec::new();
        for &(r, c) in &self.terms {
            let e = self.ctx.exponents(r);
            if e[var] == 0 {
                continue;
            }
            scratch.copy_from_slice(e);
            scratch[var] -= 1;
            let rank = self.ctx.rank_of(&scratch).expect("lower-degree monomial exists");
            terms.push((rank, c * e[var] as f64));
        }
        terms.sort_by_key(|t| t.0);
        Ok(DAScalar { ctx: self.ctx.clone(), terms })
    }

    /// Substitutes `deviation` for the variables and sums the monomials.
    pub fn evaluate(&self, deviation: &[f64]) -> Result<f64, DaError> {
        if deviation.len() != self.ctx.n_vars() {
            return Err(DaError::Dimension { expected: self.ctx.n_vars(), got: deviation.len() });
        }
        let Some(&(last, _)) = self.terms.last() else { return Ok(0.0) };
        let mut values = vec![0.0; last as usize + 1];
        self.ctx.monomial_values(deviation, &mut values);
        Ok(self.terms.iter().map(|&(r, c)| c * values[r as usize]).sum())
    }

    /// Keeps only terms of total degree `<= order`.
    pub fn truncated(&self, order: usize) -> Self {
        let end = self.ctx.degree_start(order + 1) as u32;
        DAScalar { ctx: self.ctx.clone(), terms: self.terms.iter().copied().filter(|t| t.0 < end).collect() }
    }
}

impl fmt::Debug for DAScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DAScalar(n={}, k={}; ", self.ctx.n_vars(), self.ctx.max_order())?;
        fmt::Display::fmt(self, f)?;
        write!(f, ")")
    }
}

impl fmt::Display for DAScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (v, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "·δ{v}")?,
                    _ => write!(f, "·δ{v}^{p}")?,
                }
            }
        }
        Ok(())
    }
}

impl PartialEq for DAScalar {
    fn eq(&self, other: &Self) -> bool {
        self.ctx == other.ctx && self.terms == other.terms
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&DAScalar> for &DAScalar {
            type Output = DAScalar;
            fn $method(self, rhs: &DAScalar) -> DAScalar {
                self.$checked(rhs).expect("operands from different algebra contexts")
            }
        }
        impl $trait<DAScalar> for DAScalar {
            type Output = DAScalar;
            fn $method(self, rhs: DAScalar) -> DAScalar {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&DAScalar> for DAScalar {
            type Output = DAScalar;
            fn $method(self, rhs: &DAScalar) -> DAScalar {
                (&self).$method(rhs)
            }
        }
    };
}

binary_op!(Add, add, checked_add);
binary_op!(Sub, sub, checked_sub);
binary_op!(Mul, mul, checked_mul);

impl Add<f64> for &DAScalar {
    type Output = DAScalar;
    fn add(self, rhs: f64) -> DAScalar {
        self.add_scalar(rhs)
    }
}

impl Add<f64> for DAScalar {
    type Output = DAScalar;
    fn add(mut self, rhs: f64) -> DAScalar {
        self.add_scalar_assign(rhs);
        self
    }
}

impl Sub<f64> for DAScalar {
    type Output = DAScalar;
    fn sub(mut self, rhs: f64) -> DAScalar {
        self.add_scalar_assign(-rhs);
        self
    }
}

impl Mul<f64> for &DAScalar {
    type Output = DAScalar;
    fn mul(self, rhs: f64) -> DAScalar {
        self.scale(rhs)
    }
}

impl Mul<f64> for DAScalar {
    type Output = DAScalar;
    fn mul(self, rhs: f64) -> DAScalar {
        self.scale(rhs)
    }
}

impl Neg for &DAScalar {
    type Output = DAScalar;
    fn neg(self) -> DAScalar {
        self.scale(-1.0)
    }
}

impl Neg for DAScalar {
    type Output = DAScalar;
    fn neg(self) -> DAScalar {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(n: usize, k: usize) -> AlgebraContext {
        AlgebraContext::new(n, k).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn make_variable_at_prior_center() {
        let c = ctx(2, 3);
        let x = DAScalar::variable(&c, -3.5, 0).unwrap();
        assert_eq!(x.constant_part(), -3.5);
        assert_eq!(x.coefficient(&[1, 0]), 1.0);
        assert_eq!(x.coefficient(&[0, 1]), 0.0);
        assert_eq!(x.n_terms(), 2);
        assert_eq!(x.evaluate(&[0.0, 0.0]).unwrap(), -3.5);
        assert_eq!(x.evaluate(&[3.5, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn make_variable_zero_center_and_bad_index() {
        let c = ctx(1, 1);
        let x = DAScalar::variable(&c, 0.0, 0).unwrap();
        assert_eq!(x.n_terms(), 1);
        assert_eq!(x.linear_coefficient(0), 1.0);
        assert!(matches!(DAScalar::variable(&c, 0.0, 1), Err(DaError::VariableIndex { .. })));
    }

    #[test]
    fn binomial_square_and_truncation() {
        let c2 = ctx(1, 2);
        let a = DAScalar::variable(&c2, 1.0, 0).unwrap();
        let sq = &a * &a;
        assert_eq!(sq.coefficient(&[0]), 1.0);
        assert_eq!(sq.coefficient(&[1]), 2.0);
        assert_eq!(sq.coefficient(&[2]), 1.0);

        let c1 = ctx(1, 1);
        let b = DAScalar::variable(&c1, 1.0, 0).unwrap();
        let sq1 = &b * &b;
        assert_eq!(sq1.n_terms(), 2);
        assert_eq!(sq1.coefficient(&[1]), 2.0);
    }

    #[test]
    fn multiply_by_zero() {
        let c = ctx(2, 3);
        let a = DAScalar::variable(&c, 2.0, 1).unwrap();
        assert!((&a * &DAScalar::zero(&c)).is_zero());
    }

    #[test]
    fn context_mismatch_is_an_error() {
        let a = DAScalar::variable(&ctx(2, 3), 1.0, 0).unwrap();
        let b = DAScalar::variable(&ctx(2, 4), 1.0, 0).unwrap();
        assert!(matches!(a.checked_add(&b), Err(DaError::ContextMismatch { .. })));
        assert!(matches!(a.checked_mul(&b), Err(DaError::ContextMismatch { .. })));
    }

    #[test]
    fn cos_first_order() {
        let c = ctx(1, 1);
        let alpha = 0.7;
        let b = DAScalar::variable(&c, alpha, 0).unwrap().cos().unwrap();
        assert!(close(b.constant_part(), alpha.cos(), 1e-15));
        assert!(close(b.coefficient(&[1]), -alpha.sin(), 1e-15));
    }

    #[test]
    fn cos_second_order_evaluation() {
        let c = ctx(1, 2);
        let b = DAScalar::variable(&c, 0.0, 0).unwrap().cos().unwrap();
        assert!(close(b.evaluate(&[0.1]).unwrap(), 0.995, 1e-15));
    }

    #[test]
    fn sqrt_and_reciprocal_series() {
        let c = ctx(1, 2);
        let s = DAScalar::variable(&c, 1.0, 0).unwrap().sqrt().unwrap();
        assert!(close(s.coefficient(&[0]), 1.0, 1e-15));
        assert!(close(s.coefficient(&[1]), 0.5, 1e-15));
        assert!(close(s.coefficient(&[2]), -0.125, 1e-15));
        let r = DAScalar::variable(&c, 2.0, 0).unwrap().recip().unwrap();
        assert!(close(r.coefficient(&[0]), 0.5, 1e-15));
        assert!(close(r.coefficient(&[1]), -0.25, 1e-15));
        assert!(close(r.coefficient(&[2]), 0.125, 1e-15));
    }

    #[test]
    fn exp_and_log_are_inverse() {
        let c = ctx(2, 6);
        let x = DAScalar::variable(&c, 0.3, 0).unwrap() + DAScalar::variable(&c, 0.0, 1).unwrap().scale(0.5);
        let back = x.exp().unwrap().ln().unwrap();
        for ((e1, c1), (e2, c2)) in back.terms().zip(x.terms()) {
            assert_eq!(e1, e2);
            assert!(close(c1, c2, 1e-13));
        }
    }

    #[test]
    fn sin_squared_plus_cos_squared() {
        let c = ctx(2, 5);
        let x = DAScalar::variable(&c, 1.1, 0).unwrap() * DAScalar::variable(&c, -0.4, 1).unwrap();
        let s = x.sin().unwrap();
        let co = x.cos().unwrap();
        let one = &s * &s + &co * &co;
        assert!(close(one.constant_part(), 1.0, 1e-14));
        assert!(one.terms().skip(1).all(|(_, v)| v.abs() < 1e-13));
    }

    #[test]
    fn domain_violations() {
        let c = ctx(1, 3);
        let zero = DAScalar::variable(&c, 0.0, 0).unwrap();
        let neg = DAScalar::variable(&c, -1.0, 0).unwrap();
        assert!(matches!(zero.sqrt(), Err(DaError::Domain { function: "sqrt", .. })));
        assert!(matches!(neg.ln(), Err(DaError::Domain { function: "log", .. })));
        assert!(matches!(zero.recip(), Err(DaError::Domain { function: "reciprocal", .. })));
    }

    #[test]
    fn derivative_examples() {
        let c = ctx(2, 2);
        let a = DAScalar::variable(&c, 1.0, 0).unwrap();
        let p = &a * &a; // 1 + 2δ₀ + δ₀²
        let d = p.derivative(0).unwrap();
        assert_eq!(d.coefficient(&[0, 0]), 2.0);
        assert_eq!(d.coefficient(&[1, 0]), 2.0);
        assert_eq!(d.n_terms(), 2);
        assert!(DAScalar::constant(&c, 4.0).derivative(1).unwrap().is_zero());
        assert!(DAScalar::variable(&c, 0.0, 0).unwrap().derivative(1).unwrap().is_zero());
        assert!(p.derivative(2).is_err());
    }

    #[test]
    fn evaluate_length_mismatch() {
        let c = ctx(2, 2);
        assert!(DAScalar::variable(&c, 0.0, 0).unwrap().evaluate(&[1.0]).is_err());
    }

    #[test]
    fn pruning_drops_negligible_terms() {
        let c = ctx(2, 2);
        let mut a = DAScalar::from_terms(&c, [(&[0u8, 0][..], 1.0), (&[1, 0][..], 1e-20)]).unwrap();
        a.prune();
        assert_eq!(a.n_terms(), 1);
    }

    #[test]
    fn from_terms_rejects_high_degree() {
        let c = ctx(2, 2);
        assert!(matches!(DAScalar::from_terms(&c, [(&[2u8, 1][..], 1.0)]), Err(DaError::OrderExceeded { .. })));
    }
}
