use std::fmt::Write as _;

use super::{AlgebraContext, DAScalar, DaError};

/// An ordered list of polynomials in one context, together with the point
/// they were expanded around.
///
/// A `DAVector` is how maps are represented: the state transition map, the
/// flow update map and their composition all map a deviation `δ` to
/// `components(δ)`, with `center` naming the expansion point of `δ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DAVector {
    components: Vec<DAScalar>,
    center: Vec<f64>,
    label: String,
}

impl DAVector {
    pub fn new(components: Vec<DAScalar>, center: Vec<f64>) -> Result<Self, DaError> {
        let Some(first) = components.first() else { return Err(DaError::Empty) };
        let ctx = first.context().clone();
        for c in &components[1..] {
            if *c.context() != ctx {
                return Err(DaError::ContextMismatch {
                    left: (ctx.n_vars(), ctx.max_order()),
                    right: (c.context().n_vars(), c.context().max_order()),
                });
            }
        }
        if center.len() > ctx.n_vars() {
            return Err(DaError::Dimension { expected: ctx.n_vars(), got: center.len() });
        }
        Ok(DAVector { components, center, label: String::new() })
    }

    /// The map `δ ↦ center + δ` (the first `center.len()` variables).
    pub fn identity(ctx: &AlgebraContext, center: &[f64]) -> Result<Self, DaError> {
        if center.is_empty() {
            return Err(DaError::Empty);
        }
        let components = center
            .iter()
            .enumerate()
            .map(|(i, &c)| DAScalar::variable(ctx, c, i))
            .collect::<Result<Vec<_>, _>>()?;
        DAVector::new(components, center.to_vec())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn context(&self) -> &AlgebraContext {
        self.components[0].context()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[DAScalar] {
        &self.components
    }

    pub fn into_components(self) -> Vec<DAScalar> {
        self.components
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn constant_part(&self) -> Vec<f64> {
        self.components.iter().map(DAScalar::constant_part).collect()
    }

    pub fn evaluate(&self, deviation: &[f64]) -> Result<Vec<f64>, DaError> {
        let ctx = self.context();
        if deviation.len() != ctx.n_vars() {
            return Err(DaError::Dimension { expected: ctx.n_vars(), got: deviation.len() });
        }
        let max_rank = self.components.iter().filter_map(|c| c.raw_terms().last()).map(|t| t.0).max();
        let Some(max_rank) = max_rank else { return Ok(vec![0.0; self.len()]) };
        let mut values = vec![0.0; max_rank as usize + 1];
        ctx.monomial_values(deviation, &mut values);
        Ok(self
            .components
            .iter()
            .map(|c| c.raw_terms().iter().map(|&(r, v)| v * values[r as usize]).sum())
            .collect())
    }

    /// Dense evaluator for repeated evaluation over many deviations.
    pub fn evaluator(&self) -> MapEvaluator {
        MapEvaluator::new(self)
    }

    /// Truncated polynomial of `self ∘ (inner − self.center)`.
    ///
    /// Variable `j` of `self` is replaced by `inner[j] − center[j]`. When
    /// `inner` has fewer components than `self` has variables, the remaining
    /// variables pass through as the identically-indexed variables of
    /// `inner`'s context. The result lives in `inner`'s context and keeps
    /// `inner`'s center.
    pub fn compose(&self, inner: &DAVector) -> Result<DAVector, DaError> {
        let outer_ctx = self.context();
        let inner_ctx = inner.context();
        let n_outer = outer_ctx.n_vars();
        if inner.len() > n_outer || n_outer > inner_ctx.n_vars().max(inner.len()) {
            return Err(DaError::Dimension { expected: n_outer, got: inner.len() });
        }

        let mut subs = Vec::with_capacity(n_outer);
        for j in 0..n_outer {
            let shift = self.center.get(j).copied().unwrap_or(0.0);
            if j < inner.len() {
                subs.push(inner.components[j].add_scalar(-shift));
            } else {
                subs.push(DAScalar::variable(inner_ctx, -shift, j)?);
            }
        }
        // With zero constant parts every monomial of degree > k vanishes.
        let nilpotent = subs.iter().all(|s| s.constant_part() == 0.0);

        let max_rank = self.components.iter().filter_map(|c| c.raw_terms().last()).map(|t| t.0).max();
        let mut out = vec![DAScalar::zero(inner_ctx); self.len()];
        let Some(max_rank) = max_rank else {
            return Ok(DAVector { components: out, center: inner.center.clone(), label: self.label.clone() });
        };
        let limit = if nilpotent {
            (max_rank as usize + 1).min(outer_ctx.degree_start(inner_ctx.max_order() + 1))
        } else {
            max_rank as usize + 1
        };

        let mut monomials: Vec<DAScalar> = Vec::with_capacity(limit);
        monomials.push(DAScalar::constant(inner_ctx, 1.0));
        for r in 1..limit as u32 {
            let (parent, var) = outer_ctx.parent(r);
            let value = monomials[parent as usize].checked_mul(&subs[var])?;
            monomials.push(value);
        }
        for (dst, src) in out.iter_mut().zip(&self.components) {
            for &(r, c) in src.raw_terms() {
                if (r as usize) < limit {
                    dst.axpy(c, &monomials[r as usize]);
                }
            }
            dst.prune();
        }
        Ok(DAVector { components: out, center: inner.center.clone(), label: self.label.clone() })
    }

    /// Partial derivative of every component with respect to `δ_var`.
    pub fn derivative(&self, var: usize) -> Result<DAVector, DaError> {
        let components = self.components.iter().map(|c| c.derivative(var)).collect::<Result<Vec<_>, _>>()?;
        Ok(DAVector { components, center: self.center.clone(), label: self.label.clone() })
    }

    /// First-order coefficients as a row-major `len × n_vars` matrix.
    pub fn jacobian(&self) -> Vec<f64> {
        let n = self.context().n_vars();
        let mut out = vec![0.0; self.len() * n];
        for (i, c) in self.components.iter().enumerate() {
            for j in 0..n {
                out[i * n + j] = c.linear_coefficient(j);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(DAScalar::is_finite)
    }

    /// Text dump, one line per stored monomial:
    /// `component_index, coefficient, e₀ e₁ … e_{n−1}`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (i, c) in self.components.iter().enumerate() {
            for (e, v) in c.terms() {
                let exps: Vec<String> = e.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(s, "{i}, {v:.16e}, {}", exps.join(" "));
            }
        }
        s
    }

    /// Parses the output of [`DAVector::dump`]. Components absent from the
    /// text are zero; `len` fixes the number of components.
    pub fn from_dump(ctx: &AlgebraContext, text: &str, len: usize, center: Vec<f64>) -> Result<Self, DaError> {
        let mut per_component: Vec<Vec<(Vec<u8>, f64)>> = vec![Vec::new(); len];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = || DaError::Parse { line: lineno + 1, content: line.to_string() };
            let mut fields = line.splitn(3, ',');
            let idx: usize = fields.next().and_then(|f| f.trim().parse().ok()).ok_or_else(bad)?;
            let coeff: f64 = fields.next().and_then(|f| f.trim().parse().ok()).ok_or_else(bad)?;
            let exps = fields
                .next()
                .ok_or_else(bad)?
                .split_whitespace()
                .map(|e| e.parse::<u8>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad())?;
            if idx >= len {
                return Err(bad());
            }
            per_component[idx].push((exps, coeff));
        }
        let components = per_component
            .iter()
            .map(|terms| DAScalar::from_terms(ctx, terms.iter().map(|(e, c)| (e.as_slice(), *c))))
            .collect::<Result<Vec<_>, _>>()?;
        if components.is_empty() {
            return Err(DaError::Empty);
        }
        DAVector::new(components, center)
    }
}

impl std::ops::Index<usize> for DAVector {
    type Output = DAScalar;
    fn index(&self, i: usize) -> &DAScalar {
        &self.components[i]
    }
}

/// A map flattened into a dense `components × monomials` coefficient table.
#[derive(Clone, Debug)]
pub struct MapEvaluator {
    ctx: AlgebraContext,
    n_out: usize,
    n_mono: usize,
    coeffs: Vec<f64>,
}

impl MapEvaluator {
    fn new(map: &DAVector) -> Self {
        let ctx = map.context().clone();
        let n_mono = map
            .components
            .iter()
            .filter_map(|c| c.raw_terms().last())
            .map(|t| t.0 as usize + 1)
            .max()
            .unwrap_or(1);
        let n_out = map.len();
        let mut coeffs = vec![0.0; n_out * n_mono];
        for (i, c) in map.components.iter().enumerate() {
            for &(r, v) in c.raw_terms() {
                coeffs[i * n_mono + r as usize] = v;
            }
        }
        MapEvaluator { ctx, n_out, n_mono, coeffs }
    }

    pub fn n_vars(&self) -> usize {
        self.ctx.n_vars()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    /// Evaluates into `out` using `scratch` (resized as needed) for monomial values.
    pub fn evaluate_into(&self, deviation: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), DaError> {
        if deviation.len() != self.ctx.n_vars() {
            return Err(DaError::Dimension { expected: self.ctx.n_vars(), got: deviation.len() });
        }
        if out.len() != self.n_out {
            return Err(DaError::Dimension { expected: self.n_out, got: out.len() });
        }
        scratch.resize(self.n_mono, 0.0);
        self.ctx.monomial_values(deviation, scratch);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.coeffs[i * self.n_mono..(i + 1) * self.n_mono];
            *o = row.iter().zip(scratch.iter()).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    pub fn evaluate(&self, deviation: &[f64]) -> Result<Vec<f64>, DaError> {
        let mut out = vec![0.0; self.n_out];
        let mut scratch = Vec::new();
        self.evaluate_into(deviation, &mut scratch, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(n: usize, k: usize) -> AlgebraContext {
        AlgebraContext::new(n, k).unwrap()
    }

    #[test]
    fn compose_with_identity_returns_map() {
        let c = ctx(2, 3);
        let center = [0.4, -1.2];
        let x = DAVector::identity(&c, &center).unwrap();
        let m0 = (&x[0] * &x[1]).sin().unwrap();
        let m1 = x[0].exp().unwrap() + x[1].clone();
        let m = DAVector::new(vec![m0, m1], center.to_vec()).unwrap();
        let id = DAVector::identity(&c, &center).unwrap();
        let back = m.compose(&id).unwrap();
        for (a, b) in back.components().iter().zip(m.components()) {
            for ((ea, ca), (eb, cb)) in a.terms().zip(b.terms()) {
                assert_eq!(ea, eb);
                assert!((ca - cb).abs() < 1e-15);
            }
            assert_eq!(a.n_terms(), b.n_terms());
        }
    }

    #[test]
    fn compose_substitution() {
        let c = ctx(1, 3);
        let cval = 2.5;
        let d = DAScalar::variable(&c, 0.0, 0).unwrap();
        let outer = DAVector::new(vec![&d * &d], vec![cval]).unwrap();
        let inner = DAVector::new(vec![d.scale(2.0).add_scalar(cval)], vec![cval]).unwrap();
        let r = outer.compose(&inner).unwrap();
        assert_eq!(r[0].n_terms(), 1);
        assert!((r[0].coefficient(&[2]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn compose_dimension_mismatch() {
        let c = ctx(2, 2);
        let outer = DAVector::identity(&c, &[0.0]).unwrap();
        let inner = DAVector::identity(&c, &[0.0, 1.0]).unwrap();
        // outer has 2 variables, inner 2 components: fine
        assert!(outer.compose(&inner).is_ok());
        let c3 = ctx(3, 2);
        let inner3 = DAVector::identity(&c3, &[0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(outer.compose(&inner3), Err(DaError::Dimension { .. })));
    }

    #[test]
    fn compose_passes_parameter_variables_through() {
        // outer in (x, p) with p a parameter slot; inner maps only x
        let c = ctx(2, 2);
        let x = DAScalar::variable(&c, 0.0, 0).unwrap();
        let p = DAScalar::variable(&c, 0.0, 1).unwrap();
        let outer = DAVector::new(vec![&x * &p + x.clone()], vec![1.0]).unwrap();
        let inner = DAVector::new(vec![x.scale(3.0).add_scalar(1.0)], vec![0.0]).unwrap();
        let r = outer.compose(&inner).unwrap();
        // (3δx)(δp) + 3δx
        assert!((r[0].coefficient(&[1, 1]) - 3.0).abs() < 1e-15);
        assert!((r[0].coefficient(&[1, 0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn evaluator_matches_direct_evaluation() {
        let c = ctx(3, 4);
        let x = DAVector::identity(&c, &[0.1, 0.2, 0.3]).unwrap();
        let m = DAVector::new(
            vec![(&x[0] * &x[1]).cos().unwrap(), x[2].exp().unwrap() * x[0].clone(), x[1].clone()],
            vec![0.1, 0.2, 0.3],
        )
        .unwrap();
        let ev = m.evaluator();
        for dev in [[0.0, 0.0, 0.0], [0.1, -0.2, 0.05], [-0.3, 0.2, 0.1]] {
            let a = m.evaluate(&dev).unwrap();
            let b = ev.evaluate(&dev).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn dump_and_parse() {
        let c = ctx(2, 2);
        let x = DAVector::identity(&c, &[1.0, -2.0]).unwrap();
        let m = DAVector::new(vec![&x[0] * &x[1], x[1].clone()], vec![1.0, -2.0]).unwrap();
        let text = m.dump();
        assert_eq!(text.lines().next().unwrap(), "0, -2.0000000000000000e0, 0 0");
        let back = DAVector::from_dump(&c, &text, 2, vec![1.0, -2.0]).unwrap();
        assert_eq!(back, m);
        assert!(DAVector::from_dump(&c, "0, abc, 0 0", 1, vec![]).is_err());
        assert!(DAVector::from_dump(&c, "3, 1.0, 0 0", 1, vec![]).is_err());
    }
}
