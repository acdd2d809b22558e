use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::DaError;

/// Hard cap on the number of monomials a context may index.
const MAX_MONOMIALS: usize = 4_000_000;
/// Contexts with at most this many monomials get a precomputed product table.
const TABLE_LIMIT: usize = 1024;
const NONE: u32 = u32::MAX;

/// Number of variables and truncation order shared by a family of polynomials.
///
/// Monomials are ranked in graded lexicographic order: all monomials of degree
/// `d` come before those of degree `d + 1`, and within a degree the exponent
/// tuples are sorted lexicographically descending (`δ₀² > δ₀δ₁ > δ₁²`).
/// Rank 0 is always the constant monomial and ranks `1..=n_vars` are the
/// first-order monomials `δ₀ … δ_{n-1}`.
///
/// Cloning is cheap; the tables are shared. Two contexts compare equal when
/// they have the same `(n_vars, max_order)`.
#[derive(Clone)]
pub struct AlgebraContext {
    inner: Arc<Tables>,
}

struct Tables {
    n_vars: usize,
    max_order: usize,
    exponents: Vec<u8>,
    degrees: Vec<u8>,
    degree_starts: Vec<usize>,
    parents: Vec<(u32, u16)>,
    lookup: HashMap<Box<[u8]>, u32>,
    products: Option<Vec<u32>>,
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

fn push_degree(n: usize, pos: usize, remaining: usize, cur: &mut [u8], out: &mut Vec<u8>) {
    if pos + 1 == n {
        cur[pos] = remaining as u8;
        out.extend_from_slice(cur);
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e as u8;
        push_degree(n, pos + 1, remaining - e, cur, out);
    }
}

impl AlgebraContext {
    pub fn new(n_vars: usize, max_order: usize) -> Result<Self, DaError> {
        if n_vars == 0 || max_order == 0 {
            return Err(DaError::InvalidContext { n_vars, max_order, reason: "n_vars and max_order must be at least 1" });
        }
        if max_order > u8::MAX as usize || n_vars > u16::MAX as usize {
            return Err(DaError::InvalidContext { n_vars, max_order, reason: "dimensions exceed exponent storage" });
        }
        let count = binomial(n_vars + max_order, max_order).filter(|&c| c <= MAX_MONOMIALS).ok_or(
            DaError::InvalidContext { n_vars, max_order, reason: "too many monomials" },
        )?;

        let mut exponents = Vec::with_capacity(count * n_vars);
        let mut degree_starts = Vec::with_capacity(max_order + 2);
        let mut cur = vec![0u8; n_vars];
        for d in 0..=max_order {
            degree_starts.push(exponents.len() / n_vars);
            push_degree(n_vars, 0, d, &mut cur, &mut exponents);
        }
        degree_starts.push(count);
        debug_assert_eq!(exponents.len(), count * n_vars);

        let mut degrees = Vec::with_capacity(count);
        for d in 0..=max_order {
            degrees.extend(std::iter::repeat(d as u8).take(degree_starts[d + 1] - degree_starts[d]));
        }

        let mut lookup = HashMap::with_capacity(count);
        for r in 0..count {
            lookup.insert(exponents[r * n_vars..(r + 1) * n_vars].to_vec().into_boxed_slice(), r as u32);
        }

        // Each monomial of positive degree is its parent times the first variable it contains.
        let mut parents = vec![(0u32, 0u16); count];
        let mut scratch = vec![0u8; n_vars];
        for (r, parent) in parents.iter_mut().enumerate().skip(1) {
            scratch.copy_from_slice(&exponents[r * n_vars..(r + 1) * n_vars]);
            let var = scratch.iter().position(|&e| e > 0).expect("nonconstant monomial");
            scratch[var] -= 1;
            *parent = (lookup[&scratch[..]], var as u16);
        }

        let mut tables = Tables { n_vars, max_order, exponents, degrees, degree_starts, parents, lookup, products: None };
        if count <= TABLE_LIMIT {
            let mut products = vec![NONE; count * count];
            for i in 0..count {
                for j in 0..count {
                    products[i * count + j] = tables.product_slow(i as u32, j as u32, &mut scratch);
                }
            }
            tables.products = Some(products);
        }
        Ok(AlgebraContext { inner: Arc::new(tables) })
    }

    pub fn n_vars(&self) -> usize {
        self.inner.n_vars
    }

    pub fn max_order(&self) -> usize {
        self.inner.max_order
    }

    /// Number of monomials of total degree `<= max_order`.
    pub fn n_monomials(&self) -> usize {
        self.inner.degrees.len()
    }

    pub fn exponents(&self, rank: u32) -> &[u8] {
        let n = self.inner.n_vars;
        &self.inner.exponents[rank as usize * n..(rank as usize + 1) * n]
    }

    pub fn degree(&self, rank: u32) -> usize {
        self.inner.degrees[rank as usize] as usize
    }

    /// First rank of degree `d` (or `n_monomials()` for `d > max_order`).
    pub fn degree_start(&self, d: usize) -> usize {
        self.inner.degree_starts[d.min(self.inner.max_order + 1)]
    }

    pub fn rank_of(&self, exponents: &[u8]) -> Option<u32> {
        self.inner.lookup.get(exponents).copied()
    }

    /// Rank of the product of two monomials, or `None` when it exceeds the truncation order.
    #[inline]
    pub(crate) fn product(&self, a: u32, b: u32) -> Option<u32> {
        let t = &*self.inner;
        let r = match &t.products {
            Some(p) => p[a as usize * t.degrees.len() + b as usize],
            None => {
                let mut scratch = vec![0u8; t.n_vars];
                t.product_slow(a, b, &mut scratch)
            }
        };
        (r != NONE).then_some(r)
    }

    #[inline]
    pub(crate) fn parent(&self, rank: u32) -> (u32, usize) {
        let (p, v) = self.inner.parents[rank as usize];
        (p, v as usize)
    }

    /// Fills `values[r]` with the value of monomial `r` at `deviation` for all `r < values.len()`.
    pub(crate) fn monomial_values(&self, deviation: &[f64], values: &mut [f64]) {
        if values.is_empty() {
            return;
        }
        values[0] = 1.0;
        let parents = &self.inner.parents;
        for r in 1..values.len() {
            let (p, v) = parents[r];
            values[r] = values[p as usize] * deviation[v as usize];
        }
    }

    fn ptr_eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }
}

impl Tables {
    fn product_slow(&self, a: u32, b: u32, scratch: &mut [u8]) -> u32 {
        let n = self.n_vars;
        if self.degrees[a as usize] as usize + self.degrees[b as usize] as usize > self.max_order {
            return NONE;
        }
        let ea = &self.exponents[a as usize * n..(a as usize + 1) * n];
        let eb = &self.exponents[b as usize * n..(b as usize + 1) * n];
        for i in 0..n {
            scratch[i] = ea[i] + eb[i];
        }
        self.lookup[&scratch[..]]
    }
}

impl PartialEq for AlgebraContext {
    fn eq(&self, other: &Self) -> bool {
        self.ptr_eq(other) || (self.n_vars() == other.n_vars() && self.max_order() == other.max_order())
    }
}

impl Eq for AlgebraContext {}

impl fmt::Debug for AlgebraContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlgebraContext")
            .field("n_vars", &self.n_vars())
            .field("max_order", &self.max_order())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_binomial() {
        for (n, k) in [(1, 1), (2, 3), (3, 4), (10, 2), (10, 3)] {
            let ctx = AlgebraContext::new(n, k).unwrap();
            assert_eq!(ctx.n_monomials(), binomial(n + k, k).unwrap());
        }
    }

    #[test]
    fn graded_lex_order() {
        let ctx = AlgebraContext::new(2, 2).unwrap();
        let listed: Vec<Vec<u8>> = (0..ctx.n_monomials() as u32).map(|r| ctx.exponents(r).to_vec()).collect();
        assert_eq!(listed, vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]);
        for v in 0..2 {
            let mut e = vec![0u8; 2];
            e[v] = 1;
            assert_eq!(ctx.rank_of(&e), Some(1 + v as u32));
        }
    }

    #[test]
    fn products_truncate() {
        let ctx = AlgebraContext::new(2, 2).unwrap();
        // δ₀ · δ₁ = δ₀δ₁ (rank 4); δ₀² · δ₀ exceeds order 2
        assert_eq!(ctx.product(1, 2), Some(4));
        assert_eq!(ctx.product(3, 1), None);
        assert_eq!(ctx.product(0, 5), Some(5));
    }

    #[test]
    fn rejects_degenerate() {
        assert!(AlgebraContext::new(0, 2).is_err());
        assert!(AlgebraContext::new(2, 0).is_err());
        assert!(AlgebraContext::new(40, 40).is_err());
    }

    #[test]
    fn large_context_without_table_agrees() {
        // 2 vars, order 44 -> 1035 monomials, above the table limit
        let ctx = AlgebraContext::new(2, 44).unwrap();
        assert!(ctx.inner.products.is_none());
        let a = ctx.rank_of(&[3, 5]).unwrap();
        let b = ctx.rank_of(&[1, 2]).unwrap();
        assert_eq!(ctx.product(a, b), ctx.rank_of(&[4, 7]));
        let big = ctx.rank_of(&[42, 0]).unwrap();
        assert_eq!(ctx.product(big, b), None);
    }
}
