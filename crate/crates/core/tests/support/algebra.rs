//! Randomized algebra cases shared by the property tests and the acceptance run.
#![allow(dead_code)]

use daflow::da::{AlgebraContext, DAScalar, DAVector, Intrinsic};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Sparse polynomial as `(monomial rank, coefficient)` pairs.
pub type Terms = Vec<(usize, f64)>;

pub fn poly(ctx: &AlgebraContext, terms: &Terms) -> DAScalar {
    let m = ctx.n_monomials();
    DAScalar::from_terms(ctx, terms.iter().map(|&(r, c)| (ctx.exponents((r % m) as u32), c))).unwrap()
}

/// Polynomial with the same terms in another context of the same dimension.
pub fn lift(ctx: &AlgebraContext, a: &DAScalar) -> DAScalar {
    DAScalar::from_terms(ctx, a.terms()).unwrap()
}

/// Exact coefficientwise equality (zeros ignored).
pub fn same(a: &DAScalar, b: &DAScalar) -> bool {
    (a - b).terms().all(|(_, c)| c == 0.0)
}

fn int_terms(max_terms: usize) -> impl Strategy<Value = Terms> + Clone {
    prop::collection::vec((0usize..10_000, (-3i32..=3).prop_map(f64::from)), 0..=max_terms)
}

fn real_terms(max_terms: usize) -> impl Strategy<Value = Terms> + Clone {
    prop::collection::vec((0usize..10_000, -1.0f64..1.0), 1..=max_terms)
}

/// `(n_vars, order)`.
pub fn dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=3, 1usize..=5)
}

#[derive(Debug, Clone)]
pub struct RingCase {
    pub n: usize,
    pub k: usize,
    pub a: Terms,
    pub b: Terms,
    pub c: Terms,
}

/// Integer coefficients keep every product exact in f64.
pub fn ring_case() -> impl Strategy<Value = RingCase> {
    dims().prop_flat_map(|(n, k)| {
        (int_terms(6), int_terms(6), int_terms(6)).prop_map(move |(a, b, c)| RingCase { n, k, a, b, c })
    })
}

pub fn check_ring(case: &RingCase) -> Result<(), TestCaseError> {
    let ctx = AlgebraContext::new(case.n, case.k).unwrap();
    let (a, b, c) = (poly(&ctx, &case.a), poly(&ctx, &case.b), poly(&ctx, &case.c));
    prop_assert!(same(&(&a + &b), &(&b + &a)));
    prop_assert!(same(&(&a * &b), &(&b * &a)));
    prop_assert!(same(&(&(&a + &b) + &c), &(&a + &(&b + &c))));
    prop_assert!(same(&(&(&a * &b) * &c), &(&a * &(&b * &c))));
    prop_assert!(same(&(&a * &(&b + &c)), &(&(&a * &b) + &(&a * &c))));
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DecayCase {
    pub n: usize,
    pub k: usize,
    pub a: Terms,
    pub b: Terms,
    pub direction: Vec<f64>,
}

pub fn decay_case() -> impl Strategy<Value = DecayCase> {
    dims().prop_flat_map(|(n, k)| {
        (real_terms(8), real_terms(8), prop::collection::vec(-1.0f64..1.0, n))
            .prop_map(move |(a, b, direction)| DecayCase { n, k, a, b, direction })
    })
}

/// `eval(ab) − eval(a)·eval(b)` consists of degree > k terms only: it is
/// exact for low total degree and bounded by `t^{k+1}·Σ|c|` along `t·d`.
pub fn check_homomorphism(case: &DecayCase) -> Result<(), TestCaseError> {
    let ctx = AlgebraContext::new(case.n, case.k).unwrap();
    let (a, b) = (poly(&ctx, &case.a), poly(&ctx, &case.b));
    let ab = &a * &b;

    // the untruncated product lives in order 2k
    let wide = AlgebraContext::new(case.n, 2 * case.k).unwrap();
    let full = &lift(&wide, &a) * &lift(&wide, &b);
    let dropped = &full - &lift(&wide, &ab);
    let scale = full.max_abs().max(1.0);
    for (e, c) in dropped.terms() {
        let deg: usize = e.iter().map(|&x| x as usize).sum();
        prop_assert!(deg > case.k || c.abs() <= 1e-13 * scale, "degree {deg} residual {c}");
    }
    let bound: f64 = dropped.terms().map(|(_, c)| c.abs()).sum();

    let exact = a.degree() + b.degree() <= case.k;
    for t in [0.2, 0.1, 0.05, 0.025] {
        let d: Vec<f64> = case.direction.iter().map(|v| t * v).collect();
        let err = (ab.evaluate(&d).unwrap() - a.evaluate(&d).unwrap() * b.evaluate(&d).unwrap()).abs();
        let tol = 1e-13 * scale;
        if exact {
            prop_assert!(err <= tol, "exact product off by {err}");
        }
        prop_assert!(err <= t.powi(case.k as i32 + 1) * bound + tol, "t {t}: {err} above bound {bound}");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IntrinsicCase {
    pub n: usize,
    pub k: usize,
    pub f: Intrinsic,
    pub center: f64,
    pub slopes: Vec<f64>,
}

fn intrinsic() -> impl Strategy<Value = Intrinsic> {
    prop_oneof![
        Just(Intrinsic::Reciprocal),
        Just(Intrinsic::Sqrt),
        Just(Intrinsic::Exp),
        Just(Intrinsic::Log),
        Just(Intrinsic::Sin),
        Just(Intrinsic::Cos),
    ]
}

pub fn intrinsic_case() -> impl Strategy<Value = IntrinsicCase> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(n, k)| {
        // centers away from zeros of the (k+1)-th derivative of sin and cos
        (intrinsic(), 0.3f64..1.2, prop::collection::vec(0.5f64..1.0, n))
            .prop_map(move |(f, center, slopes)| IntrinsicCase { n, k, f, center, slopes })
    })
}

fn real(f: Intrinsic, x: f64) -> f64 {
    match f {
        Intrinsic::Reciprocal => 1.0 / x,
        Intrinsic::Sqrt => x.sqrt(),
        Intrinsic::Exp => x.exp(),
        Intrinsic::Log => x.ln(),
        Intrinsic::Sin => x.sin(),
        Intrinsic::Cos => x.cos(),
    }
}

/// Halving the deviation shrinks the intrinsic's truncation error by about `2^{k+1}`.
pub fn check_intrinsic(case: &IntrinsicCase) -> Result<(), TestCaseError> {
    let ctx = AlgebraContext::new(case.n, case.k).unwrap();
    let mut a = DAScalar::constant(&ctx, case.center);
    for (i, &s) in case.slopes.iter().enumerate() {
        a = &a + &DAScalar::variable(&ctx, 0.0, i).unwrap().scale(s);
    }
    let fa = a.intrinsic(case.f).unwrap();
    let err = |t: f64| {
        let d = vec![t; case.n];
        (fa.evaluate(&d).unwrap() - real(case.f, a.evaluate(&d).unwrap())).abs()
    };
    // the deviation along d is t·Σ slopes, kept below 0.1
    let t0 = 0.1 / case.slopes.iter().sum::<f64>();
    let (e1, e2) = (err(t0), err(t0 / 2.0));
    let ratio = e1 / e2;
    let expected = 2f64.powi(case.k as i32 + 1);
    prop_assert!(
        e1 < 1e-14 || (ratio > 0.7 * expected && ratio < 1.5 * expected),
        "{:?} order {}: ratio {ratio} expected {expected}",
        case.f,
        case.k
    );
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ComposeCase {
    pub n: usize,
    pub k: usize,
    pub centers: [Vec<i32>; 3],
    pub maps: [Vec<Terms>; 3],
}

pub fn compose_case() -> impl Strategy<Value = ComposeCase> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(n, k)| {
        let centers = prop::collection::vec(-2i32..=2, n);
        let map = prop::collection::vec(int_terms(4), n);
        ((centers.clone(), centers.clone(), centers), (map.clone(), map.clone(), map)).prop_map(
            move |((ca, cb, cc), (ma, mb, mc))| ComposeCase { n, k, centers: [ca, cb, cc], maps: [ma, mb, mc] },
        )
    })
}

/// Map number `i` of a chain where map `i+1` expands around map `i`'s center,
/// i.e. its constant part equals that center.
fn chain_map(ctx: &AlgebraContext, case: &ComposeCase, i: usize) -> DAVector {
    let center: Vec<f64> = case.centers[i].iter().map(|&c| f64::from(c)).collect();
    let comps = case.maps[i]
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let p = poly(ctx, t);
            let constant = if i == 0 { p.constant_part() } else { f64::from(case.centers[i - 1][j]) };
            p.add_scalar(constant - p.constant_part())
        })
        .collect();
    DAVector::new(comps, center).unwrap()
}

pub fn check_compose(case: &ComposeCase) -> Result<(), TestCaseError> {
    let ctx = AlgebraContext::new(case.n, case.k).unwrap();
    let (a, b, c) = (chain_map(&ctx, case, 0), chain_map(&ctx, case, 1), chain_map(&ctx, case, 2));
    let left = a.compose(&b.compose(&c).unwrap()).unwrap();
    let right = a.compose(&b).unwrap().compose(&c).unwrap();
    prop_assert_eq!(left.center(), right.center());
    for (l, r) in left.components().iter().zip(right.components()) {
        prop_assert!(same(l, r), "{l} vs {r}");
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DerivativeCase {
    pub n: usize,
    pub k: usize,
    pub a: Terms,
    pub i: usize,
    pub j: usize,
}

pub fn derivative_case() -> impl Strategy<Value = DerivativeCase> {
    dims().prop_flat_map(|(n, k)| {
        (int_terms(10), 0..n, 0..n).prop_map(move |(a, i, j)| DerivativeCase { n, k, a, i, j })
    })
}

pub fn check_derivative(case: &DerivativeCase) -> Result<(), TestCaseError> {
    let ctx = AlgebraContext::new(case.n, case.k).unwrap();
    let a = poly(&ctx, &case.a);
    let ij = a.derivative(case.i).unwrap().derivative(case.j).unwrap();
    let ji = a.derivative(case.j).unwrap().derivative(case.i).unwrap();
    prop_assert!(same(&ij, &ji));
    prop_assert!(ij.is_zero() || ij.degree() + 2 <= case.k);
    Ok(())
}
