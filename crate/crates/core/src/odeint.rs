//! Explicit Runge-Kutta integration over any [`Algebra`].
//!
//! The same code advances real states, first-order jets and full polynomial
//! states, which is how prediction maps come out of a plain propagator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::da::{Algebra, DaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed,
    Rk78Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub method: Method,
    /// Step for `Rk4Fixed`; initial trial step for `Rk78Adaptive`.
    pub step_size: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl IntegratorSpec {
    pub fn rk4(step_size: f64) -> Self {
        IntegratorSpec { method: Method::Rk4Fixed, step_size, rel_tol: 1e-10, abs_tol: 1e-10, max_steps: 100_000 }
    }

    pub fn rk78(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorSpec { method: Method::Rk78Adaptive, step_size: 0.01, rel_tol, abs_tol, max_steps: 100_000 }
    }

    pub fn validate(&self) -> Result<(), IntegrationError> {
        let ok = match self.method {
            Method::Rk4Fixed => self.step_size > 0.0 && self.step_size.is_finite(),
            Method::Rk78Adaptive => {
                self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.step_size > 0.0 && self.step_size.is_finite()
            }
        };
        if ok && self.max_steps > 0 {
            Ok(())
        } else {
            Err(IntegrationError::InvalidSpec(*self))
        }
    }
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec::rk78(1e-10, 1e-10)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IntegrationError {
    #[error("invalid integrator settings {0:?}")]
    InvalidSpec(IntegratorSpec),
    #[error("integration interval is reversed: t0={t0}, t1={t1}")]
    ReversedInterval { t0: f64, t1: f64 },
    #[error("exceeded {max_steps} steps at t={t}")]
    MaxSteps { max_steps: usize, t: f64 },
    #[error("non-finite state at t={t}")]
    NonFinite { t: f64 },
    #[error("step size underflow at t={t}")]
    StepUnderflow { t: f64 },
    #[error("right-hand side changed the state dimension from {expected} to {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Algebra(#[from] DaError),
}

/// Integrates `ẏ = rhs(t, y)` from `t0` to `t1`.
///
/// The right-hand side may fail with any error type that can also carry an
/// [`IntegrationError`].
pub fn integrate<A, E, F>(mut rhs: F, y0: &[A], t0: f64, t1: f64, spec: &IntegratorSpec) -> Result<Vec<A>, E>
where
    A: Algebra,
    E: From<IntegrationError>,
    F: FnMut(f64, &[A]) -> Result<Vec<A>, E>,
{
    spec.validate().map_err(E::from)?;
    if !(t1 >= t0) {
        return Err(IntegrationError::ReversedInterval { t0, t1 }.into());
    }
    if t1 == t0 {
        return Ok(y0.to_vec());
    }
    match spec.method {
        Method::Rk4Fixed => rk4(&mut rhs, y0, t0, t1, spec),
        Method::Rk78Adaptive => rk78(&mut rhs, y0, t0, t1, spec),
    }
}

fn eval<A: Algebra, E: From<IntegrationError>, F>(rhs: &mut F, t: f64, y: &[A]) -> Result<Vec<A>, E>
where
    F: FnMut(f64, &[A]) -> Result<Vec<A>, E>,
{
    let k = rhs(t, y)?;
    if k.len() != y.len() {
        return Err(IntegrationError::Dimension { expected: y.len(), got: k.len() }.into());
    }
    Ok(k)
}

fn combine<A: Algebra>(y: &[A], h: f64, coeffs: &[f64], ks: &[Vec<A>]) -> Vec<A> {
    let mut out = y.to_vec();
    for (&c, k) in coeffs.iter().zip(ks) {
        if c != 0.0 {
            for (o, ki) in out.iter_mut().zip(k) {
                o.axpy(h * c, ki);
            }
        }
    }
    out
}

fn all_finite<A: Algebra>(y: &[A]) -> bool {
    y.iter().all(Algebra::is_finite)
}

/// Number of fixed steps covering `[t0, t1]` at nominal step `h`.
pub fn rk4_step_count(t0: f64, t1: f64, h: f64) -> usize {
    (((t1 - t0) / h) - 1e-9).ceil().max(1.0) as usize
}

fn rk4<A: Algebra, E: From<IntegrationError>, F>(
    rhs: &mut F,
    y0: &[A],
    t0: f64,
    t1: f64,
    spec: &IntegratorSpec,
) -> Result<Vec<A>, E>
where
    F: FnMut(f64, &[A]) -> Result<Vec<A>, E>,
{
    let n = rk4_step_count(t0, t1, spec.step_size);
    if n > spec.max_steps {
        return Err(IntegrationError::MaxSteps { max_steps: spec.max_steps, t: t0 }.into());
    }
    let mut y = y0.to_vec();
    for i in 0..n {
        let t = t0 + i as f64 * spec.step_size;
        let h = if i + 1 == n { t1 - t } else { spec.step_size };
        y = rk4_step(rhs, t, &y, h)?;
        if !all_finite(&y) {
            return Err(IntegrationError::NonFinite { t: t + h }.into());
        }
    }
    Ok(y)
}

/// One classical fourth-order step.
pub fn rk4_step<A: Algebra, E: From<IntegrationError>, F>(rhs: &mut F, t: f64, y: &[A], h: f64) -> Result<Vec<A>, E>
where
    F: FnMut(f64, &[A]) -> Result<Vec<A>, E>,
{
    let k1 = eval(rhs, t, y)?;
    let y2 = combine(y, h, &[0.5], std::slice::from_ref(&k1));
    let k2 = eval(rhs, t + 0.5 * h, &y2)?;
    let y3 = combine(y, h, &[0.5], std::slice::from_ref(&k2));
    let k3 = eval(rhs, t + 0.5 * h, &y3)?;
    let y4 = combine(y, h, &[1.0], std::slice::from_ref(&k3));
    let k4 = eval(rhs, t + h, &y4)?;
    Ok(combine(y, h, &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0], &[k1, k2, k3, k4]))
}

// Fehlberg 7(8) pair.
const C78: [f64; 13] =
    [0.0, 2.0 / 27.0, 1.0 / 9.0, 1.0 / 6.0, 5.0 / 12.0, 0.5, 5.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0, 1.0, 0.0, 1.0];

const A78: [&[f64]; 13] = [
    &[],
    &[2.0 / 27.0],
    &[1.0 / 36.0, 1.0 / 12.0],
    &[1.0 / 24.0, 0.0, 1.0 / 8.0],
    &[5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0],
    &[1.0 / 20.0, 0.0, 0.0, 1.0 / 4.0, 1.0 / 5.0],
    &[-25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0],
    &[31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0],
    &[2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0],
    &[-91.0 / 108.0, 0.0, 0.0, 23.0 / 108.0, -976.0 / 135.0, 311.0 / 54.0, -19.0 / 60.0, 17.0 / 6.0, -1.0 / 12.0],
    &[
        2383.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -301.0 / 82.0,
        2133.0 / 4100.0,
        45.0 / 82.0,
        45.0 / 164.0,
        18.0 / 41.0,
    ],
    &[3.0 / 205.0, 0.0, 0.0, 0.0, 0.0, -6.0 / 41.0, -3.0 / 205.0, -3.0 / 41.0, 3.0 / 41.0, 6.0 / 41.0, 0.0],
    &[
        -1777.0 / 4100.0,
        0.0,
        0.0,
        -341.0 / 164.0,
        4496.0 / 1025.0,
        -289.0 / 82.0,
        2193.0 / 4100.0,
        51.0 / 82.0,
        33.0 / 164.0,
        12.0 / 41.0,
        0.0,
        1.0,
    ],
];

const B8: [f64; 13] = [
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    34.0 / 105.0,
    9.0 / 35.0,
    9.0 / 35.0,
    9.0 / 280.0,
    9.0 / 280.0,
    0.0,
    41.0 / 840.0,
    41.0 / 840.0,
];

fn rk78<A: Algebra, E: From<IntegrationError>, F>(
    rhs: &mut F,
    y0: &[A],
    t0: f64,
    t1: f64,
    spec: &IntegratorSpec,
) -> Result<Vec<A>, E>
where
    F: FnMut(f64, &[A]) -> Result<Vec<A>, E>,
{
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = spec.step_size.min(t1 - t0);
    let h_min = 1e-14 * (t1 - t0).abs().max(t0.abs()).max(1.0);
    let mut steps = 0usize;
    let mut ks: Vec<Vec<A>> = Vec::with_capacity(13);
    while t < t1 {
        if steps >= spec.max_steps {
            return Err(IntegrationError::MaxSteps { max_steps: spec.max_steps, t }.into());
        }
        steps += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        ks.clear();
        for s in 0..13 {
            let ys = if s == 0 { y.clone() } else { combine(&y, h, A78[s], &ks) };
            ks.push(eval(rhs, t + C78[s] * h, &ys)?);
        }
        let y_new = combine(&y, h, &B8, &ks);
        if !all_finite(&y_new) {
            if h <= h_min {
                return Err(IntegrationError::NonFinite { t }.into());
            }
            h *= 0.25;
            continue;
        }
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let e = h
                * 41.0
                / 840.0
                * (ks[0][i].constant_part() + ks[10][i].constant_part()
                    - ks[11][i].constant_part()
                    - ks[12][i].constant_part());
            let scale = spec.abs_tol
                + spec.rel_tol * y[i].constant_part().abs().max(y_new[i].constant_part().abs());
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            return Err(IntegrationError::NonFinite { t }.into());
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y = y_new;
        }
        let factor = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-1.0 / 8.0)).clamp(0.2, 4.0) };
        h *= factor;
        if h < h_min && t < t1 {
            return Err(IntegrationError::StepUnderflow { t }.into());
        }
    }
    Ok(y)
}
