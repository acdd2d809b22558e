//! Measurement update as a deterministic particle flow in pseudo-time λ.
//!
//! Drift `ẋ = P Hᵀ R⁻¹ (y − h(x))` and covariance `Ṗ = −P Hᵀ R⁻¹ H P`,
//! integrated from λ = 0 (prior) to λ = 1 (posterior). Two realizations:
//! a polynomial flow map built once around the prior mean, and the
//! per-particle integration used as a baseline.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::da::{Algebra, AlgebraContext, DAScalar, DAVector, DaError, Jet1};
use crate::daruff::Ensemble;
use crate::error::{Error, Result};
use crate::odeint::{self, IntegratorSpec, Method};

/// Mean and covariance of a state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension { what: "covariance", expected: n, got: cov.nrows() });
        }
        let b = GaussianBelief { mean, cov };
        b.check_psd()?;
        Ok(b)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Symmetric to 1e-10 relative and no eigenvalue below −1e-10·trace.
    pub fn check_psd(&self) -> Result<()> {
        if !self.mean.iter().chain(self.cov.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("belief"));
        }
        let scale = self.cov.amax().max(f64::MIN_POSITIVE);
        if (&self.cov - self.cov.transpose()).amax() > 1e-10 * scale {
            return Err(Error::NotPositiveDefinite("covariance (asymmetric)"));
        }
        let trace = self.cov.trace();
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig < -1e-10 * trace.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite("covariance"));
        }
        Ok(())
    }

    /// Draws `count` particles from `N(mean, cov)`.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Ensemble> {
        let n = self.dim();
        let l = factor_psd(&self.cov)?;
        let mut data = Vec::with_capacity(count * n);
        let mut z = DVector::zeros(n);
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let x = &self.mean + &l * &z;
            data.extend(x.iter());
        }
        Ensemble::from_flat(n, data)
    }
}

/// A lower factor `L` with `L Lᵀ = P` for PSD `P`.
fn factor_psd(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = p.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = p.clone().symmetric_eigen();
    let trace = p.trace();
    if eig.eigenvalues.min() < -1e-10 * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveDefinite("covariance"));
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// A measurement function `h: ℝⁿ → ℝᵐ` written once for every algebra.
pub trait MeasurementFunction: Sync {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn eval<A: Algebra>(&self, x: &[A]) -> Result<Vec<A>, DaError>;
}

/// `y = h(x) + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct MeasurementModel<H> {
    pub h: H,
    noise_cov: DMatrix<f64>,
    noise_info: DMatrix<f64>,
}

impl<H: MeasurementFunction> MeasurementModel<H> {
    pub fn new(h: H, noise_cov: DMatrix<f64>) -> Result<Self> {
        let m = h.meas_dim();
        if noise_cov.nrows() != m || noise_cov.ncols() != m {
            return Err(Error::Dimension { what: "measurement noise", expected: m, got: noise_cov.nrows() });
        }
        if (&noise_cov - noise_cov.transpose()).amax() > 1e-12 * noise_cov.amax() {
            return Err(Error::NotPositiveDefinite("measurement noise"));
        }
        let chol = noise_cov.clone().cholesky().ok_or(Error::NotPositiveDefinite("measurement noise"))?;
        let inv = chol.inverse();
        let noise_info = (&inv + inv.transpose()) * 0.5;
        Ok(MeasurementModel { h, noise_cov, noise_info })
    }

    pub fn state_dim(&self) -> usize {
        self.h.state_dim()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.meas_dim()
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    /// `R⁻¹`
    pub fn noise_info(&self) -> &DMatrix<f64> {
        &self.noise_info
    }

    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_state(x.len())?;
        Ok(DVector::from_vec(self.h.eval(x)?))
    }

    /// `h(x)` and `H = ∂h/∂x` at `x`.
    pub fn linearize(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_state(x.len())?;
        let out = self.h.eval(&Jet1::seed(x))?;
        let n = x.len();
        let hx = DVector::from_iterator(out.len(), out.iter().map(|j| j.value));
        let jac = DMatrix::from_fn(out.len(), n, |i, j| out[i].grad.get(j).copied().unwrap_or(0.0));
        Ok((hx, jac))
    }

    fn check_state(&self, got: usize) -> Result<()> {
        if got != self.state_dim() {
            return Err(Error::Dimension { what: "state", expected: self.state_dim(), got });
        }
        Ok(())
    }

    fn check_measurement(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.meas_dim() {
            return Err(Error::Dimension { what: "measurement", expected: self.meas_dim(), got: y.len() });
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("measurement"));
        }
        Ok(())
    }
}

/// Pseudo-time nodes `0 = λ₀ < λ₁ < … < λ_M = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSchedule {
    nodes: Vec<f64>,
}

impl LambdaSchedule {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::Invalid("schedule must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("schedule must be strictly increasing".into()));
        }
        Ok(LambdaSchedule { nodes })
    }

    /// `{0} ∪ {first·rⁱ : i = 0..count}`, `r = (last/first)^(1/(count−1))`, final node exactly 1.
    pub fn geometric(first: f64, last: f64, count: usize) -> Result<Self> {
        if !(first > 0.0 && first < last && last <= 1.0) || count < 2 {
            return Err(Error::Invalid(format!("geometric schedule bounds ({first}, {last}, {count})")));
        }
        let ratio = (last / first).powf(1.0 / (count - 1) as f64);
        let mut nodes = Vec::with_capacity(count + 2);
        nodes.push(0.0);
        for i in 0..count {
            nodes.push(if i + 1 == count { last } else { first * ratio.powi(i as i32) });
        }
        if last < 1.0 {
            nodes.push(1.0);
        }
        LambdaSchedule::from_nodes(nodes)
    }

    pub fn uniform(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Invalid("uniform schedule needs at least one step".into()));
        }
        LambdaSchedule::from_nodes((0..=steps).map(|i| if i == steps { 1.0 } else { i as f64 / steps as f64 }).collect())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Which residual drives the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    /// `y − h(x)` with `H` at `x`.
    #[default]
    Nonlinear,
    /// `y − h(c) − H_c (x − c)` with `H_c` at the running mean `c`.
    Linearized,
}

#[derive(Debug, Clone)]
pub struct FlowSettings {
    pub schedule: LambdaSchedule,
    pub integrator: IntegratorSpec,
    pub innovation: Innovation,
}

impl FlowSettings {
    /// Geometric 0.001→1 schedule in 50 nodes, one rk4 step per segment.
    pub fn paper_default() -> Self {
        FlowSettings {
            schedule: LambdaSchedule::geometric(0.001, 1.0, 50).expect("valid schedule"),
            integrator: IntegratorSpec::rk4(1.0),
            innovation: Innovation::Nonlinear,
        }
    }
}

/// Drift `P Hᵀ R⁻¹ (y − h(x))` with `H` evaluated at `x`.
pub fn flow_rhs<H: MeasurementFunction>(
    x: &[f64],
    p: &DMatrix<f64>,
    model: &MeasurementModel<H>,
    y: &[f64],
) -> Result<DVector<f64>> {
    model.check_measurement(y)?;
    let (hx, jac) = model.linearize(x)?;
    let r = DVector::from_column_slice(y) - hx;
    Ok(p * (jac.transpose() * (model.noise_info() * r)))
}

/// Drift with the residual linearized about `center`.
pub fn flow_rhs_linearized<H: MeasurementFunction>(
    x: &[f64],
    p: &DMatrix<f64>,
    model: &MeasurementModel<H>,
    y: &[f64],
    center: &[f64],
) -> Result<DVector<f64>> {
    model.check_measurement(y)?;
    let (hc, jac) = model.linearize(center)?;
    let dx = DVector::from_column_slice(x) - DVector::from_column_slice(center);
    let r = DVector::from_column_slice(y) - hc - &jac * dx;
    Ok(p * (jac.transpose() * (model.noise_info() * r)))
}

/// `−P Hᵀ R⁻¹ H P`
pub fn cov_rhs(p: &DMatrix<f64>, h: &DMatrix<f64>, noise_info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    if p.ncols() != n || h.ncols() != n || noise_info.nrows() != h.nrows() || noise_info.ncols() != h.nrows() {
        return Err(Error::Dimension { what: "covariance equation", expected: n, got: h.ncols() });
    }
    let ph = p * h.transpose();
    Ok(-(&ph * noise_info * ph.transpose()))
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

fn enforce_pd(p: &mut DMatrix<f64>, lambda: f64) -> Result<()> {
    symmetrize(p);
    if p.clone().cholesky().is_none() {
        return Err(Error::CovarianceLost { lambda });
    }
    Ok(())
}

/// Result of a polynomial flow-map construction.
#[derive(Debug, Clone)]
pub struct FlowMap {
    /// `x⁺(δx)` around the prior mean.
    pub map: DAVector,
    /// Covariance at λ = 1 from the covariance equation.
    pub cov: DMatrix<f64>,
}

/// Polynomial-valued drift for the stacked state `[X (n), vec(P) (n²)]`.
struct DaDrift<'a, H> {
    model: &'a MeasurementModel<H>,
    y: DVector<f64>,
    innovation: Innovation,
    n: usize,
    /// Context of order k+1 used to expand the log-likelihood gradient.
    eps_ctx: AlgebraContext,
}

impl<H: MeasurementFunction> DaDrift<'_, H> {
    fn eval(&self, state: &[DAScalar]) -> Result<Vec<DAScalar>, DaError> {
        let n = self.n;
        let ctx = state[0].context().clone();
        let x = &state[..n];
        let c: Vec<f64> = x.iter().map(DAScalar::constant_part).collect();
        let p = DMatrix::from_fn(n, n, |i, j| state[n + i * n + j].constant_part());
        let info = self.model.noise_info();

        let (hc, jac) = {
            let out = self.model.h.eval(&Jet1::seed(&c))?;
            let hc = DVector::from_iterator(out.len(), out.iter().map(|j| j.value));
            let jac = DMatrix::from_fn(out.len(), n, |i, j| out[i].grad.get(j).copied().unwrap_or(0.0));
            (hc, jac)
        };

        // G(X) = Hᵀ R⁻¹ r as polynomials in δ
        let g: Vec<DAScalar> = match self.innovation {
            Innovation::Nonlinear => {
                let xi = DAVector::identity(&self.eps_ctx, &c)?;
                let hxi = self.model.h.eval(xi.components())?;
                let m = hxi.len();
                let r: Vec<DAScalar> = (0..m).map(|i| hxi[i].neg().add_scalar(self.y[i])).collect();
                // ℓ = −½ rᵀ R⁻¹ r, whose gradient is Hᵀ R⁻¹ r
                let mut ell = DAScalar::zero(&self.eps_ctx);
                for i in 0..m {
                    let mut wi = DAScalar::zero(&self.eps_ctx);
                    for j in 0..m {
                        if info[(i, j)] != 0.0 {
                            wi.axpy(info[(i, j)], &r[j]);
                        }
                    }
                    ell.axpy(-0.5, &(&r[i] * &wi));
                }
                let grad = (0..n).map(|j| ell.derivative(j)).collect::<Result<Vec<_>, _>>()?;
                let grad = DAVector::new(grad, c.clone())?;
                let inner = DAVector::new(x.to_vec(), vec![0.0; ctx.n_vars().min(n)])?;
                grad.compose(&inner)?.into_components()
            }
            Innovation::Linearized => {
                let w = jac.transpose() * info;
                let r0 = &self.y - &hc;
                let mut r = Vec::with_capacity(self.model.meas_dim());
                for i in 0..self.model.meas_dim() {
                    let mut ri = DAScalar::constant(&ctx, r0[i]);
                    for j in 0..n {
                        if jac[(i, j)] != 0.0 {
                            ri.axpy(-jac[(i, j)], &x[j].add_scalar(-c[j]));
                        }
                    }
                    r.push(ri);
                }
                (0..n)
                    .map(|j| {
                        let mut gj = DAScalar::zero(&ctx);
                        for (i, ri) in r.iter().enumerate() {
                            if w[(j, i)] != 0.0 {
                                gj.axpy(w[(j, i)], ri);
                            }
                        }
                        gj
                    })
                    .collect()
            }
        };

        let mut out = Vec::with_capacity(n + n * n);
        for i in 0..n {
            let mut d = DAScalar::zero(&ctx);
            for j in 0..n {
                if p[(i, j)] != 0.0 {
                    d.axpy(p[(i, j)], &g[j]);
                }
            }
            out.push(d);
        }
        let ph = &p * jac.transpose();
        let dp = -(&ph * info * ph.transpose());
        out.extend(row_major(&dp).map(|v| DAScalar::constant(&ctx, v)));
        Ok(out)
    }
}

fn row_major(p: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    let n = p.ncols();
    (0..p.nrows() * n).map(move |k| p[(k / n, k % n)])
}

/// Builds the order-`order` polynomial map from prior deviation to posterior state.
pub fn build_flow_map<H: MeasurementFunction>(
    prior: &GaussianBelief,
    model: &MeasurementModel<H>,
    y: &[f64],
    order: usize,
    settings: &FlowSettings,
) -> Result<FlowMap> {
    let n = prior.dim();
    model.check_state(n)?;
    model.check_measurement(y)?;
    if prior.cov.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("prior covariance"));
    }
    let ctx = AlgebraContext::new(n, order)?;
    let drift = DaDrift {
        model,
        y: DVector::from_column_slice(y),
        innovation: settings.innovation,
        n,
        eps_ctx: AlgebraContext::new(n, order + 1)?,
    };
    let mut state: Vec<DAScalar> = DAVector::identity(&ctx, prior.mean.as_slice())?.into_components();
    let mut p = prior.cov.clone();
    symmetrize(&mut p);
    state.extend(row_major(&p).map(|v| DAScalar::constant(&ctx, v)));

    for (l0, l1) in settings.schedule.segments() {
        let rhs = |_l: f64, s: &[DAScalar]| drift.eval(s).map_err(Error::from);
        state = odeint::integrate(rhs, &state, l0, l1, &settings.integrator)?;
        let mut pm = DMatrix::from_fn(n, n, |i, j| state[n + i * n + j].constant_part());
        enforce_pd(&mut pm, l1)?;
        for i in 0..n {
            for j in 0..n {
                state[n + i * n + j] = DAScalar::constant(&ctx, pm[(i, j)]);
            }
        }
        p = pm;
    }
    state.truncate(n);
    let map = DAVector::new(state, prior.mean.as_slice().to_vec())?.with_label("flow lambda 0->1");
    if !map.is_finite() {
        return Err(Error::NonFinite("flow map"));
    }
    Ok(FlowMap { map, cov: p })
}

/// Result of flowing an ensemble particle by particle.
#[derive(Debug, Clone)]
pub struct FlowedEnsemble {
    pub particles: Ensemble,
    /// Mean trajectory endpoint of the shared covariance integration.
    pub mean: DVector<f64>,
    /// Shared covariance at λ = 1.
    pub cov: DMatrix<f64>,
}

/// Real drift of one particle given the running mean and shared covariance.
fn particle_drift<H: MeasurementFunction>(
    x: &[f64],
    mean: &[f64],
    p: &DMatrix<f64>,
    model: &MeasurementModel<H>,
    y: &[f64],
    innovation: Innovation,
) -> Result<DVector<f64>> {
    match innovation {
        Innovation::Nonlinear => flow_rhs(x, p, model, y),
        Innovation::Linearized => flow_rhs_linearized(x, p, model, y, mean),
    }
}

/// Derivative of the shared `[x̂, vec(P)]` system, `H` at `x̂`.
fn mean_cov_rhs<H: MeasurementFunction>(
    s: &[f64],
    model: &MeasurementModel<H>,
    y: &[f64],
    n: usize,
) -> Result<Vec<f64>> {
    let mean = &s[..n];
    let p = DMatrix::from_row_slice(n, n, &s[n..n + n * n]);
    let (hx, jac) = model.linearize(mean)?;
    let r = DVector::from_column_slice(y) - hx;
    let ph = &p * jac.transpose();
    let dx = &ph * (model.noise_info() * r);
    let dp = -(&ph * model.noise_info() * ph.transpose());
    let mut out = Vec::with_capacity(n + n * n);
    out.extend(dx.iter());
    out.extend(row_major(&dp));
    Ok(out)
}

/// Moves every particle along the flow with a shared covariance trajectory.
///
/// With a fixed-step integrator the shared `(x̂, P)` trajectory is integrated
/// once and its stage values are replayed for every particle. With the
/// adaptive integrator each particle carries its own copy of `(x̂, P)`.
pub fn flow_ensemble_ode<H: MeasurementFunction>(
    particles: &Ensemble,
    prior: &GaussianBelief,
    model: &MeasurementModel<H>,
    y: &[f64],
    settings: &FlowSettings,
) -> Result<FlowedEnsemble> {
    let n = prior.dim();
    if particles.dim() != n {
        return Err(Error::Dimension { what: "ensemble", expected: n, got: particles.dim() });
    }
    model.check_state(n)?;
    model.check_measurement(y)?;
    let mut p0 = prior.cov.clone();
    symmetrize(&mut p0);
    let mut shared: Vec<f64> = prior.mean.iter().copied().collect();
    shared.extend(row_major(&p0));

    match settings.integrator.method {
        Method::Rk4Fixed => {
            // integrate the shared system, recording (x̂, P) at every stage
            let mut stages: Vec<Vec<f64>> = Vec::new();
            for (l0, l1) in settings.schedule.segments() {
                let rhs = |_l: f64, s: &[f64]| {
                    stages.push(s.to_vec());
                    mean_cov_rhs(s, model, y, n)
                };
                shared = odeint::integrate(rhs, &shared, l0, l1, &settings.integrator)?;
                let mut pm = DMatrix::from_row_slice(n, n, &shared[n..]);
                enforce_pd(&mut pm, l1)?;
                shared.truncate(n);
                shared.extend(row_major(&pm));
            }
            let stage_mats: Vec<(Vec<f64>, DMatrix<f64>)> =
                stages.iter().map(|s| (s[..n].to_vec(), DMatrix::from_row_slice(n, n, &s[n..]))).collect();
            let moved: Vec<Result<Vec<f64>>> = particles
                .iter()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|x0| {
                    let mut x = x0.to_vec();
                    let mut k = 0usize;
                    for (l0, l1) in settings.schedule.segments() {
                        let rhs = |_l: f64, s: &[f64]| {
                            let (mean, p) = &stage_mats[k];
                            k += 1;
                            particle_drift(s, mean, p, model, y, settings.innovation).map(|d| d.iter().copied().collect())
                                
                        };
                        x = odeint::integrate(rhs, &x, l0, l1, &settings.integrator)?;
                    }
                    Ok(x)
                })
                .collect();
            let mut data = Vec::with_capacity(particles.len() * n);
            for r in moved {
                data.extend(r?);
            }
            Ok(FlowedEnsemble {
                particles: Ensemble::from_flat(n, data)?,
                mean: DVector::from_column_slice(&shared[..n]),
                cov: DMatrix::from_row_slice(n, n, &shared[n..]),
            })
        }
        Method::Rk78Adaptive => {
            let augmented = |l: &[f64]| -> Result<Vec<f64>> {
                let mut s = l.to_vec();
                for (l0, l1) in settings.schedule.segments() {
                    let rhs = |_l: f64, z: &[f64]| -> Result<Vec<f64>> {
                        let x = &z[..n];
                        let shared = &z[n..];
                        let p = DMatrix::from_row_slice(n, n, &shared[n..]);
                        let mut out: Vec<f64> = particle_drift(x, &shared[..n], &p, model, y, settings.innovation)?
                            .iter()
                            .copied()
                            .collect();
                        out.extend(mean_cov_rhs(shared, model, y, n)?);
                        Ok(out)
                    };
                    s = odeint::integrate(rhs, &s, l0, l1, &settings.integrator)?;
                    let mut pm = DMatrix::from_row_slice(n, n, &s[2 * n..]);
                    enforce_pd(&mut pm, l1)?;
                    s.truncate(2 * n);
                    s.extend(row_major(&pm));
                }
                Ok(s)
            };
            // the shared part on its own, for the reported mean and covariance
            let mut start: Vec<f64> = prior.mean.iter().copied().collect();
            start.extend(shared.iter().copied());
            let reference = augmented(&start)?;
            let moved: Vec<Result<Vec<f64>>> = particles
                .iter()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|x0| {
                    let mut s = x0.to_vec();
                    s.extend(shared.iter().copied());
                    augmented(&s).map(|mut v| {
                        v.truncate(n);
                        v
                    })
                })
                .collect();
            let mut data = Vec::with_capacity(particles.len() * n);
            for r in moved {
                data.extend(r?);
            }
            Ok(FlowedEnsemble {
                particles: Ensemble::from_flat(n, data)?,
                mean: DVector::from_column_slice(&reference[n..2 * n]),
                cov: DMatrix::from_row_slice(n, n, &reference[2 * n..]),
            })
        }
    }
}
