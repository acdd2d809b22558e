//! The DARUFF filter and the per-particle ODE flow filter it is compared against.
//!
//! A DARUFF step builds a state transition polynomial map (STPM) from the
//! current estimate to the measurement epoch, a flow map around the propagated
//! mean, composes them, and pushes every particle through the single composed
//! polynomial.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::da::{Algebra, AlgebraContext, DAVector, DaError, Jet1};
use crate::error::{Error, Result};
use crate::flow::{self, FlowSettings, GaussianBelief, MeasurementFunction, MeasurementModel};
use crate::odeint::{self, IntegratorSpec};

/// `N_p` equally weighted particles, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    dim: usize,
    data: Vec<f64>,
}

impl Ensemble {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::Invalid(format!("ensemble of dimension {dim} cannot hold {} values", data.len())));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ensemble"));
        }
        Ok(Ensemble { dim, data })
    }

    pub fn from_particles(particles: &[Vec<f64>]) -> Result<Self> {
        let dim = particles.first().map(Vec::len).unwrap_or(0);
        if particles.iter().any(|p| p.len() != dim) {
            return Err(Error::Invalid("particles of unequal dimension".into()));
        }
        Ensemble::from_flat(dim, particles.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn iter_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        self.data.chunks_exact_mut(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Sample mean and covariance with the `1/N` normalization.
pub fn ensemble_stats(ensemble: &Ensemble) -> Result<GaussianBelief> {
    let n = ensemble.dim();
    let np = ensemble.len();
    if np < 2 {
        return Err(Error::Invalid("ensemble statistics need at least two particles".into()));
    }
    let mut mean = DVector::zeros(n);
    for p in ensemble.iter() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean /= np as f64;
    let mut cov = DMatrix::zeros(n, n);
    let mut d = vec![0.0; n];
    for p in ensemble.iter() {
        for i in 0..n {
            d[i] = p[i] - mean[i];
        }
        for i in 0..n {
            for j in i..n {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = cov[(i, j)] / np as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(GaussianBelief { mean, cov })
}

/// Adds independent zero-mean Gaussian perturbations with per-component `std`.
pub fn apply_process_noise<R: Rng + ?Sized>(ensemble: &mut Ensemble, std: &[f64], rng: &mut R) -> Result<()> {
    if std.len() != ensemble.dim() {
        return Err(Error::Dimension { what: "process noise", expected: ensemble.dim(), got: std.len() });
    }
    for p in ensemble.iter_mut() {
        for (x, s) in p.iter_mut().zip(std) {
            if *s != 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                *x += s * z;
            }
        }
    }
    Ok(())
}

/// Equations of motion `ẋ = f(t, x)`, evaluable in every algebra.
pub trait DynamicsModel: Sync {
    fn state_dim(&self) -> usize;
    fn rhs<A: Algebra>(&self, t: f64, x: &[A]) -> Result<Vec<A>, DaError>;

    /// Maps a real state back onto its constraint manifold, if any.
    fn project(&self, _x: &mut [f64]) {}
}

/// Integrates `center + δ` through the dynamics: the map `M_{t0→t1}`.
pub fn build_stpm<D: DynamicsModel>(
    center: &[f64],
    dynamics: &D,
    t0: f64,
    t1: f64,
    order: usize,
    spec: &IntegratorSpec,
) -> Result<DAVector> {
    let n = dynamics.state_dim();
    if center.len() != n {
        return Err(Error::Dimension { what: "prediction center", expected: n, got: center.len() });
    }
    if !(t1 >= t0) {
        return Err(Error::Invalid(format!("prediction interval reversed: {t0} -> {t1}")));
    }
    let ctx = AlgebraContext::new(n, order)?;
    let x0 = DAVector::identity(&ctx, center)?;
    let rhs = |t: f64, x: &[crate::da::DAScalar]| dynamics.rhs(t, x).map_err(Error::from);
    let xf = odeint::integrate(rhs, x0.components(), t0, t1, spec)?;
    Ok(DAVector::new(xf, center.to_vec())?.with_label(format!("stpm t {t0}->{t1}")))
}

/// Evaluates `map` at `x − center` for every particle.
pub fn propagate_ensemble_map(map: &DAVector, ensemble: &Ensemble, center: &[f64]) -> Result<Ensemble> {
    let n = ensemble.dim();
    if center.len() != n || map.context().n_vars() != n {
        return Err(Error::Dimension { what: "map deviation", expected: map.context().n_vars(), got: n });
    }
    let eval = map.evaluator();
    let m = map.len();
    let mut data = vec![0.0; ensemble.len() * m];
    data.par_chunks_mut(m).zip(ensemble.as_flat().par_chunks(n)).try_for_each_init(
        || (vec![0.0; n], Vec::new()),
        |(dev, scratch), (out, x)| {
            for i in 0..n {
                dev[i] = x[i] - center[i];
            }
            eval.evaluate_into(dev, scratch, out)
        },
    )?;
    Ensemble::from_flat(m, data)
}

/// `𝒫 = flow ∘ stpm`, after checking the flow map is centered on the STPM's constant part.
pub fn combine_maps(flow_map: &DAVector, stpm: &DAVector) -> Result<DAVector> {
    let c = stpm.constant_part();
    if flow_map.center().len() != c.len() {
        return Err(Error::Dimension { what: "flow map center", expected: c.len(), got: flow_map.center().len() });
    }
    let distance = c.iter().zip(flow_map.center()).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
    if distance > 1e-9 {
        return Err(Error::CenterMismatch { distance });
    }
    Ok(flow_map.compose(stpm)?.with_label("combined map"))
}

/// How the prior covariance for the flow is formed after prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedCov {
    /// Sample covariance of the propagated particles.
    #[default]
    Sampled,
    /// `Φ P Φᵀ` with `Φ` the first-order part of the prediction.
    Linearized,
}

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub order: usize,
    pub propagation: IntegratorSpec,
    pub flow: FlowSettings,
    pub predicted_cov: PredictedCov,
}

impl FilterConfig {
    pub fn new(order: usize) -> Self {
        FilterConfig {
            order,
            propagation: IntegratorSpec::rk4(0.01),
            flow: FlowSettings::paper_default(),
            predicted_cov: PredictedCov::Sampled,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub time: f64,
    pub belief: GaussianBelief,
    pub ensemble: Ensemble,
}

impl FilterState {
    pub fn new(time: f64, ensemble: Ensemble) -> Result<Self> {
        let belief = ensemble_stats(&ensemble)?;
        Ok(FilterState { time, belief, ensemble })
    }
}

/// Wall-clock seconds spent in each phase of a step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepTimings {
    pub propagate: f64,
    pub flow: f64,
    pub evaluate: f64,
}

impl StepTimings {
    pub fn total(&self) -> f64 {
        self.propagate + self.flow + self.evaluate
    }
}

fn finish<D: DynamicsModel>(time: f64, mut ensemble: Ensemble, dynamics: &D) -> Result<FilterState> {
    ensemble.iter_mut().for_each(|p| dynamics.project(p));
    let mut belief = ensemble_stats(&ensemble)?;
    dynamics.project(belief.mean.as_mut_slice());
    Ok(FilterState { time, belief, ensemble })
}

fn check_step<D: DynamicsModel, H: MeasurementFunction>(
    state: &FilterState,
    dynamics: &D,
    model: &MeasurementModel<H>,
    t_meas: f64,
) -> Result<()> {
    let n = dynamics.state_dim();
    if state.ensemble.dim() != n || model.state_dim() != n {
        return Err(Error::Dimension { what: "filter state", expected: n, got: state.ensemble.dim() });
    }
    if !(t_meas >= state.time) {
        return Err(Error::Invalid(format!("measurement time {t_meas} precedes filter time {}", state.time)));
    }
    Ok(())
}

/// One DARUFF epoch: predict to `t_meas`, update with `y`.
pub fn daruff_step<D: DynamicsModel, H: MeasurementFunction>(
    state: &FilterState,
    dynamics: &D,
    model: &MeasurementModel<H>,
    y: &[f64],
    t_meas: f64,
    cfg: &FilterConfig,
) -> Result<(FilterState, StepTimings)> {
    check_step(state, dynamics, model, t_meas)?;
    let mut timings = StepTimings::default();
    let center: Vec<f64> = state.belief.mean.iter().copied().collect();

    let clock = Instant::now();
    let stpm = build_stpm(&center, dynamics, state.time, t_meas, cfg.order, &cfg.propagation)?;
    let prior_mean = DVector::from_vec(stpm.constant_part());
    let prior_cov = match cfg.predicted_cov {
        PredictedCov::Sampled => ensemble_stats(&propagate_ensemble_map(&stpm, &state.ensemble, &center)?)?.cov,
        PredictedCov::Linearized => {
            let n = center.len();
            let phi = DMatrix::from_row_slice(n, n, &stpm.jacobian());
            &phi * &state.belief.cov * phi.transpose()
        }
    };
    timings.propagate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let prior = GaussianBelief::new(prior_mean, prior_cov)?;
    let flow_map = flow::build_flow_map(&prior, model, y, cfg.order, &cfg.flow)?;
    let combined = combine_maps(&flow_map.map, &stpm)?;
    timings.flow = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let moved = propagate_ensemble_map(&combined, &state.ensemble, &center)?;
    let next = finish(t_meas, moved, dynamics)?;
    timings.evaluate = clock.elapsed().as_secs_f64();
    Ok((next, timings))
}

/// One epoch of the reference filter: every particle integrated individually,
/// then flowed individually.
pub fn baseline_pff_step<D: DynamicsModel, H: MeasurementFunction>(
    state: &FilterState,
    dynamics: &D,
    model: &MeasurementModel<H>,
    y: &[f64],
    t_meas: f64,
    cfg: &FilterConfig,
) -> Result<(FilterState, StepTimings)> {
    check_step(state, dynamics, model, t_meas)?;
    let mut timings = StepTimings::default();
    let n = dynamics.state_dim();
    let (t0, spec) = (state.time, &cfg.propagation);

    let clock = Instant::now();
    let propagated: Vec<Result<Vec<f64>>> = state
        .ensemble
        .iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|x| {
            let rhs = |t: f64, x: &[f64]| dynamics.rhs(t, x).map_err(Error::from);
            odeint::integrate(rhs, x, t0, t_meas, spec)
        })
        .collect();
    let mut data = Vec::with_capacity(state.ensemble.len() * n);
    for p in propagated {
        data.extend(p?);
    }
    let propagated = Ensemble::from_flat(n, data)?;
    let jet_rhs = |t: f64, x: &[Jet1]| dynamics.rhs(t, x).map_err(Error::from);
    let center = odeint::integrate(jet_rhs, &Jet1::seed(state.belief.mean.as_slice()), t0, t_meas, spec)?;
    let prior_mean = DVector::from_iterator(n, center.iter().map(|j| j.value));
    let prior_cov = match cfg.predicted_cov {
        PredictedCov::Sampled => ensemble_stats(&propagated)?.cov,
        PredictedCov::Linearized => {
            let phi = DMatrix::from_fn(n, n, |i, j| center[i].grad[j]);
            &phi * &state.belief.cov * phi.transpose()
        }
    };
    timings.propagate = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let prior = GaussianBelief::new(prior_mean, prior_cov)?;
    let flowed = flow::flow_ensemble_ode(&propagated, &prior, model, y, &cfg.flow)?;
    timings.flow = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let next = finish(t_meas, flowed.particles, dynamics)?;
    timings.evaluate = clock.elapsed().as_secs_f64();
    Ok((next, timings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::da::DAScalar;
    use crate::flow::LambdaSchedule;
    use crate::models::linear::{LinearDynamics, LinearMeasurement, ZeroDynamics};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stats_use_population_normalization() {
        let two = Ensemble::from_flat(1, vec![-1.0, 1.0]).unwrap();
        let b = ensemble_stats(&two).unwrap();
        assert_eq!((b.mean[0], b.cov[(0, 0)]), (0.0, 1.0));
        let same = Ensemble::from_flat(2, vec![0.5, 2.0, 0.5, 2.0, 0.5, 2.0]).unwrap();
        assert_eq!(ensemble_stats(&same).unwrap().cov, DMatrix::zeros(2, 2));
        assert!(ensemble_stats(&Ensemble::from_flat(1, vec![1.0]).unwrap()).is_err());
        assert!(Ensemble::from_flat(2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn stats_of_many_standard_normals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let b = ensemble_stats(&Ensemble::from_flat(1, data).unwrap()).unwrap();
        assert!(b.mean[0].abs() < 0.02 && (b.cov[(0, 0)] - 1.0).abs() < 0.02);
    }

    #[test]
    fn stpm_of_zero_dynamics_is_identity() {
        let m = build_stpm(&[1.0, -2.0], &ZeroDynamics { dim: 2 }, 0.0, 2.0, 3, &IntegratorSpec::rk4(0.01)).unwrap();
        let ctx = AlgebraContext::new(2, 3).unwrap();
        assert_eq!(m.components(), DAVector::identity(&ctx, &[1.0, -2.0]).unwrap().components());
        let ens = Ensemble::from_flat(2, vec![0.0, 1.0, 3.0, -4.0]).unwrap();
        assert_eq!(propagate_ensemble_map(&m, &ens, &[1.0, -2.0]).unwrap(), ens);
    }

    #[test]
    fn stpm_of_linear_dynamics_is_the_matrix_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
        let dynamics = LinearDynamics { a: a.clone() };
        let spec = IntegratorSpec::rk4(0.01);
        let m = build_stpm(&[0.4, 0.1], &dynamics, 0.0, 1.5, 2, &spec).unwrap();
        let expm = (a * 1.5).exp();
        let jac = m.jacobian();
        for i in 0..2 {
            for j in 0..2 {
                assert!((jac[i * 2 + j] - expm[(i, j)]).abs() < 1e-9);
            }
        }
        let direct =
            odeint::integrate(|t, x: &[f64]| dynamics.rhs(t, x).map_err(Error::from), &[0.4, 0.1], 0.0, 1.5, &spec)
                .unwrap();
        assert_eq!(m.constant_part(), direct);
        let ens = Ensemble::from_flat(2, vec![0.4, 0.1]).unwrap();
        assert_eq!(propagate_ensemble_map(&m, &ens, &[0.4, 0.1]).unwrap().particle(0), direct.as_slice());
    }

    fn random_map(ctx: &AlgebraContext, center: &[f64], rng: &mut ChaCha8Rng) -> DAVector {
        let comps = (0..ctx.n_vars())
            .map(|_| {
                let mut p = DAScalar::constant(ctx, 0.0);
                for r in 0..ctx.n_monomials() as u32 {
                    let mono = DAScalar::from_terms(ctx, [(ctx.exponents(r), rng.gen_range(-1.0..1.0))]).unwrap();
                    p = &p + &mono;
                }
                p
            })
            .collect();
        DAVector::new(comps, center.to_vec()).unwrap()
    }

    #[test]
    fn combined_map_matches_sequential_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ctx = AlgebraContext::new(3, 3).unwrap();
        let stpm = random_map(&ctx, &[0.2, 0.0, -1.0], &mut rng);
        let c = stpm.constant_part();
        let flow_map = random_map(&ctx, &c, &mut rng);
        let combined = combine_maps(&flow_map, &stpm).unwrap();
        for _ in 0..20 {
            let d: Vec<f64> = (0..3).map(|_| rng.gen_range(-1e-3..1e-3)).collect();
            let mid = stpm.evaluate(&d).unwrap();
            let dev: Vec<f64> = mid.iter().zip(&c).map(|(a, b)| a - b).collect();
            let seq = flow_map.evaluate(&dev).unwrap();
            let one = combined.evaluate(&d).unwrap();
            for i in 0..3 {
                assert!((seq[i] - one[i]).abs() < 1e-8);
            }
        }
        let ident = DAVector::identity(&ctx, &c).unwrap();
        assert_eq!(combine_maps(&ident, &stpm).unwrap().components(), stpm.components());
        let off = DAVector::identity(&ctx, &[c[0] + 1e-6, c[1], c[2]]).unwrap();
        assert!(matches!(combine_maps(&off, &stpm), Err(Error::CenterMismatch { .. })));
    }

    fn linear_problem() -> (FilterState, MeasurementModel<LinearMeasurement>, Vec<f64>) {
        let prior = GaussianBelief::new(
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let state = FilterState::new(0.0, prior.sample(300, &mut rng).unwrap()).unwrap();
        let model = MeasurementModel::new(
            LinearMeasurement { h: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]) },
            DMatrix::from_element(1, 1, 0.1),
        )
        .unwrap();
        (state, model, vec![0.3])
    }

    fn dense_cfg(order: usize) -> FilterConfig {
        let mut cfg = FilterConfig::new(order);
        cfg.flow.schedule = LambdaSchedule::uniform(200).unwrap();
        cfg.flow.integrator = IntegratorSpec::rk78(1e-12, 1e-12);
        cfg
    }

    #[test]
    fn step_with_static_linear_model_is_a_kalman_update() {
        let (state, model, y) = linear_problem();
        let b = &state.belief;
        let h = &model.h.h;
        let s = b.cov.clone().try_inverse().unwrap() + h.transpose() * model.noise_info() * h;
        let p = s.try_inverse().unwrap();
        let k = &p * h.transpose() * model.noise_info();
        let mean = &b.mean + &k * (DVector::from_column_slice(&y) - h * &b.mean);
        let a = DMatrix::identity(2, 2) - &k * h;
        for order in [1, 2] {
            let (next, _) = daruff_step(&state, &ZeroDynamics { dim: 2 }, &model, &y, 2.0, &dense_cfg(order)).unwrap();
            assert!((&next.belief.mean - &mean).amax() < 1e-6);
            assert!((&next.belief.cov - &a * &b.cov * a.transpose()).amax() < 1e-6);
            assert_eq!(next.time, 2.0);
        }
    }

    #[test]
    fn daruff_and_baseline_agree_on_linear_problem() {
        let (state, model, y) = linear_problem();
        let dynamics = LinearDynamics { a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.1]) };
        for cfg in [dense_cfg(1), FilterConfig::new(2)] {
            let (da, _) = daruff_step(&state, &dynamics, &model, &y, 2.0, &cfg).unwrap();
            let (ode, _) = baseline_pff_step(&state, &dynamics, &model, &y, 2.0, &cfg).unwrap();
            let diff = da.ensemble.as_flat().iter().zip(ode.ensemble.as_flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "{diff}");
        }
    }

    #[test]
    fn zero_innovation_keeps_the_mean() {
        let (mut state, model, _) = linear_problem();
        // symmetrize the cloud about its mean
        let m = state.belief.mean.clone();
        let mirrored: Vec<f64> = state.ensemble.iter().flat_map(|x| vec![2.0 * m[0] - x[0], 2.0 * m[1] - x[1]]).collect();
        let mut all = state.ensemble.as_flat().to_vec();
        all.extend(mirrored);
        state = FilterState::new(0.0, Ensemble::from_flat(2, all).unwrap()).unwrap();
        let y = vec![m[0] + m[1]];
        let (next, _) = daruff_step(&state, &ZeroDynamics { dim: 2 }, &model, &y, 1.0, &FilterConfig::new(2)).unwrap();
        assert!((&next.belief.mean - &m).amax() < 1e-12);
    }

    #[test]
    fn rejects_time_reversal_and_bad_dimensions() {
        let (state, model, y) = linear_problem();
        let cfg = FilterConfig::new(1);
        assert!(daruff_step(&state, &ZeroDynamics { dim: 2 }, &model, &y, -1.0, &cfg).is_err());
        assert!(daruff_step(&state, &ZeroDynamics { dim: 3 }, &model, &y, 1.0, &cfg).is_err());
        assert!(baseline_pff_step(&state, &ZeroDynamics { dim: 2 }, &model, &[1.0, 2.0], 1.0, &cfg).is_err());
    }
}
