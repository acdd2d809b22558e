use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Scenario, ScenarioConfig};
use crate::daruff::{apply_process_noise, baseline_pff_step, daruff_step, FilterConfig, FilterState, StepTimings};
use crate::error::{Error, Result};
use crate::flow::{GaussianBelief, MeasurementModel};
use crate::models::attitude::{
    normalize_quaternion, simulate_truth, stacked_measurement, AttitudeDynamics, AttitudeMeasurement,
    RigidBodyParams, StarCatalog, TruthRun, STATE_DIM,
};

/// Models and initial uncertainty derived from a configuration.
#[derive(Debug, Clone)]
pub struct AttitudeSetup {
    pub dynamics: AttitudeDynamics,
    pub model: MeasurementModel<AttitudeMeasurement>,
    pub x0: [f64; STATE_DIM],
    pub p0: DMatrix<f64>,
    pub filter: FilterConfig,
}

impl AttitudeSetup {
    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        if cfg.scenario != Scenario::Attitude {
            return Err(Error::Config("attitude runs need scenario \"attitude\"".into()));
        }
        cfg.validate()?;
        let params = RigidBodyParams::new(
            Matrix3::from_diagonal(&Vector3::from_column_slice(&cfg.inertia_diag)),
            Vector3::from_column_slice(&cfg.torque),
        )?;
        let catalog = StarCatalog::from_raw(cfg.star1, cfg.star2)?;
        let model = stacked_measurement(catalog, cfg.star_sigma, cfg.gyro_sigma)?;
        let mut x0 = [0.0; STATE_DIM];
        x0[..4].copy_from_slice(&cfg.q0);
        x0[4..7].copy_from_slice(&cfg.omega0);
        x0[7..].copy_from_slice(&cfg.bias0);
        normalize_quaternion(&mut x0);
        let mut diag = vec![cfg.sigma_q0.powi(2); 4];
        diag.extend([cfg.sigma_omega0.powi(2); 3]);
        diag.extend([cfg.sigma_bias0.powi(2); 3]);
        Ok(AttitudeSetup {
            dynamics: AttitudeDynamics { params },
            model,
            x0,
            p0: DMatrix::from_diagonal(&DVector::from_vec(diag)),
            filter: cfg.filter_config()?,
        })
    }

    /// Truth, measurements and initial particles of Monte Carlo run with seed `seed`.
    ///
    /// Stream 0 of the seed drives measurement noise, stream 1 the initial
    /// estimate and particles, stream 2 the optional process noise.
    pub fn realize(&self, cfg: &ScenarioConfig, seed: u64) -> Result<(TruthRun, FilterState)> {
        let truth = simulate_truth(&self.x0, &self.dynamics, &self.model, cfg.duration, cfg.dt, cfg.meas_period, Some(seed))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let around_truth = GaussianBelief { mean: DVector::from_column_slice(&self.x0), cov: self.p0.clone() };
        let mut estimate = around_truth.sample(1, &mut rng)?.particle(0).to_vec();
        normalize_quaternion(&mut estimate);
        let initial = GaussianBelief { mean: DVector::from_vec(estimate), cov: self.p0.clone() };
        let mut ensemble = initial.sample(cfg.n_particles(), &mut rng)?;
        ensemble.iter_mut().for_each(normalize_quaternion);
        Ok((truth, FilterState::new(0.0, ensemble)?))
    }
}

/// One filter's trajectory in one Monte Carlo run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub run: usize,
    pub seed: u64,
    /// Truth minus estimate at each completed epoch.
    pub errors: Vec<Vec<f64>>,
    /// Square roots of the covariance diagonal.
    pub sigmas: Vec<Vec<f64>>,
    pub timings: Vec<StepTimings>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub xi_q: Vec<f64>,
    pub xi_omega: Vec<f64>,
    pub xi_bias: Vec<f64>,
    /// Fraction of error components inside ±3σ after the transient.
    pub coverage: f64,
    pub coverage_per_component: [f64; STATE_DIM],
    pub diverged: Vec<usize>,
    pub mean_timings: StepTimings,
    pub runs: Vec<RunTrace>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl MethodSummary {
    pub fn mean_xi_q(&self) -> f64 {
        mean(&self.xi_q)
    }

    pub fn mean_xi_omega(&self) -> f64 {
        mean(&self.xi_omega)
    }

    pub fn mean_xi_bias(&self) -> f64 {
        mean(&self.xi_bias)
    }

    fn from_runs(runs: Vec<RunTrace>, epochs: &[f64], skip: f64) -> Self {
        let diverged: Vec<usize> = runs.iter().filter(|r| r.failure.is_some()).map(|r| r.run).collect();
        let good: Vec<&RunTrace> = runs.iter().filter(|r| r.failure.is_none()).collect();
        let xi = |range: std::ops::Range<usize>| -> Vec<f64> {
            (0..epochs.len())
                .map(|k| {
                    let sum: f64 = good.iter().map(|r| r.errors[k][range.clone()].iter().map(|e| e * e).sum::<f64>()).sum();
                    (sum / good.len().max(1) as f64).sqrt()
                })
                .collect()
        };
        let mut inside = [0usize; STATE_DIM];
        let mut total = 0usize;
        for r in &good {
            for (k, (e, s)) in r.errors.iter().zip(&r.sigmas).enumerate() {
                if epochs[k] <= skip {
                    continue;
                }
                total += 1;
                for i in 0..STATE_DIM {
                    if e[i].abs() <= 3.0 * s[i] {
                        inside[i] += 1;
                    }
                }
            }
        }
        let per = inside.map(|c| c as f64 / total.max(1) as f64);
        let mut t = StepTimings::default();
        let mut count = 0.0;
        for r in &good {
            for s in &r.timings {
                t.propagate += s.propagate;
                t.flow += s.flow;
                t.evaluate += s.evaluate;
                count += 1.0;
            }
        }
        if count > 0.0 {
            t.propagate /= count;
            t.flow /= count;
            t.evaluate /= count;
        }
        MethodSummary {
            xi_q: xi(0..4),
            xi_omega: xi(4..7),
            xi_bias: xi(7..10),
            coverage: mean(&per),
            coverage_per_component: per,
            diverged,
            mean_timings: t,
            runs,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MCSummary {
    pub epochs: Vec<f64>,
    pub seeds: Vec<u64>,
    pub da: Option<MethodSummary>,
    pub ode: Option<MethodSummary>,
}

#[derive(Clone, Copy)]
enum Which {
    Da,
    Ode,
}

fn run_filter(
    which: Which,
    setup: &AttitudeSetup,
    cfg: &ScenarioConfig,
    truth: &TruthRun,
    initial: &FilterState,
    run: usize,
    seed: u64,
) -> RunTrace {
    let mut trace = RunTrace { run, seed, errors: Vec::new(), sigmas: Vec::new(), timings: Vec::new(), failure: None };
    let mut state = initial.clone();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(2);
    for (k, (&t, y)) in truth.epochs.iter().zip(&truth.measurements).enumerate() {
        if !cfg.process_noise_std.is_empty() {
            if let Err(e) = apply_process_noise(&mut state.ensemble, &cfg.process_noise_std, &mut noise_rng) {
                trace.failure = Some(e.to_string());
                return trace;
            }
        }
        let step = match which {
            Which::Da => daruff_step(&state, &setup.dynamics, &setup.model, y, t, &setup.filter),
            Which::Ode => baseline_pff_step(&state, &setup.dynamics, &setup.model, y, t, &setup.filter),
        };
        match step {
            Ok((next, timing)) => {
                state = next;
                trace.timings.push(timing);
            }
            Err(e) => {
                trace.failure = Some(format!("step {}: {e}", k + 1));
                return trace;
            }
        }
        let x = &truth.states[k];
        trace.errors.push((0..STATE_DIM).map(|i| x[i] - state.belief.mean[i]).collect());
        trace.sigmas.push((0..STATE_DIM).map(|i| state.belief.cov[(i, i)].max(0.0).sqrt()).collect());
    }
    trace
}

/// Monte Carlo campaign; run `r` uses seed `cfg.seed + r`.
pub fn run_attitude_mc(cfg: &ScenarioConfig) -> Result<MCSummary> {
    let setup = AttitudeSetup::from_config(cfg)?;
    let seeds: Vec<u64> = (0..cfg.n_mc as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let traces: Vec<Result<(Option<RunTrace>, Option<RunTrace>, Vec<f64>)>> = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &seed)| {
            let (truth, initial) = setup.realize(cfg, seed)?;
            let da = cfg.method.runs_da().then(|| run_filter(Which::Da, &setup, cfg, &truth, &initial, run, seed));
            let ode = cfg.method.runs_ode().then(|| run_filter(Which::Ode, &setup, cfg, &truth, &initial, run, seed));
            Ok((da, ode, truth.epochs))
        })
        .collect();
    let mut da_runs = Vec::new();
    let mut ode_runs = Vec::new();
    let mut epochs = Vec::new();
    for t in traces {
        let (da, ode, e) = t?;
        da_runs.extend(da);
        ode_runs.extend(ode);
        epochs = e;
    }
    let skip = cfg.coverage_skip;
    Ok(MCSummary {
        da: cfg.method.runs_da().then(|| MethodSummary::from_runs(da_runs, &epochs, skip)),
        ode: cfg.method.runs_ode().then(|| MethodSummary::from_runs(ode_runs, &epochs, skip)),
        epochs,
        seeds,
    })
}
