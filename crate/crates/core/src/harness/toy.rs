use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Scenario, ScenarioConfig};
use crate::daruff::{propagate_ensemble_map, Ensemble};
use crate::error::{Error, Result};
use crate::flow::{build_flow_map, flow_ensemble_ode, GaussianBelief, MeasurementModel};
use crate::models::range::{range_h, RangeMeasurement};

#[derive(Debug, Clone)]
pub struct ToyResult {
    pub order: usize,
    pub seed: u64,
    pub prior: Ensemble,
    pub post_da: Option<Ensemble>,
    pub post_ode: Option<Ensemble>,
    /// RMS over particles of the Euclidean DA-to-ODE distance.
    pub rms_discrepancy: Option<f64>,
    /// Fraction of particles with `|‖x‖ − y| < 3σ`.
    pub ring_fraction_da: Option<f64>,
    pub ring_fraction_ode: Option<f64>,
    pub seconds_da: Option<f64>,
    pub seconds_ode: Option<f64>,
    /// `(order, rms_discrepancy)` for each sweep order.
    pub sweep: Vec<(usize, f64)>,
}

pub fn rms_discrepancy(a: &Ensemble, b: &Ensemble) -> f64 {
    let sq: f64 = a.as_flat().iter().zip(b.as_flat()).map(|(x, y)| (x - y).powi(2)).sum();
    (sq / a.len() as f64).sqrt()
}

pub fn ring_fraction(e: &Ensemble, y: f64, sigma: f64) -> f64 {
    e.iter().filter(|x| (range_h(x) - y).abs() < 3.0 * sigma).count() as f64 / e.len() as f64
}

/// Flows one prior sample with the DA map and/or the per-particle ODE.
pub fn run_toy(cfg: &ScenarioConfig) -> Result<ToyResult> {
    if cfg.scenario != Scenario::ToyRange {
        return Err(Error::Config("run_toy needs scenario \"toy_range\"".into()));
    }
    cfg.validate()?;
    let prior = GaussianBelief::new(
        DVector::from_column_slice(&cfg.toy_prior_mean),
        DMatrix::from_row_slice(2, 2, &cfg.toy_prior_cov),
    )?;
    let model = MeasurementModel::new(RangeMeasurement, DMatrix::from_element(1, 1, cfg.toy_noise_var))?;
    let y = [cfg.toy_measurement];
    let settings = cfg.flow_settings()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let particles = prior.sample(cfg.n_particles(), &mut rng)?;
    let center = prior.mean.as_slice();
    let sigma = cfg.toy_noise_var.sqrt();

    let flow_da = |order: usize| -> Result<Ensemble> {
        let fm = build_flow_map(&prior, &model, &y, order, &settings)?;
        propagate_ensemble_map(&fm.map, &particles, center)
    };

    let (post_ode, seconds_ode) = if cfg.method.runs_ode() || !cfg.order_sweep.is_empty() {
        let clock = Instant::now();
        let out = flow_ensemble_ode(&particles, &prior, &model, &y, &settings)?.particles;
        (Some(out), Some(clock.elapsed().as_secs_f64()))
    } else {
        (None, None)
    };
    let (post_da, seconds_da) = if cfg.method.runs_da() {
        let clock = Instant::now();
        let out = flow_da(cfg.order)?;
        (Some(out), Some(clock.elapsed().as_secs_f64()))
    } else {
        (None, None)
    };
    let mut sweep = Vec::new();
    if let Some(ode) = &post_ode {
        for &k in &cfg.order_sweep {
            sweep.push((k, rms_discrepancy(&flow_da(k)?, ode)));
        }
    }
    let rms = match (&post_da, &post_ode) {
        (Some(a), Some(b)) => Some(rms_discrepancy(a, b)),
        _ => None,
    };
    Ok(ToyResult {
        order: cfg.order,
        seed: cfg.seed,
        ring_fraction_da: post_da.as_ref().map(|e| ring_fraction(e, y[0], sigma)),
        ring_fraction_ode: post_ode.as_ref().filter(|_| cfg.method.runs_ode()).map(|e| ring_fraction(e, y[0], sigma)),
        post_ode: post_ode.filter(|_| cfg.method.runs_ode()),
        prior: particles,
        post_da,
        rms_discrepancy: rms,
        seconds_da,
        seconds_ode: seconds_ode.filter(|_| cfg.method.runs_ode()),
        sweep,
    })
}
