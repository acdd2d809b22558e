use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::daruff::{FilterConfig, PredictedCov};
use crate::error::{Error, Result};
use crate::flow::{FlowSettings, Innovation, LambdaSchedule};
use crate::models::attitude::GYRO_SIGMA;
use crate::odeint::{IntegratorSpec, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ToyRange,
    Attitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunMethod {
    Da,
    Ode,
    #[default]
    Both,
}

impl RunMethod {
    pub fn runs_da(self) -> bool {
        matches!(self, RunMethod::Da | RunMethod::Both)
    }

    pub fn runs_ode(self) -> bool {
        matches!(self, RunMethod::Ode | RunMethod::Both)
    }
}

/// Experiment definition. Every key has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub order: usize,
    /// Extra orders for the DA-vs-ODE discrepancy sweep of the range example.
    pub order_sweep: Vec<usize>,
    pub n_particles_per_dim: usize,
    pub n_mc: usize,
    pub duration: f64,
    pub dt: f64,
    pub meas_period: f64,
    pub lambda_first: f64,
    pub lambda_last: f64,
    pub lambda_count: usize,
    pub flow_integrator: Method,
    pub flow_step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub method: RunMethod,
    pub innovation: Innovation,
    pub predicted_cov: PredictedCov,
    /// Per-component standard deviation added to particles before each step; empty disables it.
    pub process_noise_std: Vec<f64>,

    pub toy_prior_mean: [f64; 2],
    /// Row-major 2×2.
    pub toy_prior_cov: [f64; 4],
    pub toy_noise_var: f64,
    pub toy_measurement: f64,

    pub inertia_diag: [f64; 3],
    pub torque: [f64; 3],
    pub star1: [f64; 3],
    pub star2: [f64; 3],
    pub star_sigma: f64,
    pub gyro_sigma: f64,
    pub q0: [f64; 4],
    /// Defaults to `(10π/180)·[1,2,3]/‖[1,2,3]‖`.
    pub omega0: [f64; 3],
    pub bias0: [f64; 3],
    /// Initial estimate uncertainty; a reproduction choice.
    pub sigma_q0: f64,
    pub sigma_omega0: f64,
    pub sigma_bias0: f64,
    /// Seconds excluded from the 3σ coverage statistic.
    pub coverage_skip: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let w = 10.0 * std::f64::consts::PI / 180.0 / 14f64.sqrt();
        ScenarioConfig {
            scenario: Scenario::Attitude,
            order: 2,
            order_sweep: Vec::new(),
            n_particles_per_dim: 250,
            n_mc: 100,
            duration: 120.0,
            dt: 0.01,
            meas_period: 2.0,
            lambda_first: 0.001,
            lambda_last: 1.0,
            lambda_count: 50,
            flow_integrator: Method::Rk4Fixed,
            flow_step: 1.0,
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_steps: 100_000,
            seed: 1,
            method: RunMethod::Both,
            innovation: Innovation::Nonlinear,
            predicted_cov: PredictedCov::Sampled,
            process_noise_std: Vec::new(),
            toy_prior_mean: [-3.5, 0.0],
            toy_prior_cov: [1.0, 0.5, 0.5, 1.0],
            toy_noise_var: 0.01,
            toy_measurement: 1.0,
            inertia_diag: [100.0, 60.0, 50.0],
            torque: [0.0; 3],
            star1: [5.0, 2.0, 3.0],
            star2: [1.0, 10.0, 4.0],
            star_sigma: 0.01,
            gyro_sigma: GYRO_SIGMA,
            q0: [0.5; 4],
            omega0: [w, 2.0 * w, 3.0 * w],
            bias0: [0.0; 3],
            sigma_q0: 0.1,
            sigma_omega0: 0.05,
            sigma_bias0: 0.01,
            coverage_skip: 10.0,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ScenarioConfig::from_json(&text)
    }

    pub fn state_dim(&self) -> usize {
        match self.scenario {
            Scenario::ToyRange => 2,
            Scenario::Attitude => crate::models::attitude::STATE_DIM,
        }
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles_per_dim * self.state_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.order == 0 || self.order_sweep.contains(&0) {
            return fail("order must be at least 1".into());
        }
        if self.n_particles_per_dim == 0 || self.n_mc == 0 || self.lambda_count < 2 {
            return fail("particle count, Monte Carlo runs and lambda_count must be positive (lambda_count >= 2)".into());
        }
        if self.n_particles() < 2 {
            return fail("need at least two particles".into());
        }
        let positive = [
            ("duration", self.duration),
            ("dt", self.dt),
            ("meas_period", self.meas_period),
            ("flow_step", self.flow_step),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("toy_noise_var", self.toy_noise_var),
            ("star_sigma", self.star_sigma),
            ("gyro_sigma", self.gyro_sigma),
            ("sigma_q0", self.sigma_q0),
            ("sigma_omega0", self.sigma_omega0),
            ("sigma_bias0", self.sigma_bias0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.max_steps == 0 {
            return fail("max_steps must be positive".into());
        }
        self.schedule()?;
        if !self.process_noise_std.is_empty() && self.process_noise_std.len() != self.state_dim() {
            return fail(format!(
                "process_noise_std needs {} entries (or none), got {}",
                self.state_dim(),
                self.process_noise_std.len()
            ));
        }
        if self.process_noise_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return fail("process_noise_std entries must be nonnegative".into());
        }
        if self.scenario == Scenario::Attitude {
            let ratio = self.meas_period / self.dt;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return fail(format!("meas_period {} must be a multiple of dt {}", self.meas_period, self.dt));
            }
            if self.duration < self.meas_period {
                return fail("duration shorter than one measurement period".into());
            }
            if self.inertia_diag.iter().any(|j| !(*j > 0.0)) {
                return fail("inertia_diag entries must be positive".into());
            }
            if self.q0.iter().map(|v| v * v).sum::<f64>() == 0.0 {
                return fail("q0 must be nonzero".into());
            }
        }
        let c = self.toy_prior_cov;
        if self.scenario == Scenario::ToyRange && !(c[0] > 0.0 && c[0] * c[3] - c[1] * c[2] > 0.0 && c[1] == c[2]) {
            return fail("toy_prior_cov must be symmetric positive definite".into());
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<LambdaSchedule> {
        LambdaSchedule::geometric(self.lambda_first, self.lambda_last, self.lambda_count)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn flow_spec(&self) -> IntegratorSpec {
        IntegratorSpec {
            method: self.flow_integrator,
            step_size: self.flow_step,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_steps: self.max_steps,
        }
    }

    pub fn flow_settings(&self) -> Result<FlowSettings> {
        Ok(FlowSettings { schedule: self.schedule()?, integrator: self.flow_spec(), innovation: self.innovation })
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        Ok(FilterConfig {
            order: self.order,
            propagation: IntegratorSpec { max_steps: self.max_steps, ..IntegratorSpec::rk4(self.dt) },
            flow: self.flow_settings()?,
            predicted_cov: self.predicted_cov,
        })
    }
}
