use std::time::Instant;

use super::attitude::AttitudeSetup;
use super::ScenarioConfig;
use crate::daruff::{baseline_pff_step, daruff_step, StepTimings};
use crate::error::{Error, Result};

const REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub method: &'static str,
    pub particles_per_dim: usize,
    pub n_particles: usize,
    /// Median wall-clock seconds of one filter step.
    pub step: f64,
    pub propagate: f64,
    pub flow: f64,
    pub evaluate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub rows: Vec<TimingRow>,
    /// Least-squares slope of `ln(step)` against `ln(N_p)` per method.
    pub slopes: Vec<(&'static str, f64)>,
}

impl TimingTable {
    pub fn row(&self, method: &str, particles_per_dim: usize) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.method == method && r.particles_per_dim == particles_per_dim)
    }

    pub fn slope(&self, method: &str) -> Option<f64> {
        self.slopes.iter().find(|s| s.0 == method).map(|s| s.1)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Times the first attitude filter step for every ensemble size in `grid`
/// (particles per state dimension): one discarded warm-up, then the median of five.
pub fn bench_timing(cfg: &ScenarioConfig, grid: &[usize]) -> Result<TimingTable> {
    if grid.is_empty() || grid.contains(&0) {
        return Err(Error::Config("particle grid must be nonempty and positive".into()));
    }
    let mut rows = Vec::new();
    for &per_dim in grid {
        let cfg = ScenarioConfig { n_particles_per_dim: per_dim, duration: cfg.meas_period, n_mc: 1, ..cfg.clone() };
        let setup = AttitudeSetup::from_config(&cfg)?;
        let (truth, initial) = setup.realize(&cfg, cfg.seed)?;
        let (t1, y) = (truth.epochs[0], &truth.measurements[0]);
        for method in ["da", "ode"] {
            if (method == "da" && !cfg.method.runs_da()) || (method == "ode" && !cfg.method.runs_ode()) {
                continue;
            }
            let mut samples: Vec<(f64, StepTimings)> = Vec::with_capacity(REPEATS);
            for rep in 0..=REPEATS {
                let clock = Instant::now();
                let (_, timing) = if method == "da" {
                    daruff_step(&initial, &setup.dynamics, &setup.model, y, t1, &setup.filter)?
                } else {
                    baseline_pff_step(&initial, &setup.dynamics, &setup.model, y, t1, &setup.filter)?
                };
                let elapsed = clock.elapsed().as_secs_f64();
                if rep > 0 {
                    samples.push((elapsed, timing));
                }
            }
            rows.push(TimingRow {
                method,
                particles_per_dim: per_dim,
                n_particles: cfg.n_particles(),
                step: median(samples.iter().map(|s| s.0).collect()),
                propagate: median(samples.iter().map(|s| s.1.propagate).collect()),
                flow: median(samples.iter().map(|s| s.1.flow).collect()),
                evaluate: median(samples.iter().map(|s| s.1.evaluate).collect()),
            });
        }
    }
    let mut slopes = Vec::new();
    for method in ["da", "ode"] {
        let pts: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.method == method).map(|r| (r.n_particles as f64, r.step)).collect();
        if pts.len() >= 2 {
            slopes.push((method, loglog_slope(&pts)));
        }
    }
    Ok(TimingTable { rows, slopes })
}
