use std::fs;
use std::path::Path;

use super::{MCSummary, TimingTable, ToyResult};
use crate::error::Result;

/// 17 significant digits.
pub(crate) fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    fs::create_dir_all(dir)?;
    Ok(csv::Writer::from_path(dir.join(name))?)
}

/// `particles.csv`, `summary.csv` and, when a sweep ran, `order_sweep.csv`.
pub fn write_toy_csv(result: &ToyResult, dir: &Path) -> Result<()> {
    let mut w = writer(dir, "particles.csv")?;
    w.write_record(["particle_id", "x0_prior", "x1_prior", "x0_post_da", "x1_post_da", "x0_post_ode", "x1_post_ode"])?;
    for (i, x) in result.prior.iter().enumerate() {
        let da = result.post_da.as_ref().map(|e| e.particle(i));
        let ode = result.post_ode.as_ref().map(|e| e.particle(i));
        w.write_record([
            i.to_string(),
            num(x[0]),
            num(x[1]),
            opt(da.map(|p| p[0])),
            opt(da.map(|p| p[1])),
            opt(ode.map(|p| p[0])),
            opt(ode.map(|p| p[1])),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "summary.csv")?;
    w.write_record(["order", "n_particles", "seed", "rms_discrepancy", "ring_fraction_da", "ring_fraction_ode", "seconds_da", "seconds_ode"])?;
    w.write_record([
        result.order.to_string(),
        result.prior.len().to_string(),
        result.seed.to_string(),
        opt(result.rms_discrepancy),
        opt(result.ring_fraction_da),
        opt(result.ring_fraction_ode),
        opt(result.seconds_da),
        opt(result.seconds_ode),
    ])?;
    w.flush()?;

    if !result.sweep.is_empty() {
        let mut w = writer(dir, "order_sweep.csv")?;
        w.write_record(["order", "rms_discrepancy"])?;
        for (k, rms) in &result.sweep {
            w.write_record([k.to_string(), num(*rms)])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// `rmse.csv` (one row per measurement epoch), `errors.csv`, `summary.csv` and `seeds.csv`.
pub fn write_attitude_csv(summary: &MCSummary, dir: &Path) -> Result<()> {
    let methods = [("da", summary.da.as_ref()), ("ode", summary.ode.as_ref())];

    let mut w = writer(dir, "rmse.csv")?;
    w.write_record(["step", "time", "xi_q_da", "xi_omega_da", "xi_bias_da", "xi_q_ode", "xi_omega_ode", "xi_bias_ode"])?;
    for (k, t) in summary.epochs.iter().enumerate() {
        let mut row = vec![(k + 1).to_string(), num(*t)];
        for (_, m) in methods {
            if let Some(m) = m {
                row.extend([&m.xi_q, &m.xi_omega, &m.xi_bias].map(|s| num(s[k])));
            } else {
                row.extend(std::iter::repeat(String::new()).take(3));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = writer(dir, "errors.csv")?;
    let mut header = vec!["method".to_string(), "run".into(), "seed".into(), "step".into(), "time".into()];
    header.extend((0..10).map(|i| format!("err_{i}")));
    header.extend((0..10).map(|i| format!("sigma_{i}")));
    w.write_record(&header)?;
    for (name, m) in methods {
        let Some(m) = m else { continue };
        for run in &m.runs {
            for (k, (err, sig)) in run.errors.iter().zip(&run.sigmas).enumerate() {
                let mut row = vec![name.to_string(), run.run.to_string(), run.seed.to_string(), (k + 1).to_string()];
                row.push(num(summary.epochs[k]));
                row.extend(err.iter().map(|v| num(*v)));
                row.extend(sig.iter().map(|v| num(*v)));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;

    let mut w = writer(dir, "summary.csv")?;
    w.write_record([
        "method",
        "runs",
        "diverged_runs",
        "mean_xi_q",
        "mean_xi_omega",
        "mean_xi_bias",
        "final_xi_bias",
        "coverage_3sigma",
        "mean_step_seconds",
        "mean_propagate_seconds",
        "mean_flow_seconds",
        "mean_evaluate_seconds",
    ])?;
    for (name, m) in methods {
        let Some(m) = m else { continue };
        let t = m.mean_timings;
        w.write_record([
            name.to_string(),
            m.runs.len().to_string(),
            m.diverged.len().to_string(),
            num(m.mean_xi_q()),
            num(m.mean_xi_omega()),
            num(m.mean_xi_bias()),
            opt(m.xi_bias.last().copied()),
            num(m.coverage),
            num(t.total()),
            num(t.propagate),
            num(t.flow),
            num(t.evaluate),
        ])?;
    }
    w.flush()?;

    let mut w = writer(dir, "seeds.csv")?;
    w.write_record(["run", "seed"])?;
    for (i, s) in summary.seeds.iter().enumerate() {
        w.write_record([i.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `timing.csv` (one row per method and ensemble size) and `slopes.csv`.
pub fn write_timing_csv(table: &TimingTable, dir: &Path) -> Result<()> {
    let mut w = writer(dir, "timing.csv")?;
    w.write_record([
        "method",
        "particles_per_dim",
        "n_particles",
        "median_step_seconds",
        "median_propagate_seconds",
        "median_flow_seconds",
        "median_evaluate_seconds",
    ])?;
    for r in &table.rows {
        w.write_record([
            r.method.to_string(),
            r.particles_per_dim.to_string(),
            r.n_particles.to_string(),
            num(r.step),
            num(r.propagate),
            num(r.flow),
            num(r.evaluate),
        ])?;
    }
    w.flush()?;
    let mut w = writer(dir, "slopes.csv")?;
    w.write_record(["method", "loglog_slope"])?;
    for (m, s) in &table.slopes {
        w.write_record([m.to_string(), num(*s)])?;
    }
    w.flush()?;
    Ok(())
}
