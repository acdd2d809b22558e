use daflow::harness::{run_attitude_mc, run_toy, RunMethod, Scenario, ScenarioConfig};
use daflow::odeint::Method;
use nalgebra::{DMatrix, DVector};

fn toy(per_dim: usize, order: usize) -> ScenarioConfig {
    ScenarioConfig {
        scenario: Scenario::ToyRange,
        order,
        n_particles_per_dim: per_dim,
        flow_integrator: Method::Rk78Adaptive,
        seed: 11,
        ..ScenarioConfig::default()
    }
}

fn small_attitude(n_mc: usize) -> ScenarioConfig {
    ScenarioConfig { n_particles_per_dim: 5, n_mc, duration: 6.0, seed: 3, ..ScenarioConfig::default() }
}

#[test]
fn toy_shares_prior_particles_between_methods() {
    let res = run_toy(&toy(50, 4)).unwrap();
    assert_eq!(res.prior.len(), 100);
    let (da, ode) = (res.post_da.unwrap(), res.post_ode.unwrap());
    assert_eq!(da.len(), 100);
    // particles near the prior mean must agree closely
    let close = res
        .prior
        .iter()
        .zip(da.iter().zip(ode.iter()))
        .filter(|(x, _)| (x[0] + 3.5).hypot(x[1]) < 0.5)
        .map(|(_, (a, b))| (a[0] - b[0]).hypot(a[1] - b[1]))
        .fold(0.0, f64::max);
    assert!(close < 1e-4, "{close}");
}

#[test]
fn order_one_posterior_is_an_affine_image_of_the_prior() {
    let cfg = ScenarioConfig { method: RunMethod::Da, ..toy(100, 1) };
    let res = run_toy(&cfg).unwrap();
    let post = res.post_da.unwrap();
    // least-squares fit post ≈ [prior, 1] · M
    let n = res.prior.len();
    let a = DMatrix::from_fn(n, 3, |i, j| if j < 2 { res.prior.particle(i)[j] } else { 1.0 });
    for c in 0..2 {
        let b = DVector::from_fn(n, |i, _| post.particle(i)[c]);
        let m = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        let resid = (&a * m - &b).amax();
        assert!(resid < 1e-9, "component {c}: {resid}");
    }
}

#[test]
fn toy_is_deterministic_for_a_seed() {
    let a = run_toy(&toy(30, 3)).unwrap();
    let b = run_toy(&toy(30, 3)).unwrap();
    assert_eq!(a.post_da.unwrap().as_flat(), b.post_da.unwrap().as_flat());
    assert_eq!(a.post_ode.unwrap().as_flat(), b.post_ode.unwrap().as_flat());
    let c = run_toy(&ScenarioConfig { seed: 12, ..toy(30, 3) }).unwrap();
    assert_ne!(a.prior.as_flat(), c.prior.as_flat());
}

#[test]
fn toy_rejects_attitude_config() {
    assert!(run_toy(&ScenarioConfig::default()).is_err());
    assert!(run_attitude_mc(&toy(10, 2)).is_err());
}

#[test]
fn single_run_rmse_is_the_error_norm() {
    let s = run_attitude_mc(&small_attitude(1)).unwrap();
    assert_eq!(s.epochs, vec![2.0, 4.0, 6.0]);
    for m in [s.da.as_ref().unwrap(), s.ode.as_ref().unwrap()] {
        let run = &m.runs[0];
        for (k, e) in run.errors.iter().enumerate() {
            let norm = |r: std::ops::Range<usize>| e[r].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((m.xi_q[k] - norm(0..4)).abs() <= 1e-15 * norm(0..4).max(1.0));
            assert!((m.xi_omega[k] - norm(4..7)).abs() <= 1e-15);
            assert!((m.xi_bias[k] - norm(7..10)).abs() <= 1e-15);
        }
    }
}

#[test]
fn monte_carlo_is_deterministic_and_seeded_per_run() {
    let cfg = small_attitude(3);
    let a = run_attitude_mc(&cfg).unwrap();
    let b = run_attitude_mc(&cfg).unwrap();
    assert_eq!(a.seeds, vec![3, 4, 5]);
    let (da, db) = (a.da.unwrap(), b.da.unwrap());
    assert_eq!(da.xi_q, db.xi_q);
    assert_eq!(da.xi_bias, db.xi_bias);
    assert_eq!(da.runs[2].errors, db.runs[2].errors);
    assert_ne!(da.runs[0].errors, da.runs[1].errors);
    assert!(da.xi_q.iter().chain(&da.xi_omega).chain(&da.xi_bias).all(|v| *v >= 0.0));
    assert_eq!(da.xi_q.len(), a.epochs.len());
}

#[test]
fn method_selection_skips_the_other_filter() {
    let s = run_attitude_mc(&ScenarioConfig { method: RunMethod::Da, ..small_attitude(1) }).unwrap();
    assert!(s.da.is_some() && s.ode.is_none());
}
