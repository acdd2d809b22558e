//! CubeSat attitude: quaternion kinematics, Euler rigid-body dynamics, two
//! star trackers and a biased gyro.
//!
//! State layout is `[q_i, q_j, q_k, q_s, ω_x, ω_y, ω_z, b_x, b_y, b_z]`,
//! vector part of the quaternion first.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lin_comb;
use crate::da::{Algebra, DaError};
use crate::daruff::DynamicsModel;
use crate::error::{Error, Result};
use crate::flow::{MeasurementFunction, MeasurementModel};
use crate::odeint::{self, IntegratorSpec};

pub const STATE_DIM: usize = 10;
pub const MEAS_DIM: usize = 9;

/// Gyro noise standard deviation, 0.2°/s in rad/s.
pub const GYRO_SIGMA: f64 = 0.2 * std::f64::consts::PI / 180.0;
/// Star tracker noise standard deviation per component.
pub const STAR_SIGMA: f64 = 0.01;

/// Hamilton product, scalar-last: `(a_s b_v + b_s a_v + a_v × b_v, a_s b_s − a_v·b_v)`.
pub fn quat_mul<A: Algebra>(a: &[A], b: &[A]) -> [A; 4] {
    let (av, asc) = (&a[..3], &a[3]);
    let (bv, bsc) = (&b[..3], &b[3]);
    let cross = cross3(av, bv);
    let mut out: [A; 4] = std::array::from_fn(|i| {
        if i < 3 {
            asc.mul(&bv[i]).add(&bsc.mul(&av[i])).add(&cross[i])
        } else {
            asc.mul(bsc)
        }
    });
    for i in 0..3 {
        out[3] = out[3].sub(&av[i].mul(&bv[i]));
    }
    out
}

pub fn cross3<A: Algebra>(a: &[A], b: &[A]) -> [A; 3] {
    [
        a[1].mul(&b[2]).sub(&a[2].mul(&b[1])),
        a[2].mul(&b[0]).sub(&a[0].mul(&b[2])),
        a[0].mul(&b[1]).sub(&a[1].mul(&b[0])),
    ]
}

/// Direction cosine matrix `C(q)`, inertial to body.
pub fn dcm_from_quat<A: Algebra>(q: &[A]) -> [[A; 3]; 3] {
    let (qi, qj, qk, qs) = (&q[0], &q[1], &q[2], &q[3]);
    let sq = |a: &A| a.mul(a);
    let two = |a: &A, b: &A, c: &A, d: &A, sign: f64| a.mul(b).add(&c.mul(d).scale(sign)).scale(2.0);
    let (ss, ii, jj, kk) = (sq(qs), sq(qi), sq(qj), sq(qk));
    [
        [ss.add(&ii).sub(&jj).sub(&kk), two(qi, qj, qs, qk, 1.0), two(qi, qk, qs, qj, -1.0)],
        [two(qi, qj, qs, qk, -1.0), ss.sub(&ii).add(&jj).sub(&kk), two(qj, qk, qs, qi, 1.0)],
        [two(qi, qk, qs, qj, 1.0), two(qj, qk, qs, qi, -1.0), ss.sub(&ii).sub(&jj).add(&kk)],
    ]
}

/// Inertia and external torque.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidBodyParams {
    inertia: Matrix3<f64>,
    inertia_inv: Matrix3<f64>,
    pub torque: Vector3<f64>,
}

impl RigidBodyParams {
    pub fn new(inertia: Matrix3<f64>, torque: Vector3<f64>) -> Result<Self> {
        if (inertia - inertia.transpose()).amax() > 1e-12 * inertia.amax() {
            return Err(Error::NotPositiveDefinite("inertia"));
        }
        let chol = inertia.cholesky().ok_or(Error::NotPositiveDefinite("inertia"))?;
        Ok(RigidBodyParams { inertia, inertia_inv: chol.inverse(), torque })
    }

    /// `J = diag(100, 60, 50)` kg m², no external torque.
    pub fn paper_default() -> Self {
        RigidBodyParams::new(Matrix3::from_diagonal(&Vector3::new(100.0, 60.0, 50.0)), Vector3::zeros())
            .expect("diagonal inertia")
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }
}

/// `q̇ = ½ [ω; 0] ⊗ q`, `ω̇ = J⁻¹(m − ω × Jω)`, `ḃ = 0`.
#[derive(Debug, Clone)]
pub struct AttitudeDynamics {
    pub params: RigidBodyParams,
}

pub fn attitude_rhs<A: Algebra>(x: &[A], params: &RigidBodyParams) -> Result<Vec<A>, DaError> {
    if x.len() != STATE_DIM {
        return Err(DaError::Dimension { expected: STATE_DIM, got: x.len() });
    }
    let zero = x[0].constant_like(0.0);
    let w = &x[4..7];
    let wq = [w[0].clone(), w[1].clone(), w[2].clone(), zero.clone()];
    let qdot = quat_mul(&wq, &x[..4]);
    let row = |m: &Matrix3<f64>, i: usize| [m[(i, 0)], m[(i, 1)], m[(i, 2)]];
    let jw: Vec<A> = (0..3).map(|i| lin_comb(&row(&params.inertia, i), w)).collect();
    let gyro = cross3(w, &jw);
    let net: Vec<A> = (0..3).map(|i| gyro[i].neg().add_scalar(params.torque[i])).collect();
    let mut out: Vec<A> = qdot.iter().map(|v| v.scale(0.5)).collect();
    out.extend((0..3).map(|i| lin_comb(&row(&params.inertia_inv, i), &net)));
    out.extend(std::iter::repeat(zero).take(3));
    Ok(out)
}

/// Rescales the quaternion block to unit norm.
pub fn normalize_quaternion(x: &mut [f64]) {
    let norm = x[..4].iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x[..4].iter_mut().for_each(|v| *v /= norm);
    }
}

impl DynamicsModel for AttitudeDynamics {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn rhs<A: Algebra>(&self, _t: f64, x: &[A]) -> Result<Vec<A>, DaError> {
        attitude_rhs(x, &self.params)
    }

    fn project(&self, x: &mut [f64]) {
        normalize_quaternion(x);
    }
}

/// Inertial unit vectors of the two tracked stars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarCatalog {
    pub r1: [f64; 3],
    pub r2: [f64; 3],
}

impl StarCatalog {
    pub fn from_raw(r1: [f64; 3], r2: [f64; 3]) -> Result<Self> {
        let unit = |r: [f64; 3]| -> Result<[f64; 3]> {
            let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Invalid("star vector must be nonzero".into()));
            }
            Ok([r[0] / n, r[1] / n, r[2] / n])
        };
        Ok(StarCatalog { r1: unit(r1)?, r2: unit(r2)? })
    }

    /// `[5, 2, 3]` and `[1, 10, 4]`, normalized.
    pub fn paper_default() -> Self {
        StarCatalog::from_raw([5.0, 2.0, 3.0], [1.0, 10.0, 4.0]).expect("nonzero")
    }
}

/// `C(q) r`
pub fn star_tracker_h<A: Algebra>(x: &[A], r: &[f64; 3]) -> [A; 3] {
    let c = dcm_from_quat(&x[..4]);
    std::array::from_fn(|i| lin_comb(r, &c[i]))
}

/// `ω + b`
pub fn gyro_h<A: Algebra>(x: &[A]) -> [A; 3] {
    std::array::from_fn(|i| x[4 + i].add(&x[7 + i]))
}

/// `[C(q) r₁; C(q) r₂; ω + b]`
#[derive(Debug, Clone, Copy)]
pub struct AttitudeMeasurement {
    pub catalog: StarCatalog,
}

impl MeasurementFunction for AttitudeMeasurement {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn meas_dim(&self) -> usize {
        MEAS_DIM
    }

    fn eval<A: Algebra>(&self, x: &[A]) -> Result<Vec<A>, DaError> {
        if x.len() != STATE_DIM {
            return Err(DaError::Dimension { expected: STATE_DIM, got: x.len() });
        }
        let c = dcm_from_quat(&x[..4]);
        let mut out = Vec::with_capacity(MEAS_DIM);
        for r in [&self.catalog.r1, &self.catalog.r2] {
            out.extend((0..3).map(|i| lin_comb(r, &c[i])));
        }
        out.extend(gyro_h(x));
        Ok(out)
    }
}

/// Stacked model with `R = blkdiag(σ_s² I₃, σ_s² I₃, σ_g² I₃)`.
pub fn stacked_measurement(
    catalog: StarCatalog,
    star_sigma: f64,
    gyro_sigma: f64,
) -> Result<MeasurementModel<AttitudeMeasurement>> {
    let mut diag = vec![star_sigma * star_sigma; 6];
    diag.extend([gyro_sigma * gyro_sigma; 3]);
    MeasurementModel::new(AttitudeMeasurement { catalog }, DMatrix::from_diagonal(&DVector::from_vec(diag)))
}

/// `q₀ = ½[1,1,1,1]`, `ω₀ = (10π/180)[1,2,3]/‖[1,2,3]‖`, `b₀ = 0`.
pub fn paper_initial_state() -> [f64; STATE_DIM] {
    let w = 10.0 * std::f64::consts::PI / 180.0 / 14f64.sqrt();
    [0.5, 0.5, 0.5, 0.5, w, 2.0 * w, 3.0 * w, 0.0, 0.0, 0.0]
}

/// Truth states and measurements at each epoch `meas_period, 2·meas_period, …`.
#[derive(Debug, Clone)]
pub struct TruthRun {
    pub epochs: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub measurements: Vec<Vec<f64>>,
}

/// Propagates the truth with fixed-step rk4 and samples noisy measurements.
///
/// `seed = None` produces noise-free measurements.
pub fn simulate_truth<H: MeasurementFunction>(
    x0: &[f64],
    dynamics: &AttitudeDynamics,
    model: &MeasurementModel<H>,
    duration: f64,
    dt: f64,
    meas_period: f64,
    seed: Option<u64>,
) -> Result<TruthRun> {
    if x0.len() != STATE_DIM {
        return Err(Error::Dimension { what: "initial state", expected: STATE_DIM, got: x0.len() });
    }
    let ratio = meas_period / dt;
    if !(dt > 0.0 && meas_period > 0.0 && duration >= meas_period) || (ratio - ratio.round()).abs() > 1e-9 * ratio {
        return Err(Error::Invalid(format!(
            "measurement period {meas_period} must be a positive multiple of dt {dt} not exceeding duration {duration}"
        )));
    }
    let count = (duration / meas_period + 1e-9).floor() as usize;
    let noise_factor = model.noise_cov().clone().cholesky().ok_or(Error::NotPositiveDefinite("noise"))?.l();
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let spec = IntegratorSpec::rk4(dt);
    let mut x = x0.to_vec();
    let mut run = TruthRun { epochs: Vec::new(), states: Vec::new(), measurements: Vec::new() };
    for k in 0..count {
        let (t0, t1) = (k as f64 * meas_period, (k + 1) as f64 * meas_period);
        x = odeint::integrate(|t, s: &[f64]| dynamics.rhs(t, s).map_err(Error::from), &x, t0, t1, &spec)?;
        let mut y = model.eval(&x)?;
        if let Some(rng) = rng.as_mut() {
            let z = DVector::from_fn(y.len(), |_, _| StandardNormal.sample(rng));
            y += &noise_factor * z;
        }
        run.epochs.push(t1);
        run.states.push(x.clone());
        run.measurements.push(y.iter().copied().collect());
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn q_norm(q: &[f64]) -> f64 {
        q[..4].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn quaternion_identities() {
        let id = [0.0, 0.0, 0.0, 1.0];
        let q = [0.1, -0.3, 0.5, 0.8];
        assert_eq!(quat_mul(&id, &q), q);
        assert_eq!(quat_mul(&[1.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]), [0.0, 0.0, 0.0, -1.0]);
        // i j = k for the Hamilton product
        assert_eq!(quat_mul(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]), [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn quaternion_norm_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let p = quat_mul(&a, &b);
            assert!((q_norm(&p) - q_norm(&a) * q_norm(&b)).abs() < 1e-12);
        }
    }

    #[test]
    fn dcm_examples() {
        let c = dcm_from_quat(&[0.0, 0.0, 0.0, 1.0]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(c[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = dcm_from_quat(&[0.0, 0.0, h, h]);
        let col0 = [c[0][0], c[1][0], c[2][0]];
        assert!(col0[0].abs() < 1e-15 && (col0[1] + 1.0).abs() < 1e-15 && col0[2].abs() < 1e-15);
    }

    #[test]
    fn dcm_is_a_rotation_for_unit_quaternions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut q: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            normalize_quaternion(&mut q);
            let c = dcm_from_quat(&q);
            let m = Matrix3::from_fn(|i, j| c[i][j]);
            assert!((m.transpose() * m - Matrix3::identity()).amax() < 1e-12);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kinematics_preserve_norm_to_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = RigidBodyParams::paper_default();
        for _ in 0..100 {
            let x: Vec<f64> = (0..STATE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = attitude_rhs(&x, &params).unwrap();
            let dot: f64 = (0..4).map(|i| x[i] * d[i]).sum();
            assert!(dot.abs() < 1e-15);
        }
    }

    #[test]
    fn euler_equation_at_paper_initial_condition() {
        let x = paper_initial_state();
        let d = attitude_rhs(&x, &RigidBodyParams::paper_default()).unwrap();
        let (w1, w2, w3) = (x[4], x[5], x[6]);
        // J⁻¹(−ω × Jω) written out for J = diag(100, 60, 50)
        let expected = [(60.0 - 50.0) * w2 * w3 / 100.0, (50.0 - 100.0) * w3 * w1 / 60.0, (100.0 - 60.0) * w1 * w2 / 50.0];
        for i in 0..3 {
            assert!((d[4 + i] - expected[i]).abs() < 1e-14 * expected[i].abs());
        }
        assert_eq!(&d[7..], &[0.0; 3]);
    }

    #[test]
    fn principal_axis_spin_is_steady() {
        let x = [0.5, 0.5, 0.5, 0.5, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0];
        let d = attitude_rhs(&x, &RigidBodyParams::paper_default()).unwrap();
        assert_eq!(&d[4..7], &[0.0; 3]);
        let rest = [0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(attitude_rhs(&rest, &RigidBodyParams::paper_default()).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sensors() {
        let catalog = StarCatalog::paper_default();
        let s38 = 38f64.sqrt();
        assert!((catalog.r1[0] - 5.0 / s38).abs() < 1e-15);
        assert!((catalog.r1[0] - 0.81111).abs() < 1e-5 && (catalog.r1[1] - 0.32444).abs() < 1e-5);
        let mut x = [0.0; STATE_DIM];
        x[3] = 1.0;
        assert_eq!(star_tracker_h(&x, &catalog.r2), catalog.r2);
        x[4] = 0.2;
        x[7] = 0.01;
        assert_eq!(gyro_h(&x), [0.2 + 0.01, 0.0, 0.0]);
        assert!((GYRO_SIGMA - 3.4907e-3).abs() < 1e-7);
        let model = stacked_measurement(catalog, STAR_SIGMA, GYRO_SIGMA).unwrap();
        assert_eq!(model.meas_dim(), 9);
        let r = model.noise_cov();
        for i in 0..9 {
            for j in 0..9 {
                let want = if i != j { 0.0 } else if i < 6 { 1e-4 } else { GYRO_SIGMA * GYRO_SIGMA };
                assert_eq!(r[(i, j)], want);
            }
        }
        let y = model.eval(&paper_initial_state()).unwrap();
        assert!((y.rows(0, 3).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn noise_free_truth_reproduces_the_model() {
        let dynamics = AttitudeDynamics { params: RigidBodyParams::paper_default() };
        let model = stacked_measurement(StarCatalog::paper_default(), STAR_SIGMA, GYRO_SIGMA).unwrap();
        let run = simulate_truth(&paper_initial_state(), &dynamics, &model, 120.0, 0.01, 2.0, None).unwrap();
        assert_eq!(run.epochs.len(), 60);
        assert!((run.epochs[59] - 120.0).abs() < 1e-12);
        for (x, y) in run.states.iter().zip(&run.measurements) {
            assert_eq!(model.eval(x).unwrap().as_slice(), y.as_slice());
            assert!((q_norm(x) - 1.0).abs() < 1e-9);
        }
        let j = RigidBodyParams::paper_default();
        let energy = |x: &[f64]| {
            let w = Vector3::new(x[4], x[5], x[6]);
            0.5 * w.dot(&(j.inertia() * w))
        };
        let e0 = energy(&paper_initial_state());
        assert!((energy(run.states.last().unwrap()) - e0).abs() < 1e-10 * e0);
    }

    #[test]
    fn truth_rejects_incommensurate_periods() {
        let dynamics = AttitudeDynamics { params: RigidBodyParams::paper_default() };
        let model = stacked_measurement(StarCatalog::paper_default(), STAR_SIGMA, GYRO_SIGMA).unwrap();
        assert!(simulate_truth(&paper_initial_state(), &dynamics, &model, 10.0, 0.03, 2.0, Some(1)).is_err());
    }
}
