use nalgebra::{DMatrix, DVector};

use crate::da::{Algebra, DaError};
use crate::error::Result;
use crate::flow::{GaussianBelief, MeasurementFunction, MeasurementModel};

/// `y = ‖x‖` in the plane.
#[derive(Debug, Clone, Copy, Default)]
pub struct RangeMeasurement;

impl MeasurementFunction for RangeMeasurement {
    fn state_dim(&self) -> usize {
        2
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn eval<A: Algebra>(&self, x: &[A]) -> Result<Vec<A>, DaError> {
        if x.len() != 2 {
            return Err(DaError::Dimension { expected: 2, got: x.len() });
        }
        let r2 = x[0].mul(&x[0]).add(&x[1].mul(&x[1]));
        Ok(vec![r2.sqrt()?])
    }
}

/// `‖x‖` for a real point.
pub fn range_h(x: &[f64]) -> f64 {
    x[0].hypot(x[1])
}

/// Prior, noise and the received measurement of the planar range example.
#[derive(Debug, Clone)]
pub struct RangeProblem {
    pub prior: GaussianBelief,
    pub noise_var: f64,
    pub y: f64,
}

impl RangeProblem {
    /// Prior `N([−3.5, 0], [[1, .5], [.5, 1]])`, `R = 0.01`, `y = 1`.
    pub fn paper_default() -> Self {
        RangeProblem {
            prior: GaussianBelief {
                mean: DVector::from_vec(vec![-3.5, 0.0]),
                cov: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
            },
            noise_var: 0.01,
            y: 1.0,
        }
    }

    pub fn model(&self) -> Result<MeasurementModel<RangeMeasurement>> {
        MeasurementModel::new(RangeMeasurement, DMatrix::from_element(1, 1, self.noise_var))
    }
}
