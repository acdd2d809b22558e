use nalgebra::DMatrix;

use super::lin_comb;
use crate::da::{Algebra, DaError};
use crate::daruff::DynamicsModel;
use crate::flow::MeasurementFunction;

/// `h(x) = H x`
#[derive(Debug, Clone)]
pub struct LinearMeasurement {
    pub h: DMatrix<f64>,
}

impl MeasurementFunction for LinearMeasurement {
    fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    fn meas_dim(&self) -> usize {
        self.h.nrows()
    }

    fn eval<A: Algebra>(&self, x: &[A]) -> Result<Vec<A>, DaError> {
        if x.len() != self.h.ncols() {
            return Err(DaError::Dimension { expected: self.h.ncols(), got: x.len() });
        }
        Ok((0..self.h.nrows()).map(|i| lin_comb(&self.h.row(i).iter().copied().collect::<Vec<_>>(), x)).collect())
    }
}

/// `ẋ = A x`
#[derive(Debug, Clone)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
}

impl DynamicsModel for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.ncols()
    }

    fn rhs<A: Algebra>(&self, _t: f64, x: &[A]) -> Result<Vec<A>, DaError> {
        Ok((0..self.a.nrows()).map(|i| lin_comb(&self.a.row(i).iter().copied().collect::<Vec<_>>(), x)).collect())
    }
}

/// `ẋ = 0`
#[derive(Debug, Clone, Copy)]
pub struct ZeroDynamics {
    pub dim: usize,
}

impl DynamicsModel for ZeroDynamics {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn rhs<A: Algebra>(&self, _t: f64, x: &[A]) -> Result<Vec<A>, DaError> {
        Ok(x.iter().map(|xi| xi.constant_like(0.0)).collect())
    }
}
