//! Differential-algebra particle flow filtering.
//!
//! [`da`] provides truncated Taylor polynomial arithmetic, [`odeint`] the
//! Runge-Kutta integrators that run over it, [`flow`] the pseudo-time
//! measurement update, [`daruff`] the filter built from their composition,
//! [`models`] the range and attitude testbeds and [`harness`] the experiment
//! runner behind the `daflow` binary.

pub mod da;
pub mod daruff;
mod error;
pub mod flow;
pub mod harness;
pub mod models;
pub mod odeint;

pub use error::{Error, Result};
