//! Scaled step processes, the step-function integral functional, Monte Carlo
//! convergence experiments against the limit diffusions, and growth-rate fits.

mod convergence;
mod growth;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use convergence::{
    run_convergence_experiment, ConvergenceConfig, ConvergenceReport, ConvergenceRow, DistanceTrend,
};
pub use growth::{growth_fit, GrowthFit, GrowthQuantity};

use crate::model::{Case, ModelError};
use crate::moments::MomentError;
use crate::sde::SdeError;
use crate::simulate::{SimulationError, Trajectory};

/// Times within this distance of a multiple of `1/n` snap to it in `floor(n t)`.
pub const STEP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("model is case {detected}, experiment requested case {expected}")]
    CaseMismatch { expected: Case, detected: Case },
    #[error("at least {minimum} replicas are required, got {got}")]
    InsufficientReplicas { minimum: u64, got: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty sample")]
    EmptySample,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

/// Scaling exponents `(e_1, e_2, e_3)` of the step process in each case.
pub fn exponents_for_case(case: Case) -> [u32; 3] {
    match case {
        Case::One => [1, 1, 1],
        Case::Two => [1, 1, 2],
        Case::Three => [1, 2, 2],
        Case::Four => [1, 2, 3],
    }
}

/// `floor(n t)`, snapping to the nearest integer when within [`STEP_TOLERANCE`].
pub fn step_index(n: u64, t: f64) -> u64 {
    let x = n as f64 * t;
    let r = x.round();
    if (x - r).abs() <= STEP_TOLERANCE {
        r as u64
    } else {
        x.floor() as u64
    }
}

/// `t -> (n^{-e_1} X_{floor(nt),1}, n^{-e_2} X_{floor(nt),2}, n^{-e_3} X_{floor(nt),3})`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledStepProcess<'a, 'm> {
    pub n: u64,
    pub exponents: [u32; 3],
    pub trajectory: &'a Trajectory<'m>,
}

impl<'a, 'm> ScaledStepProcess<'a, 'm> {
    pub fn new(trajectory: &'a Trajectory<'m>, n: u64, exponents: [u32; 3]) -> Result<Self, HarnessError> {
        if n == 0 {
            return Err(HarnessError::InvalidConfig("scale n must be positive".into()));
        }
        if trajectory.model.p() != 3 {
            return Err(HarnessError::InvalidConfig(format!(
                "scaled step processes need 3 types, model has {}",
                trajectory.model.p()
            )));
        }
        Ok(ScaledStepProcess { n, exponents, trajectory })
    }

    pub fn for_case(trajectory: &'a Trajectory<'m>, n: u64, case: Case) -> Result<Self, HarnessError> {
        ScaledStepProcess::new(trajectory, n, exponents_for_case(case))
    }

    /// Value at `t`; `None` beyond the simulated horizon.
    pub fn evaluate(&self, t: f64) -> Option<[f64; 3]> {
        let k = step_index(self.n, t);
        let x = self.trajectory.states.get(k as usize)?;
        let nf = self.n as f64;
        Some([0, 1, 2].map(|i| x[i] as f64 / nf.powi(self.exponents[i] as i32)))
    }

    /// `sup_{s <= t}` of coordinate `i` (0-based).
    pub fn sup(&self, i: usize, t: f64) -> Option<f64> {
        let k = step_index(self.n, t) as usize;
        let states = self.trajectory.states.get(..=k)?;
        let scale = (self.n as f64).powi(self.exponents[i] as i32);
        Some(states.iter().map(|x| x[i] as f64 / scale).fold(0.0, f64::max))
    }
}

/// Step-function values and integrals at `t` for `f(s) = values[floor(n s)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFunctional {
    /// `f(t)`.
    pub value: f64,
    /// `int_0^{floor(nt)/n} f`.
    pub integral: f64,
    /// `int_0^{floor(nt)/n} int_0^{floor(nr)/n} f`.
    pub double_integral: f64,
    /// `sum_{j < k} values[j]`, equal to `n` times `integral`.
    pub sum: f64,
    /// `sum_{j < k} sum_{h < j} values[h]`, equal to `n^2` times `double_integral`.
    pub double_sum: f64,
}

pub fn step_integral_functional(values: &[f64], n: u64, t: f64) -> Result<StepFunctional, HarnessError> {
    let k = step_index(n, t) as usize;
    let Some(&value) = values.get(k) else {
        return Err(HarnessError::InvalidConfig(format!(
            "t = {t} needs step {k} but only {} values are given",
            values.len()
        )));
    };
    let (mut sum, mut double_sum) = (0.0, 0.0);
    for &v in &values[..k] {
        double_sum += sum;
        sum += v;
    }
    let nf = n as f64;
    Ok(StepFunctional { value, integral: sum / nf, double_integral: double_sum / (nf * nf), sum, double_sum })
}
