//! Derivative-free minimisers over an opaque, possibly failing, cost.
//!
//! Every minimiser records each evaluation it makes, so the returned
//! [`OptimizerTrace`] doubles as the search path for contour plots.

mod brent;
mod golden;
mod grid;
mod powell;

pub use brent::brent_minimize;
pub use golden::golden_section;
pub use grid::{grid_search, GridAxis, GridScan};
pub use powell::powell_minimize;

use serde::{Deserialize, Serialize};
use std::error::Error as StdError;
use thiserror::Error;

/// Error type a cost callable may return.
pub type CostError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid bounds [{low}, {high}]")]
    InvalidBounds { low: f64, high: f64 },
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("start point component {index} = {value} lies outside its bounds")]
    StartOutOfBounds { index: usize, value: f64 },
    #[error("invalid grid axis {index}: {reason}")]
    InvalidAxis { index: usize, reason: String },
    #[error("cost evaluation failed at {point:?}: {source}")]
    CostFailure {
        point: Vec<f64>,
        #[source]
        source: CostError,
        /// Everything evaluated before the failure.
        trace: Box<OptimizerTrace>,
    },
}

/// Closed search interval for one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Bounds {
    low: f64,
    high: f64,
}

impl Bounds {
    pub fn new(low: f64, high: f64) -> Result<Self, OptimError> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(OptimError::InvalidBounds { low, high });
        }
        Ok(Bounds { low, high })
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.low && x <= self.high
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.low, self.high)
    }
}

impl TryFrom<(f64, f64)> for Bounds {
    type Error = OptimError;

    fn try_from((low, high): (f64, f64)) -> Result<Self, Self::Error> {
        Bounds::new(low, high)
    }
}

impl From<Bounds> for (f64, f64) {
    fn from(b: Bounds) -> Self {
        (b.low, b.high)
    }
}

/// Stopping rules shared by all minimisers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Absolute tolerance on the argument.
    pub x_tolerance: f64,
    /// Absolute tolerance on the per-iteration cost decrease.
    pub f_tolerance: f64,
    pub max_iterations: usize,
    pub max_cost_evals: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            x_tolerance: 1e-3,
            f_tolerance: 1e-4,
            max_iterations: 100,
            max_cost_evals: 200,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.x_tolerance > 0.0) {
            return Err(OptimError::InvalidConfig("x_tolerance must be > 0".into()));
        }
        if !(self.f_tolerance >= 0.0) {
            return Err(OptimError::InvalidConfig("f_tolerance must be >= 0".into()));
        }
        if self.max_iterations == 0 || self.max_cost_evals == 0 {
            return Err(OptimError::InvalidConfig(
                "max_iterations and max_cost_evals must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Why a minimiser stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    EvalBudgetExhausted,
    /// Exhaustive search finished.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub point: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerTrace {
    pub evaluations: Vec<Evaluation>,
    pub iterations_used: usize,
    pub converged: bool,
    pub termination: Termination,
    pub best_point: Vec<f64>,
    pub best_cost: f64,
}

impl OptimizerTrace {
    pub fn cost_evals(&self) -> usize {
        self.evaluations.len()
    }
}

// Signals that the evaluation budget ran out before the cost was called.
pub(crate) struct BudgetExhausted;

pub(crate) enum EvalError {
    Budget(BudgetExhausted),
    Cost(Vec<f64>, CostError),
}

/// Wraps the user cost: counts calls, enforces the budget, records every
/// evaluation and keeps the running best (first-seen wins ties).
pub(crate) struct Recorder<F> {
    cost: F,
    budget: usize,
    evaluations: Vec<Evaluation>,
    best: Option<(Vec<f64>, f64)>,
}

impl<F> Recorder<F>
where
    F: FnMut(&[f64]) -> Result<f64, CostError>,
{
    pub(crate) fn new(cost: F, budget: usize) -> Self {
        Recorder {
            cost,
            budget,
            evaluations: Vec::new(),
            best: None,
        }
    }

    pub(crate) fn eval(&mut self, point: &[f64]) -> Result<f64, EvalError> {
        if self.evaluations.len() >= self.budget {
            return Err(EvalError::Budget(BudgetExhausted));
        }
        let value = match (self.cost)(point) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                return Err(EvalError::Cost(
                    point.to_vec(),
                    format!("cost returned non-finite value {v}").into(),
                ))
            }
            Err(e) => return Err(EvalError::Cost(point.to_vec(), e)),
        };
        self.evaluations.push(Evaluation {
            point: point.to_vec(),
            cost: value,
        });
        if self.best.as_ref().map_or(true, |(_, b)| value < *b) {
            self.best = Some((point.to_vec(), value));
        }
        Ok(value)
    }

    pub(crate) fn evals(&self) -> usize {
        self.evaluations.len()
    }

    pub(crate) fn finish(
        self,
        iterations_used: usize,
        termination: Termination,
    ) -> OptimizerTrace {
        let (best_point, best_cost) = self.best.unwrap_or((Vec::new(), f64::INFINITY));
        OptimizerTrace {
            evaluations: self.evaluations,
            iterations_used,
            converged: termination == Termination::Converged || termination == Termination::Exhausted,
            termination,
            best_point,
            best_cost,
        }
    }

    /// Turns an evaluation error into the public result: a budget stop is a
    /// normal (unconverged) return, a cost error carries the partial trace.
    pub(crate) fn fail(
        self,
        err: EvalError,
        iterations_used: usize,
    ) -> Result<OptimizerTrace, OptimError> {
        match err {
            EvalError::Budget(_) => Ok(self.finish(iterations_used, Termination::EvalBudgetExhausted)),
            EvalError::Cost(point, source) => Err(OptimError::CostFailure {
                point,
                source,
                trace: Box::new(self.finish(iterations_used, Termination::MaxIterations)),
            }),
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::CostError;

    pub fn ok<F: FnMut(f64) -> f64>(mut f: F) -> impl FnMut(f64) -> Result<f64, CostError> {
        move |x| Ok(f(x))
    }

    pub fn ok_n<F: FnMut(&[f64]) -> f64>(
        mut f: F,
    ) -> impl FnMut(&[f64]) -> Result<f64, CostError> {
        move |x| Ok(f(x))
    }
}
