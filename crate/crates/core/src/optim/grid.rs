use super::{CostError, OptimError, OptimizerTrace, Recorder, Termination};
use serde::{Deserialize, Serialize};

/// One axis of an exhaustive grid, endpoints inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub low: f64,
    pub high: f64,
    pub step: f64,
}

impl GridAxis {
    pub fn new(low: f64, high: f64, step: f64) -> Self {
        GridAxis { low, high, step }
    }

    /// The 0.6..=5.4 axis in steps of 0.1 (49 values).
    pub fn multiplier_study() -> Self {
        GridAxis::new(0.6, 5.4, 0.1)
    }

    fn validate(&self, index: usize) -> Result<(), OptimError> {
        let reason = if !(self.step > 0.0) || !self.step.is_finite() {
            "step must be positive"
        } else if !self.low.is_finite() || !self.high.is_finite() {
            "endpoints must be finite"
        } else if self.low > self.high {
            "low exceeds high"
        } else {
            return Ok(());
        };
        Err(OptimError::InvalidAxis {
            index,
            reason: reason.into(),
        })
    }

    /// Axis coordinates. Values are snapped to 1e-10 so decimal steps land
    /// on their decimal values (0.6 + 14 * 0.1 reads back as 2.0).
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.high - self.low) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = self.low + i as f64 * self.step;
                ((v * 1e10).round() / 1e10).min(self.high)
            })
            .collect()
    }
}

/// Result of an exhaustive scan: the axis coordinates plus a trace holding
/// every grid evaluation in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScan {
    pub axes: Vec<Vec<f64>>,
    pub trace: OptimizerTrace,
}

impl GridScan {
    pub fn len(&self) -> usize {
        self.trace.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.evaluations.is_empty()
    }
}

/// Evaluates the full Cartesian grid, first axis outermost. The argmin is
/// the lexicographically smallest point among ties.
pub fn grid_search<F>(cost: F, axes: &[GridAxis]) -> Result<GridScan, OptimError>
where
    F: FnMut(&[f64]) -> Result<f64, CostError>,
{
    if axes.is_empty() {
        return Err(OptimError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    for (i, a) in axes.iter().enumerate() {
        a.validate(i)?;
    }
    let values: Vec<Vec<f64>> = axes.iter().map(GridAxis::values).collect();
    let mut rec = Recorder::new(cost, usize::MAX);

    let mut index = vec![0usize; values.len()];
    loop {
        let point: Vec<f64> = index.iter().zip(&values).map(|(&i, v)| v[i]).collect();
        if let Err(e) = rec.eval(&point) {
            // budget is unbounded, so only cost failures reach here
            let trace = rec.fail(e, 0)?;
            return Ok(GridScan {
                axes: values,
                trace,
            });
        }
        // odometer increment, last axis fastest
        let mut axis = values.len();
        loop {
            if axis == 0 {
                return Ok(GridScan {
                    axes: values,
                    trace: rec.finish(1, Termination::Exhausted),
                });
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < values[axis].len() {
                break;
            }
            index[axis] = 0;
        }
    }
}
