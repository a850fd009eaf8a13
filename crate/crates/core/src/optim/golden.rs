use super::{Bounds, CostError, OptimError, OptimizerConfig, OptimizerTrace, Recorder, Termination};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on a bounded interval.
///
/// Same contract as [`brent_minimize`](super::brent_minimize): both bounds
/// are evaluated, then the bracket shrinks by the golden ratio per step
/// until it is no wider than `x_tolerance`.
pub fn golden_section<F>(
    mut cost: F,
    bounds: Bounds,
    cfg: &OptimizerConfig,
) -> Result<OptimizerTrace, OptimError>
where
    F: FnMut(f64) -> Result<f64, CostError>,
{
    cfg.validate()?;
    let mut rec = Recorder::new(|p: &[f64]| cost(p[0]), cfg.max_cost_evals);

    let (mut a, mut b) = (bounds.low(), bounds.high());
    for end in [a, b] {
        if let Err(e) = rec.eval(&[end]) {
            return rec.fail(e, 0);
        }
    }

    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = match rec.eval(&[c]) {
        Ok(v) => v,
        Err(e) => return rec.fail(e, 0),
    };
    let mut fd = match rec.eval(&[d]) {
        Ok(v) => v,
        Err(e) => return rec.fail(e, 0),
    };

    for iter in 0..cfg.max_iterations {
        if b - a <= cfg.x_tolerance {
            return Ok(rec.finish(iter, Termination::Converged));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = match rec.eval(&[c]) {
                Ok(v) => v,
                Err(e) => return rec.fail(e, iter),
            };
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = match rec.eval(&[d]) {
                Ok(v) => v,
                Err(e) => return rec.fail(e, iter),
            };
        }
    }
    let termination = if b - a <= cfg.x_tolerance {
        Termination::Converged
    } else {
        Termination::MaxIterations
    };
    Ok(rec.finish(cfg.max_iterations, termination))
}
