use super::brent::brent_core;
use super::{
    Bounds, CostError, EvalError, OptimError, OptimizerConfig, OptimizerTrace, Recorder,
    Termination,
};

/// Line searches are this much looser than the outer x tolerance.
const LINE_TOLERANCE_FACTOR: f64 = 10.0;
/// Iteration cap for a single line search, independent of the outer cap.
const LINE_MAX_ITERATIONS: usize = 100;

/// Powell's conjugate-direction method with box bounds.
///
/// Each outer iteration runs one bounded Brent line search per direction,
/// starting from the current point. Line-search intervals are the part of
/// the search ray that stays inside the box. After the sweep the direction
/// with the largest decrease is swapped for the net displacement when the
/// usual extrapolation test says it is worth it.
///
/// Stops when one iteration lowers the cost by no more than `f_tolerance`
/// or moves the point by no more than `x_tolerance`. With
/// `max_iterations = 1` this is the single-sweep early stop.
pub fn powell_minimize<F>(
    cost: F,
    start: &[f64],
    bounds: &[Bounds],
    cfg: &OptimizerConfig,
) -> Result<OptimizerTrace, OptimError>
where
    F: FnMut(&[f64]) -> Result<f64, CostError>,
{
    cfg.validate()?;
    let n = start.len();
    if n == 0 || bounds.len() != n {
        return Err(OptimError::DimensionMismatch {
            expected: bounds.len(),
            found: n,
        });
    }
    for (index, (&value, b)) in start.iter().zip(bounds).enumerate() {
        if !b.contains(value) {
            return Err(OptimError::StartOutOfBounds { index, value });
        }
    }

    let mut rec = Recorder::new(cost, cfg.max_cost_evals);
    let mut x = start.to_vec();
    let mut fx = match rec.eval(&x) {
        Ok(v) => v,
        Err(e) => return rec.fail(e, 0),
    };

    let mut directions: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let line_tol = LINE_TOLERANCE_FACTOR * cfg.x_tolerance;

    for iter in 1..=cfg.max_iterations {
        let (x_start, f_start) = (x.clone(), fx);
        let mut biggest_drop = 0.0;
        let mut biggest_index = 0;

        for (i, dir) in directions.iter().enumerate() {
            let before = fx;
            match line_minimize(&mut rec, &x, fx, dir, bounds, line_tol) {
                Ok((nx, nf)) => {
                    x = nx;
                    fx = nf;
                }
                Err(e) => return rec.fail(e, iter),
            }
            if before - fx > biggest_drop {
                biggest_drop = before - fx;
                biggest_index = i;
            }
        }

        let moved = distance(&x, &x_start);
        if f_start - fx <= cfg.f_tolerance || moved <= cfg.x_tolerance {
            return Ok(rec.finish(iter, Termination::Converged));
        }

        let displacement: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let extrapolated: Vec<f64> = x
            .iter()
            .zip(&displacement)
            .zip(bounds)
            .map(|((xi, di), b)| b.clamp(xi + di))
            .collect();
        let f_ext = match rec.eval(&extrapolated) {
            Ok(v) => v,
            Err(e) => return rec.fail(e, iter),
        };
        if f_ext < f_start {
            let t = 2.0 * (f_start - 2.0 * fx + f_ext) * (f_start - fx - biggest_drop).powi(2)
                - biggest_drop * (f_start - f_ext).powi(2);
            if t < 0.0 {
                match line_minimize(&mut rec, &x, fx, &displacement, bounds, line_tol) {
                    Ok((nx, nf)) => {
                        x = nx;
                        fx = nf;
                    }
                    Err(e) => return rec.fail(e, iter),
                }
                directions[biggest_index] = directions[n - 1].clone();
                directions[n - 1] = displacement;
            }
        }
    }

    Ok(rec.finish(cfg.max_iterations, Termination::MaxIterations))
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimises along `dir` from `x` (cost `fx`) within the box; never returns
/// a worse point than the start.
fn line_minimize<F>(
    rec: &mut Recorder<F>,
    x: &[f64],
    fx: f64,
    dir: &[f64],
    bounds: &[Bounds],
    tol: f64,
) -> Result<(Vec<f64>, f64), EvalError>
where
    F: FnMut(&[f64]) -> Result<f64, CostError>,
{
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((x.to_vec(), fx));
    }
    let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ((&xi, &di), b) in x.iter().zip(dir).zip(bounds) {
        if di == 0.0 {
            continue;
        }
        let (t1, t2) = ((b.low() - xi) / di, (b.high() - xi) / di);
        t_lo = t_lo.max(t1.min(t2));
        t_hi = t_hi.min(t1.max(t2));
    }
    // Keep t = 0 inside the interval despite rounding.
    t_lo = t_lo.min(0.0);
    t_hi = t_hi.max(0.0);
    if t_hi - t_lo <= tol / norm {
        return Ok((x.to_vec(), fx));
    }

    let point_at = |t: f64| -> Vec<f64> {
        x.iter()
            .zip(dir)
            .zip(bounds)
            .map(|((xi, di), b)| b.clamp(xi + t * di))
            .collect()
    };
    let outcome = {
        let mut eval = |t: f64| rec.eval(&point_at(t));
        brent_core(
            &mut eval,
            t_lo,
            t_hi,
            Some((0.0, fx)),
            tol / norm,
            LINE_MAX_ITERATIONS,
        )?
    };
    if outcome.fx < fx {
        Ok((point_at(outcome.x), outcome.fx))
    } else {
        Ok((x.to_vec(), fx))
    }
}
