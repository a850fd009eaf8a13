use super::{Bounds, CostError, EvalError, OptimError, OptimizerConfig, OptimizerTrace, Recorder, Termination};

const GOLDEN: f64 = 0.381_966_011_250_105_1;

pub(crate) struct LineOutcome {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Brent's parabolic/golden minimiser on `[lo, hi]`.
///
/// `start` seeds the search with an already evaluated interior point;
/// otherwise the first probe sits at the golden section of the interval.
/// Converges once the bracket is no wider than `tol` (plus a few ulps of
/// `x`, so a zero tolerance still terminates).
pub(crate) fn brent_core<G>(
    eval: &mut G,
    lo: f64,
    hi: f64,
    start: Option<(f64, f64)>,
    tol: f64,
    max_iter: usize,
) -> Result<LineOutcome, EvalError>
where
    G: FnMut(f64) -> Result<f64, EvalError>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut x, mut fx) = match start {
        Some(s) => s,
        None => {
            let x = a + GOLDEN * (b - a);
            (x, eval(x)?)
        }
    };
    let (mut w, mut fw) = (x, fx);
    let (mut v, mut fv) = (x, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = 0.25 * tol + 4.0 * f64::EPSILON * x.abs();
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok(LineOutcome {
                x,
                fx,
                iterations: iter,
                converged: true,
            });
        }

        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(m - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }

        let step = if d.abs() >= tol1 { d } else { tol1.copysign(d) };
        let u = (x + step).clamp(lo, hi);
        let fu = eval(u)?;

        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    Ok(LineOutcome {
        x,
        fx,
        iterations: max_iter,
        converged: false,
    })
}

/// Bounded Brent minimisation of a scalar cost.
///
/// Both bounds are evaluated before the interior search, so the best
/// reported cost never exceeds the cost at either end of the interval.
pub fn brent_minimize<F>(
    mut cost: F,
    bounds: Bounds,
    cfg: &OptimizerConfig,
) -> Result<OptimizerTrace, OptimError>
where
    F: FnMut(f64) -> Result<f64, CostError>,
{
    cfg.validate()?;
    let mut rec = Recorder::new(|p: &[f64]| cost(p[0]), cfg.max_cost_evals);

    for end in [bounds.low(), bounds.high()] {
        if let Err(e) = rec.eval(&[end]) {
            return rec.fail(e, 0);
        }
    }

    let outcome = {
        let mut eval = |x: f64| rec.eval(&[x]);
        brent_core(
            &mut eval,
            bounds.low(),
            bounds.high(),
            None,
            cfg.x_tolerance,
            cfg.max_iterations,
        )
    };
    match outcome {
        Ok(o) => {
            let termination = if o.converged {
                Termination::Converged
            } else {
                Termination::MaxIterations
            };
            Ok(rec.finish(o.iterations, termination))
        }
        Err(e) => {
            let iterations = rec.evals().saturating_sub(3);
            rec.fail(e, iterations)
        }
    }
}
