//! A deliberately separate BD-rate: its own monotone cubic written in the
//! Hermite basis, integrated by dense trapezoids instead of exact
//! antiderivatives. Shares no code with `bdrate`.

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Monotone piecewise-cubic through `(x, y)`, `x` strictly increasing.
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = s[0];
            d[1] = s[0];
        } else {
            for k in 1..n - 1 {
                if s[k - 1] * s[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / s[k - 1] + w2 / s[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], s[0], s[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        }
        MonotoneCubic {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let mut k = self.x.partition_point(|&v| v <= t).saturating_sub(1);
        k = k.min(n - 2);
        let h = self.x[k + 1] - self.x[k];
        let u = (t - self.x[k]) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if sign(d) != sign(s0) {
        0.0
    } else if sign(s0) != sign(s1) && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// BD-rate in percent from `(quality, bitrate)` pairs sorted by quality,
/// using `steps` trapezoids between consecutive breakpoints.
pub fn bd_rate(test: &[(f64, f64)], reference: &[(f64, f64)], steps: usize) -> f64 {
    let curve = |pts: &[(f64, f64)]| {
        let q: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let r: Vec<f64> = pts.iter().map(|p| p.1.log10()).collect();
        MonotoneCubic::new(&q, &r)
    };
    let (ct, cr) = (curve(test), curve(reference));
    let lo = test[0].0.max(reference[0].0);
    let hi = test[test.len() - 1].0.min(reference[reference.len() - 1].0);
    let mut breaks: Vec<f64> = ct
        .knots()
        .iter()
        .chain(cr.knots())
        .copied()
        .filter(|&q| q > lo && q < hi)
        .collect();
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    let f = |q: f64| ct.eval(q) - cr.eval(q);
    let mut integral = 0.0;
    for w in breaks.windows(2) {
        let h = (w[1] - w[0]) / steps as f64;
        let mut acc = 0.5 * (f(w[0]) + f(w[1]));
        for i in 1..steps {
            acc += f(w[0] + i as f64 * h);
        }
        integral += acc * h;
    }
    (10f64.powf(integral / (hi - lo)) - 1.0) * 100.0
}

/// Fraction of the joint quality span both curves cover.
pub fn overlap_fraction(test: &[(f64, f64)], reference: &[(f64, f64)]) -> f64 {
    let lo = test[0].0.max(reference[0].0);
    let hi = test[test.len() - 1].0.min(reference[reference.len() - 1].0);
    let span = test[test.len() - 1].0.max(reference[reference.len() - 1].0) - test[0].0.min(reference[0].0);
    ((hi - lo) / span).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_a_cubic_exactly_on_linear_data() {
        let c = MonotoneCubic::new(&[0.0, 1.0, 3.0], &[1.0, 2.0, 4.0]);
        assert!((c.eval(2.2) - 3.2).abs() < 1e-12);
    }

    #[test]
    fn identical_curves_and_pure_scaling() {
        let a = [(0.90, 100.0), (0.93, 200.0), (0.95, 400.0), (0.97, 900.0)];
        assert!(bd_rate(&a, &a, 100).abs() < 1e-12);
        let b: Vec<_> = a.iter().map(|&(q, r)| (q, r * 0.8)).collect();
        assert!((bd_rate(&b, &a, 100) + 20.0).abs() < 1e-9);
    }
}
