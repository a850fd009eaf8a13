//! Shape-preserving piecewise cubic Hermite interpolation.
//!
//! Interior slopes use the weighted harmonic mean of adjacent secants
//! (zero where the secants change sign); end slopes use the one-sided
//! three-point formula, clamped so the end segments cannot overshoot.

/// A monotone cubic interpolant over strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    /// Builds the interpolant. `xs` must be strictly increasing and at
    /// least two long; callers validate this.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        debug_assert_eq!(xs.len(), ys.len());
        debug_assert!(xs.len() >= 2);
        let slopes = slopes(&xs, &ys);
        Pchip { xs, ys, slopes }
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn min_x(&self) -> f64 {
        self.xs[0]
    }

    pub fn max_x(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    /// Evaluates at `x`, which must lie inside the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        if x == self.xs[i] {
            return self.ys[i];
        }
        if x == self.xs[i + 1] {
            return self.ys[i + 1];
        }
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let [c0, c1, c2, c3] = self.coefficients(i);
        c0 + t * (c1 + t * (c2 + t * c3))
    }

    /// Exact integral of the interpolant over `[a, b]`, with `a <= b` both
    /// inside the knot range.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let mut total = 0.0;
        for i in 0..self.xs.len() - 1 {
            let lo = self.xs[i].max(a);
            let hi = self.xs[i + 1].min(b);
            if hi <= lo {
                continue;
            }
            let h = self.xs[i + 1] - self.xs[i];
            let ta = (lo - self.xs[i]) / h;
            let tb = (hi - self.xs[i]) / h;
            let [c0, c1, c2, c3] = self.coefficients(i);
            let antiderivative =
                |t: f64| t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)));
            total += h * (antiderivative(tb) - antiderivative(ta));
        }
        total
    }

    // Power-basis coefficients of segment `i` in the local variable t in [0, 1].
    fn coefficients(&self, i: usize) -> [f64; 4] {
        let h = self.xs[i + 1] - self.xs[i];
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        [
            y0,
            d0,
            3.0 * (y1 - y0) - 2.0 * d0 - d1,
            2.0 * (y0 - y1) + d0 + d1,
        ]
    }

    fn segment(&self, x: f64) -> usize {
        let last = self.xs.len() - 2;
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p => (p - 1).min(last),
        }
    }
}

fn slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = ys
        .windows(2)
        .zip(&h)
        .map(|(w, &hk)| (w[1] - w[0]) / hk)
        .collect();

    if n == 2 {
        return vec![delta[0], delta[0]];
    }

    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (dl, dr) = (delta[k - 1], delta[k]);
        if dl == 0.0 || dr == 0.0 || dl.signum() != dr.signum() {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / dl + w2 / dr);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_affine_data() {
        let xs = vec![0.0, 0.5, 1.5, 2.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.75 * x).collect();
        let p = Pchip::new(xs, ys);
        for i in 0..=40 {
            let x = i as f64 * 0.1;
            assert!((p.eval(x) - (3.0 - 0.75 * x)).abs() < 1e-12);
        }
        assert!((p.integrate(0.0, 4.0) - (12.0 - 0.375 * 16.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_at_knots() {
        let xs = vec![0.1, 0.3, 0.35, 0.8, 0.95];
        let ys = vec![1.0, 1.7, 1.71, 2.9, 4.2];
        let p = Pchip::new(xs.clone(), ys.clone());
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(p.eval(*x), *y);
        }
    }

    #[test]
    fn flat_secant_gives_flat_segment() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0, 2.0]);
        for i in 0..=10 {
            let x = 1.0 + i as f64 * 0.1;
            assert!((p.eval(x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn partial_integral_matches_sum_of_parts() {
        let p = Pchip::new(vec![0.0, 1.0, 2.5, 3.0], vec![0.0, 2.0, 2.5, 5.0]);
        let whole = p.integrate(0.2, 2.9);
        let parts = p.integrate(0.2, 1.3) + p.integrate(1.3, 2.9);
        assert!((whole - parts).abs() < 1e-13);
    }
}
