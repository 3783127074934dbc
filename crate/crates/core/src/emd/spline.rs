//! Natural cubic spline through strictly increasing knots.

/// Second-derivative form of a natural cubic spline.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalSpline {
    /// Fits the spline. Requires at least two knots with strictly
    /// increasing abscissae; two knots degenerate to a straight line.
    pub fn fit(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n, "spline needs at least two knots");
        debug_assert!(xs.windows(2).all(|w| w[0] < w[1]), "knots must increase");
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 1..m {
                let lower = xs[i + 1] - xs[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - upper[i] * second[i + 2]) / diag[i];
            }
        }
        Self { xs, ys, second }
    }

    fn eval_in(&self, i: usize, t: f64) -> f64 {
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let a = x1 - t;
        let b = t - x0;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        (m0 * a * a * a + m1 * b * b * b) / (6.0 * h)
            + (self.ys[i] / h - m0 * h / 6.0) * a
            + (self.ys[i + 1] / h - m1 * h / 6.0) * b
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.xs.partition_point(|&x| x <= t).clamp(1, self.xs.len() - 1) - 1;
        self.eval_in(i, t)
    }

    /// Evaluates at `0, 1, .., n - 1`, adding into `out` scaled by `weight`.
    pub fn accumulate_grid(&self, out: &mut [f64], weight: f64) {
        let last = self.xs.len() - 2;
        let mut i = 0;
        for (t, o) in out.iter_mut().enumerate() {
            let t = t as f64;
            while i < last && self.xs[i + 1] <= t {
                i += 1;
            }
            *o += weight * self.eval_in(i, t);
        }
    }
}
