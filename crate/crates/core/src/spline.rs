//! Natural cubic spline with linear continuation outside the knots.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the knots
    m2: Vec<f64>,
}

impl NaturalSpline {
    /// `x` must be strictly increasing with at least two knots.
    pub(crate) fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let k = x.len();
        debug_assert!(k >= 2 && y.len() == k);
        let mut m2 = vec![0.0; k];
        if k > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let n = k - 2;
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 0..n {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..n {
                let lower = x[i + 1] - x[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m2[n] = rhs[n - 1] / diag[n - 1];
            for i in (0..n - 1).rev() {
                m2[i + 1] = (rhs[i] - upper[i] * m2[i + 2]) / diag[i];
            }
        }
        Self { x, y, m2 }
    }

    pub(crate) fn knots(&self) -> &[f64] {
        &self.x
    }

    pub(crate) fn eval(&self, t: f64) -> f64 {
        let (x, y, m2) = (&self.x, &self.y, &self.m2);
        let k = x.len();
        if t <= x[0] {
            let h = x[1] - x[0];
            let slope = (y[1] - y[0]) / h - h * (2.0 * m2[0] + m2[1]) / 6.0;
            return y[0] + slope * (t - x[0]);
        }
        if t >= x[k - 1] {
            let h = x[k - 1] - x[k - 2];
            let slope = (y[k - 1] - y[k - 2]) / h + h * (m2[k - 2] + 2.0 * m2[k - 1]) / 6.0;
            return y[k - 1] + slope * (t - x[k - 1]);
        }
        let i = x.partition_point(|&v| v <= t) - 1;
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - t) / h;
        let b = (t - x[i]) / h;
        a * y[i] + b * y[i + 1] + ((a * a * a - a) * m2[i] + (b * b * b - b) * m2[i + 1]) * h * h / 6.0
    }
}
