//! Cubic spline interpolation on a strictly increasing grid.

/// End conditions for [`CubicSpline`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EndCondition {
    /// Zero second derivative at both ends.
    Natural,
    /// Prescribed first derivatives at the left and right ends.
    Clamped(f64, f64),
}

#[derive(Debug, Clone)]
pub struct CubicSpline {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Panics if `t` and `y` differ in length, have fewer than two points,
    /// or `t` is not strictly increasing.
    pub fn new(t: &[f64], y: &[f64], end: EndCondition) -> Self {
        assert_eq!(t.len(), y.len(), "knot and value lengths differ");
        assert!(t.len() >= 2, "a spline needs at least two knots");
        assert!(
            t.windows(2).all(|w| w[0] < w[1]),
            "knots must be strictly increasing"
        );
        let n = t.len();
        let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

        // Tridiagonal system for the knot second derivatives.
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        match end {
            EndCondition::Natural => {
                diag[0] = 1.0;
                diag[n - 1] = 1.0;
            }
            EndCondition::Clamped(d0, dn) => {
                diag[0] = 2.0 * h[0];
                upper[0] = h[0];
                rhs[0] = 6.0 * (slope[0] - d0);
                lower[n - 1] = h[n - 2];
                diag[n - 1] = 2.0 * h[n - 2];
                rhs[n - 1] = 6.0 * (dn - slope[n - 2]);
            }
        }
        for i in 1..n - 1 {
            lower[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            upper[i] = h[i];
            rhs[i] = 6.0 * (slope[i] - slope[i - 1]);
        }
        let m = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        Self {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.t.len();
        let i = self.t.partition_point(|&k| k <= t);
        i.saturating_sub(1).min(n - 2)
    }

    /// Value, first and second derivative at `t`. Outside the knot range the
    /// end cubic is extended.
    pub fn eval_all(&self, t: f64) -> (f64, f64, f64) {
        let i = self.interval(t);
        let h = self.t[i + 1] - self.t[i];
        let u = (self.t[i + 1] - t) / h;
        let w = (t - self.t[i]) / h;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        let value = u * y0
            + w * y1
            + h * h / 6.0 * ((u * u * u - u) * m0 + (w * w * w - w) * m1);
        let first = (y1 - y0) / h + h / 6.0 * ((1.0 - 3.0 * u * u) * m0 + (3.0 * w * w - 1.0) * m1);
        let second = u * m0 + w * m1;
        (value, first, second)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_all(t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval_all(t).1
    }
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Piecewise-linear interpolation with constant extension outside the knots.
pub fn interp_linear(t: &[f64], y: &[f64], at: f64) -> f64 {
    let n = t.len();
    if at <= t[0] {
        return y[0];
    }
    if at >= t[n - 1] {
        return y[n - 1];
    }
    let i = t.partition_point(|&k| k <= at) - 1;
    let w = (at - t[i]) / (t[i + 1] - t[i]);
    y[i] + w * (y[i + 1] - y[i])
}
