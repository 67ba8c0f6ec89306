//! Interpolating cubic splines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SplineBoundary {
    /// Zero second derivative at both ends.
    #[default]
    Natural,
    /// Prescribed first derivatives at the ends.
    Clamped { start: f64, end: f64 },
}

/// Piecewise cubic `s(x) = a + b t + c t^2 + d t^3`, `t = x - x_j` on `[x_j, x_{j+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    coeffs: Vec<[f64; 4]>,
    boundary: SplineBoundary,
}

impl CubicSpline {
    pub fn natural(x: &[f64], y: &[f64]) -> Result<Self> {
        Self::new(x, y, SplineBoundary::Natural)
    }

    pub fn new(x: &[f64], y: &[f64], boundary: SplineBoundary) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::param("spline", "node and value counts differ"));
        }
        let n = x.len();
        if n < 4 {
            return Err(Error::param("spline", format!("need at least 4 nodes, got {n}")));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::param("spline", "non-finite node or value"));
        }
        if let Some(j) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::param(
                "spline",
                format!("nodes not strictly increasing at index {}", j + 1),
            ));
        }

        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|j| (y[j + 1] - y[j]) / h[j]).collect();

        // Tridiagonal system for the second derivatives m_j.
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        match boundary {
            SplineBoundary::Natural => {
                diag[0] = 1.0;
                diag[n - 1] = 1.0;
            }
            SplineBoundary::Clamped { start, end } => {
                diag[0] = 2.0 * h[0];
                sup[0] = h[0];
                rhs[0] = 6.0 * (slope[0] - start);
                sub[n - 1] = h[n - 2];
                diag[n - 1] = 2.0 * h[n - 2];
                rhs[n - 1] = 6.0 * (end - slope[n - 2]);
            }
        }
        for j in 1..n - 1 {
            sub[j] = h[j - 1];
            diag[j] = 2.0 * (h[j - 1] + h[j]);
            sup[j] = h[j];
            rhs[j] = 6.0 * (slope[j] - slope[j - 1]);
        }
        let m = solve_tridiagonal(&sub, &diag, &sup, &rhs);

        let coeffs = (0..n - 1)
            .map(|j| {
                let hj = h[j];
                [
                    y[j],
                    slope[j] - hj * (2.0 * m[j] + m[j + 1]) / 6.0,
                    0.5 * m[j],
                    (m[j + 1] - m[j]) / (6.0 * hj),
                ]
            })
            .collect();

        Ok(CubicSpline {
            knots: x.to_vec(),
            coeffs,
            boundary,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn boundary(&self) -> SplineBoundary {
        self.boundary
    }

    pub fn lo(&self) -> f64 {
        self.knots[0]
    }

    pub fn hi(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn interval(&self, x: f64) -> usize {
        let n = self.knots.len();
        match self.knots.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        }
    }

    /// Value, first and second derivative. Outside the knot range the
    /// spline continues linearly with its end slope.
    pub fn eval_all(&self, x: f64) -> (f64, f64, f64) {
        if x < self.lo() {
            let (v, d, _) = self.eval_all(self.lo());
            return (v + d * (x - self.lo()), d, 0.0);
        }
        if x > self.hi() {
            let (v, d, _) = self.eval_all(self.hi());
            return (v + d * (x - self.hi()), d, 0.0);
        }
        let j = self.interval(x);
        let [a, b, c, d] = self.coeffs[j];
        let t = x - self.knots[j];
        (
            a + t * (b + t * (c + t * d)),
            b + t * (2.0 * c + 3.0 * t * d),
            2.0 * c + 6.0 * t * d,
        )
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_all(x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.eval_all(x).1
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.eval_all(x).2
    }
}

/// Thomas algorithm; the systems here are diagonally dominant.
fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_nodes() {
        let x = [0.0, 0.7, 1.1, 2.0, 3.5];
        let y = [1.0, -0.3, 0.4, 2.2, 0.0];
        let s = CubicSpline::natural(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(s.eval(*xi), *yi);
        }
    }

    #[test]
    fn collinear_points_give_a_line() {
        let x = [0.0, 1.0, 2.5, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let s = CubicSpline::natural(&x, &y).unwrap();
        for i in 0..=40 {
            let t = 0.1 * i as f64;
            let (v, d, dd) = s.eval_all(t);
            assert!((v - (3.0 * t - 1.0)).abs() < 1e-13);
            assert!((d - 3.0).abs() < 1e-13);
            assert!(dd.abs() < 1e-13);
        }
    }

    #[test]
    fn second_derivative_vanishes_at_ends() {
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v: &f64| v.sin()).collect();
        let s = CubicSpline::natural(&x, &y).unwrap();
        assert!(s.second_derivative(0.0).abs() < 1e-12);
        assert!(s.second_derivative(3.5).abs() < 1e-12);
    }

    #[test]
    fn clamped_reproduces_cubic_exactly() {
        let f = |x: f64| 0.5 * x * x * x - x * x + 2.0;
        let df = |x: f64| 1.5 * x * x - 2.0 * x;
        let x: Vec<f64> = (0..6).map(|i| i as f64 * 0.8).collect();
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let s = CubicSpline::new(
            &x,
            &y,
            SplineBoundary::Clamped {
                start: df(0.0),
                end: df(4.0),
            },
        )
        .unwrap();
        for i in 0..=40 {
            let t = 0.1 * i as f64;
            assert!((s.eval(t) - f(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn continuity_at_interior_knots() {
        let x: Vec<f64> = (0..10).map(|i| (i as f64).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|v: &f64| (0.4 * v).cos()).collect();
        let s = CubicSpline::natural(&x, &y).unwrap();
        for j in 1..x.len() - 1 {
            let left = s.coeffs[j - 1];
            let h = x[j] - x[j - 1];
            let lv = left[0] + h * (left[1] + h * (left[2] + h * left[3]));
            let ld = left[1] + h * (2.0 * left[2] + 3.0 * h * left[3]);
            let ldd = 2.0 * left[2] + 6.0 * h * left[3];
            let (rv, rd, rdd) = (s.coeffs[j][0], s.coeffs[j][1], 2.0 * s.coeffs[j][2]);
            assert!((lv - rv).abs() <= 1e-10 * rv.abs().max(1.0));
            assert!((ld - rd).abs() <= 1e-10 * rd.abs().max(1.0));
            assert!((ldd - rdd).abs() <= 1e-10 * rdd.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(CubicSpline::natural(&[0.0, 1.0, 1.0, 2.0], &[0.0; 4]).is_err());
        assert!(CubicSpline::natural(&[0.0, 2.0, 1.0, 3.0], &[0.0; 4]).is_err());
        assert!(CubicSpline::natural(&[0.0, 1.0, 2.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn extrapolates_with_end_slope() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.0, 4.0, 9.0];
        let s = CubicSpline::natural(&x, &y).unwrap();
        let d = s.derivative(3.0);
        assert!((s.eval(4.0) - (9.0 + d)).abs() < 1e-12);
        assert_eq!(s.derivative(5.0), d);
    }
}
