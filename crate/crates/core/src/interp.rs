//! Natural cubic spline interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Behaviour outside the knot range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extrapolation {
    /// Hold the end value.
    #[default]
    Flat,
    /// Continue along the end tangent.
    Linear,
}

/// Natural cubic spline (zero second derivative at both ends).
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
    extrapolation: Extrapolation,
}

impl NaturalCubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>, extrapolation: Extrapolation) -> Result<Self> {
        if x.is_empty() {
            return domain("spline needs at least one knot");
        }
        if x.len() != y.len() {
            return domain(format!("{} abscissae vs {} ordinates", x.len(), y.len()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return domain("spline knots must be finite");
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Order("spline abscissae must be strictly increasing".into()));
        }
        let m = second_derivatives(&x, &y);
        Ok(Self { x, y, m, extrapolation })
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn first_knot(&self) -> f64 {
        self.x[0]
    }

    pub fn last_knot(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// End slopes `(S'(x_0), S'(x_{n-1}))`.
    fn end_slopes(&self) -> (f64, f64) {
        let n = self.x.len();
        if n == 1 {
            return (0.0, 0.0);
        }
        let h0 = self.x[1] - self.x[0];
        let left = (self.y[1] - self.y[0]) / h0 - h0 * (2.0 * self.m[0] + self.m[1]) / 6.0;
        let h1 = self.x[n - 1] - self.x[n - 2];
        let right = (self.y[n - 1] - self.y[n - 2]) / h1 + h1 * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0;
        (left, right)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] || n == 1 {
            if n == 1 || t == self.x[0] {
                return self.y[0];
            }
            return match self.extrapolation {
                Extrapolation::Flat => self.y[0],
                Extrapolation::Linear => self.y[0] + self.end_slopes().0 * (t - self.x[0]),
            };
        }
        if t >= self.x[n - 1] {
            return match self.extrapolation {
                Extrapolation::Flat => self.y[n - 1],
                Extrapolation::Linear => self.y[n - 1] + self.end_slopes().1 * (t - self.x[n - 1]),
            };
        }
        let i = self.x.partition_point(|&xi| xi <= t) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = 1.0 - a;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// First derivative.
    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if n == 1 {
            return 0.0;
        }
        let (l, r) = self.end_slopes();
        if t < self.x[0] {
            return match self.extrapolation {
                Extrapolation::Flat => 0.0,
                Extrapolation::Linear => l,
            };
        }
        if t > self.x[n - 1] {
            return match self.extrapolation {
                Extrapolation::Flat => 0.0,
                Extrapolation::Linear => r,
            };
        }
        let i = (self.x.partition_point(|&xi| xi <= t).max(1) - 1).min(n - 2);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = 1.0 - a;
        (self.y[i + 1] - self.y[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    /// `∫_a^b S(t) dt`, exact: each piece is integrated by 3-point Gauss–Legendre.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut cuts = vec![a];
        cuts.extend(self.x.iter().copied().filter(|&x| x > a && x < b));
        cuts.push(b);
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        cuts.windows(2)
            .map(|w| {
                let c = 0.5 * (w[0] + w[1]);
                let h = 0.5 * (w[1] - w[0]);
                NODES
                    .iter()
                    .zip(&WEIGHTS)
                    .map(|(x, wt)| wt * self.eval(c + h * x))
                    .sum::<f64>()
                    * h
            })
            .sum()
    }
}

fn second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior equations
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    let mut upper = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        diag[j] = (h0 + h1) / 3.0;
        upper[j] = h1 / 6.0;
        rhs[j] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
    }
    for j in 1..k {
        let lower = (x[j + 1] - x[j]) / 6.0;
        let w = lower / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    m[k] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        m[j + 1] = (rhs[j] - upper[j] * m[j + 2]) / diag[j];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spline(ext: Extrapolation) -> NaturalCubicSpline {
        NaturalCubicSpline::new(vec![0.0, 0.5, 1.2, 2.0, 3.5], vec![1.0, 0.3, 0.9, 2.0, 1.1], ext).unwrap()
    }

    #[test]
    fn interpolates_knots() {
        let s = spline(Extrapolation::Flat);
        for (x, y) in s.knots().collect::<Vec<_>>() {
            assert!((s.eval(x) - y).abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_lines() {
        let s = NaturalCubicSpline::new(
            vec![0.0, 1.0, 3.0, 4.0],
            vec![1.0, 3.0, 7.0, 9.0],
            Extrapolation::Linear,
        )
        .unwrap();
        for t in [-1.0, 0.3, 2.0, 3.9, 6.0] {
            assert!((s.eval(t) - (1.0 + 2.0 * t)).abs() < 1e-13);
            assert!((s.derivative(t) - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn second_derivative_is_continuous_and_natural() {
        let s = spline(Extrapolation::Flat);
        let d2 = |t: f64| {
            let h = 1e-4;
            (s.eval(t + h) - 2.0 * s.eval(t) + s.eval(t - h)) / (h * h)
        };
        for x in [0.5, 1.2, 2.0] {
            let l = d2(x - 1e-3);
            let r = d2(x + 1e-3);
            assert!((l - r).abs() < 0.05, "{x}: {l} vs {r}");
        }
        assert!(d2(1e-3).abs() < 0.05);
    }

    #[test]
    fn integral_matches_quadrature() {
        let s = spline(Extrapolation::Linear);
        let q = crate::quad::integrate(|t| s.eval(t), -0.5, 4.0, crate::quad::QuadOptions::rel(1e-13)).unwrap();
        assert!((s.integral(-0.5, 4.0) - q).abs() < 1e-11);
    }

    #[test]
    fn rejects_unsorted() {
        assert!(NaturalCubicSpline::new(vec![1.0, 0.5], vec![0.0, 0.0], Extrapolation::Flat).is_err());
        assert!(NaturalCubicSpline::new(vec![], vec![], Extrapolation::Flat).is_err());
    }
}
