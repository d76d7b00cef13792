//! Special functions: Gauss hypergeometric ₂F₁ on the real line, digamma,
//! and the kernel-normalisation constants of the rough Bergomi model.
//!
//! ₂F₁ is evaluated by its power series close to the origin and through
//! linear transformations elsewhere:
//!
//! * `|z| <= 1/2`: direct series;
//! * `-1 <= z < -1/2`: Pfaff transformation onto `z/(z-1) ∈ [1/3, 1/2]`;
//! * `z < -1`: the `z ↦ 1/z` connection formula, whose two series are then
//!   evaluated by the rules above
//!   (Euler's integral when `b - a` is an integer);
//! * `1/2 < z < 1`: direct series, switching to the `z ↦ 1 - z` connection
//!   formula above `0.9` (Euler's integral when `c - a - b` is an integer);
//! * `z = 1`: Gauss's summation theorem.
//!
//! The naive series diverges for `z < -1`, which is exactly the regime the
//! conditional Volterra covariance hits when two times are close together.

use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::quad::{self, QuadOptions};

const SERIES_REL_TOL: f64 = 1e-15;
const SERIES_MAX_TERMS: usize = 10_000;
const INTEGER_TOL: f64 = 1e-12;

/// Arguments of `₂F₁(a, b; c; z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeoArgs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

impl HypergeoArgs {
    pub fn new(a: f64, b: f64, c: f64, z: f64) -> Self {
        Self { a, b, c, z }
    }
}

fn non_positive_integer(x: f64) -> bool {
    x <= 0.0 && (x - x.round()).abs() < INTEGER_TOL
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-9
}

/// `1/Γ(x)`, zero at the poles of Γ.
fn rgamma(x: f64) -> f64 {
    if non_positive_integer(x) {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

/// Gauss hypergeometric function `₂F₁(a, b; c; z)` for real `z <= 1`.
pub fn gauss_2f1(args: HypergeoArgs) -> Result<f64> {
    let HypergeoArgs { a, b, c, z } = args;
    if ![a, b, c, z].iter().all(|v| v.is_finite()) {
        return domain(format!("non-finite hypergeometric argument {args:?}"));
    }
    if non_positive_integer(c) {
        return Err(Error::DegenerateC(c));
    }
    if z > 1.0 {
        return domain(format!("2F1 evaluated at z = {z} > 1"));
    }
    if z == 0.0 || a == 0.0 || b == 0.0 {
        return Ok(1.0);
    }
    // Terminating series: a polynomial in z, valid everywhere.
    if non_positive_integer(a) || non_positive_integer(b) {
        return series(a, b, c, z);
    }
    if z.abs() <= 0.5 {
        return series(a, b, c, z);
    }
    if (-1.0..0.0).contains(&z) {
        // Pfaff: (1 - z)^{-a} 2F1(a, c - b; c; z / (z - 1))
        let w = z / (z - 1.0);
        return Ok((1.0 - z).powf(-a) * series(a, c - b, c, w)?);
    }
    if z < -1.0 {
        return reciprocal_argument(a, b, c, z);
    }
    // 1/2 < z <= 1
    let s = c - a - b;
    if z == 1.0 {
        if s <= 0.0 {
            return domain(format!("2F1 diverges at z = 1 when c - a - b = {s} <= 0"));
        }
        return Ok(gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b));
    }
    if z > 0.9 && !is_integer(s) {
        let y = 1.0 - z;
        let t1 = gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b) * series(a, b, 1.0 - s, y)?;
        let t2 = y.powf(s) * gamma(c) * gamma(-s) * rgamma(a) * rgamma(b) * series(c - a, c - b, 1.0 + s, y)?;
        return Ok(t1 + t2);
    }
    if z > 0.9 {
        return euler_integral(a, b, c, z);
    }
    series(a, b, c, z)
}

/// Connection formula for `z < -1` (Abramowitz & Stegun 15.3.7).
fn reciprocal_argument(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if is_integer(b - a) {
        // The connection formula degenerates here.
        return euler_integral(a, b, c, z);
    }
    let inv = 1.0 / z;
    let mz = -z;
    let gc = gamma(c);
    let t1 = gc * gamma(b - a) * rgamma(b) * rgamma(c - a) * mz.powf(-a);
    let t2 = gc * gamma(a - b) * rgamma(a) * rgamma(c - b) * mz.powf(-b);
    let f1 = if t1 == 0.0 {
        0.0
    } else {
        gauss_2f1(HypergeoArgs::new(a, a - c + 1.0, a - b + 1.0, inv))?
    };
    let f2 = if t2 == 0.0 {
        0.0
    } else {
        gauss_2f1(HypergeoArgs::new(b, b - c + 1.0, b - a + 1.0, inv))?
    };
    Ok(t1 * f1 + t2 * f2)
}

/// Euler's integral `Γ(c)/(Γ(b)Γ(c-b)) ∫_0^1 t^{b-1} (1-t)^{c-b-1} (1-zt)^{-a} dt`,
/// falling back to the Pfaff series when neither `b` nor `a` satisfies `0 < · < c`.
fn euler_integral(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let (a, b) = if c > b && b > 0.0 {
        (a, b)
    } else if c > a && a > 0.0 {
        (b, a)
    } else {
        let w = z / (z - 1.0);
        return Ok((1.0 - z).powf(-a) * series(a, c - b, c, w)?);
    };
    let v = quad::integrate(
        |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                return 0.0;
            }
            t.powf(b - 1.0) * (1.0 - t).powf(c - b - 1.0) * (1.0 - z * t).powf(-a)
        },
        0.0,
        1.0,
        QuadOptions {
            abs_tol: 0.0,
            rel_tol: 1e-14,
            max_intervals: 5000,
        },
    )?;
    Ok(gamma(c) * rgamma(b) * rgamma(c - b) * v)
}

/// Power series `Σ (a)_k (b)_k / ((c)_k k!) z^k`.
fn series(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        sum += term;
        if term == 0.0 || term.abs() < SERIES_REL_TOL * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::SeriesNonConvergence {
        terms: SERIES_MAX_TERMS,
    })
}

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 0.5 {
        Ok(())
    } else {
        domain(format!("Hurst parameter {h} outside (0, 1/2)"))
    }
}

/// `F(u) = ₂F₁(-H₋, H₊; 1 + H₊; u)` with `H± = H ± 1/2`.
pub fn hyp_f(u: f64, hurst: f64) -> Result<f64> {
    let hp = hurst + 0.5;
    let hm = hurst - 0.5;
    gauss_2f1(HypergeoArgs::new(-hm, hp, 1.0 + hp, u))
}

/// Digamma function ψ(x) for x > 0.
///
/// Upward recurrence until x >= 10, then the asymptotic expansion.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("digamma evaluated at {x} <= 0"));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_{2k} / (2k x^{2k})
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(acc + x.ln() - 0.5 * inv - tail)
}

/// `C_H² = 2H Γ(2 - H₊) / (Γ(H₊) Γ(2 - 2H))`.
pub fn c_h_squared(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let hp = hurst + 0.5;
    Ok(2.0 * hurst * gamma(2.0 - hp) / (gamma(hp) * gamma(2.0 - 2.0 * hurst)))
}

/// Kernel normalisation constant `C_H`.
pub fn c_h(hurst: f64) -> Result<f64> {
    c_h_squared(hurst).map(f64::sqrt)
}

/// `d log C_H² / dH = 1/H - ψ(2 - H₊) - ψ(H₊) + 2 ψ(2 - 2H)`.
pub fn log_c_h_squared_derivative(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let hp = hurst + 0.5;
    Ok(1.0 / hurst - digamma(2.0 - hp)? - digamma(hp)? + 2.0 * digamma(2.0 - 2.0 * hurst)?)
}

/// `∂C_H²/∂H`.
pub fn c_h_squared_derivative(hurst: f64) -> Result<f64> {
    Ok(c_h_squared(hurst)? * log_c_h_squared_derivative(hurst)?)
}

/// `K_H = H₊ · ∂ log C_H² / ∂H`, so that `∂C_H²/∂H = C_H² K_H / H₊`.
///
/// With this constant the derivative of `C_H² / H₊²` is `C_H² (K_H - 2) / H₊³`.
pub fn k_h(hurst: f64) -> Result<f64> {
    Ok((hurst + 0.5) * log_c_h_squared_derivative(hurst)?)
}
