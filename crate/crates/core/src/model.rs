//! Rough Bergomi model state.
//!
//! Under the pricing measure the instantaneous variance is
//! `V_t = ξ₀(t) ℰ(2νC_H 𝒱_t)` with `𝒱_t = ∫_0^t (t-u)^{H-1/2} dZ_u`.
//! Conditioning on `𝓕_T` splits `𝒱_t` for `t ≥ T` into the known part
//! `𝒱ᵀ_t = ∫_0^T (t-u)^{H-1/2} dZ_u` and an independent remainder; the
//! forward variance `ξ_T(t)` depends on the path only through `𝒱ᵀ_t`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::interp::{Extrapolation, NaturalCubicSpline};
use crate::specfun::{c_h, hyp_f};

/// Rough Bergomi parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Hurst exponent `H ∈ (0, 1/2)`.
    pub hurst: f64,
    /// Vol-of-vol `ν ≥ 0`.
    pub nu: f64,
    /// Spot-vol correlation `ρ ∈ (-1, 1)`.
    pub rho: f64,
    /// Hybrid-scheme truncation `κ ≥ 1`.
    pub kappa: usize,
}

impl ModelParams {
    pub fn new(hurst: f64, nu: f64, rho: f64, kappa: usize) -> Result<Self> {
        let p = Self { hurst, nu, rho, kappa };
        p.validate()?;
        Ok(p)
    }

    /// `H = 0.07`, `ν = 1.9 √(2H) / (2 C_H) ≈ 1.2287`, `κ = 2`, `ρ = -0.9`.
    pub fn reference() -> Self {
        let hurst = 0.07;
        let c = c_h(hurst).expect("H = 0.07 is admissible");
        Self {
            hurst,
            nu: 1.9 * (2.0 * hurst).sqrt() / (2.0 * c),
            rho: -0.9,
            kappa: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 0.5) {
            return domain(format!("H = {} outside (0, 1/2)", self.hurst));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return domain(format!("nu = {} must be non-negative", self.nu));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return domain(format!("rho = {} outside (-1, 1)", self.rho));
        }
        if self.kappa < 1 {
            return domain("kappa must be at least 1");
        }
        Ok(())
    }

    pub fn h_plus(&self) -> f64 {
        self.hurst + 0.5
    }

    pub fn h_minus(&self) -> f64 {
        self.hurst - 0.5
    }

    pub fn c_h(&self) -> Result<f64> {
        c_h(self.hurst)
    }
}

/// Natural-spline forward variance curve, flat beyond its end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineRepr", into = "SplineRepr")]
pub struct SplineCurve {
    spline: NaturalCubicSpline,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplineRepr {
    knots: Vec<[f64; 2]>,
}

impl TryFrom<SplineRepr> for SplineCurve {
    type Error = Error;
    fn try_from(r: SplineRepr) -> Result<Self> {
        SplineCurve::new(r.knots.iter().map(|k| (k[0], k[1])).collect())
    }
}

impl From<SplineCurve> for SplineRepr {
    fn from(c: SplineCurve) -> Self {
        SplineRepr {
            knots: c.spline.knots().map(|(t, x)| [t, x]).collect(),
        }
    }
}

impl SplineCurve {
    /// Builds the curve from `(t, ξ₀(t))` knots; the spline must stay positive.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.iter().any(|k| !(k.1 > 0.0)) {
            return domain("forward variance knots must be positive");
        }
        let (x, y) = knots.into_iter().unzip();
        let spline = NaturalCubicSpline::new(x, y, Extrapolation::Flat)?;
        let xs: Vec<f64> = spline.knots().map(|k| k.0).collect();
        for w in xs.windows(2) {
            for j in 1..32 {
                let t = w[0] + (w[1] - w[0]) * j as f64 / 32.0;
                if !(spline.eval(t) > 0.0) {
                    return Err(Error::NegativeForwardVariance {
                        t,
                        value: spline.eval(t),
                    });
                }
            }
        }
        Ok(Self { spline })
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.spline.knots().collect()
    }
}

/// Initial forward variance curve `t ↦ ξ₀(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForwardVarianceCurve {
    /// `ξ₀(t) = xi`.
    Flat { xi: f64 },
    /// `ξ₀(t) = level (1 + t)²`.
    Scenario2 { level: f64 },
    /// `ξ₀(t) = level √(1 + t)`.
    Scenario3 { level: f64 },
    /// Market-implied curve.
    Spline(SplineCurve),
}

const SCENARIO_LEVEL: f64 = 0.234 * 0.234;

impl ForwardVarianceCurve {
    pub fn flat(xi: f64) -> Self {
        Self::Flat { xi }
    }

    pub fn scenario1() -> Self {
        Self::Flat { xi: SCENARIO_LEVEL }
    }

    pub fn scenario2() -> Self {
        Self::Scenario2 { level: SCENARIO_LEVEL }
    }

    pub fn scenario3() -> Self {
        Self::Scenario3 { level: SCENARIO_LEVEL }
    }

    /// Scenario 1, 2 or 3.
    pub fn scenario(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Self::scenario1()),
            2 => Ok(Self::scenario2()),
            3 => Ok(Self::scenario3()),
            _ => domain(format!("unknown scenario {k}")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let level = match self {
            Self::Flat { xi } => *xi,
            Self::Scenario2 { level } | Self::Scenario3 { level } => *level,
            Self::Spline(_) => return Ok(()),
        };
        if level > 0.0 && level.is_finite() {
            Ok(())
        } else {
            domain(format!("forward variance level {level} must be positive"))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Flat { xi } => *xi,
            Self::Scenario2 { level } => level * (1.0 + t) * (1.0 + t),
            Self::Scenario3 { level } => level * (1.0 + t).sqrt(),
            Self::Spline(s) => s.spline.eval(t),
        }
    }

    /// `∫_a^b ξ₀(t) dt`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Self::Flat { xi } => xi * (b - a),
            Self::Scenario2 { level } => level * ((1.0 + b).powi(3) - (1.0 + a).powi(3)) / 3.0,
            Self::Scenario3 { level } => level * 2.0 / 3.0 * ((1.0 + b).powf(1.5) - (1.0 + a).powf(1.5)),
            Self::Spline(s) => s.spline.integral(a, b),
        }
    }
}

fn order_check(t: f64, big_t: f64) -> Result<()> {
    if t < big_t || big_t < 0.0 {
        Err(Error::Order(format!("need t >= T >= 0, got t = {t}, T = {big_t}")))
    } else {
        Ok(())
    }
}

/// `V_t = ξ₀(t) exp(2νC_H 𝒱_t - ν²C_H² t^{2H} / H)`.
pub fn variance_process(xi0: &ForwardVarianceCurve, params: &ModelParams, volterra_value: f64, t: f64) -> Result<f64> {
    let c = params.c_h()?;
    let a = 2.0 * params.nu * c;
    let h = params.hurst;
    Ok(xi0.value(t) * (a * volterra_value - a * a * t.powf(2.0 * h) / (4.0 * h)).exp())
}

/// `Var(𝒱ᵀ_t) = (t^{2H} - (t-T)^{2H}) / (2H)`.
pub fn conditional_variance_vt(t: f64, big_t: f64, hurst: f64) -> Result<f64> {
    order_check(t, big_t)?;
    let h2 = 2.0 * hurst;
    Ok((t.powf(h2) - (t - big_t).powf(h2)) / h2)
}

/// `Cov(𝒱ᵀ_s, 𝒱ᵀ_t) = ∫_0^T ((t-u)(s-u))^{H-1/2} du`.
///
/// With `t ≤ s` and `d = s - t` the integral is
/// `d^{H₋}/H₊ [t^{H₊} F(-t/d) - (t-T)^{H₊} F(-(t-T)/d)]`, where `F` is
/// [`hyp_f`]. Ordering the arguments this way keeps every `F` argument
/// non-positive.
pub fn conditional_covariance_vt(s: f64, t: f64, big_t: f64, hurst: f64) -> Result<f64> {
    order_check(s, big_t)?;
    order_check(t, big_t)?;
    if !(hurst > 0.0 && hurst < 0.5) {
        return domain(format!("Hurst parameter {hurst} outside (0, 1/2)"));
    }
    if big_t == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = if t <= s { (t, s) } else { (s, t) };
    let d = hi - lo;
    if d <= 1e-15 * hi {
        return conditional_variance_vt(lo, big_t, hurst);
    }
    let hp = hurst + 0.5;
    let hm = hurst - 0.5;
    let upper = lo.powf(hp) * hyp_f(-lo / d, hurst)?;
    let r = lo - big_t;
    let lower = if r > 0.0 {
        r.powf(hp) * hyp_f(-r / d, hurst)?
    } else {
        0.0
    };
    Ok(d.powf(hm) / hp * (upper - lower))
}

/// `η_T(t) = exp(2νC_H 𝒱ᵀ_t)`.
pub fn eta_t(volterra_vt: f64, params: &ModelParams) -> Result<f64> {
    Ok((2.0 * params.nu * params.c_h()? * volterra_vt).exp())
}

/// `ξ_T(t) = ξ₀(t) η_T(t) exp(ν²C_H²/H [(t-T)^{2H} - t^{2H}])`.
pub fn forward_variance(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    big_t: f64,
    t: f64,
    volterra_vt: f64,
) -> Result<f64> {
    order_check(t, big_t)?;
    let c = params.c_h()?;
    let h = params.hurst;
    let drift = params.nu * params.nu * c * c / h * ((t - big_t).powf(2.0 * h) - t.powf(2.0 * h));
    Ok(xi0.value(t) * (2.0 * params.nu * c * volterra_vt + drift).exp())
}

/// One path of `𝒱ᵀ` sampled at `times` (all `≥ base_time`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalVolterra {
    pub base_time: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ConditionalVolterra {
    pub fn new(base_time: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::GridMismatch(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if let Some(&t) = times.iter().find(|&&t| t < base_time) {
            return Err(Error::Order(format!("time {t} precedes base time {base_time}")));
        }
        Ok(Self {
            base_time,
            times,
            values,
        })
    }
}
