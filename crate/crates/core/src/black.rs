//! Undiscounted Black formula and its inversion.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Error, Result};

fn std_normal() -> Normal {
    Normal::standard()
}

/// Black call on a forward `F` with strike `K`, maturity `T` and volatility `σ`.
pub fn call(forward: f64, strike: f64, maturity: f64, vol: f64) -> f64 {
    let intrinsic = (forward - strike).max(0.0);
    let s = vol * maturity.sqrt();
    if !(s > 0.0) {
        return intrinsic;
    }
    if strike <= 0.0 {
        return forward - strike;
    }
    let d1 = ((forward / strike).ln() + 0.5 * s * s) / s;
    let n = std_normal();
    forward * n.cdf(d1) - strike * n.cdf(d1 - s)
}

/// Black put, by the same conventions as [`call`].
pub fn put(forward: f64, strike: f64, maturity: f64, vol: f64) -> f64 {
    let s = vol * maturity.sqrt();
    if !(s > 0.0) || strike <= 0.0 {
        return (strike - forward).max(0.0);
    }
    let d1 = ((forward / strike).ln() + 0.5 * s * s) / s;
    let n = std_normal();
    strike * n.cdf(s - d1) - forward * n.cdf(-d1)
}

/// `∂C/∂σ`.
pub fn vega(forward: f64, strike: f64, maturity: f64, vol: f64) -> f64 {
    let sq = maturity.sqrt();
    let s = vol * sq;
    if !(s > 0.0) || strike <= 0.0 {
        return 0.0;
    }
    let d1 = ((forward / strike).ln() + 0.5 * s * s) / s;
    forward * (-0.5 * d1 * d1).exp() / (2.0 * std::f64::consts::PI).sqrt() * sq
}

/// Black implied volatility of an undiscounted call price.
///
/// Newton steps are taken inside a shrinking bracket and replaced by
/// bisection whenever they leave it. A price equal to intrinsic value has
/// implied volatility zero.
pub fn implied_vol(price: f64, forward: f64, strike: f64, maturity: f64) -> Result<f64> {
    if !(forward > 0.0 && strike > 0.0 && maturity > 0.0) {
        return domain(format!(
            "implied vol needs positive forward, strike and maturity (F = {forward}, K = {strike}, T = {maturity})"
        ));
    }
    let lower = (forward - strike).max(0.0);
    let tol = 1e-10;
    if !(price >= lower - tol) || !(price < forward) {
        return Err(Error::PriceOutOfBand {
            price,
            lower,
            upper: forward,
        });
    }
    if price <= lower + 1e-14 * forward {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while call(forward, strike, maturity, hi) < price {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::PriceOutOfBand {
                price,
                lower,
                upper: forward,
            });
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = call(forward, strike, maturity, x) - price;
        if f.abs() < 1e-14 * forward {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let v = vega(forward, strike, maturity, x);
        let newton = if v > 0.0 { x - f / v } else { f64::NAN };
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let f = call(forward, strike, maturity, x) - price;
    if f.abs() <= tol {
        Ok(x)
    } else {
        Err(Error::PriceOutOfBand {
            price,
            lower,
            upper: forward,
        })
    }
}
