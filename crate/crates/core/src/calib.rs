//! Calibration to VIX futures and SPX calls.
//!
//! VIX futures are priced with the log-normal approximation
//! `𝔙_T = Δ^{-1/2} √(∫_T^{T+Δ} ξ₀) exp(-σ̃_T²/8)`, whose derivatives in `(H, ν)`
//! are available in closed form up to a one-dimensional integral. SPX calls
//! are priced by Monte Carlo on paths generated once for a fixed `H`, so the
//! objective in `(ν, ρ)` is a deterministic function of the parameters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bss::{simulate_volterra, HybridConfig, TimeGrid, VolterraEnsemble};
use crate::error::{domain, Error, Result};
use crate::model::{ForwardVarianceCurve, ModelParams};
use crate::optim::{levenberg_marquardt, nelder_mead, Bounds, LmOptions, NelderMeadOptions};
use crate::rng::{normal, path_rng, Stream};
use crate::spx::{simulate_spx, SpxPathConfig, SpxScheme};
use crate::vix::{bfg_sigma2, bfg_sigma2_dh, DELTA};

pub const HURST_MIN: f64 = 0.01;
pub const HURST_MAX: f64 = 0.49;
pub const NU_MAX: f64 = 5.0;
pub const RHO_MAX: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuturesQuote {
    #[serde(rename = "maturity_years")]
    pub maturity: f64,
    pub price: f64,
}

/// SPX call quote on a unit forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallQuote {
    #[serde(rename = "maturity_years")]
    pub maturity: f64,
    pub strike: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ModelParams,
    pub objective: f64,
    /// Projected gradient norm; absent for derivative-free runs.
    pub gradient_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Model minus quoted price, in quote order.
    pub per_quote_residuals: Vec<f64>,
}

fn check_futures_quotes(quotes: &[FuturesQuote]) -> Result<()> {
    for q in quotes {
        if !(q.price > 0.0) || !(q.maturity >= 0.0) {
            return domain(format!("invalid futures quote {q:?}"));
        }
    }
    Ok(())
}

/// Log-normal model futures price at each quote maturity.
pub fn model_futures_prices(
    nu: f64,
    hurst: f64,
    xi0: &ForwardVarianceCurve,
    quotes: &[FuturesQuote],
) -> Result<Vec<f64>> {
    quotes
        .iter()
        .map(|q| {
            let s2 = bfg_sigma2(nu, hurst, q.maturity)?;
            let m = xi0.integral(q.maturity, q.maturity + DELTA);
            if !(m > 0.0) {
                return Err(Error::NegativeForwardVariance {
                    t: q.maturity,
                    value: m,
                });
            }
            Ok((m / DELTA).sqrt() * (-s2 / 8.0).exp())
        })
        .collect()
}

/// `𝓛(ν, H) = Σ (𝔙_{T_i} - 𝔉_i)²`.
pub fn objective_futures(nu: f64, hurst: f64, xi0: &ForwardVarianceCurve, quotes: &[FuturesQuote]) -> Result<f64> {
    check_futures_quotes(quotes)?;
    let model = model_futures_prices(nu, hurst, xi0, quotes)?;
    Ok(model.iter().zip(quotes).map(|(m, q)| (m - q.price).powi(2)).sum())
}

/// Jacobian rows `(∂𝔙_i/∂ν, ∂𝔙_i/∂H)` with `∂𝔙 = -𝔙 ∂σ̃²/8`.
fn futures_jacobian(nu: f64, hurst: f64, model: &[f64], quotes: &[FuturesQuote]) -> Result<Vec<[f64; 2]>> {
    model
        .iter()
        .zip(quotes)
        .map(|(v, q)| {
            // σ̃² is proportional to ν²
            let dnu = 2.0 * nu * bfg_sigma2(1.0, hurst, q.maturity)?;
            let dh = bfg_sigma2_dh(nu, hurst, q.maturity)?;
            Ok([-v * dnu / 8.0, -v * dh / 8.0])
        })
        .collect()
}

/// `(∂𝓛/∂ν, ∂𝓛/∂H)`.
pub fn gradient_futures(
    nu: f64,
    hurst: f64,
    xi0: &ForwardVarianceCurve,
    quotes: &[FuturesQuote],
) -> Result<(f64, f64)> {
    check_futures_quotes(quotes)?;
    let model = model_futures_prices(nu, hurst, xi0, quotes)?;
    let jac = futures_jacobian(nu, hurst, &model, quotes)?;
    let mut g = (0.0, 0.0);
    for ((m, q), row) in model.iter().zip(quotes).zip(&jac) {
        let r = m - q.price;
        g.0 += 2.0 * r * row[0];
        g.1 += 2.0 * r * row[1];
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuturesCalibrationOptions {
    pub max_iterations: usize,
    pub gradient_tol: f64,
    pub relative_decrease_tol: f64,
}

impl Default for FuturesCalibrationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-8,
            relative_decrease_tol: 1e-12,
        }
    }
}

/// Fits `(H, ν)` to VIX futures by a box-projected Levenberg–Marquardt
/// iteration on the price residuals with the analytic Jacobian.
///
/// `init` supplies the starting `(H, ν)`; `ρ` and `κ` are passed through.
/// Fewer than two quotes cannot pin down two parameters and are reported
/// as not converged.
pub fn calibrate_futures(
    quotes: &[FuturesQuote],
    xi0: &ForwardVarianceCurve,
    init: &ModelParams,
    opts: &FuturesCalibrationOptions,
) -> Result<CalibrationResult> {
    init.validate()?;
    check_futures_quotes(quotes)?;
    if quotes.is_empty() {
        return Err(Error::InsufficientData("no futures quotes".into()));
    }
    // x = (H, ν)
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let m = model_futures_prices(x[1], x[0], xi0, quotes)?;
        Ok(m.iter().zip(quotes).map(|(m, q)| m - q.price).collect())
    };
    let jacobian = |x: &[f64]| -> Result<Vec<Vec<f64>>> {
        let m = model_futures_prices(x[1], x[0], xi0, quotes)?;
        Ok(futures_jacobian(x[1], x[0], &m, quotes)?
            .into_iter()
            .map(|row| vec![row[1], row[0]])
            .collect())
    };
    let bounds = Bounds::new(vec![HURST_MIN, 1e-10], vec![HURST_MAX, NU_MAX])?;
    let lm = LmOptions {
        max_iterations: opts.max_iterations,
        ftol: opts.relative_decrease_tol,
        stall_window: 5,
        // ‖∇𝓛‖ = 2‖Jᵀr‖
        gtol: 0.5 * opts.gradient_tol,
        fd_step: 1e-6,
    };
    let rep = levenberg_marquardt(
        residuals,
        Some(&jacobian),
        &[init.hurst, init.nu.max(1e-10)],
        Some(&bounds),
        lm,
    )?;
    let params = ModelParams {
        hurst: rep.x[0],
        nu: rep.x[1],
        ..*init
    };
    let model = model_futures_prices(params.nu, params.hurst, xi0, quotes)?;
    Ok(CalibrationResult {
        params,
        objective: rep.cost,
        gradient_norm: Some(2.0 * rep.gradient_norm),
        iterations: rep.iterations,
        converged: rep.converged && quotes.len() >= 2,
        per_quote_residuals: model.iter().zip(quotes).map(|(m, q)| m - q.price).collect(),
    })
}

/// Volterra paths and orthogonal Brownian increments for a fixed `H`, reused
/// across every SPX objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedPaths {
    volterra: VolterraEnsemble,
    z_perp: Vec<f64>,
    hurst: f64,
}

impl PrecomputedPaths {
    /// Draws `paths` Volterra paths and `N(0, 1/n)` orthogonal increments
    /// from separate streams of `seed`.
    pub fn generate(grid: TimeGrid, hurst: f64, kappa: usize, paths: usize, seed: u64) -> Result<Self> {
        let volterra = simulate_volterra(grid, hurst, &HybridConfig::new(kappa, seed, paths))?;
        let nt = grid.steps();
        let sd = grid.dt().sqrt();
        let mut z_perp = vec![0.0; paths * nt];
        use rayon::prelude::*;
        z_perp.par_chunks_mut(nt).enumerate().for_each(|(m, row)| {
            let mut rng = path_rng(seed, Stream::Orthogonal, m);
            for z in row.iter_mut() {
                *z = sd * normal(&mut rng);
            }
        });
        Ok(Self {
            volterra,
            z_perp,
            hurst,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn kappa(&self) -> usize {
        self.volterra.kappa()
    }

    pub fn grid(&self) -> TimeGrid {
        self.volterra.grid()
    }

    pub fn paths(&self) -> usize {
        self.volterra.paths()
    }

    pub fn volterra(&self) -> &VolterraEnsemble {
        &self.volterra
    }

    pub fn z_perp(&self, m: usize) -> &[f64] {
        let nt = self.grid().steps();
        &self.z_perp[m * nt..(m + 1) * nt]
    }
}

/// Model call prices for `quotes` at `(ν, ρ)` on the stored paths.
pub fn model_call_prices(
    nu: f64,
    rho: f64,
    pre: &PrecomputedPaths,
    xi0: &ForwardVarianceCurve,
    quotes: &[CallQuote],
    scheme: SpxScheme,
) -> Result<Vec<f64>> {
    if quotes.is_empty() {
        return Err(Error::InsufficientData("no call quotes".into()));
    }
    let mats: Vec<f64> = quotes
        .iter()
        .map(|q| q.maturity.to_bits())
        .collect::<BTreeSet<u64>>()
        .into_iter()
        .map(f64::from_bits)
        .collect();
    let params = ModelParams::new(pre.hurst(), nu, rho, pre.kappa())?;
    let cfg = SpxPathConfig {
        grid: pre.grid(),
        paths: pre.paths(),
        scheme,
        seed: 0,
    };
    let term = simulate_spx(xi0, &params, &cfg, Some(pre), &mats)?;
    let columns: Vec<Vec<f64>> = (0..mats.len()).map(|j| term.at(j)).collect();
    quotes
        .iter()
        .map(|q| {
            let j = mats
                .iter()
                .position(|&t| t == q.maturity)
                .expect("maturity collected above");
            let pay: Vec<f64> = columns[j].iter().map(|s| (s - q.strike).max(0.0)).collect();
            Ok(crate::rng::pairwise_sum(&pay) / pay.len() as f64)
        })
        .collect()
}

/// `𝓛^C(ν, ρ) = Σ (C_{T,K} - C^obs_{T,K})²` on common random numbers.
pub fn objective_spx(
    nu: f64,
    rho: f64,
    pre: &PrecomputedPaths,
    xi0: &ForwardVarianceCurve,
    quotes: &[CallQuote],
) -> Result<f64> {
    let model = model_call_prices(nu, rho, pre, xi0, quotes, SpxScheme::LogEuler)?;
    Ok(model.iter().zip(quotes).map(|(m, q)| (m - q.price).powi(2)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpxCalibrationOptions {
    pub max_iterations: usize,
    pub xtol: f64,
    pub ftol: f64,
}

impl Default for SpxCalibrationOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            xtol: 1e-10,
            ftol: 1e-22,
        }
    }
}

/// Fits `(ν, ρ)` to SPX calls by Nelder–Mead on the common-random-number
/// objective, with `H` fixed to that of `pre`.
pub fn calibrate_spx(
    pre: &PrecomputedPaths,
    xi0: &ForwardVarianceCurve,
    quotes: &[CallQuote],
    init: &ModelParams,
    opts: &SpxCalibrationOptions,
) -> Result<CalibrationResult> {
    if init.hurst != pre.hurst() {
        return domain(format!(
            "initial H = {} differs from the precomputed H = {}",
            init.hurst,
            pre.hurst()
        ));
    }
    init.validate()?;
    let f = |x: &[f64]| objective_spx(x[0], x[1], pre, xi0, quotes);
    let bounds = Bounds::new(vec![0.0, -RHO_MAX], vec![NU_MAX, RHO_MAX])?;
    let rep = nelder_mead(
        f,
        &[init.nu, init.rho.clamp(-RHO_MAX, RHO_MAX)],
        &[0.2, 0.1],
        Some(&bounds),
        NelderMeadOptions {
            max_iterations: opts.max_iterations,
            ftol: opts.ftol,
            xtol: opts.xtol,
        },
    )?;
    let params = ModelParams {
        nu: rep.x[0],
        rho: rep.x[1],
        ..*init
    };
    let model = model_call_prices(params.nu, params.rho, pre, xi0, quotes, SpxScheme::LogEuler)?;
    Ok(CalibrationResult {
        params,
        objective: rep.value,
        gradient_norm: None,
        iterations: rep.iterations,
        converged: rep.converged,
        per_quote_residuals: model.iter().zip(quotes).map(|(m, q)| m - q.price).collect(),
    })
}
