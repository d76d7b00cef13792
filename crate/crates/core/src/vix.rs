//! VIX under rough Bergomi.
//!
//! `VIX_T² = (1/Δ) ∫_T^{T+Δ} ξ_T(t) dt` with `Δ = 30/365`. This module holds
//! two Monte Carlo engines for `VIX_T`, the model-free futures bounds, the
//! log-normal moment approximations of `Δ VIX_T²` and the resulting closed-form
//! futures and call prices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bss::{brownian_path, HybridConfig, HybridScheme, TimeGrid};
use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::model::{
    conditional_covariance_vt, conditional_variance_vt, forward_variance, ConditionalVolterra, ForwardVarianceCurve,
    ModelParams,
};
use crate::quad::{self, graded_rule, QuadOptions};
use crate::rng::{mean_and_se, normal, path_rng, Stream};
use crate::specfun::{c_h, c_h_squared, gauss_2f1, k_h, HypergeoArgs};

/// Length of the VIX window in years.
pub const DELTA: f64 = 30.0 / 365.0;

/// Points drawn exactly by the truncated-Cholesky engine.
pub const CHOLESKY_BLOCK: usize = 8;

/// Trapezoid grid `τ_j = T + jΔ/N`, `j = 0..=N`, on the VIX window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VixGrid {
    maturity: f64,
    intervals: usize,
}

impl VixGrid {
    pub fn new(maturity: f64, intervals: usize) -> Result<Self> {
        if !(maturity >= 0.0) || !maturity.is_finite() {
            return domain(format!("VIX maturity {maturity} must be non-negative"));
        }
        if intervals < 2 {
            return domain(format!("VIX grid needs N >= 2, got {intervals}"));
        }
        Ok(Self { maturity, intervals })
    }

    /// The default 30-interval (daily) grid.
    pub fn daily(maturity: f64) -> Result<Self> {
        Self::new(maturity, 30)
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn tau(&self, j: usize) -> f64 {
        self.maturity + DELTA * j as f64 / self.intervals as f64
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..=self.intervals).map(|j| self.tau(j)).collect()
    }

    /// `(1/Δ) × trapezoid` of the samples `q[j] ≈ f(τ_j)`.
    fn window_average(&self, q: &[f64]) -> f64 {
        let n = self.intervals;
        let inner: f64 = q[1..n].iter().sum();
        (0.5 * (q[0] + q[n]) + inner) / n as f64
    }
}

/// Moments of `log(Δ VIX_T²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVariant {
    Exact,
    Bfg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalMoments {
    pub mu: f64,
    pub sigma2: f64,
    pub variant: MomentVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VixFuturesBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
}

impl McEstimate {
    pub fn from_samples(x: &[f64]) -> Self {
        let (estimate, std_error) = mean_and_se(x);
        Self {
            estimate,
            std_error,
            paths: x.len(),
        }
    }

    /// Call payoff `(x - K)⁺` averaged over the samples.
    pub fn call(x: &[f64], strike: f64) -> Self {
        let pay: Vec<f64> = x.iter().map(|v| (v - strike).max(0.0)).collect();
        Self::from_samples(&pay)
    }
}

/// `ξ₀(τ) exp(ν²C_H²/H [(τ-T)^{2H} - τ^{2H}])` on the grid, and `2νC_H`.
fn deterministic_factors(xi0: &ForwardVarianceCurve, params: &ModelParams, grid: &VixGrid) -> Result<(Vec<f64>, f64)> {
    let f = grid
        .taus()
        .into_iter()
        .map(|tau| forward_variance(xi0, params, grid.maturity, tau, 0.0))
        .collect::<Result<Vec<f64>>>()?;
    Ok((f, 2.0 * params.nu * c_h(params.hurst)?))
}

fn vix_from_values(grid: &VixGrid, base: &[f64], scale: f64, vt: &[f64], q: &mut [f64]) -> f64 {
    for j in 0..q.len() {
        q[j] = base[j] * (scale * vt[j]).exp();
    }
    grid.window_average(q).sqrt()
}

/// `VIX_T` from one path of `𝒱ᵀ` on the trapezoid grid.
pub fn vix_from_conditional_path(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    grid: &VixGrid,
    path: &ConditionalVolterra,
) -> Result<f64> {
    let taus = grid.taus();
    let aligned = path.times.len() == taus.len()
        && (path.base_time - grid.maturity).abs() <= 1e-12
        && path.times.iter().zip(&taus).all(|(a, b)| (a - b).abs() <= 1e-12);
    if !aligned {
        return Err(Error::GridMismatch(format!(
            "path has {} points from T = {}, grid has {} from T = {}",
            path.times.len(),
            path.base_time,
            taus.len(),
            grid.maturity
        )));
    }
    let (base, scale) = deterministic_factors(xi0, params, grid)?;
    let mut q = vec![0.0; taus.len()];
    Ok(vix_from_values(grid, &base, scale, &path.values, &mut q))
}

fn deterministic_vix(xi0: &ForwardVarianceCurve, grid: &VixGrid) -> f64 {
    (xi0.integral(grid.maturity, grid.maturity + DELTA) / DELTA).sqrt()
}

/// Hybrid scheme on `[0, T]` followed by a forward-Euler approximation of
/// `𝒱ᵀ_τ = ∫_0^T (τ-u)^{H-1/2} dZ_u` on the VIX window.
///
/// Returns one `VIX_T` sample per path.
pub fn simulate_vix_hsfe(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    grid: &VixGrid,
    sim: &HybridConfig,
    base_grid: &TimeGrid,
) -> Result<Vec<f64>> {
    params.validate()?;
    if sim.paths == 0 {
        return domain("need at least one path");
    }
    let big_t = grid.maturity;
    if big_t == 0.0 {
        return Ok(vec![deterministic_vix(xi0, grid); sim.paths]);
    }
    let n = base_grid.steps_per_year();
    let nt = base_grid.steps();
    if (nt as f64 / n as f64 - big_t).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "base grid ends at {} but the VIX maturity is {big_t}",
            nt as f64 / n as f64
        )));
    }
    let scheme = HybridScheme::new(*base_grid, params.hurst, sim.kappa, sim.convolution)?;
    let hm = params.hurst - 0.5;
    let taus = grid.taus();
    let euler: Vec<Vec<f64>> = taus[1..]
        .iter()
        .map(|tau| (0..nt).map(|i| (tau - base_grid.time(i)).powf(hm)).collect())
        .collect();
    let (base, scale) = deterministic_factors(xi0, params, grid)?;
    let mut out = vec![0.0; sim.paths];
    out.par_iter_mut().enumerate().try_for_each_init(
        || {
            (
                scheme.scratch(),
                vec![0.0; nt + 1],
                vec![0.0; nt],
                vec![0.0; taus.len()],
                vec![0.0; taus.len()],
            )
        },
        |(scratch, v, z, vt, q), (m, slot)| -> Result<()> {
            let mut rng = path_rng(sim.seed, Stream::Volterra, m);
            scheme.sample_into(&mut rng, scratch, v, z);
            let bm = brownian_path(v, z, sim.kappa, n, params.hurst)?;
            vt[0] = v[nt];
            for (j, w) in euler.iter().enumerate() {
                vt[j + 1] = w.iter().zip(bm.windows(2)).map(|(w, b)| w * (b[1] - b[0])).sum();
            }
            *slot = vix_from_values(grid, &base, scale, vt, q);
            Ok(())
        },
    )?;
    Ok(out)
}

/// Sampler of `𝒱ᵀ` on a VIX grid: the first [`CHOLESKY_BLOCK`] points are
/// drawn exactly, later points by an adjacent-correlation recursion that
/// preserves every marginal variance.
#[derive(Debug, Clone)]
pub struct TruncatedCholesky {
    block: usize,
    chol: Matrix,
    sd: Vec<f64>,
    rho: Vec<f64>,
}

impl TruncatedCholesky {
    pub fn new(grid: &VixGrid, hurst: f64) -> Result<Self> {
        let big_t = grid.maturity;
        if !(big_t > 0.0) {
            return domain("the truncated-Cholesky engine needs T > 0");
        }
        let taus = grid.taus();
        let block = CHOLESKY_BLOCK.min(taus.len());
        let mut gram = Matrix::zeros(block);
        for i in 0..block {
            for j in 0..=i {
                let c = conditional_covariance_vt(taus[i], taus[j], big_t, hurst)?;
                gram.set(i, j, c);
                gram.set(j, i, c);
            }
        }
        let chol = gram.cholesky()?;
        let var = taus
            .iter()
            .map(|&t| conditional_variance_vt(t, big_t, hurst))
            .collect::<Result<Vec<f64>>>()?;
        let sd: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        let mut rho = vec![0.0; taus.len()];
        for j in block..taus.len() {
            rho[j] = adjacent_correlation_between(taus[j - 1], taus[j], big_t, hurst)?;
        }
        Ok(Self { block, chol, sd, rho })
    }

    pub fn points(&self) -> usize {
        self.sd.len()
    }

    /// Fills `out` with one draw of `(𝒱ᵀ_{τ_0}, …, 𝒱ᵀ_{τ_N})`.
    pub fn sample(&self, rng: &mut rand_chacha::ChaCha8Rng, z: &mut [f64], out: &mut [f64]) {
        for x in z[..self.block].iter_mut() {
            *x = normal(rng);
        }
        self.chol.lower_mul(&z[..self.block], &mut out[..self.block]);
        for j in self.block..self.sd.len() {
            let r = self.rho[j];
            out[j] = self.sd[j] * (r * out[j - 1] / self.sd[j - 1] + (1.0 - r * r).max(0.0).sqrt() * normal(rng));
        }
    }
}

/// Truncated-Cholesky Monte Carlo for `VIX_T`; one sample per path.
pub fn simulate_vix_truncated_cholesky(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    grid: &VixGrid,
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    params.validate()?;
    if paths == 0 {
        return domain("need at least one path");
    }
    if grid.maturity == 0.0 {
        return Ok(vec![deterministic_vix(xi0, grid); paths]);
    }
    let sampler = TruncatedCholesky::new(grid, params.hurst)?;
    let (base, scale) = deterministic_factors(xi0, params, grid)?;
    let k = sampler.points();
    let mut out = vec![0.0; paths];
    out.par_iter_mut().enumerate().for_each_init(
        || (vec![0.0; k], vec![0.0; k], vec![0.0; k]),
        |(z, vt, q), (m, slot)| {
            let mut rng = path_rng(seed, Stream::VixCholesky, m);
            sampler.sample(&mut rng, z, vt);
            *slot = vix_from_values(grid, &base, scale, vt, q);
        },
    );
    Ok(out)
}

/// Lower and upper bounds on the VIX futures price at `T`.
///
/// The lower bound integral is evaluated on a Gauss–Legendre rule graded
/// towards `T` with `quadrature_n` nodes.
pub fn futures_bounds(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    big_t: f64,
    quadrature_n: usize,
) -> Result<VixFuturesBounds> {
    params.validate()?;
    if !(big_t >= 0.0) {
        return Err(Error::Order(format!("maturity {big_t} is negative")));
    }
    if quadrature_n == 0 {
        return domain("quadrature needs at least one node");
    }
    let h = params.hurst;
    let c2 = c_h_squared(h)?;
    let k = params.nu * params.nu * c2 / (4.0 * h);
    let lower: f64 = graded_rule(big_t, DELTA, quadrature_n)
        .into_iter()
        .map(|(t, w)| w * xi0.value(t).sqrt() * (k * ((t - big_t).powf(2.0 * h) - t.powf(2.0 * h))).exp())
        .sum::<f64>()
        / DELTA;
    let upper = (xi0.integral(big_t, big_t + DELTA) / DELTA).sqrt();
    Ok(VixFuturesBounds { lower, upper })
}

/// Exponent `Θ̄_{u,t} = ½ Var(2νC_H (𝒱ᵀ_u + 𝒱ᵀ_t))`.
///
/// On the diagonal this is the continuous limit `8ν²C_H² Var(𝒱ᵀ_t)`.
pub fn theta_bar(u: f64, t: f64, big_t: f64, params: &ModelParams) -> Result<f64> {
    let h = params.hurst;
    let c2 = c_h_squared(h)?;
    let vu = conditional_variance_vt(u, big_t, h)?;
    let vt = conditional_variance_vt(t, big_t, h)?;
    let cov = conditional_covariance_vt(u, t, big_t, h)?;
    Ok(2.0 * params.nu * params.nu * c2 * (vu + vt + 2.0 * cov))
}

/// Tensor-product graded Gauss–Legendre evaluation of
/// `(𝔼 Δ VIX_T², 𝔼 (Δ VIX_T²)²)` with `nodes` points per axis.
pub fn exact_raw_moments(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    big_t: f64,
    nodes: usize,
) -> Result<(f64, f64)> {
    params.validate()?;
    if !(big_t >= 0.0) {
        return Err(Error::Order(format!("maturity {big_t} is negative")));
    }
    if nodes == 0 {
        return domain("quadrature needs at least one node");
    }
    let rule = graded_rule(big_t, DELTA, nodes);
    let h = params.hurst;
    let c2 = c_h_squared(h)?;
    let nu2 = params.nu * params.nu;
    // ξ₀(t) exp(ν²C²/H [(t-T)^{2H} - t^{2H}]) at each node
    let f: Vec<f64> = rule
        .iter()
        .map(|&(t, _)| xi0.value(t) * (nu2 * c2 / h * ((t - big_t).powf(2.0 * h) - t.powf(2.0 * h))).exp())
        .collect();
    let first: f64 = rule.iter().map(|&(t, w)| w * xi0.value(t)).sum();
    let rows = (0..nodes)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let (u, wu) = rule[i];
            let mut s = 0.0;
            for j in 0..=i {
                let (t, wt) = rule[j];
                let factor = if i == j { 1.0 } else { 2.0 };
                s += factor * wt * f[j] * theta_bar(u, t, big_t, params)?.exp();
            }
            Ok(wu * f[i] * s)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((first, rows.iter().sum()))
}

/// Exact log-normal moments of `Δ VIX_T²`.
///
/// `σ²` is formed from quadrature estimates of both raw moments on the same
/// rule, so that discretisation error largely cancels; `μ` then matches the
/// exact first moment `∫ξ₀`.
pub fn moments_exact(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    big_t: f64,
    nodes: usize,
) -> Result<LogNormalMoments> {
    let (m1, m2) = exact_raw_moments(xi0, params, big_t, nodes)?;
    let sigma2 = if big_t == 0.0 || params.nu == 0.0 {
        0.0
    } else {
        (m2.ln() - 2.0 * m1.ln()).max(0.0)
    };
    let mu = xi0.integral(big_t, big_t + DELTA).ln() - 0.5 * sigma2;
    Ok(LogNormalMoments {
        mu,
        sigma2,
        variant: MomentVariant::Exact,
    })
}

fn check_bfg_inputs(hurst: f64, big_t: f64) -> Result<()> {
    if !(hurst > 0.0 && hurst < 0.5) {
        return domain(format!("Hurst parameter {hurst} outside (0, 1/2)"));
    }
    if !(big_t >= 0.0) {
        return Err(Error::Order(format!("maturity {big_t} is negative")));
    }
    Ok(())
}

/// `∫_0^T [(x+Δ)^{H₊} - x^{H₊}]² dx` in closed form.
pub fn bfg_kernel_integral(hurst: f64, big_t: f64) -> Result<f64> {
    check_bfg_inputs(hurst, big_t)?;
    if big_t == 0.0 {
        return Ok(0.0);
    }
    let hp = hurst + 0.5;
    let p = 1.0 + 2.0 * hp;
    let f = gauss_2f1(HypergeoArgs::new(-hp, 1.0 + hp, 2.0 + hp, -big_t / DELTA))?;
    Ok(((big_t + DELTA).powf(p) - DELTA.powf(p) + big_t.powf(p)) / p
        - 2.0 * big_t.powf(1.0 + hp) * DELTA.powf(hp) / (1.0 + hp) * f)
}

/// The same integral by adaptive quadrature.
pub fn bfg_kernel_integral_quadrature(hurst: f64, big_t: f64) -> Result<f64> {
    check_bfg_inputs(hurst, big_t)?;
    let hp = hurst + 0.5;
    quad::integrate(
        |x: f64| ((x + DELTA).powf(hp) - x.powf(hp)).powi(2),
        0.0,
        big_t,
        QuadOptions::rel(1e-13),
    )
}

/// `σ̃² = 4ν²C_H² / (Δ² H₊²) ∫_0^T [(x+Δ)^{H₊} - x^{H₊}]² dx`.
pub fn bfg_sigma2(nu: f64, hurst: f64, big_t: f64) -> Result<f64> {
    let hp = hurst + 0.5;
    Ok(4.0 * nu * nu * c_h_squared(hurst)? / (DELTA * DELTA * hp * hp) * bfg_kernel_integral(hurst, big_t)?)
}

/// `∂σ̃²/∂H`.
///
/// `σ̃² (K_H - 2)/H₊ + 8ν²C_H²/(Δ²H₊²) ∫_0^T [(x+Δ)^{H₊} - x^{H₊}]
/// [(x+Δ)^{H₊} ln(x+Δ) - x^{H₊} ln x] dx`, with the integral by adaptive quadrature.
pub fn bfg_sigma2_dh(nu: f64, hurst: f64, big_t: f64) -> Result<f64> {
    check_bfg_inputs(hurst, big_t)?;
    if big_t == 0.0 {
        return Ok(0.0);
    }
    let hp = hurst + 0.5;
    let log_term = quad::integrate(
        |x: f64| {
            let a = (x + DELTA).powf(hp);
            let b = if x > 0.0 { x.powf(hp) } else { 0.0 };
            let lb = if x > 0.0 { b * x.ln() } else { 0.0 };
            (a - b) * (a * (x + DELTA).ln() - lb)
        },
        0.0,
        big_t,
        QuadOptions::rel(1e-12),
    )?;
    let s2 = bfg_sigma2(nu, hurst, big_t)?;
    Ok(s2 * (k_h(hurst)? - 2.0) / hp + 8.0 * nu * nu * c_h_squared(hurst)? / (DELTA * DELTA * hp * hp) * log_term)
}

/// Log-normal moments with the approximate variance `σ̃²`.
pub fn moments_bfg(xi0: &ForwardVarianceCurve, params: &ModelParams, big_t: f64) -> Result<LogNormalMoments> {
    params.validate()?;
    let sigma2 = bfg_sigma2(params.nu, params.hurst, big_t)?;
    Ok(LogNormalMoments {
        mu: xi0.integral(big_t, big_t + DELTA).ln() - 0.5 * sigma2,
        sigma2,
        variant: MomentVariant::Bfg,
    })
}

/// `Δ^{-1/2} √(∫_T^{T+Δ} ξ₀) exp(-σ²/8)`.
pub fn future_price_lognormal(xi0: &ForwardVarianceCurve, moments: &LogNormalMoments, big_t: f64) -> f64 {
    (xi0.integral(big_t, big_t + DELTA) / DELTA).sqrt() * (-moments.sigma2 / 8.0).exp()
}

/// Call on `VIX_T` with strike `K` when `Δ VIX_T²` is log-normal.
pub fn call_price_lognormal(
    xi0: &ForwardVarianceCurve,
    moments: &LogNormalMoments,
    big_t: f64,
    strike: f64,
) -> Result<f64> {
    if !(strike > 0.0) {
        return domain(format!("strike {strike} must be positive"));
    }
    let f = future_price_lognormal(xi0, moments, big_t);
    let s2 = moments.sigma2;
    if s2 <= 0.0 {
        return Ok((f - strike).max(0.0));
    }
    let s = s2.sqrt();
    let kt = ((strike * strike * DELTA).ln() - xi0.integral(big_t, big_t + DELTA).ln() + 0.5 * s2) / s;
    let n = Normal::standard();
    Ok(f * n.cdf(-kt + 0.5 * s) - strike * n.cdf(-kt))
}

fn adjacent_correlation_between(a: f64, b: f64, big_t: f64, hurst: f64) -> Result<f64> {
    let cov = conditional_covariance_vt(a, b, big_t, hurst)?;
    let va = conditional_variance_vt(a, big_t, hurst)?;
    let vb = conditional_variance_vt(b, big_t, hurst)?;
    Ok((cov / (va * vb).sqrt()).min(1.0))
}

/// `corr(𝒱ᵀ_t, 𝒱ᵀ_{t+ε})`.
pub fn adjacent_correlation(t: f64, eps: f64, big_t: f64, hurst: f64) -> Result<f64> {
    if !(big_t > 0.0) {
        return domain("correlation of the conditional Volterra process needs T > 0");
    }
    if !(eps > 0.0) {
        return domain(format!("eps = {eps} must be positive"));
    }
    adjacent_correlation_between(t, t + eps, big_t, hurst)
}
