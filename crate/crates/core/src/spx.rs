//! SPX paths under rough Bergomi and vanilla call pricing.
//!
//! The variance is driven by the hybrid-scheme Volterra path; the price is
//! driven by `dW = ρ dZ + √(1-ρ²) dZ⊥` with `Z⊥` independent. Rates and
//! dividends are zero and `S₀ = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::black;
use crate::bss::{HybridScheme, TimeGrid};
use crate::calib::PrecomputedPaths;
use crate::error::{domain, Error, Result};
use crate::model::{ForwardVarianceCurve, ModelParams};
use crate::rng::{mean_and_se, normal, path_rng, Stream};
use crate::specfun::c_h;

/// Time stepping of the price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpxScheme {
    /// `X_{i+1} = X_i - ½V_i Δt + √V_i ΔW_i` for `X = ln S`.
    #[default]
    LogEuler,
    /// `S_{i+1} = S_i (1 + √V_i ΔW_i)`.
    PriceEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpxPathConfig {
    pub grid: TimeGrid,
    pub paths: usize,
    pub scheme: SpxScheme,
    pub seed: u64,
}

/// Terminal prices, `paths × maturities`, row-major by path.
#[derive(Debug, Clone, PartialEq)]
pub struct SpxTerminals {
    pub maturities: Vec<f64>,
    pub paths: usize,
    values: Vec<f64>,
}

impl SpxTerminals {
    /// Terminal prices at maturity index `j` across all paths.
    pub fn at(&self, j: usize) -> Vec<f64> {
        let nm = self.maturities.len();
        (0..self.paths).map(|m| self.values[m * nm + j]).collect()
    }
}

/// A Monte Carlo call price with its implied volatility, when invertible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmilePoint {
    #[serde(rename = "maturity_years")]
    pub maturity: f64,
    pub strike: f64,
    pub call_price: f64,
    pub std_error: f64,
    pub implied_vol: Option<f64>,
}

fn maturity_indices(grid: &TimeGrid, maturities: &[f64]) -> Result<Vec<usize>> {
    if maturities.is_empty() {
        return domain("at least one maturity is required");
    }
    maturities
        .iter()
        .map(|&t| {
            grid.index_of(t).filter(|&i| i > 0).ok_or_else(|| {
                Error::GridMismatch(format!(
                    "maturity {t} is not a positive point of the grid with n = {} and T = {}",
                    grid.steps_per_year(),
                    grid.horizon()
                ))
            })
        })
        .collect()
}

struct Stepper<'a> {
    xi: Vec<f64>,
    comp: Vec<f64>,
    scale: f64,
    rho: f64,
    rho_perp: f64,
    dt: f64,
    scheme: SpxScheme,
    idx: &'a [usize],
}

impl Stepper<'_> {
    fn new<'a>(
        xi0: &ForwardVarianceCurve,
        params: &ModelParams,
        grid: &TimeGrid,
        scheme: SpxScheme,
        idx: &'a [usize],
    ) -> Result<Stepper<'a>> {
        let c = c_h(params.hurst)?;
        let scale = 2.0 * params.nu * c;
        let h = params.hurst;
        let nt = grid.steps();
        let xi = (0..nt).map(|i| xi0.value(grid.time(i))).collect();
        // Itô compensator of 2νC_H 𝒱_t
        let comp = (0..nt)
            .map(|i| scale * scale * grid.time(i).powf(2.0 * h) / (4.0 * h))
            .collect();
        Ok(Stepper {
            xi,
            comp,
            scale,
            rho: params.rho,
            rho_perp: (1.0 - params.rho * params.rho).sqrt(),
            dt: grid.dt(),
            scheme,
            idx,
        })
    }

    fn run(&self, volterra: &[f64], z: &[f64], z_perp: &[f64], out: &mut [f64]) {
        let mut x: f64 = match self.scheme {
            SpxScheme::LogEuler => 0.0,
            SpxScheme::PriceEuler => 1.0,
        };
        let mut next = 0;
        for i in 0..self.xi.len() {
            let v = self.xi[i] * (self.scale * volterra[i] - self.comp[i]).exp();
            let dw = self.rho * z[i] + self.rho_perp * z_perp[i];
            match self.scheme {
                SpxScheme::LogEuler => x += -0.5 * v * self.dt + v.sqrt() * dw,
                SpxScheme::PriceEuler => x *= 1.0 + v.sqrt() * dw,
            }
            while next < self.idx.len() && self.idx[next] == i + 1 {
                out[next] = match self.scheme {
                    SpxScheme::LogEuler => x.exp(),
                    SpxScheme::PriceEuler => x,
                };
                next += 1;
            }
        }
    }
}

/// Simulates terminal prices at `maturities` (grid points of `cfg.grid`).
///
/// With `pre`, the stored Volterra paths and orthogonal increments are reused
/// and `cfg.seed` is ignored; the stored Hurst parameter must equal `params.hurst`.
pub fn simulate_spx(
    xi0: &ForwardVarianceCurve,
    params: &ModelParams,
    cfg: &SpxPathConfig,
    pre: Option<&PrecomputedPaths>,
    maturities: &[f64],
) -> Result<SpxTerminals> {
    params.validate()?;
    let idx = maturity_indices(&cfg.grid, maturities)?;
    let nm = idx.len();
    let nt = cfg.grid.steps();
    let stepper = Stepper::new(xi0, params, &cfg.grid, cfg.scheme, &idx)?;
    let sqrt_dt = cfg.grid.dt().sqrt();
    if let Some(pre) = pre {
        if pre.hurst() != params.hurst {
            return domain(format!(
                "paths were generated with H = {} but H = {} was requested",
                pre.hurst(),
                params.hurst
            ));
        }
        if pre.grid() != cfg.grid {
            return Err(Error::GridMismatch("precomputed paths live on a different grid".into()));
        }
        let paths = pre.paths();
        let mut values = vec![0.0; paths * nm];
        values.par_chunks_mut(nm).enumerate().for_each(|(m, out)| {
            stepper.run(
                pre.volterra().values(m),
                pre.volterra().z_increments(m),
                pre.z_perp(m),
                out,
            );
        });
        return Ok(SpxTerminals {
            maturities: maturities.to_vec(),
            paths,
            values,
        });
    }
    if cfg.paths == 0 {
        return domain("need at least one path");
    }
    let scheme = HybridScheme::new(cfg.grid, params.hurst, params.kappa, Default::default())?;
    let mut values = vec![0.0; cfg.paths * nm];
    values.par_chunks_mut(nm).enumerate().for_each_init(
        || (scheme.scratch(), vec![0.0; nt + 1], vec![0.0; nt], vec![0.0; nt]),
        |(scratch, v, z, zp), (m, out)| {
            let mut rng = path_rng(cfg.seed, Stream::Volterra, m);
            scheme.sample_into(&mut rng, scratch, v, z);
            let mut rp = path_rng(cfg.seed, Stream::Orthogonal, m);
            for e in zp.iter_mut() {
                *e = sqrt_dt * normal(&mut rp);
            }
            stepper.run(v, z, zp, out);
        },
    );
    Ok(SpxTerminals {
        maturities: maturities.to_vec(),
        paths: cfg.paths,
        values,
    })
}

/// Monte Carlo call prices and implied volatilities on `maturities × strikes`.
pub fn price_calls(terminals: &SpxTerminals, strikes: &[f64]) -> Result<Vec<SmilePoint>> {
    if terminals.paths == 0 {
        return domain("no terminal prices");
    }
    if strikes.iter().any(|k| !(*k >= 0.0)) {
        return domain("strikes must be non-negative");
    }
    let mut out = Vec::with_capacity(terminals.maturities.len() * strikes.len());
    for (j, &t) in terminals.maturities.iter().enumerate() {
        let s = terminals.at(j);
        for &k in strikes {
            let pay: Vec<f64> = s.iter().map(|x| (x - k).max(0.0)).collect();
            let (price, se) = mean_and_se(&pay);
            let iv = if k > 0.0 {
                black::implied_vol(price, 1.0, k, t).ok()
            } else {
                None
            };
            out.push(SmilePoint {
                maturity: t,
                strike: k,
                call_price: price,
                std_error: se,
                implied_vol: iv,
            });
        }
    }
    Ok(out)
}

/// Black implied volatility; see [`black::implied_vol`].
pub fn implied_vol(call_price: f64, forward: f64, strike: f64, maturity: f64) -> Result<f64> {
    black::implied_vol(call_price, forward, strike, maturity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(paths: usize, scheme: SpxScheme) -> SpxPathConfig {
        SpxPathConfig {
            grid: TimeGrid::new(50, 1.0).unwrap(),
            paths,
            scheme,
            seed: 9,
        }
    }

    #[test]
    fn prices_are_positive_and_seeded() {
        let p = ModelParams::reference();
        let c = ForwardVarianceCurve::flat(0.04);
        let a = simulate_spx(&c, &p, &cfg(200, SpxScheme::LogEuler), None, &[0.5, 1.0]).unwrap();
        let b = simulate_spx(&c, &p, &cfg(200, SpxScheme::LogEuler), None, &[0.5, 1.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.at(1).iter().all(|s| *s > 0.0));
    }

    #[test]
    fn maturity_must_be_on_grid() {
        let p = ModelParams::reference();
        let c = ForwardVarianceCurve::flat(0.04);
        let r = simulate_spx(&c, &p, &cfg(10, SpxScheme::LogEuler), None, &[0.513]);
        assert!(matches!(r, Err(Error::GridMismatch(_))));
        assert!(simulate_spx(&c, &p, &cfg(10, SpxScheme::LogEuler), None, &[2.0]).is_err());
    }

    #[test]
    fn zero_strike_call_is_mean_price() {
        let p = ModelParams::reference();
        let c = ForwardVarianceCurve::flat(0.04);
        let t = simulate_spx(&c, &p, &cfg(2000, SpxScheme::PriceEuler), None, &[1.0]).unwrap();
        let smile = price_calls(&t, &[0.0, 1.0, 100.0]).unwrap();
        assert!((smile[0].call_price - 1.0).abs() < 3.0 * smile[0].std_error + 1e-12);
        assert_eq!(smile[2].call_price, 0.0);
        assert!(smile[1].implied_vol.is_some());
    }
}
