use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use roughvol::bss::{HybridConfig, TimeGrid};
use roughvol::calib::{
    calibrate_futures, calibrate_spx, CallQuote, FuturesQuote, PrecomputedPaths, SpxCalibrationOptions,
};
use roughvol::model::{ForwardVarianceCurve, ModelParams};
use roughvol::spx::{price_calls, simulate_spx, SpxPathConfig};
use roughvol::ssvi::{fit_essvi, EssviParams, EssviSurface, FitOptions, OptionQuote, XI0_EPS};
use roughvol::vix::{
    call_price_lognormal, future_price_lognormal, futures_bounds, moments_bfg, moments_exact, simulate_vix_hsfe,
    simulate_vix_truncated_cholesky, McEstimate, VixGrid, DELTA,
};

use crate::config::{RunConfig, UsageError};
use crate::io::{read_csv, read_json, OutDir};

#[derive(Serialize)]
struct FuturesRow {
    #[serde(rename = "T")]
    t: f64,
    lower_bound: f64,
    upper_bound: f64,
    mc_hsfe: Option<f64>,
    mc_hsfe_se: Option<f64>,
    mc_cholesky: f64,
    mc_cholesky_se: f64,
    lognormal_exact: f64,
    lognormal_bfg: f64,
}

pub fn vix_futures(cfg: &RunConfig, out: &OutDir) -> Result<bool> {
    let p = &cfg.params;
    let mut rows = Vec::new();
    let mut inside = true;
    for &t in cfg.require_maturities()? {
        let grid = VixGrid::new(t, cfg.vix_intervals)?;
        let b = futures_bounds(&cfg.xi0, p, t, cfg.bounds_nodes)?;
        let chol = McEstimate::from_samples(&simulate_vix_truncated_cholesky(
            &cfg.xi0, p, &grid, cfg.paths, cfg.seed,
        )?);
        let hsfe = if cfg.hsfe {
            let base = TimeGrid::new(cfg.steps_per_year, t)?;
            let sim = HybridConfig::new(p.kappa, cfg.seed, cfg.paths);
            let x = simulate_vix_hsfe(&cfg.xi0, p, &grid, &sim, &base)
                .with_context(|| format!("hybrid-scheme VIX at T = {t}"))?;
            Some(McEstimate::from_samples(&x))
        } else {
            None
        };
        for e in std::iter::once(&chol).chain(hsfe.as_ref()) {
            let tol = 3.0 * e.std_error;
            inside &= e.estimate >= b.lower - tol && e.estimate <= b.upper + tol;
        }
        let exact = moments_exact(&cfg.xi0, p, t, cfg.moment_nodes)?;
        let bfg = moments_bfg(&cfg.xi0, p, t)?;
        rows.push(FuturesRow {
            t,
            lower_bound: b.lower,
            upper_bound: b.upper,
            mc_hsfe: hsfe.map(|e| e.estimate),
            mc_hsfe_se: hsfe.map(|e| e.std_error),
            mc_cholesky: chol.estimate,
            mc_cholesky_se: chol.std_error,
            lognormal_exact: future_price_lognormal(&cfg.xi0, &exact, t),
            lognormal_bfg: future_price_lognormal(&cfg.xi0, &bfg, t),
        });
    }
    out.csv("vix_futures.csv", &rows)?;
    if !inside {
        eprintln!("warning: a Monte Carlo estimate lies outside the futures bounds by more than 3 SE");
    }
    Ok(inside)
}

#[derive(Serialize)]
struct VixOptionRow {
    #[serde(rename = "T")]
    t: f64,
    strike: f64,
    mc_cholesky: f64,
    mc_cholesky_se: f64,
    lognormal_exact: f64,
    lognormal_bfg: f64,
}

pub fn vix_options(cfg: &RunConfig, out: &OutDir) -> Result<bool> {
    let p = &cfg.params;
    let mut rows = Vec::new();
    for &t in cfg.require_maturities()? {
        let grid = VixGrid::new(t, cfg.vix_intervals)?;
        let exact = moments_exact(&cfg.xi0, p, t, cfg.moment_nodes)?;
        let bfg = moments_bfg(&cfg.xi0, p, t)?;
        let strikes = if cfg.strikes.is_empty() {
            let f = future_price_lognormal(&cfg.xi0, &exact, t);
            [0.8, 0.9, 1.0, 1.1, 1.2].iter().map(|m| m * f).collect()
        } else {
            cfg.strikes.clone()
        };
        let samples = simulate_vix_truncated_cholesky(&cfg.xi0, p, &grid, cfg.paths, cfg.seed)?;
        for k in strikes {
            let mc = McEstimate::call(&samples, k);
            rows.push(VixOptionRow {
                t,
                strike: k,
                mc_cholesky: mc.estimate,
                mc_cholesky_se: mc.std_error,
                lognormal_exact: call_price_lognormal(&cfg.xi0, &exact, t, k)?,
                lognormal_bfg: call_price_lognormal(&cfg.xi0, &bfg, t, k)?,
            });
        }
    }
    out.csv("vix_options.csv", &rows)?;
    Ok(true)
}

#[derive(Serialize)]
struct SmileRow {
    maturity_years: f64,
    strike: f64,
    call_price: f64,
    std_error: f64,
    implied_vol: Option<f64>,
}

pub fn smile(cfg: &RunConfig, out: &OutDir) -> Result<bool> {
    let mats = cfg.require_maturities()?;
    let strikes = if cfg.strikes.is_empty() {
        vec![0.8, 0.9, 1.0, 1.1, 1.2]
    } else {
        cfg.strikes.clone()
    };
    let grid = TimeGrid::new(cfg.steps_per_year, *mats.last().expect("non-empty"))?;
    let spx = SpxPathConfig {
        grid,
        paths: cfg.paths,
        scheme: cfg.scheme,
        seed: cfg.seed,
    };
    let term = simulate_spx(&cfg.xi0, &cfg.params, &spx, None, mats)?;
    let rows: Vec<SmileRow> = price_calls(&term, &strikes)?
        .into_iter()
        .map(|s| SmileRow {
            maturity_years: s.maturity,
            strike: s.strike,
            call_price: s.call_price,
            std_error: s.std_error,
            implied_vol: s.implied_vol,
        })
        .collect();
    out.csv("smile.csv", &rows)?;
    Ok(true)
}

fn default_essvi_init() -> EssviParams {
    EssviParams {
        eta: 1.0,
        lambda: 0.4,
        a: -0.5,
        b: 0.0,
        c: -0.5,
        theta_knots: vec![(1.0, 0.04)],
    }
}

/// Fits and writes `essvi.json` and `essvi_fit.json`.
fn run_essvi_fit(cfg: &RunConfig, out: &OutDir) -> Result<(EssviSurface, bool)> {
    let path = cfg
        .option_quotes
        .as_deref()
        .ok_or_else(|| UsageError("option_quotes is not set in the config".into()))?;
    let quotes: Vec<OptionQuote> = read_csv(path)?;
    let init = cfg.essvi.clone().unwrap_or_else(default_essvi_init);
    let opts = FitOptions {
        pin_b: cfg.pin_b,
        ..Default::default()
    };
    let (params, report) = fit_essvi(&quotes, &init, &opts)?;
    out.json("essvi.json", &params)?;
    out.json("essvi_fit.json", &report)?;
    let arbitrage_free = report.per_maturity.iter().all(|m| m.butterfly.ok && m.calendar.ok);
    Ok((params.surface()?, arbitrage_free))
}

pub fn essvi_fit(cfg: &RunConfig, out: &OutDir) -> Result<bool> {
    Ok(run_essvi_fit(cfg, out)?.1)
}

#[derive(Serialize)]
struct VarswapRow {
    maturity_years: f64,
    total_variance: f64,
    variance: f64,
    xi0: f64,
}

fn varswap_rows(s: &EssviSurface, times: &[f64]) -> Result<Vec<VarswapRow>> {
    times
        .iter()
        .map(|&t| {
            let w = s.varswap_total_variance(t)?.total_variance;
            Ok(VarswapRow {
                maturity_years: t,
                total_variance: w,
                variance: w / t,
                xi0: s.xi0_extract(t, XI0_EPS)?,
            })
        })
        .collect()
}

fn load_surface(cfg: &RunConfig) -> Result<EssviSurface> {
    let params: EssviParams = match (&cfg.surface, &cfg.essvi) {
        (Some(p), _) => read_json(p)?,
        (None, Some(e)) => e.clone(),
        (None, None) => return Err(UsageError("set either surface or essvi in the config".into()).into()),
    };
    Ok(params.surface()?)
}

pub fn varswap(cfg: &RunConfig, out: &OutDir) -> Result<bool> {
    let s = load_surface(cfg)?;
    out.csv("varswap.csv", &varswap_rows(&s, cfg.require_maturities()?)?)?;
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
enum Stage {
    Essvi,
    Xi0,
    Futures,
    Spx,
}

impl Stage {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "essvi" => Ok(Self::Essvi),
            "xi0" => Ok(Self::Xi0),
            "futures" => Ok(Self::Futures),
            "spx" => Ok(Self::Spx),
            _ => Err(UsageError(format!("unknown stage {s:?}; expected essvi, xi0, futures or spx")).into()),
        }
    }
}

#[derive(Serialize)]
struct StageRecord {
    stage: Stage,
    status: &'static str,
    detail: String,
}

#[derive(Serialize)]
struct CalibrationReport {
    stages: Vec<StageRecord>,
    params: Option<ModelParams>,
    success: bool,
}

fn xi0_times(cfg: &RunConfig, surface: &EssviSurface, futures: &[FuturesQuote], calls: &[CallQuote]) -> Vec<f64> {
    if !cfg.xi0_times.is_empty() {
        return cfg.xi0_times.clone();
    }
    let last_knot = surface.params().theta_knots.last().map_or(0.0, |k| k.0);
    let end = futures
        .iter()
        .map(|q| q.maturity + DELTA)
        .chain(calls.iter().map(|q| q.maturity))
        .fold(last_knot, f64::max);
    (1..=40).map(|i| end * i as f64 / 40.0).collect()
}

pub fn calibrate(cfg: &RunConfig, out: &OutDir) -> Result<bool> {
    let last = cfg
        .stage
        .as_deref()
        .map(Stage::parse)
        .transpose()?
        .unwrap_or(Stage::Spx);
    let mut report = CalibrationReport {
        stages: vec![],
        params: None,
        success: true,
    };
    let result = calibrate_stages(cfg, out, last, &mut report);
    if let Err(e) = &result {
        report.success = false;
        if let Some(s) = e.downcast_ref::<StageFailure>() {
            report.stages.push(StageRecord {
                stage: s.0,
                status: "failed",
                detail: format!("{:#}", e.root_cause()),
            });
        }
    }
    out.json("calibration_report.json", &report)?;
    result.map(|_| report.success)
}

#[derive(Debug)]
struct StageFailure(Stage);

impl std::fmt::Display for StageFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = serde_json::to_value(self.0)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        write!(f, "stage {name} failed")
    }
}

impl std::error::Error for StageFailure {}

fn tag<T>(stage: Stage, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.context(StageFailure(stage)))
}

fn calibrate_stages(cfg: &RunConfig, out: &OutDir, last: Stage, report: &mut CalibrationReport) -> Result<()> {
    let (surface, arbitrage_free) = tag(Stage::Essvi, run_essvi_fit(cfg, out))?;
    report.success &= arbitrage_free;
    report.stages.push(StageRecord {
        stage: Stage::Essvi,
        status: if arbitrage_free { "ok" } else { "arbitrage" },
        detail: format!("{} maturities", surface.params().theta_knots.len()),
    });
    if last == Stage::Essvi {
        return Ok(());
    }

    let futures: Vec<FuturesQuote> = match &cfg.futures_quotes {
        Some(p) => tag(Stage::Futures, read_csv(p))?,
        None => vec![],
    };
    let calls: Vec<CallQuote> = match &cfg.call_quotes {
        Some(p) => tag(Stage::Spx, read_csv(p))?,
        None => vec![],
    };
    let xi0 = tag(
        Stage::Xi0,
        (|| -> Result<ForwardVarianceCurve> {
            let times = xi0_times(cfg, &surface, &futures, &calls);
            let curve = surface.forward_curve(&times)?;
            out.csv("varswap.csv", &varswap_rows(&surface, &times)?)?;
            out.json("xi0_curve.json", &curve)?;
            Ok(curve)
        })(),
    )?;
    report.stages.push(StageRecord {
        stage: Stage::Xi0,
        status: "ok",
        detail: "forward variance curve extracted".into(),
    });
    if last == Stage::Xi0 {
        return Ok(());
    }

    let fut = tag(
        Stage::Futures,
        (|| -> Result<_> {
            if cfg.futures_quotes.is_none() {
                return Err(UsageError("futures_quotes is not set in the config".into()).into());
            }
            let r = calibrate_futures(&futures, &xi0, &cfg.params, &Default::default())?;
            out.json("futures_calibration.json", &r)?;
            Ok(r)
        })(),
    )?;
    report.success &= fut.converged;
    report.params = Some(fut.params);
    report.stages.push(StageRecord {
        stage: Stage::Futures,
        status: if fut.converged { "ok" } else { "not_converged" },
        detail: format!("H = {}, nu = {}", fut.params.hurst, fut.params.nu),
    });
    if last == Stage::Futures {
        return Ok(());
    }

    if cfg.call_quotes.is_none() {
        if cfg.stage.is_some() {
            return tag(
                Stage::Spx,
                Err(anyhow!(UsageError("call_quotes is not set in the config".into()))),
            );
        }
        report.stages.push(StageRecord {
            stage: Stage::Spx,
            status: "skipped",
            detail: "no call quotes".into(),
        });
        return Ok(());
    }
    let spx = tag(
        Stage::Spx,
        (|| -> Result<_> {
            let horizon = calls.iter().map(|q| q.maturity).fold(0.0, f64::max);
            let grid = TimeGrid::new(cfg.steps_per_year, horizon)?;
            let pre = PrecomputedPaths::generate(grid, fut.params.hurst, fut.params.kappa, cfg.paths, cfg.seed)?;
            let r = calibrate_spx(&pre, &xi0, &calls, &fut.params, &SpxCalibrationOptions::default())?;
            out.json("spx_calibration.json", &r)?;
            Ok(r)
        })(),
    )?;
    report.success &= spx.converged;
    report.params = Some(spx.params);
    report.stages.push(StageRecord {
        stage: Stage::Spx,
        status: if spx.converged { "ok" } else { "not_converged" },
        detail: format!("nu = {}, rho = {}", spx.params.nu, spx.params.rho),
    });
    Ok(())
}
