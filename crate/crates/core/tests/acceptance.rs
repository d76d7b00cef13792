//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use roughvol::bss::{direct_convolve, fft_convolve, simulate_volterra, ConvolutionMethod, HybridConfig, TimeGrid};
use roughvol::calib::{
    calibrate_futures, calibrate_spx, gradient_futures, model_call_prices, objective_futures, CallQuote, FuturesQuote,
    PrecomputedPaths,
};
use roughvol::linalg::Matrix;
use roughvol::model::{conditional_covariance_vt, ForwardVarianceCurve, ModelParams};
use roughvol::quad::{integrate, QuadOptions};
use roughvol::rng::mean_and_se;
use roughvol::spx::{price_calls, simulate_spx, SpxPathConfig, SpxScheme};
use roughvol::ssvi::EssviParams;
use roughvol::vix::{
    adjacent_correlation, future_price_lognormal, futures_bounds, moments_bfg, moments_exact,
    simulate_vix_truncated_cholesky, VixGrid, CHOLESKY_BLOCK, DELTA,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference() -> ModelParams {
    ModelParams::reference()
}

fn bound_sandwich() -> Outcome {
    let p = reference();
    let mut worst = f64::INFINITY;
    for k in 1..=3u8 {
        let c = ForwardVarianceCurve::scenario(k).unwrap();
        for t in [0.1, 0.25, 0.5, 1.0, 1.5, 2.0] {
            let b = futures_bounds(&c, &p, t, 256).unwrap();
            let x = simulate_vix_truncated_cholesky(&c, &p, &VixGrid::daily(t).unwrap(), 100_000, 11).unwrap();
            let (m, se) = mean_and_se(&x);
            let slack = (m - (b.lower - 3.0 * se)).min(b.upper + 3.0 * se - m);
            if slack < 0.0 {
                return Err(format!(
                    "scenario {k}, T = {t}: {m} ± {se} outside [{}, {}]",
                    b.lower, b.upper
                ));
            }
            worst = worst.min(slack);
        }
    }
    Ok(format!("18 cases inside the bounds, smallest slack {worst:.2e}"))
}

fn lognormal_accuracy() -> Outcome {
    let p = reference();
    let c = ForwardVarianceCurve::scenario1();
    let mut worst: f64 = 0.0;
    for t in [0.25, 0.5, 1.0, 2.0] {
        let m = moments_exact(&c, &p, t, 64).unwrap();
        let f = future_price_lognormal(&c, &m, t);
        let x = simulate_vix_truncated_cholesky(&c, &p, &VixGrid::daily(t).unwrap(), 1_000_000, 12).unwrap();
        let (mc, _) = mean_and_se(&x);
        worst = worst.max((f - mc).abs());
    }
    check(worst <= 5e-3, format!("max |F - MC| = {worst:.2e} (limit 5e-3)"))
}

fn variant_agreement() -> Outcome {
    let p = reference();
    let c = ForwardVarianceCurve::flat(0.235 * 0.235);
    let (mut short, mut long): (f64, f64) = (0.0, 0.0);
    for i in 1..=40 {
        let t = 0.1 * i as f64;
        let fe = future_price_lognormal(&c, &moments_exact(&c, &p, t, 64).unwrap(), t);
        let fb = future_price_lognormal(&c, &moments_bfg(&c, &p, t).unwrap(), t);
        let d = (fe - fb).abs();
        if t <= 2.0 + 1e-12 {
            short = short.max(d);
        }
        long = long.max(d);
    }
    check(
        short <= 1e-3 && long <= 5e-3,
        format!("max diff {short:.2e} for T <= 2, {long:.2e} for T <= 4"),
    )
}

fn hybrid_law() -> Outcome {
    let h = 0.07;
    let grid = TimeGrid::new(400, 2.0).unwrap();
    let ens = simulate_volterra(grid, h, &HybridConfig::new(3, 13, 100_000)).unwrap();
    let mut worst: f64 = 0.0;
    for t in [0.25, 0.5, 1.0, 2.0] {
        let i = grid.index_of(t).unwrap();
        let x: Vec<f64> = (0..ens.paths()).map(|m| ens.values(m)[i]).collect();
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sq: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
        let (var, se) = mean_and_se(&sq);
        let var = var * n / (n - 1.0);
        let z = (var - t.powf(2.0 * h) / (2.0 * h)).abs() / se;
        worst = worst.max(z);
    }
    check(worst <= 3.0, format!("largest deviation {worst:.2} SE"))
}

fn covariance_oracle(s: f64, t: f64, big_t: f64, h: f64) -> f64 {
    let (lo, hi) = (s.min(t), s.max(t));
    let hp = h + 0.5;
    // y = (lo - u)^{H+1/2} removes the endpoint singularity when lo is near T
    let a = (lo - big_t).powf(hp);
    let b = lo.powf(hp);
    let f = |y: f64| {
        let r = y.powf(1.0 / hp);
        (r * (hi - lo + r)).powf(h - 0.5) * r.powf(0.5 - h) / hp
    };
    integrate(f, a, b, QuadOptions::rel(1e-13)).unwrap()
}

fn covariance_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let h = rng.random_range(0.02..0.48);
        let big_t = rng.random_range(0.05..3.0);
        let s = big_t + rng.random_range(1e-4..DELTA);
        let t = big_t + rng.random_range(1e-4..DELTA);
        let c = conditional_covariance_vt(s, t, big_t, h).unwrap();
        let o = covariance_oracle(s, t, big_t, h);
        worst = worst.max(((c - o) / o).abs());
    }
    check(worst <= 1e-8, format!("max relative error {worst:.2e} over 25 cases"))
}

fn gram(points: usize, big_t: f64, h: f64) -> Matrix {
    let taus: Vec<f64> = (0..points)
        .map(|i| big_t + DELTA * i as f64 / (points - 1) as f64)
        .collect();
    Matrix::from_fn(points, |i, j| {
        conditional_covariance_vt(taus[i], taus[j], big_t, h).unwrap()
    })
}

fn cholesky_degeneracy() -> Outcome {
    let (big_t, h) = (0.5, 0.07);
    // the VIX grid spacing: the block spans 8 daily points from T
    let block = {
        let g = VixGrid::daily(big_t).unwrap();
        let taus = g.taus();
        Matrix::from_fn(CHOLESKY_BLOCK, |i, j| {
            conditional_covariance_vt(taus[i], taus[j], big_t, h).unwrap()
        })
    };
    let block_ok = block.cholesky().is_ok();
    let mut detail = vec![format!("8-point block factorises: {block_ok}")];
    let mut all_degenerate = true;
    for n in [12, 16, 31] {
        let g = gram(n, big_t, h);
        let fails = g.cholesky().is_err();
        let ev = g.symmetric_eigenvalues();
        let max = ev.iter().cloned().fold(f64::MIN, f64::max);
        let min = ev.iter().cloned().fold(f64::MAX, f64::min);
        let cond = if min > 0.0 { max / min } else { f64::INFINITY };
        all_degenerate &= fails || cond > 1e15;
        detail.push(format!("{n} points: cholesky fails {fails}, cond {cond:.1e}"));
    }
    check(block_ok && all_degenerate, detail.join("; "))
}

fn correlation_limit() -> Outcome {
    let (big_t, h) = (0.5, 0.07);
    let t = big_t + 0.01;
    let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let rho: Vec<f64> = eps
        .iter()
        .map(|&e| adjacent_correlation(t, e, big_t, h).unwrap())
        .collect();
    let increasing = rho.windows(2).all(|w| w[1] > w[0]);
    let limit = rho[5] > 0.999;
    let pairs = [(0.501, 0.51), (0.51, 0.53), (0.53, 0.58)];
    let in_t = pairs.iter().all(|&(a, b)| {
        adjacent_correlation(b, 1e-3, big_t, h).unwrap() > adjacent_correlation(a, 1e-3, big_t, h).unwrap()
    });
    check(
        increasing && limit && in_t,
        format!(
            "rho(eps=1e-6) = {:.7}, increasing in eps: {increasing}, increasing in t: {in_t}",
            rho[5]
        ),
    )
}

fn futures_quotes(h: f64, nu: f64, xi0: &ForwardVarianceCurve, mats: &[f64]) -> Vec<FuturesQuote> {
    let probe: Vec<FuturesQuote> = mats
        .iter()
        .map(|&t| FuturesQuote {
            maturity: t,
            price: 1.0,
        })
        .collect();
    let p = roughvol::calib::model_futures_prices(nu, h, xi0, &probe).unwrap();
    probe
        .iter()
        .zip(p)
        .map(|(q, p)| FuturesQuote { price: p, ..*q })
        .collect()
}

fn gradient_correctness() -> Outcome {
    let c = ForwardVarianceCurve::flat(0.235 * 0.235);
    let mut q = futures_quotes(0.1, 1.0, &c, &[0.05, 0.2, 0.5, 1.0, 1.5, 2.0]);
    for (i, x) in q.iter_mut().enumerate() {
        x.price *= 1.0 + 0.01 * (i as f64 - 2.5);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let nu = rng.random_range(0.3..3.0);
        let h = rng.random_range(0.03..0.45);
        let (gn, gh) = gradient_futures(nu, h, &c, &q).unwrap();
        let (dn, dh) = (1e-5 * nu, 1e-5 * h);
        let fn_ = (objective_futures(nu + dn, h, &c, &q).unwrap() - objective_futures(nu - dn, h, &c, &q).unwrap())
            / (2.0 * dn);
        let fh = (objective_futures(nu, h + dh, &c, &q).unwrap() - objective_futures(nu, h - dh, &c, &q).unwrap())
            / (2.0 * dh);
        worst = worst.max(((gn - fn_) / fn_).abs()).max(((gh - fh) / fh).abs());
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} over 20 points"))
}

fn futures_round_trip() -> Outcome {
    let c = ForwardVarianceCurve::flat(0.235 * 0.235);
    let mats = [0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
    let q = futures_quotes(0.07, 1.2287, &c, &mats);
    let init = ModelParams::new(0.2, 0.5, -0.9, 2).unwrap();
    let r = calibrate_futures(&q, &c, &init, &Default::default()).unwrap();
    let (eh, en) = ((r.params.hurst - 0.07).abs(), (r.params.nu - 1.2287).abs());
    check(
        eh <= 1e-3 && en <= 1e-3,
        format!(
            "H = {:.6}, nu = {:.6} after {} iterations (errors {eh:.1e}, {en:.1e})",
            r.params.hurst, r.params.nu, r.iterations
        ),
    )
}

/// `-2 E[ln S_T]` for `S_0 = 1` from out-of-the-money Black prices,
/// `2 ∫ P(k) e^{-k} dk` over `k < 0` plus `2 ∫ C(k) e^{-k} dk` over `k > 0`.
fn log_contract(w: impl Fn(f64) -> f64) -> f64 {
    let n = Normal::standard();
    let otm = |k: f64| {
        let v = w(k);
        let s = v.sqrt();
        let d = -k / s;
        if k < 0.0 {
            // put on strike e^k, scaled by e^{-k}
            n.cdf(-d + 0.5 * s) - (-k).exp() * n.cdf(-d - 0.5 * s)
        } else {
            (-k).exp() * n.cdf(d + 0.5 * s) - n.cdf(d - 0.5 * s)
        }
    };
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        max_intervals: 20_000,
    };
    let mut total = 0.0;
    let cuts = [-200.0, -20.0, -5.0, -1.0, 0.0, 1.0, 5.0, 20.0, 200.0];
    for c in cuts.windows(2) {
        total += integrate(otm, c[0], c[1], opts).unwrap();
    }
    2.0 * total
}

fn varswap_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 10 {
        let p = EssviParams {
            eta: rng.random_range(0.3..1.5),
            lambda: rng.random_range(0.1..0.6),
            a: rng.random_range(-0.9..0.2),
            b: rng.random_range(0.0..5.0),
            c: rng.random_range(-0.9..0.2),
            theta_knots: vec![(0.25, 0.01), (1.0, 0.04), (2.0, 0.09)],
        };
        let t = rng.random_range(0.1..2.0);
        let Ok(s) = p.surface() else { continue };
        if !(s.butterfly_check(t).unwrap().ok && s.calendar_check(t).unwrap().ok) {
            continue;
        }
        let closed = s.varswap_total_variance(t).unwrap().total_variance;
        let oracle = log_contract(|k| s.total_variance(t, k).unwrap());
        worst = worst.max(((closed - oracle) / oracle).abs());
        done += 1;
    }
    check(
        worst <= 1e-6,
        format!("max relative error {worst:.2e} over 10 surfaces"),
    )
}

fn black_degeneration() -> Outcome {
    let p = ModelParams::new(0.07, 0.0, -0.9, 2).unwrap();
    let c = ForwardVarianceCurve::flat(0.04);
    let cfg = SpxPathConfig {
        grid: TimeGrid::new(100, 1.0).unwrap(),
        paths: 100_000,
        scheme: SpxScheme::LogEuler,
        seed: 21,
    };
    let term = simulate_spx(&c, &p, &cfg, None, &[1.0]).unwrap();
    let smile = price_calls(&term, &[0.8, 0.9, 1.0, 1.1, 1.2]).unwrap();
    let mut worst: f64 = 0.0;
    for s in &smile {
        let b = roughvol::black::call(1.0, s.strike, 1.0, 0.2);
        worst = worst.max((s.call_price - b).abs() / s.std_error);
    }
    check(worst <= 3.0, format!("largest deviation {worst:.2} SE over 5 strikes"))
}

fn spx_round_trip() -> Outcome {
    let grid = TimeGrid::new(100, 1.0).unwrap();
    let pre = PrecomputedPaths::generate(grid, 0.07, 2, 20_000, 31).unwrap();
    let c = ForwardVarianceCurve::flat(0.04);
    let mut q: Vec<CallQuote> = Vec::new();
    for t in [0.25, 0.5, 1.0] {
        for k in [0.8, 0.9, 1.0, 1.1, 1.2] {
            q.push(CallQuote {
                maturity: t,
                strike: k,
                price: 0.0,
            });
        }
    }
    let prices = model_call_prices(1.19, -0.9, &pre, &c, &q, SpxScheme::LogEuler).unwrap();
    for (x, p) in q.iter_mut().zip(prices) {
        x.price = p;
    }
    let init = ModelParams::new(0.07, 0.8, -0.5, 2).unwrap();
    let r = calibrate_spx(&pre, &c, &q, &init, &Default::default()).unwrap();
    let (en, er) = ((r.params.nu - 1.19).abs(), (r.params.rho + 0.9).abs());
    check(
        en <= 1e-6 && er <= 1e-6,
        format!(
            "nu = {:.9}, rho = {:.9} after {} iterations (errors {en:.1e}, {er:.1e})",
            r.params.nu, r.params.rho, r.iterations
        ),
    )
}

fn fft_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for n in [16usize, 64, 256] {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = fft_convolve(&w, &x);
        let b = direct_convolve(&w, &x);
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs());
        }
    }
    let grid = TimeGrid::new(256, 1.0).unwrap();
    let cfg = HybridConfig::new(2, 4, 200);
    let f = simulate_volterra(grid, 0.1, &cfg.with_convolution(ConvolutionMethod::Fft)).unwrap();
    let d = simulate_volterra(grid, 0.1, &cfg.with_convolution(ConvolutionMethod::Direct)).unwrap();
    let mut ens: f64 = 0.0;
    for m in 0..f.paths() {
        for (u, v) in f.values(m).iter().zip(d.values(m)) {
            ens = ens.max((u - v).abs());
        }
        if f.z_increments(m) != d.z_increments(m) {
            return Err(format!("path {m}: driving increments differ"));
        }
    }
    check(
        worst <= 1e-10 && ens <= 1e-10,
        format!("max convolution diff {worst:.1e}, max ensemble diff {ens:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("bound sandwich", bound_sandwich),
        ("log-normal accuracy", lognormal_accuracy),
        ("variant agreement", variant_agreement),
        ("hybrid-scheme law", hybrid_law),
        ("covariance closed form", covariance_closed_form),
        ("cholesky degeneracy", cholesky_degeneracy),
        ("correlation limit", correlation_limit),
        ("gradient correctness", gradient_correctness),
        ("futures round trip", futures_round_trip),
        ("variance-swap closed form", varswap_closed_form),
        ("spx black degeneration", black_degeneration),
        ("spx crn round trip", spx_round_trip),
        ("fft equivalence", fft_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {:>2} {tag} {name} ({secs:.1}s): {detail}", i + 1);
    }
    if failed == 0 {
        println!("acceptance: all 13 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 13 criteria fail");
        ExitCode::FAILURE
    }
}
