use proptest::prelude::*;
use statrs::distribution::{Continuous, LogNormal};

use roughvol::black;
use roughvol::calib::{calibrate_futures, model_futures_prices, FuturesQuote};
use roughvol::model::{ForwardVarianceCurve, ModelParams};
use roughvol::optim::{levenberg_marquardt, nelder_mead, Bounds, LmOptions, NelderMeadOptions};
use roughvol::quad::{integrate, integrate_to_infinity, QuadOptions};
use roughvol::ssvi::EssviParams;
use roughvol::vix::{
    call_price_lognormal, future_price_lognormal, futures_bounds, moments_exact, simulate_vix_hsfe,
    simulate_vix_truncated_cholesky, McEstimate, VixGrid,
};

proptest! {
    #[test]
    fn implied_vol_round_trip(k in 0.3f64..3.0, t in 0.05f64..5.0, v in 0.02f64..2.0) {
        let p = black::call(1.0, k, t, v);
        prop_assume!(p - (1.0 - k).max(0.0) > 1e-12);
        let iv = black::implied_vol(p, 1.0, k, t).unwrap();
        prop_assert!((black::call(1.0, k, t, iv) - p).abs() <= 1e-10);
    }
}

#[test]
fn lognormal_call_matches_density_integral() {
    let c = ForwardVarianceCurve::scenario2();
    let p = ModelParams::reference();
    let t = 0.5;
    let m = moments_exact(&c, &p, t, 64).unwrap();
    let f = future_price_lognormal(&c, &m, t);
    // VIX = √(∫ξ₀/Δ)·exp(Y/2) with Y ~ N(μ', σ²); the density of VIX is log-normal
    let d = LogNormal::new(f.ln() - m.sigma2 / 8.0, 0.5 * m.sigma2.sqrt()).unwrap();
    for k in [0.15, 0.2, 0.25, 0.35] {
        let oracle = integrate_to_infinity(|x| (x - k) * d.pdf(x), k, QuadOptions::rel(1e-12)).unwrap();
        let closed = call_price_lognormal(&c, &m, t, k).unwrap();
        assert!((closed - oracle).abs() < 1e-10, "{k}: {closed} vs {oracle}");
    }
    let mean = integrate_to_infinity(|x| x * d.pdf(x), 0.0, QuadOptions::rel(1e-12)).unwrap();
    assert!((mean - f).abs() < 1e-10);
}

#[test]
fn vix_engines_agree() {
    let c = ForwardVarianceCurve::scenario3();
    let p = ModelParams::reference();
    let t = 0.5;
    let g = VixGrid::daily(t).unwrap();
    let chol = McEstimate::from_samples(&simulate_vix_truncated_cholesky(&c, &p, &g, 50_000, 1).unwrap());
    let base = roughvol::bss::TimeGrid::new(730, t).unwrap();
    let sim = roughvol::bss::HybridConfig::new(2, 1, 20_000);
    let hsfe = McEstimate::from_samples(&simulate_vix_hsfe(&c, &p, &g, &sim, &base).unwrap());
    let b = futures_bounds(&c, &p, t, 256).unwrap();
    assert!((chol.estimate - hsfe.estimate).abs() < 4.0 * (chol.std_error + hsfe.std_error) + 2e-3);
    assert!(b.lower < chol.estimate && chol.estimate < b.upper);
}

#[test]
fn vix_call_parity_against_futures() {
    let c = ForwardVarianceCurve::scenario1();
    let p = ModelParams::reference();
    let x = simulate_vix_truncated_cholesky(&c, &p, &VixGrid::daily(1.0).unwrap(), 20_000, 2).unwrap();
    let f = McEstimate::from_samples(&x).estimate;
    let k = 0.2;
    let call = McEstimate::call(&x, k).estimate;
    let put: f64 = x.iter().map(|v| (k - v).max(0.0)).sum::<f64>() / x.len() as f64;
    assert!((call - put - (f - k)).abs() < 1e-12);
}

fn durrleman(w: impl Fn(f64) -> f64, k: f64) -> f64 {
    let h = 1e-4;
    let (w0, wp, wm) = (w(k), w(k + h), w(k - h));
    let d1 = (wp - wm) / (2.0 * h);
    let d2 = (wp - 2.0 * w0 + wm) / (h * h);
    (1.0 - k * d1 / (2.0 * w0)).powi(2) - d1 * d1 / 4.0 * (1.0 / w0 + 0.25) + d2 / 2.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn butterfly_check_implies_positive_density(
        eta in 0.2f64..2.0, lambda in 0.05f64..0.7, a in -0.95f64..0.95, c in -0.95f64..0.95, b in 0.0f64..4.0,
    ) {
        let p = EssviParams { eta, lambda, a, b, c, theta_knots: vec![(0.5, 0.02), (1.0, 0.04), (2.0, 0.09)] };
        let s = p.surface().unwrap();
        for t in [0.5, 1.0, 2.0] {
            if s.butterfly_check(t).unwrap().ok {
                for i in -40..=40 {
                    let k = 0.05 * i as f64;
                    prop_assert!(durrleman(|x| s.total_variance(t, x).unwrap(), k) > -1e-6);
                }
            }
        }
    }

    #[test]
    fn calendar_check_implies_increasing_total_variance(
        eta in 0.2f64..2.0, lambda in 0.05f64..0.7, a in -0.95f64..0.95, c in -0.95f64..0.95, b in 0.0f64..4.0,
    ) {
        let p = EssviParams { eta, lambda, a, b, c, theta_knots: vec![(0.5, 0.02), (1.0, 0.04), (2.0, 0.09)] };
        let s = p.surface().unwrap();
        let ts: Vec<f64> = (5..=20).map(|i| 0.1 * i as f64).collect();
        if ts.iter().all(|&t| s.calendar_check(t).unwrap().ok) {
            for w in ts.windows(2) {
                for i in -20..=20 {
                    let k = 0.1 * i as f64;
                    prop_assert!(s.total_variance(w[1], k).unwrap() >= s.total_variance(w[0], k).unwrap() - 1e-12);
                }
            }
        }
    }
}

#[test]
fn forward_variance_integrates_back_to_swap_variance() {
    let p = EssviParams {
        eta: 0.8,
        lambda: 0.3,
        a: -0.6,
        b: 1.0,
        c: -0.3,
        theta_knots: vec![(0.5, 0.02), (1.0, 0.045), (2.0, 0.095)],
    };
    let s = p.surface().unwrap();
    let xi = |t: f64| s.xi0_extract(t, 1e-5).unwrap();
    let w = integrate(xi, 0.5, 1.5, QuadOptions::rel(1e-9)).unwrap();
    let exact =
        s.varswap_total_variance(1.5).unwrap().total_variance - s.varswap_total_variance(0.5).unwrap().total_variance;
    assert!((w - exact).abs() < 1e-6 * exact, "{w} vs {exact}");
}

#[test]
fn futures_calibration_with_noise_stays_close() {
    let c = ForwardVarianceCurve::scenario2();
    let mats = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5];
    let probe: Vec<FuturesQuote> = mats
        .iter()
        .map(|&t| FuturesQuote {
            maturity: t,
            price: 1.0,
        })
        .collect();
    let prices = model_futures_prices(0.9, 0.12, &c, &probe).unwrap();
    let q: Vec<FuturesQuote> = mats
        .iter()
        .zip(prices)
        .enumerate()
        .map(|(i, (&t, p))| FuturesQuote {
            maturity: t,
            price: p + if i % 2 == 0 { 2e-5 } else { -2e-5 },
        })
        .collect();
    let init = ModelParams::new(0.3, 0.3, 0.0, 2).unwrap();
    let r = calibrate_futures(&q, &c, &init, &Default::default()).unwrap();
    assert!(r.converged);
    assert!(
        (r.params.hurst - 0.12).abs() < 0.02 && (r.params.nu - 0.9).abs() < 0.05,
        "{:?}",
        r.params
    );
    assert_eq!(r.per_quote_residuals.len(), mats.len());
}

#[test]
fn optimisers_solve_rosenbrock() {
    let res = |x: &[f64]| Ok(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
    let lm = levenberg_marquardt(res, None, &[-1.2, 1.0], None, LmOptions::default()).unwrap();
    assert!((lm.x[0] - 1.0).abs() < 1e-6 && (lm.x[1] - 1.0).abs() < 1e-6);

    let bounds = Bounds::new(vec![-2.0, -2.0], vec![0.5, 2.0]).unwrap();
    let boxed = levenberg_marquardt(res, None, &[-1.2, 1.0], Some(&bounds), LmOptions::default()).unwrap();
    assert!((boxed.x[0] - 0.5).abs() < 1e-8, "{:?}", boxed.x);

    let f = |x: &[f64]| Ok(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
    let nm = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], None, NelderMeadOptions::default()).unwrap();
    assert!(
        (nm.x[0] - 1.0).abs() < 1e-5 && (nm.x[1] - 1.0).abs() < 1e-5,
        "{:?}",
        nm.x
    );
}

#[test]
fn curves_round_trip_through_json() {
    for c in [
        ForwardVarianceCurve::scenario1(),
        ForwardVarianceCurve::scenario2(),
        ForwardVarianceCurve::Spline(
            roughvol::model::SplineCurve::new(vec![(0.1, 0.03), (1.0, 0.05), (2.0, 0.045)]).unwrap(),
        ),
    ] {
        let s = serde_json::to_string(&c).unwrap();
        let back: ForwardVarianceCurve = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let integral = integrate(|t| c.value(t), 0.3, 1.7, QuadOptions::rel(1e-12)).unwrap();
        assert!((c.integral(0.3, 1.7) - integral).abs() < 1e-10);
    }
    assert!(serde_json::from_str::<ForwardVarianceCurve>(r#"{"kind":"flat","xi":0.04,"extra":1}"#).is_err());
}
