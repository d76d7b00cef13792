//! eSSVI implied total variance surface.
//!
//! `w(t, k) = θ_t/2 {1 + ρφk + √((φk + ρ)² + 1 - ρ²)}` with
//! `φ(θ) = ηθ^{-λ}(1+θ)^{λ-1}` and `ρ(θ) = (A - C)e^{-Bθ} + C`. The ATM
//! total variance `θ_t` is a natural cubic spline through the fitted knots and
//! the origin, continued linearly beyond the last knot.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::interp::{Extrapolation, NaturalCubicSpline};
use crate::model::{ForwardVarianceCurve, SplineCurve};
use crate::optim::{levenberg_marquardt, LmOptions};

/// Step of the central difference used to turn variance-swap strikes into
/// forward variances.
pub const XI0_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssviParams {
    pub eta: f64,
    pub lambda: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// `(t, θ_t)` pairs, increasing in `t`.
    pub theta_knots: Vec<(f64, f64)>,
}

impl EssviParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return domain(format!("eta = {} must be positive", self.eta));
        }
        if !self.lambda.is_finite() {
            return domain("lambda must be finite");
        }
        if !(self.a.abs() < 1.0 && self.c.abs() < 1.0) {
            return domain(format!("A = {} and C = {} must lie in (-1, 1)", self.a, self.c));
        }
        if !(self.b >= 0.0) {
            return domain(format!("B = {} must be non-negative", self.b));
        }
        if self.theta_knots.is_empty() {
            return domain("at least one theta knot is required");
        }
        for w in self.theta_knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Order(
                    "theta knots must be strictly increasing in maturity".into(),
                ));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::Order(format!(
                    "ATM total variance decreases between t = {} and t = {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if self.theta_knots.iter().any(|k| !(k.0 > 0.0 && k.1 > 0.0)) {
            return domain("theta knots need positive maturity and variance");
        }
        Ok(())
    }

    /// `φ(θ)`.
    pub fn phi(&self, theta: f64) -> f64 {
        self.eta * theta.powf(-self.lambda) * (1.0 + theta).powf(self.lambda - 1.0)
    }

    /// `γ = ∂_θ(θφ(θ)) / φ(θ) = (1 - λ)/(1 + θ)`.
    pub fn gamma(&self, theta: f64) -> f64 {
        (1.0 - self.lambda) / (1.0 + theta)
    }

    pub fn rho(&self, theta: f64) -> f64 {
        rho_of_theta(self.a, self.b, self.c, theta)
    }

    /// `∂_θ ρ(θ) = -B(A - C)e^{-Bθ}`.
    pub fn rho_prime(&self, theta: f64) -> f64 {
        -self.b * (self.a - self.c) * (-self.b * theta).exp()
    }

    pub fn surface(&self) -> Result<EssviSurface> {
        EssviSurface::new(self.clone())
    }
}

/// `ρ(θ) = (A - C)e^{-Bθ} + C`.
pub fn rho_of_theta(a: f64, b: f64, c: f64, theta: f64) -> f64 {
    (a - c) * (-b * theta).exp() + c
}

/// Result of an arbitrage check; `margin ≥ 0` iff the inequality holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageCheck {
    pub ok: bool,
    pub margin: f64,
}

impl ArbitrageCheck {
    fn from_margin(margin: f64) -> Self {
        Self {
            ok: margin >= 0.0,
            margin,
        }
    }
}

/// Calendar-spread condition `|θρ'(θ) + ρ(θ)γ| ≤ γ`.
pub fn calendar_check(params: &EssviParams, theta: f64) -> ArbitrageCheck {
    let g = params.gamma(theta);
    ArbitrageCheck::from_margin(g - (theta * params.rho_prime(theta) + params.rho(theta) * g).abs())
}

/// Butterfly condition `θφ²(θ)(1 + |ρ(θ)|) ≤ 4`.
pub fn butterfly_check_theta(params: &EssviParams, theta: f64) -> ArbitrageCheck {
    let phi = params.phi(theta);
    ArbitrageCheck::from_margin(4.0 - theta * phi * phi * (1.0 + params.rho(theta).abs()))
}

/// `θ_t` from knots: natural cubic spline through `(0, 0)` and the knots,
/// linear beyond the last knot.
pub fn theta_interpolate(knots: &[(f64, f64)], t: f64) -> Result<f64> {
    theta_spline(knots)?.eval_checked(t)
}

#[derive(Debug, Clone, PartialEq)]
struct ThetaSpline(NaturalCubicSpline);

impl ThetaSpline {
    fn eval_checked(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return domain(format!("maturity {t} outside the surface domain"));
        }
        Ok(self.0.eval(t))
    }
}

fn theta_spline(knots: &[(f64, f64)]) -> Result<ThetaSpline> {
    if knots.is_empty() {
        return domain("theta interpolation needs at least one knot");
    }
    let mut x = vec![0.0];
    let mut y = vec![0.0];
    for &(t, th) in knots {
        if t > 0.0 {
            x.push(t);
            y.push(th);
        }
    }
    Ok(ThetaSpline(NaturalCubicSpline::new(x, y, Extrapolation::Linear)?))
}

/// Evaluable eSSVI surface.
#[derive(Debug, Clone, PartialEq)]
pub struct EssviSurface {
    params: EssviParams,
    theta: ThetaSpline,
}

/// Variance-swap fair strike in total variance, `σ₀(t)² t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSwapStrike {
    pub t: f64,
    pub total_variance: f64,
}

impl EssviSurface {
    pub fn new(params: EssviParams) -> Result<Self> {
        params.validate()?;
        let theta = theta_spline(&params.theta_knots)?;
        Ok(Self { params, theta })
    }

    pub fn params(&self) -> &EssviParams {
        &self.params
    }

    pub fn theta(&self, t: f64) -> Result<f64> {
        let th = self.theta.eval_checked(t)?;
        if t > 0.0 && !(th > 0.0) {
            return Err(Error::NegativeForwardVariance { t, value: th });
        }
        Ok(th)
    }

    /// `w(t, k)` at log-moneyness `k = ln(K/F)`.
    pub fn total_variance(&self, t: f64, k: f64) -> Result<f64> {
        let th = self.theta(t)?;
        if th == 0.0 {
            return Ok(0.0);
        }
        Ok(total_variance_at(&self.params, th, k))
    }

    pub fn implied_vol(&self, t: f64, k: f64) -> Result<f64> {
        if !(t > 0.0) {
            return domain("implied vol needs t > 0");
        }
        Ok((self.total_variance(t, k)? / t).sqrt())
    }

    pub fn butterfly_check(&self, t: f64) -> Result<ArbitrageCheck> {
        Ok(butterfly_check_theta(&self.params, self.theta(t)?))
    }

    pub fn calendar_check(&self, t: f64) -> Result<ArbitrageCheck> {
        Ok(calendar_check(&self.params, self.theta(t)?))
    }

    /// Closed-form variance-swap strike `(b² + 2a(c + θ)) / (2a²)`.
    pub fn varswap_total_variance(&self, t: f64) -> Result<VarianceSwapStrike> {
        let th = self.theta(t)?;
        if th == 0.0 {
            return Ok(VarianceSwapStrike { t, total_variance: 0.0 });
        }
        let p = &self.params;
        let rho = p.rho(th);
        let tp = th * p.phi(th);
        let chi = 0.25 * (1.0 - rho * rho) * tp;
        let a = 1.0 + 0.5 * tp * (rho - 0.5 * chi);
        let b = tp * (chi - rho);
        let c = tp * chi;
        if a.abs() < 1e-12 {
            return domain(format!("variance swap formula degenerates at t = {t} (a = {a})"));
        }
        Ok(VarianceSwapStrike {
            t,
            total_variance: (b * b + 2.0 * a * (c + th)) / (2.0 * a * a),
        })
    }

    /// `σ₀²(t) = (σ₀²t) / t`.
    pub fn varswap_variance(&self, t: f64) -> Result<f64> {
        Ok(self.varswap_total_variance(t)?.total_variance / t)
    }

    /// `ξ₀(t) ≈ σ₀²(t) + t (σ₀²(t+ε) - σ₀²(t-ε)) / (2ε)`.
    pub fn xi0_extract(&self, t: f64, eps: f64) -> Result<f64> {
        xi0_from_swap_variance(|s| self.varswap_variance(s), t, eps)
    }

    /// Spline forward variance curve through `ξ₀` extracted at `times`.
    pub fn forward_curve(&self, times: &[f64]) -> Result<ForwardVarianceCurve> {
        let knots = times
            .iter()
            .map(|&t| Ok((t, self.xi0_extract(t, XI0_EPS)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ForwardVarianceCurve::Spline(SplineCurve::new(knots)?))
    }
}

fn total_variance_at(p: &EssviParams, theta: f64, k: f64) -> f64 {
    let rho = p.rho(theta);
    let pk = p.phi(theta) * k;
    0.5 * theta * (1.0 + rho * pk + ((pk + rho) * (pk + rho) + 1.0 - rho * rho).sqrt())
}

/// Forward variance from any variance-swap variance curve `t ↦ σ₀²(t)`.
pub fn xi0_from_swap_variance<F>(swap_variance: F, t: f64, eps: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(eps > 0.0) || !(t - eps > 0.0) {
        return domain(format!("need t - eps > 0 with eps > 0 (t = {t}, eps = {eps})"));
    }
    let xi = swap_variance(t)? + t * (swap_variance(t + eps)? - swap_variance(t - eps)?) / (2.0 * eps);
    if !(xi > 0.0) {
        return Err(Error::NegativeForwardVariance { t, value: xi });
    }
    Ok(xi)
}

/// Vanilla quote used to fit the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    #[serde(rename = "maturity_years")]
    pub maturity: f64,
    pub strike: f64,
    pub forward: f64,
    pub implied_vol: f64,
    pub weight: f64,
}

impl OptionQuote {
    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0 && self.strike > 0.0 && self.forward > 0.0 && self.implied_vol > 0.0) {
            return domain(format!("invalid option quote {self:?}"));
        }
        if !(self.weight >= 0.0) {
            return domain(format!("negative weight in {self:?}"));
        }
        Ok(())
    }

    pub fn log_moneyness(&self) -> f64 {
        (self.strike / self.forward).ln()
    }

    pub fn total_variance(&self) -> f64 {
        self.implied_vol * self.implied_vol * self.maturity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Hold `B` at its initial value (`B = 0` gives plain SSVI).
    pub pin_b: bool,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            pin_b: false,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityFit {
    pub maturity: f64,
    pub rmse_total_variance: f64,
    pub rmse_implied_vol: f64,
    pub butterfly: ArbitrageCheck,
    pub calendar: ArbitrageCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub per_maturity: Vec<MaturityFit>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Slice {
    maturity: f64,
    k: Vec<f64>,
    w: Vec<f64>,
    sqrt_weight: Vec<f64>,
}

fn group_quotes(quotes: &[OptionQuote]) -> Result<Vec<Slice>> {
    if quotes.is_empty() {
        return Err(Error::InsufficientData("no option quotes".into()));
    }
    let mut by_t: BTreeMap<u64, Slice> = BTreeMap::new();
    for q in quotes {
        q.validate()?;
        let s = by_t.entry(q.maturity.to_bits()).or_insert_with(|| Slice {
            maturity: q.maturity,
            k: vec![],
            w: vec![],
            sqrt_weight: vec![],
        });
        s.k.push(q.log_moneyness());
        s.w.push(q.total_variance());
        s.sqrt_weight.push(q.weight.sqrt());
    }
    let mut slices: Vec<Slice> = by_t.into_values().collect();
    slices.sort_by(|a, b| a.maturity.total_cmp(&b.maturity));
    if slices.iter().any(|s| s.sqrt_weight.iter().all(|&w| w == 0.0)) {
        return Err(Error::InsufficientData(
            "a maturity has no positively weighted quote".into(),
        ));
    }
    Ok(slices)
}

/// ATM total variance of a slice, linear in `k` between the quotes around 0.
fn atm_total_variance(s: &Slice) -> f64 {
    let mut pts: Vec<(f64, f64)> = s.k.iter().copied().zip(s.w.iter().copied()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    match pts.iter().position(|p| p.0 >= 0.0) {
        Some(0) => pts[0].1,
        None => pts[pts.len() - 1].1,
        Some(i) => {
            let (k0, w0) = pts[i - 1];
            let (k1, w1) = pts[i];
            w0 + (w1 - w0) * (0.0 - k0) / (k1 - k0)
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

const PENALTY: f64 = 1e3;

/// Weighted least-squares fit in total variance over `(η, λ, A, B, C)` and the
/// ATM levels `θ`, with arbitrage violations penalised during the search and
/// enforced on the result.
///
/// `λ` is searched in `(0, 1)`, `η > 0`, `A, C ∈ (-1, 1)` and `B ≥ 0`. Knots
/// are placed at the quoted maturities and seeded from the quotes nearest
/// the money. A free `B` given as 0 is started from 1.
pub fn fit_essvi(quotes: &[OptionQuote], init: &EssviParams, opts: &FitOptions) -> Result<(EssviParams, FitReport)> {
    let slices = group_quotes(quotes)?;
    if !(init.eta > 0.0
        && init.lambda > 0.0
        && init.lambda < 1.0
        && init.a.abs() < 1.0
        && init.c.abs() < 1.0
        && init.b >= 0.0)
    {
        return domain("initial eSSVI parameters must satisfy eta > 0, 0 < lambda < 1, |A|, |C| < 1, B >= 0");
    }
    let ns = slices.len();
    let mut theta0: Vec<f64> = slices.iter().map(atm_total_variance).collect();
    for i in 1..ns {
        theta0[i] = theta0[i].max(theta0[i - 1]);
    }
    let shape0 = [
        init.eta.ln(),
        logit(init.lambda),
        init.a.atanh(),
        if !opts.pin_b && init.b == 0.0 {
            1.0
        } else {
            init.b.sqrt()
        },
        init.c.atanh(),
    ];
    let mut x0: Vec<f64> = shape0.to_vec();
    x0.extend(theta0.iter().map(|t| t.ln()));
    let pin_b = opts.pin_b;
    let unpack = |x: &[f64]| -> EssviParams {
        EssviParams {
            eta: x[0].exp(),
            lambda: logistic(x[1]),
            a: x[2].tanh(),
            b: if pin_b { init.b } else { x[3] * x[3] },
            c: x[4].tanh(),
            theta_knots: slices.iter().zip(&x[5..]).map(|(s, l)| (s.maturity, l.exp())).collect(),
        }
    };
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let p = unpack(x);
        let mut r = Vec::with_capacity(quotes.len() + 3 * ns);
        for (s, &(_, th)) in slices.iter().zip(&p.theta_knots) {
            for ((k, w), sw) in s.k.iter().zip(&s.w).zip(&s.sqrt_weight) {
                r.push(sw * (total_variance_at(&p, th, *k) - w));
            }
        }
        let mut prev = 0.0;
        for &(_, th) in &p.theta_knots {
            r.push(PENALTY * butterfly_check_theta(&p, th).margin.min(0.0));
            r.push(PENALTY * calendar_check(&p, th).margin.min(0.0));
            r.push(PENALTY * (th - prev).min(0.0));
            prev = th;
        }
        Ok(r)
    };
    let lm = LmOptions {
        max_iterations: opts.max_iterations,
        gtol: 1e-14,
        ftol: 1e-14,
        stall_window: 10,
        fd_step: 1e-7,
    };
    let rep = levenberg_marquardt(residuals, None, &x0, None, lm)?;
    let params = unpack(&rep.x);
    let surface = params.surface()?;
    let mut per_maturity = Vec::with_capacity(ns);
    let mut violations = vec![];
    for s in &slices {
        let t = s.maturity;
        let (mut sw, mut sv, mut wsum) = (0.0, 0.0, 0.0);
        for ((k, w), sq) in s.k.iter().zip(&s.w).zip(&s.sqrt_weight) {
            let wt = sq * sq;
            let model = surface.total_variance(t, *k)?;
            sw += wt * (model - w).powi(2);
            sv += wt * ((model / t).sqrt() - (w / t).sqrt()).powi(2);
            wsum += wt;
        }
        let butterfly = surface.butterfly_check(t)?;
        let calendar = surface.calendar_check(t)?;
        if !butterfly.ok || !calendar.ok {
            violations.push(t);
        }
        per_maturity.push(MaturityFit {
            maturity: t,
            rmse_total_variance: (sw / wsum).sqrt(),
            rmse_implied_vol: (sv / wsum).sqrt(),
            butterfly,
            calendar,
        });
    }
    if !violations.is_empty() {
        return Err(Error::Infeasible(format!(
            "fitted eSSVI surface violates the arbitrage conditions at maturities {violations:?}"
        )));
    }
    let report = FitReport {
        per_maturity,
        objective: rep.cost,
        iterations: rep.iterations,
        converged: rep.converged,
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EssviParams {
        EssviParams {
            eta: 1.0,
            lambda: 0.5,
            a: -0.5,
            b: 0.0,
            c: -0.5,
            theta_knots: vec![(0.5, 0.02), (1.0, 0.04), (2.0, 0.08)],
        }
    }

    #[test]
    fn atm_equals_theta_and_hand_value() {
        let s = params().surface().unwrap();
        assert!((s.total_variance(1.0, 0.0).unwrap() - 0.04).abs() < 1e-15);
        // θ = 0.04, φ = 0.04^{-1/2} 1.04^{-1/2}, ρ = -0.5, k = 0.1
        let phi = 0.04f64.powf(-0.5) * 1.04f64.powf(-0.5);
        let pk = phi * 0.1;
        let expect = 0.02 * (1.0 - 0.5 * pk + ((pk - 0.5) * (pk - 0.5) + 0.75).sqrt());
        assert!((s.total_variance(1.0, 0.1).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn symmetric_when_uncorrelated() {
        let p = EssviParams {
            a: 0.0,
            c: 0.0,
            ..params()
        };
        let s = p.surface().unwrap();
        assert_eq!(
            s.total_variance(0.7, 0.2).unwrap(),
            s.total_variance(0.7, -0.2).unwrap()
        );
    }

    #[test]
    fn rho_limits() {
        assert!((rho_of_theta(0.3, 2.0, -0.4, 0.0) - 0.3).abs() < 1e-15);
        assert!((rho_of_theta(0.3, 2.0, -0.4, 1e3) + 0.4).abs() < 1e-15);
        assert!((rho_of_theta(0.3, 0.0, -0.4, 5.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn gamma_matches_finite_difference() {
        let p = EssviParams {
            lambda: 0.37,
            ..params()
        };
        for th in [0.01, 0.1, 1.3] {
            let e = 1e-6;
            let f = |x: f64| x * p.phi(x);
            let fd = (f(th + e) - f(th - e)) / (2.0 * e) / p.phi(th);
            assert!((fd - p.gamma(th)).abs() < 1e-8);
        }
    }

    #[test]
    fn arbitrage_checks() {
        let p = params();
        assert!(calendar_check(&p, 0.05).ok);
        let steep = EssviParams {
            a: 0.9,
            b: 50.0,
            c: -0.9,
            ..params()
        };
        assert!(!calendar_check(&steep, 0.05).ok);
        let wild = EssviParams { eta: 5.0, ..params() };
        assert!(!butterfly_check_theta(&wild, 0.04).ok);
        let tiny = EssviParams { eta: 1e-12, ..params() };
        assert!((butterfly_check_theta(&tiny, 0.04).margin - 4.0).abs() < 1e-12);
    }

    #[test]
    fn varswap_flat_smile() {
        let p = EssviParams { eta: 1e-12, ..params() };
        let s = p.surface().unwrap();
        assert!((s.varswap_total_variance(1.0).unwrap().total_variance - 0.04).abs() < 1e-12);
    }

    #[test]
    fn xi0_of_analytic_curves() {
        let v = 0.04;
        assert!((xi0_from_swap_variance(|_| Ok(v), 1.0, XI0_EPS).unwrap() - v).abs() < 1e-12);
        let x = xi0_from_swap_variance(|t| Ok(v * (1.0 + t)), 1.0, XI0_EPS).unwrap();
        assert!((x - v * 3.0).abs() < 1e-6 * v * 3.0);
        assert!(xi0_from_swap_variance(|t| Ok(v / t / t), 1.0, XI0_EPS).is_err());
        assert!(xi0_from_swap_variance(|_| Ok(v), 1e-9, XI0_EPS).is_err());
    }

    #[test]
    fn theta_spline_behaviour() {
        let k = [(0.5, 0.02), (1.0, 0.04), (2.0, 0.08)];
        assert_eq!(theta_interpolate(&k, 1.0).unwrap(), 0.04);
        // collinear knots through the origin give a straight line
        assert!((theta_interpolate(&k, 0.75).unwrap() - 0.03).abs() < 1e-15);
        assert!((theta_interpolate(&k, 3.0).unwrap() - 0.12).abs() < 1e-14);
        assert!(theta_interpolate(&[], 1.0).is_err());
        assert!(theta_interpolate(&k, -1.0).is_err());
    }

    #[test]
    fn json_layout() {
        let s = serde_json::to_value(params()).unwrap();
        assert!(s.get("A").is_some() && s.get("theta_knots").unwrap().is_array());
        assert_eq!(s["theta_knots"][0], serde_json::json!([0.5, 0.02]));
    }
}
