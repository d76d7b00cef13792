//! Small-dimensional optimisers: Levenberg–Marquardt for least squares and
//! Nelder–Mead for derivative-free minimisation, both with optional boxes.

use crate::error::{domain, Result};
use crate::linalg::Matrix;

/// Box `[lower_i, upper_i]`; infinite bounds are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return domain("bounds must pair up with lower <= upper");
        }
        Ok(Self { lower, upper })
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease stays below this for `stall_window` steps.
    pub ftol: f64,
    pub stall_window: usize,
    /// Stop when `‖Jᵀr‖` falls below this.
    pub gtol: f64,
    /// Relative step of the central-difference Jacobian.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-12,
            stall_window: 5,
            gtol: 1e-8,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub x: Vec<f64>,
    /// `Σ r_i²`.
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

type Jacobian<'a> = dyn Fn(&[f64]) -> Result<Vec<Vec<f64>>> + 'a;

/// Central-difference Jacobian, one row per residual.
pub fn numerical_jacobian<F>(f: &F, x: &[f64], rel_step: f64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let m = f(x)?.len();
    let mut jac = vec![vec![0.0; x.len()]; m];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = rel_step * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let up = f(&xp)?;
        xp[j] = x[j] - h;
        let dn = f(&xp)?;
        xp[j] = x[j];
        for i in 0..m {
            jac[i][j] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Minimises `Σ r_i(x)²` by Levenberg–Marquardt, projecting every trial
/// point onto `bounds`. The Jacobian is taken from `jacobian` when given,
/// otherwise by central differences.
pub fn levenberg_marquardt<F>(
    residuals: F,
    jacobian: Option<&Jacobian<'_>>,
    x0: &[f64],
    bounds: Option<&Bounds>,
    opts: LmOptions,
) -> Result<LmReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    if let Some(b) = bounds {
        b.project(&mut x);
    }
    let cost_of = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut r = residuals(&x)?;
    let mut cost = cost_of(&r);
    let mut mu = 1e-3;
    let mut stall = 0;
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            gnorm = 0.0;
            converged = true;
            break;
        }
        let jac = match jacobian {
            Some(j) => j(&x)?,
            None => numerical_jacobian(&residuals, &x, opts.fd_step)?,
        };
        let mut jtj = Matrix::zeros(n);
        let mut g = vec![0.0; n];
        for (row, ri) in jac.iter().zip(&r) {
            for a in 0..n {
                g[a] += row[a] * ri;
                for b in 0..n {
                    jtj.set(a, b, jtj.get(a, b) + row[a] * row[b]);
                }
            }
        }
        // gradient of the cost restricted to directions that stay feasible
        gnorm = projected_gradient_norm(&x, &g, bounds);
        if gnorm < opts.gtol {
            converged = true;
            break;
        }
        let mut accepted = false;
        while mu < 1e20 {
            let mut damped = jtj.clone();
            for a in 0..n {
                let d = jtj.get(a, a);
                damped.set(a, a, d + mu * d.max(1e-12));
            }
            let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = match damped.solve_spd(&neg_g) {
                Ok(s) => s,
                Err(_) => {
                    mu *= 4.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            if let Some(b) = bounds {
                b.project(&mut trial);
            }
            if trial == x {
                break;
            }
            let rt = match residuals(&trial) {
                Ok(v) if v.iter().all(|e| e.is_finite()) => v,
                _ => {
                    mu *= 4.0;
                    continue;
                }
            };
            let ct = cost_of(&rt);
            if ct < cost {
                let rel = (cost - ct) / cost;
                x = trial;
                r = rt;
                cost = ct;
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                stall = if rel < opts.ftol { stall + 1 } else { 0 };
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            // no descent step exists at machine precision
            converged = cost < 1e-24 || gnorm < opts.gtol.sqrt();
            break;
        }
        if stall >= opts.stall_window {
            converged = true;
            break;
        }
    }
    Ok(LmReport {
        x,
        cost,
        gradient_norm: gnorm,
        iterations,
        converged,
    })
}

fn projected_gradient_norm(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> f64 {
    g.iter()
        .enumerate()
        .map(|(i, &gi)| match bounds {
            Some(b) if x[i] <= b.lower[i] && gi > 0.0 => 0.0,
            Some(b) if x[i] >= b.upper[i] && gi < 0.0 => 0.0,
            _ => gi,
        })
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop when the spread of simplex values is below this (absolute).
    pub ftol: f64,
    /// Stop when the simplex diameter is below this.
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            ftol: 1e-14,
            xtol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimisation; trial points are projected onto `bounds`.
pub fn nelder_mead<F>(
    f: F,
    x0: &[f64],
    steps: &[f64],
    bounds: Option<&Bounds>,
    opts: NelderMeadOptions,
) -> Result<NelderMeadReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if steps.len() != n {
        return domain("one initial step per coordinate is required");
    }
    let proj = |mut p: Vec<f64>| {
        if let Some(b) = bounds {
            b.project(&mut p);
        }
        p
    };
    let eval = |p: &[f64]| -> Result<f64> {
        let v = f(p)?;
        Ok(if v.is_nan() { f64::INFINITY } else { v })
    };
    let mut simplex: Vec<Vec<f64>> = vec![proj(x0.to_vec())];
    for i in 0..n {
        let mut p = simplex[0].clone();
        p[i] += steps[i];
        let mut p = proj(p);
        if p == simplex[0] {
            p[i] -= steps[i];
            p = proj(p);
        }
        simplex.push(p);
    }
    let mut values = simplex.iter().map(|p| eval(p)).collect::<Result<Vec<f64>>>()?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() <= opts.ftol && diameter <= opts.xtol.sqrt() || diameter <= opts.xtol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| {
            proj(
                (0..n)
                    .map(|j| centroid[j] + t * (simplex[n][j] - centroid[j]))
                    .collect(),
            )
        };
        let xr = along(-1.0);
        let fr = eval(&xr)?;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe)?;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = eval(&xc)?;
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc)?;
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let p: Vec<f64> = (0..n)
                .map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]))
                .collect();
            simplex[i] = proj(p);
            values[i] = eval(&simplex[i])?;
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Ok(NelderMeadReport {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    })
}
