//! Hybrid-scheme simulation of the Volterra process
//! `𝒱_t = ∫_0^t (t-u)^{H-1/2} dZ_u`, viewed as a truncated Brownian
//! semistationary process with kernel `g(x) = x^α`, `α = H - 1/2`.
//!
//! On the grid `t_i = i/n` the scheme writes `𝒱(t_i) = B̃(i) + B̂(i)` where
//! the first `κ` lags are simulated exactly as Wiener integrals
//! `W̄_{i,k} = ∫_{t_i}^{t_{i+1}} (t_{i+k} - s)^α dW_s`, jointly Gaussian with
//! the plain increment `W̄_i`, and the remaining lags use the kernel evaluated
//! at the optimal points `b*_k / n`. The second sum is a discrete convolution
//! and is evaluated with an FFT.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::quad::{self, QuadOptions};
use crate::rng::{normal, path_rng, Stream};

/// Equidistant grid `t_i = i/n`, `i = 0..=n_T` with `n_T = ⌊nT⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n: usize,
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(steps_per_year: usize, horizon: f64) -> Result<Self> {
        if steps_per_year < 2 {
            return domain(format!("grid needs n >= 2 steps per year, got {steps_per_year}"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return domain(format!("grid horizon must be positive, got {horizon}"));
        }
        // tolerate representation error in n*T before flooring
        let steps = (steps_per_year as f64 * horizon + 1e-9).floor() as usize;
        if steps < 1 {
            return domain(format!("grid with n = {steps_per_year}, T = {horizon} has no steps"));
        }
        Ok(Self {
            n: steps_per_year,
            horizon,
            steps,
        })
    }

    pub fn steps_per_year(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `n_T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// Grid index of `t`, if `t` is a grid point within the horizon.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t * self.n as f64;
        let i = x.round();
        if (x - i).abs() < 1e-7 && i >= 0.0 && (i as usize) <= self.steps {
            Some(i as usize)
        } else {
            None
        }
    }
}

/// How the large-lag convolution `B̂` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionMethod {
    #[default]
    Fft,
    Direct,
}

/// Simulation controls for the hybrid scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub kappa: usize,
    pub seed: u64,
    pub paths: usize,
    #[serde(default)]
    pub convolution: ConvolutionMethod,
}

impl HybridConfig {
    pub fn new(kappa: usize, seed: u64, paths: usize) -> Self {
        Self {
            kappa,
            seed,
            paths,
            convolution: ConvolutionMethod::Fft,
        }
    }

    pub fn with_convolution(mut self, method: ConvolutionMethod) -> Self {
        self.convolution = method;
        self
    }
}

/// Simulated Volterra paths together with the Brownian increments `W̄_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraEnsemble {
    grid: TimeGrid,
    kappa: usize,
    hurst: f64,
    paths: usize,
    values: Vec<f64>,
    z_increments: Vec<f64>,
}

impl VolterraEnsemble {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    /// `𝒱(t_i)` for `i = 0..=n_T` on path `m`.
    pub fn values(&self, m: usize) -> &[f64] {
        let w = self.grid.steps + 1;
        &self.values[m * w..(m + 1) * w]
    }

    /// `W̄_i` for `i = 0..n_T` on path `m`.
    pub fn z_increments(&self, m: usize) -> &[f64] {
        let w = self.grid.steps;
        &self.z_increments[m * w..(m + 1) * w]
    }

    /// Debug dump with columns `path,i,t,V,Zinc` (no stability guarantee).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["path", "i", "t", "V", "Zinc"])?;
        for m in 0..self.paths {
            let v = self.values(m);
            let z = self.z_increments(m);
            for (i, vi) in v.iter().enumerate() {
                let zinc = z.get(i).map(|x| x.to_string()).unwrap_or_default();
                wtr.write_record([
                    m.to_string(),
                    i.to_string(),
                    self.grid.time(i).to_string(),
                    vi.to_string(),
                    zinc,
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > -0.5 && alpha < 0.5 && alpha != 0.0 {
        Ok(())
    } else {
        domain(format!("kernel exponent {alpha} outside (-1/2, 1/2) \\ {{0}}"))
    }
}

/// Optimal kernel abscissa `b*_k = ((k^{α+1} - (k-1)^{α+1}) / (α+1))^{1/α}`.
pub fn b_star(k: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if k == 0 {
        return domain("b* is defined for k >= 1");
    }
    let kf = k as f64;
    let a1 = alpha + 1.0;
    Ok(((kf.powf(a1) - (kf - 1.0).powf(a1)) / a1).powf(1.0 / alpha))
}

/// Covariance of `(W̄_i, W̄_{i,1}, …, W̄_{i,κ})`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallLagCovariance {
    pub matrix: Matrix,
}

impl SmallLagCovariance {
    /// Builds the `(κ+1)×(κ+1)` covariance; index 0 is `W̄_i`, index `k` is `W̄_{i,k}`.
    pub fn new(kappa: usize, n: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if kappa < 1 {
            return domain("hybrid scheme needs kappa >= 1");
        }
        if n < 2 {
            return domain("hybrid scheme needs n >= 2");
        }
        let nf = n as f64;
        let a1 = alpha + 1.0;
        let a2 = 2.0 * alpha + 1.0;
        let mut m = Matrix::zeros(kappa + 1);
        m.set(0, 0, 1.0 / nf);
        for k in 1..=kappa {
            let kf = k as f64;
            let cross = (kf.powf(a1) - (kf - 1.0).powf(a1)) / (a1 * nf.powf(a1));
            m.set(0, k, cross);
            m.set(k, 0, cross);
            let var = (kf.powf(a2) - (kf - 1.0).powf(a2)) / (a2 * nf.powf(a2));
            m.set(k, k, var);
            for j in 1..k {
                let c = lag_cross_covariance(j, k, n, alpha)?;
                m.set(j, k, c);
                m.set(k, j, c);
            }
        }
        Ok(Self { matrix: m })
    }
}

/// `∫_0^{1/n} (k/n - u)^α (j/n - u)^α du` for `j < k`.
///
/// With `v = j/n - u` and `y = v^{α+1}` the endpoint singularity disappears:
/// the integral becomes `1/(α+1) ∫ (y^{1/(α+1)} + (k-j)/n)^α dy`.
fn lag_cross_covariance(j: usize, k: usize, n: usize, alpha: f64) -> Result<f64> {
    let nf = n as f64;
    let (lo, hi) = (j.min(k) as f64, j.max(k) as f64);
    let gap = (hi - lo) / nf;
    let a1 = alpha + 1.0;
    let y0 = ((lo - 1.0) / nf).powf(a1);
    let y1 = (lo / nf).powf(a1);
    let v = quad::integrate(
        |y: f64| (y.powf(1.0 / a1) + gap).powf(alpha),
        y0,
        y1,
        QuadOptions::rel(1e-13),
    )?;
    Ok(v / a1)
}

/// Lower-triangular Toeplitz product `out[i] = Σ_{k=0}^{i} weights[k] · increments[i-k]`,
/// evaluated by FFT.
pub fn fft_convolve(weights: &[f64], increments: &[f64]) -> Vec<f64> {
    if weights.is_empty() || increments.is_empty() {
        return vec![0.0; increments.len()];
    }
    let n = increments.len();
    let len = (n + weights.len().min(n)).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut a: Vec<Complex<f64>> = (0..len)
        .map(|i| {
            Complex::new(
                if i < n {
                    weights.get(i).copied().unwrap_or(0.0)
                } else {
                    0.0
                },
                0.0,
            )
        })
        .collect();
    let mut b: Vec<Complex<f64>> = (0..len)
        .map(|i| Complex::new(if i < n { increments[i] } else { 0.0 }, 0.0))
        .collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inv.process(&mut a);
    let scale = 1.0 / len as f64;
    a[..n].iter().map(|c| c.re * scale).collect()
}

/// The `O(n²)` reference for [`fft_convolve`].
pub fn direct_convolve(weights: &[f64], increments: &[f64]) -> Vec<f64> {
    (0..increments.len())
        .map(|i| {
            (0..=i.min(weights.len().saturating_sub(1)))
                .map(|k| weights[k] * increments[i - k])
                .sum()
        })
        .collect()
}

/// Precomputed hybrid scheme for one `(grid, H, κ)`; samples paths on demand.
pub struct HybridScheme {
    grid: TimeGrid,
    hurst: f64,
    kappa: usize,
    chol: Matrix,
    /// `g'_k = g_{k+1}`: zero for the first κ lags, `(b*_k/n)^α` afterwards.
    weights: Vec<f64>,
    method: ConvolutionMethod,
    fft_len: usize,
    weight_spectrum: Vec<Complex<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for HybridScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridScheme")
            .field("grid", &self.grid)
            .field("hurst", &self.hurst)
            .field("kappa", &self.kappa)
            .field("method", &self.method)
            .finish()
    }
}

/// Reusable per-thread buffers for [`HybridScheme::sample_into`].
pub struct PathScratch {
    lags: Vec<f64>,
    normals: Vec<f64>,
    draw: Vec<f64>,
    spectrum: Vec<Complex<f64>>,
    fft_scratch: Vec<Complex<f64>>,
}

impl HybridScheme {
    pub fn new(grid: TimeGrid, hurst: f64, kappa: usize, method: ConvolutionMethod) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 0.5) {
            return domain(format!("Hurst parameter {hurst} outside (0, 1/2)"));
        }
        if kappa < 1 {
            return domain("hybrid scheme needs kappa >= 1");
        }
        if kappa > grid.steps() {
            return domain(format!(
                "kappa = {kappa} exceeds the number of grid steps {}",
                grid.steps()
            ));
        }
        let alpha = hurst - 0.5;
        let n = grid.steps_per_year();
        let cov = SmallLagCovariance::new(kappa, n, alpha)?;
        let chol = cov.matrix.cholesky()?;
        let nt = grid.steps();
        let nf = n as f64;
        let mut weights = vec![0.0; nt];
        for (idx, w) in weights.iter_mut().enumerate() {
            let k = idx + 1;
            if k > kappa {
                *w = (b_star(k, alpha)? / nf).powf(alpha);
            }
        }
        let fft_len = (2 * nt).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(fft_len);
        let inv = planner.plan_fft_inverse(fft_len);
        let mut weight_spectrum: Vec<Complex<f64>> = (0..fft_len)
            .map(|i| Complex::new(weights.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        fwd.process(&mut weight_spectrum);
        Ok(Self {
            grid,
            hurst,
            kappa,
            chol,
            weights,
            method,
            fft_len,
            weight_spectrum,
            fwd,
            inv,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn scratch(&self) -> PathScratch {
        let scratch_len = self
            .fwd
            .get_inplace_scratch_len()
            .max(self.inv.get_inplace_scratch_len());
        PathScratch {
            lags: vec![0.0; self.grid.steps() * self.kappa],
            normals: vec![0.0; self.kappa + 1],
            draw: vec![0.0; self.kappa + 1],
            spectrum: vec![Complex::new(0.0, 0.0); self.fft_len],
            fft_scratch: vec![Complex::new(0.0, 0.0); scratch_len],
        }
    }

    /// Samples one path from `rng`, writing `𝒱(t_i)` (`n_T + 1` values) and
    /// `W̄_i` (`n_T` values).
    pub fn sample_into(
        &self,
        rng: &mut ChaCha8Rng,
        scratch: &mut PathScratch,
        values: &mut [f64],
        z_increments: &mut [f64],
    ) {
        let nt = self.grid.steps();
        let kappa = self.kappa;
        debug_assert_eq!(values.len(), nt + 1);
        debug_assert_eq!(z_increments.len(), nt);
        for i in 0..nt {
            for z in scratch.normals.iter_mut() {
                *z = normal(rng);
            }
            self.chol.lower_mul(&scratch.normals, &mut scratch.draw);
            z_increments[i] = scratch.draw[0];
            scratch.lags[i * kappa..(i + 1) * kappa].copy_from_slice(&scratch.draw[1..]);
        }
        values[0] = 0.0;
        match self.method {
            ConvolutionMethod::Fft => {
                let spec = &mut scratch.spectrum;
                for (i, c) in spec.iter_mut().enumerate() {
                    *c = Complex::new(if i < nt { z_increments[i] } else { 0.0 }, 0.0);
                }
                self.fwd.process_with_scratch(spec, &mut scratch.fft_scratch);
                for (c, w) in spec.iter_mut().zip(&self.weight_spectrum) {
                    *c *= *w;
                }
                self.inv.process_with_scratch(spec, &mut scratch.fft_scratch);
                let scale = 1.0 / self.fft_len as f64;
                for i in 1..=nt {
                    values[i] = spec[i - 1].re * scale;
                }
            }
            ConvolutionMethod::Direct => {
                for i in 1..=nt {
                    let mut s = 0.0;
                    for k in (kappa + 1)..=i {
                        s += self.weights[k - 1] * z_increments[i - k];
                    }
                    values[i] = s;
                }
            }
        }
        for i in 1..=nt {
            let mut near = 0.0;
            for k in 1..=i.min(kappa) {
                near += scratch.lags[(i - k) * kappa + (k - 1)];
            }
            values[i] += near;
        }
    }

    /// Samples path `m` of the run keyed by `seed`.
    pub fn sample_path(&self, seed: u64, m: usize, scratch: &mut PathScratch) -> (Vec<f64>, Vec<f64>) {
        let nt = self.grid.steps();
        let mut v = vec![0.0; nt + 1];
        let mut z = vec![0.0; nt];
        let mut rng = path_rng(seed, Stream::Volterra, m);
        self.sample_into(&mut rng, scratch, &mut v, &mut z);
        (v, z)
    }
}

/// Simulates `cfg.paths` Volterra paths with the hybrid scheme.
pub fn simulate_volterra(grid: TimeGrid, hurst: f64, cfg: &HybridConfig) -> Result<VolterraEnsemble> {
    if cfg.paths == 0 {
        return domain("need at least one path");
    }
    let scheme = HybridScheme::new(grid, hurst, cfg.kappa, cfg.convolution)?;
    let nt = grid.steps();
    let mut values = vec![0.0; cfg.paths * (nt + 1)];
    let mut z_increments = vec![0.0; cfg.paths * nt];
    values
        .par_chunks_mut(nt + 1)
        .zip(z_increments.par_chunks_mut(nt))
        .enumerate()
        .for_each_init(
            || scheme.scratch(),
            |scratch, (m, (v, z))| {
                let mut rng = path_rng(cfg.seed, Stream::Volterra, m);
                scheme.sample_into(&mut rng, scratch, v, z);
            },
        );
    Ok(VolterraEnsemble {
        grid,
        kappa: cfg.kappa,
        hurst,
        paths: cfg.paths,
        values,
        z_increments,
    })
}

/// Brownian path `Z_{t_i}` driving one Volterra path.
///
/// The first `κ` increments are recovered from the Volterra values as
/// `n^{H-1/2} (𝒱(t_i) - 𝒱(t_{i-1}))`; afterwards the stored `W̄_{i-1}` are used.
/// The first rule is an approximation: `Var(Z_{t_κ})` exceeds `κ/n` by
/// `O(1/n)`.
pub fn brownian_path(values: &[f64], z_increments: &[f64], kappa: usize, n: usize, hurst: f64) -> Result<Vec<f64>> {
    if kappa < 1 {
        return domain("Brownian extraction needs kappa >= 1");
    }
    if values.len() != z_increments.len() + 1 {
        return Err(Error::GridMismatch(format!(
            "{} Volterra values vs {} increments",
            values.len(),
            z_increments.len()
        )));
    }
    let scale = (n as f64).powf(hurst - 0.5);
    let mut z = Vec::with_capacity(values.len());
    z.push(0.0);
    for i in 1..values.len() {
        let dz = if i <= kappa {
            scale * (values[i] - values[i - 1])
        } else {
            z_increments[i - 1]
        };
        z.push(z[i - 1] + dz);
    }
    Ok(z)
}

/// Brownian paths for every member of the ensemble, flattened `M × (n_T+1)`.
pub fn extract_brownian(ensemble: &VolterraEnsemble, grid: &TimeGrid, kappa: usize, hurst: f64) -> Result<Vec<f64>> {
    if ensemble.grid != *grid {
        return Err(Error::GridMismatch(format!(
            "ensemble grid {:?} differs from requested {:?}",
            ensemble.grid, grid
        )));
    }
    if kappa != ensemble.kappa {
        return Err(Error::GridMismatch(format!(
            "ensemble simulated with kappa = {}, extraction asked for {kappa}",
            ensemble.kappa
        )));
    }
    let mut out = Vec::with_capacity(ensemble.paths * (grid.steps() + 1));
    for m in 0..ensemble.paths {
        out.extend(brownian_path(
            ensemble.values(m),
            ensemble.z_increments(m),
            kappa,
            grid.steps_per_year(),
            hurst,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::mean_and_se;

    #[test]
    fn b_star_reference_values() {
        let a = -0.43;
        let b1 = b_star(1, a).unwrap();
        assert!((b1 - (1.0 / (a + 1.0)).powf(1.0 / a)).abs() < 1e-15);
        let b2 = b_star(2, a).unwrap();
        assert!((b2 - 1.459).abs() < 5e-4, "{b2}");
        assert!(b_star(3, 0.0).is_err());
        assert!(b_star(3, 0.5).is_err());
    }

    #[test]
    fn b_star_minimises_kernel_error() {
        // golden-section search of ∫_{k-1}^{k} (x^α - b^α)^2 dx over b
        let a = -0.43;
        let k = 2.0;
        let err = |b: f64| {
            quad::integrate(
                |x: f64| (x.powf(a) - b.powf(a)).powi(2),
                k - 1.0,
                k,
                QuadOptions::rel(1e-12),
            )
            .unwrap()
        };
        let (mut lo, mut hi) = (1.0 + 1e-9, 2.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..120 {
            let c = hi - g * (hi - lo);
            let d = lo + g * (hi - lo);
            if err(c) < err(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        let best = 0.5 * (lo + hi);
        assert!((best - b_star(2, a).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn small_lag_covariance_entries() {
        let c = SmallLagCovariance::new(1, 2, -0.43).unwrap();
        assert!((c.matrix.get(0, 0) - 0.5).abs() < 1e-15);
        let expect = (1.0 / 0.14) * 2f64.powf(-0.14);
        assert!((c.matrix.get(1, 1) - expect).abs() < 1e-12);
        let cross = 0.5f64.powf(0.57) / 0.57;
        assert!((c.matrix.get(0, 1) - cross).abs() < 1e-14);
        let q = quad::integrate(
            |u: f64| if u < 0.5 { (0.5 - u).powf(-0.43) } else { 0.0 },
            0.0,
            0.5,
            QuadOptions::rel(1e-12),
        )
        .unwrap();
        assert!((q - cross).abs() < 1e-9);
    }

    #[test]
    fn lag_cross_term_matches_plain_quadrature() {
        let (n, a) = (4usize, -0.3);
        let c = SmallLagCovariance::new(3, n, a).unwrap();
        let nf = n as f64;
        for (j, k) in [(1usize, 2usize), (1, 3), (2, 3)] {
            let q = quad::integrate(
                |u: f64| ((k as f64 / nf - u) * (j as f64 / nf - u)).powf(a),
                0.0,
                1.0 / nf,
                QuadOptions {
                    abs_tol: 0.0,
                    rel_tol: 1e-10,
                    max_intervals: 5000,
                },
            )
            .unwrap();
            assert!((c.matrix.get(j, k) - q).abs() < 1e-9 * q, "{j},{k}");
        }
        assert!(c.matrix.is_symmetric(0.0));
        assert!(c.matrix.cholesky().is_ok());
    }

    #[test]
    fn convolution_identities() {
        let inc = [0.3, -1.2, 2.5, 0.7];
        let out = fft_convolve(&[1.0], &inc);
        for (a, b) in out.iter().zip(&inc) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((fft_convolve(&[2.0, 5.0], &[3.0])[0] - 6.0).abs() < 1e-14);
    }

    #[test]
    fn volterra_starts_at_zero_and_is_seeded() {
        let grid = TimeGrid::new(50, 1.0).unwrap();
        let cfg = HybridConfig::new(2, 11, 20);
        let a = simulate_volterra(grid, 0.1, &cfg).unwrap();
        let b = simulate_volterra(grid, 0.1, &cfg).unwrap();
        assert_eq!(a, b);
        for m in 0..20 {
            assert_eq!(a.values(m)[0], 0.0);
        }
        // path m does not depend on the number of paths
        let c = simulate_volterra(grid, 0.1, &HybridConfig::new(2, 11, 5)).unwrap();
        assert_eq!(a.values(3), c.values(3));
    }

    #[test]
    fn extraction_uses_stored_increments_after_kappa() {
        let grid = TimeGrid::new(20, 1.0).unwrap();
        let ens = simulate_volterra(grid, 0.07, &HybridConfig::new(2, 3, 4)).unwrap();
        let z = extract_brownian(&ens, &grid, 2, 0.07).unwrap();
        let w = grid.steps() + 1;
        for m in 0..4 {
            let path = &z[m * w..(m + 1) * w];
            assert_eq!(path[0], 0.0);
            for i in 3..w {
                assert!((path[i] - path[i - 1] - ens.z_increments(m)[i - 1]).abs() < 1e-12);
            }
        }
        assert!(extract_brownian(&ens, &grid, 0, 0.07).is_err());
        let other = TimeGrid::new(40, 1.0).unwrap();
        assert!(matches!(
            extract_brownian(&ens, &other, 2, 0.07),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn increments_have_variance_one_over_n() {
        let grid = TimeGrid::new(10, 1.0).unwrap();
        let ens = simulate_volterra(grid, 0.2, &HybridConfig::new(1, 5, 20_000)).unwrap();
        let x: Vec<f64> = (0..ens.paths()).map(|m| ens.z_increments(m)[4].powi(2)).collect();
        let (m, se) = mean_and_se(&x);
        assert!((m - 0.1).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn kappa_bounds() {
        let grid = TimeGrid::new(2, 1.0).unwrap();
        assert!(HybridScheme::new(grid, 0.1, 3, ConvolutionMethod::Fft).is_err());
        assert!(HybridScheme::new(grid, 0.1, 0, ConvolutionMethod::Fft).is_err());
        assert!(TimeGrid::new(1, 1.0).is_err());
    }
}
