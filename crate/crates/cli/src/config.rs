use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use roughvol::model::{ForwardVarianceCurve, ModelParams};
use roughvol::spx::SpxScheme;
use roughvol::ssvi::EssviParams;

/// One JSON document per run. Every key is optional; unknown keys are
/// rejected. Relative paths are resolved against the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub stage: Option<String>,
    pub params: ModelParams,
    pub xi0: ForwardVarianceCurve,
    pub maturities: Vec<f64>,
    pub strikes: Vec<f64>,
    pub paths: usize,
    pub steps_per_year: usize,
    pub vix_intervals: usize,
    pub bounds_nodes: usize,
    pub moment_nodes: usize,
    pub hsfe: bool,
    pub scheme: SpxScheme,
    /// Inline surface, or initial guess for a fit.
    pub essvi: Option<EssviParams>,
    /// Fitted-surface JSON, preferred over `essvi` where a surface is read.
    pub surface: Option<PathBuf>,
    pub option_quotes: Option<PathBuf>,
    pub futures_quotes: Option<PathBuf>,
    pub call_quotes: Option<PathBuf>,
    /// Times at which the forward variance curve is extracted.
    pub xi0_times: Vec<f64>,
    pub pin_b: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: None,
            out: None,
            stage: None,
            params: ModelParams::reference(),
            xi0: ForwardVarianceCurve::scenario1(),
            maturities: vec![],
            strikes: vec![],
            paths: 10_000,
            steps_per_year: 300,
            vix_intervals: 30,
            bounds_nodes: 256,
            moment_nodes: 64,
            hsfe: true,
            scheme: SpxScheme::LogEuler,
            essvi: None,
            surface: None,
            option_quotes: None,
            futures_quotes: None,
            call_quotes: None,
            xi0_times: vec![],
            pin_b: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.out,
            &mut cfg.surface,
            &mut cfg.option_quotes,
            &mut cfg.futures_quotes,
            &mut cfg.call_quotes,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.xi0.validate()?;
        if self.paths == 0 {
            bail!("paths must be positive");
        }
        increasing_positive("maturities", &self.maturities)?;
        increasing_positive("strikes", &self.strikes)?;
        increasing_positive("xi0_times", &self.xi0_times)?;
        Ok(())
    }

    pub fn require_maturities(&self) -> Result<&[f64]> {
        if self.maturities.is_empty() {
            return Err(UsageError("the maturity list is empty".into()).into());
        }
        Ok(&self.maturities)
    }
}

fn increasing_positive(name: &str, x: &[f64]) -> Result<()> {
    if x.iter().any(|v| !(v.is_finite() && *v > 0.0)) || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(UsageError(format!("{name} must be positive and strictly increasing, got {x:?}")).into());
    }
    Ok(())
}

/// Invalid invocation or configuration; mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
