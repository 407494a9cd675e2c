//! Experiment configuration: flat `key = value` lines, `#` starts a comment.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use rotsync_core::estimators::{DEFAULT_ALPHA, DEFAULT_TOL};
use rotsync_core::{Group, StepsizePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Spectral,
    /// Gradient ascent from the identity stack.
    Rgm,
    /// Power method from the identity stack.
    Gpm,
    SpectralRgm,
}

impl Estimator {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "spectral" => Some(Estimator::Spectral),
            "rgm" => Some(Estimator::Rgm),
            "gpm" => Some(Estimator::Gpm),
            "spectral+rgm" => Some(Estimator::SpectralRgm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Safe,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    /// Dense `nd x nd` noise matrix used instead of Gaussian noise.
    pub noise_path: Option<PathBuf>,
    pub seed: u64,
    pub group: Group,
    pub estimator: Estimator,
    pub stepsize: StepMode,
    pub alpha: f64,
    /// Fixed step; defaults to `1/(4nd)`.
    pub t_fixed: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// Check-name prefixes to keep in reports; empty keeps all.
    pub checks: Vec<String>,
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 20,
            d: 3,
            sigma: 0.0,
            noise_path: None,
            seed: 0,
            group: Group::SO,
            estimator: Estimator::SpectralRgm,
            stepsize: StepMode::Safe,
            alpha: DEFAULT_ALPHA,
            t_fixed: None,
            tol: DEFAULT_TOL,
            max_iter: 10_000,
            checks: Vec::new(),
            sigmas: Vec::new(),
            seeds: Vec::new(),
        }
    }
}

fn list<T: std::str::FromStr>(value: &str) -> Option<Vec<T>> {
    value.split(',').map(|t| t.trim()).filter(|t| !t.is_empty()).map(|t| t.parse().ok()).collect()
}

/// Seeds accept single values and inclusive ranges: `1, 4, 10..12`.
fn seed_list(value: &str) -> Option<Vec<u64>> {
    let mut out = Vec::new();
    for tok in value.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
                if b < a {
                    return None;
                }
                out.extend(a..=b);
            }
            None => out.push(tok.parse().ok()?),
        }
    }
    Some(out)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ln = i + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {ln}: expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || anyhow!("line {ln}: invalid value '{value}' for {key}");
            match key {
                "n" => cfg.n = value.parse().map_err(|_| bad())?,
                "d" => cfg.d = value.parse().map_err(|_| bad())?,
                "sigma" => cfg.sigma = value.parse().map_err(|_| bad())?,
                "noise_path" => cfg.noise_path = Some(PathBuf::from(value)),
                "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                "group" => cfg.group = Group::parse(value).ok_or_else(bad)?,
                "estimator" => cfg.estimator = Estimator::parse(value).ok_or_else(bad)?,
                "stepsize" => {
                    cfg.stepsize = match value {
                        "safe" => StepMode::Safe,
                        "fixed" => StepMode::Fixed,
                        _ => return Err(bad()),
                    }
                }
                "alpha" => cfg.alpha = value.parse().map_err(|_| bad())?,
                "t_fixed" => cfg.t_fixed = Some(value.parse().map_err(|_| bad())?),
                "tol" => cfg.tol = value.parse().map_err(|_| bad())?,
                "max_iter" => cfg.max_iter = value.parse().map_err(|_| bad())?,
                "checks" => cfg.checks = list(value).ok_or_else(bad)?,
                "sigmas" => cfg.sigmas = list(value).ok_or_else(bad)?,
                "seeds" => cfg.seeds = seed_list(value).ok_or_else(bad)?,
                _ => bail!("line {ln}: unknown key '{key}'"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in config {}", p.display()))
            }
            None => Ok(Self::default()),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            bail!("n must be at least 2");
        }
        if self.d == 0 {
            bail!("d must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bail!("sigma must be finite and non-negative");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1)");
        }
        if let Some(t) = self.t_fixed {
            if !(t > 0.0 && t.is_finite()) {
                bail!("t_fixed must be positive");
            }
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            bail!("tol must be positive");
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            bail!("sigmas must be finite and non-negative");
        }
        Ok(())
    }

    pub fn policy(&self) -> StepsizePolicy {
        let t_fixed = self.t_fixed.unwrap_or_else(|| StepsizePolicy::conservative(self.n, self.d));
        match self.stepsize {
            StepMode::Safe => StepsizePolicy::Safe { alpha: self.alpha, t_fixed },
            StepMode::Fixed => StepsizePolicy::Fixed { t: t_fixed },
        }
    }
}
