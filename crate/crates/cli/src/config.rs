//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use mflab::spectra::linspace;
use mflab::{EpsRule, EstimatorConfig, GeneratorSpec, RateEstimator, ZeroPolicy};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: Option<GeneratorSpec>,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub emit: Emit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Emit {
    pub coefficients: bool,
    pub leaders: bool,
    pub spectra: bool,
    pub report: bool,
    pub plotdata: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit { coefficients: true, leaders: false, spectra: false, report: false, plotdata: false }
    }
}

/// Estimator overrides; anything left out takes the library default for the field's jmax.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    pub window: Option<(u32, u32)>,
    pub eps_schedule: Option<Vec<f64>>,
    pub eps_rule: Option<EpsRule>,
    pub resolution_slack: Option<f64>,
    pub rate: Option<RateEstimator>,
    /// `[lo, hi, n]`.
    pub p_grid: Option<(f64, f64, usize)>,
    pub h_grid: Option<(f64, f64, usize)>,
    /// Positive value: floor zero leaders at `2^(-b j)`; absent: exclude them.
    pub zero_floor: Option<f64>,
}

impl EstimatorSettings {
    pub fn resolve(&self, jmax: u32) -> EstimatorConfig<f64> {
        let mut cfg = EstimatorConfig::<f64>::new(jmax);
        if let Some(w) = self.window {
            cfg.window = w;
        }
        if let Some(e) = &self.eps_schedule {
            cfg.eps_schedule = e.clone();
        }
        if let Some(r) = self.eps_rule {
            cfg.eps_rule = r;
        }
        if let Some(s) = self.resolution_slack {
            cfg.resolution_slack = s;
        }
        if let Some(r) = self.rate {
            cfg.rate = r;
        }
        if let Some((lo, hi, n)) = self.p_grid {
            cfg.p_grid = linspace(lo, hi, n);
        }
        if let Some((lo, hi, n)) = self.h_grid {
            cfg.h_grid = Some(linspace(lo, hi, n));
        }
        if let Some(b) = self.zero_floor {
            cfg.zero_policy = ZeroPolicy::Floor { b };
        }
        cfg
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

/// `a..b` (half open), `a..=b`, or a comma list.
pub fn parse_seeds(s: &str) -> Result<SeedList, String> {
    seed_values(s).map(SeedList)
}

fn seed_values(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed '{t}'"));
    if let Some((a, b)) = s.split_once("..=") {
        return Ok((num(a)?..=num(b)?).collect());
    }
    if let Some((a, b)) = s.split_once("..") {
        return Ok((num(a)?..num(b)?).collect());
    }
    s.split(',').map(num).collect()
}

pub fn parse_window(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected j1:j2, got '{s}'"))?;
    let p = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("bad scale '{t}'"));
    Ok((p(a)?, p(b)?))
}

/// `lo:hi:n`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected lo:hi:n, got '{s}'"));
    }
    let f = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}'"));
    let n = parts[2].trim().parse::<usize>().map_err(|_| format!("bad count '{}'", parts[2]))?;
    Ok((f(parts[0])?, f(parts[1])?, n))
}
