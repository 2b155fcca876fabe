//! Plain-text `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::adaptive::{CostModel, RandomPool};
use crate::calibrate::{TauAuObjective, DEFAULT_TPR};
use crate::distance::{Backend, DEFAULT_K, DEFAULT_SHRINKAGE};
use crate::error::{Error, Result};
use crate::metrics::{default_coverage_grid, DEFAULT_BINS};
use crate::pipeline::FitConfig;
use crate::synth::SynthConfig;

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// duplicate keys are rejected.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", lineno + 1)));
        }
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| Error::Config(format!("{key} = {v}: {e}")))
}

/// Whether grid inputs are queried on the downscaled grid or at full
/// resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryGrid {
    #[default]
    Down,
    Full,
}

impl fmt::Display for QueryGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryGrid::Down => "down",
            QueryGrid::Full => "full",
        })
    }
}

impl FromStr for QueryGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "down" => Ok(QueryGrid::Down),
            "full" => Ok(QueryGrid::Full),
            other => Err(Error::Config(format!("unknown query grid {other:?}"))),
        }
    }
}

/// Settings shared by the `fit` .. `sweep` subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub backend: Backend,
    pub k: usize,
    pub shrinkage: f64,
    pub knn_unit_norm: bool,
    pub tpr: f64,
    pub tau_au_objective: TauAuObjective,
    pub calib_size: Option<usize>,
    pub n_bins: usize,
    pub coverage: Vec<f64>,
    pub t_li: f64,
    pub t_hi: f64,
    pub budget: Option<f64>,
    pub seed: u64,
    pub pca_dims: usize,
    pub random_pool: RandomPool,
    pub query_grid: QueryGrid,
    pub downscale: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mahalanobis,
            k: DEFAULT_K,
            shrinkage: DEFAULT_SHRINKAGE,
            knn_unit_norm: false,
            tpr: DEFAULT_TPR,
            tau_au_objective: TauAuObjective::default(),
            calib_size: None,
            n_bins: DEFAULT_BINS,
            coverage: default_coverage_grid(),
            t_li: 1.0,
            t_hi: 250.0,
            budget: None,
            seed: 0,
            pca_dims: 0,
            random_pool: RandomPool::All,
            query_grid: QueryGrid::Down,
            downscale: 4,
        }
    }
}

fn optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if v.eq_ignore_ascii_case("none") || v.is_empty() {
        Ok(None)
    } else {
        parse_value(key, v).map(Some)
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 17] = [
        "backend",
        "k",
        "shrinkage",
        "knn_unit_norm",
        "tpr",
        "tau_au_objective",
        "calib_size",
        "n_bins",
        "coverage",
        "t_li",
        "t_hi",
        "budget",
        "seed",
        "pca_dims",
        "random_pool",
        "query_grid",
        "downscale",
    ];

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, v) in parse_kv(text)? {
            let v = v.as_str();
            match key.as_str() {
                "backend" => cfg.backend = v.parse().map_err(|e| Error::Config(format!("backend: {e}")))?,
                "k" => cfg.k = parse_value(&key, v)?,
                "shrinkage" => cfg.shrinkage = parse_value(&key, v)?,
                "knn_unit_norm" => cfg.knn_unit_norm = parse_value(&key, v)?,
                "tpr" => cfg.tpr = parse_value(&key, v)?,
                "tau_au_objective" => {
                    cfg.tau_au_objective = v.parse().map_err(|e| Error::Config(format!("tau_au_objective: {e}")))?
                }
                "calib_size" => cfg.calib_size = optional(&key, v)?,
                "n_bins" => cfg.n_bins = parse_value(&key, v)?,
                "coverage" => {
                    cfg.coverage = v.split(',').map(|s| parse_value(&key, s.trim())).collect::<Result<_>>()?
                }
                "t_li" => cfg.t_li = parse_value(&key, v)?,
                "t_hi" => cfg.t_hi = parse_value(&key, v)?,
                "budget" => cfg.budget = optional(&key, v)?,
                "seed" => cfg.seed = parse_value(&key, v)?,
                "pca_dims" => cfg.pca_dims = parse_value(&key, v)?,
                "random_pool" => {
                    cfg.random_pool = v.parse().map_err(|e| Error::Config(format!("random_pool: {e}")))?
                }
                "query_grid" => cfg.query_grid = v.parse()?,
                "downscale" => cfg.downscale = parse_value(&key, v)?,
                other => return Err(Error::Config(format!("unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if !(0.0..1.0).contains(&self.shrinkage) {
            return bad(format!("shrinkage {} outside [0, 1)", self.shrinkage));
        }
        if !(self.tpr > 0.0 && self.tpr < 1.0) {
            return bad(format!("tpr {} outside (0, 1)", self.tpr));
        }
        if self.n_bins == 0 {
            return bad("n_bins must be positive".into());
        }
        if self.coverage.is_empty() || self.coverage.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
            return bad("coverage values must lie in (0, 1]".into());
        }
        if self.coverage.windows(2).any(|w| w[1] <= w[0]) {
            return bad("coverage grid must be strictly increasing".into());
        }
        if self.downscale == 0 {
            return bad("downscale must be positive".into());
        }
        if let Some(b) = self.budget {
            if !(b.is_finite() && b >= 0.0) {
                return bad(format!("budget {b} must be non-negative"));
            }
        }
        if self.calib_size == Some(0) {
            return bad("calib_size must be positive".into());
        }
        self.cost_model().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        CostModel::new(self.t_li, self.t_hi)
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            backend: self.backend,
            shrinkage: self.shrinkage,
            k: self.k,
            unit_norm: self.knn_unit_norm,
            tpr: self.tpr,
            calibration_size: self.calib_size,
            seed: self.seed,
            pca_dims: self.pca_dims,
            tau_au_objective: self.tau_au_objective,
        }
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_kv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let coverage: Vec<String> = self.coverage.iter().map(f64::to_string).collect();
        [
            format!("backend = {}", self.backend),
            format!("k = {}", self.k),
            format!("shrinkage = {}", self.shrinkage),
            format!("knn_unit_norm = {}", self.knn_unit_norm),
            format!("tpr = {}", self.tpr),
            format!("tau_au_objective = {}", self.tau_au_objective),
            format!("calib_size = {}", opt(self.calib_size.map(|v| v.to_string()))),
            format!("n_bins = {}", self.n_bins),
            format!("coverage = {}", coverage.join(",")),
            format!("t_li = {}", self.t_li),
            format!("t_hi = {}", self.t_hi),
            format!("budget = {}", opt(self.budget.map(|v| v.to_string()))),
            format!("seed = {}", self.seed),
            format!("pca_dims = {}", self.pca_dims),
            format!("random_pool = {}", self.random_pool),
            format!("query_grid = {}", self.query_grid),
            format!("downscale = {}", self.downscale),
        ]
        .join("\n")
            + "\n"
    }
}

/// Parses a synthetic-data config; missing keys keep their defaults.
pub fn parse_synth_config(text: &str) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::default();
    for (key, v) in parse_kv(text)? {
        let v = v.as_str();
        match key.as_str() {
            "n_samples" => cfg.n_samples = parse_value(&key, v)?,
            "n_classes" => cfg.n_classes = parse_value(&key, v)?,
            "d_hi" => cfg.d_hi = parse_value(&key, v)?,
            "d_li" => cfg.d_li = parse_value(&key, v)?,
            "sep_hi" => cfg.sep_hi = parse_value(&key, v)?,
            "sep_li" => cfg.sep_li = parse_value(&key, v)?,
            "frac_uar" => cfg.frac_uar = parse_value(&key, v)?,
            "frac_uai" => cfg.frac_uai = parse_value(&key, v)?,
            "frac_ue" => cfg.frac_ue = parse_value(&key, v)?,
            "noise_li" => cfg.noise_li = parse_value(&key, v)?,
            "seed" => cfg.seed = parse_value(&key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_synth_config(path: impl AsRef<Path>) -> Result<SynthConfig> {
    parse_synth_config(&fs::read_to_string(path)?)
}
