use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail};
use chrono::NaiveDate;
use serde::Deserialize;
use ulamchain::grid::load_grid;
use ulamchain::ingest::DEFAULT_EPOCH;
use ulamchain::{EigenOptions, Epoch, GridCovering};

use crate::error::{CliError, Context};

/// Flags that take precedence over the config file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub lag_days: Option<f64>,
    pub crash_date: Option<String>,
    pub cpi_level: Option<f64>,
    pub basin_threshold: Option<f64>,
    pub window_steps: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: PathBuf,
    roles: PathBuf,
    #[serde(default)]
    trajectories: Option<PathBuf>,
    #[serde(default)]
    observations: Option<PathBuf>,
    #[serde(default)]
    prior: Option<PathBuf>,
    #[serde(default)]
    out: Option<PathBuf>,
    #[serde(default = "default_lag")]
    lag_days: f64,
    #[serde(default)]
    crash_date: Option<String>,
    #[serde(default)]
    epoch: Option<String>,
    #[serde(default = "default_exponent")]
    season_exponent: u32,
    #[serde(default = "default_threshold")]
    basin_threshold: f64,
    #[serde(default = "default_level")]
    cpi_level: f64,
    #[serde(default)]
    window_steps: usize,
    #[serde(default = "default_schedule")]
    schedule: String,
    #[serde(default)]
    eigen: EigenConfig,
    #[serde(default)]
    markov: Option<MarkovConfig>,
}

fn default_lag() -> f64 {
    5.0
}
fn default_exponent() -> u32 {
    18
}
fn default_threshold() -> f64 {
    0.5
}
fn default_level() -> f64 {
    0.95
}
fn default_schedule() -> String {
    "seasonal".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        let d = EigenOptions::default();
        EigenConfig {
            k: 4,
            tol: d.tol,
            max_iter: d.max_iter,
            seed: d.seed,
        }
    }
}

/// Markovianity diagnostic run during `build`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovConfig {
    pub base_lag_days: f64,
    pub multiples: Vec<u32>,
    #[serde(default = "default_markov_k")]
    pub k: usize,
}

fn default_markov_k() -> usize {
    3
}

/// How the forward chain is scheduled in `bayes`, `paths` and `evolve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Seasonal,
    Pooled,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "seasonal" => Ok(ScheduleKind::Seasonal),
            "pooled" => Ok(ScheduleKind::Pooled),
            other => Err(CliError::input(anyhow!("unknown schedule `{other}` (seasonal or pooled)"))),
        }
    }
}

/// Validated run configuration with paths resolved against the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: PathBuf,
    pub roles: PathBuf,
    pub trajectories: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub prior: Option<PathBuf>,
    pub out: PathBuf,
    pub lag_days: f64,
    pub crash_date: NaiveDate,
    pub epoch: Epoch,
    pub season_exponent: u32,
    pub basin_threshold: f64,
    pub cpi_level: f64,
    pub window_steps: usize,
    pub schedule: ScheduleKind,
    pub eigen: EigenConfig,
    pub markov: Option<MarkovConfig>,
}

fn parse_date(s: &str, what: &str) -> anyhow::Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| anyhow!("{what} `{s}`: {e}"))
}

impl RunConfig {
    pub fn load(path: &Path, o: Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).ctx(format!("reading config {}", path.display()))?;
        let raw: RawConfig = toml::from_str(&text).ctx(format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(raw, base, o).map_err(CliError::input)
    }

    fn resolve(raw: RawConfig, base: &Path, o: Overrides) -> anyhow::Result<Self> {
        let at = |p: PathBuf| base.join(p);
        let grid = at(raw.grid);
        let roles = at(raw.roles);
        for (what, p) in [("grid config", &grid), ("roles file", &roles)] {
            if !p.is_file() {
                bail!("{what} {} does not exist", p.display());
            }
        }
        let trajectories = raw.trajectories.map(at);
        let observations = raw.observations.map(at);
        let prior = raw.prior.map(at);
        for p in [&trajectories, &observations, &prior].into_iter().flatten() {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        let out = o.out.or(raw.out.map(at)).unwrap_or_else(|| base.join("out"));
        let lag_days = o.lag_days.unwrap_or(raw.lag_days);
        if !(lag_days.is_finite() && lag_days > 0.0) {
            bail!("lag_days must be positive, got {lag_days}");
        }
        if raw.season_exponent == 0 {
            bail!("season_exponent must be at least 1");
        }
        let crash_date = match o.crash_date.or(raw.crash_date) {
            Some(s) => parse_date(&s, "crash date")?,
            None => DEFAULT_EPOCH.0,
        };
        let epoch = match raw.epoch {
            Some(s) => Epoch(parse_date(&s, "epoch")?),
            None => DEFAULT_EPOCH,
        };
        let cpi_level = o.cpi_level.unwrap_or(raw.cpi_level);
        if !(cpi_level > 0.0 && cpi_level < 1.0) {
            bail!("cpi_level must lie in (0, 1), got {cpi_level}");
        }
        let basin_threshold = o.basin_threshold.unwrap_or(raw.basin_threshold);
        let mut eigen = raw.eigen;
        if let Some(seed) = o.seed {
            eigen.seed = seed;
        }
        if eigen.k == 0 {
            bail!("eigen.k must be at least 1");
        }
        let schedule = ScheduleKind::parse(&raw.schedule).map_err(|e| e.error)?;
        Ok(RunConfig {
            grid,
            roles,
            trajectories,
            observations,
            prior,
            out,
            lag_days,
            crash_date,
            epoch,
            season_exponent: raw.season_exponent,
            basin_threshold,
            cpi_level,
            window_steps: o.window_steps.unwrap_or(raw.window_steps),
            schedule,
            eigen,
            markov: raw.markov,
        })
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            tol: self.eigen.tol,
            max_iter: self.eigen.max_iter,
            seed: self.eigen.seed,
        }
    }

    pub fn load_grid(&self) -> Result<GridCovering, CliError> {
        load_grid(&self.grid).ctx(format!("grid {}", self.grid.display()))
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn ensure_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).ctx(format!("creating {}", self.out.display()))
    }
}
