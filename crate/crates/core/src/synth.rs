//! Synthetic drifters from known seasonal kernels.
//!
//! A virtual drifter occupies box centres and jumps once per lag according
//! to the kernel of the season its step starts in. A jump to the exit
//! column ends the track with one sample placed outside the domain, which
//! ingest turns into an out-of-domain pair.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::ChainSchedule;
use crate::grid::{GridConfig, GridCovering, GridError};
use crate::ingest::{Epoch, ParseReport, Season, SeasonCalendar, TrajectoryPoint, TrajectorySet};
use crate::serial::fmt_f64;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("spec: {0}")]
    Spec(String),
    #[error("{season} kernel row {row} sums to {sum}, not 1")]
    NotStochastic { season: Season, row: usize, sum: f64 },
    #[error("{season} kernel row {row}: {message}")]
    BadRow {
        season: Season,
        row: usize,
        message: String,
    },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Kernel over `N` states plus an exit outcome.
#[derive(Debug, Clone)]
pub struct Kernel {
    /// `N × (N + 1)` row-stochastic weights, last column = exit.
    rows: Vec<Vec<f64>>,
    samplers: Vec<WeightedIndex<f64>>,
}

impl Kernel {
    /// Rows of length `N` (must sum to 1) or `N + 1` with an explicit exit
    /// column.
    pub fn new(season: Season, rows: Vec<Vec<f64>>) -> Result<Self, SynthError> {
        let n = rows.len();
        let mut full = Vec::with_capacity(n);
        let mut samplers = Vec::with_capacity(n);
        for (i, mut row) in rows.into_iter().enumerate() {
            let bad = |message: String| SynthError::BadRow {
                season,
                row: i,
                message,
            };
            if row.len() == n {
                row.push(0.0);
            } else if row.len() != n + 1 {
                return Err(bad(format!("length {} for {n} states", row.len())));
            }
            if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(bad("weights must be finite and non-negative".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(SynthError::NotStochastic { season, row: i, sum });
            }
            samplers.push(WeightedIndex::new(&row).map_err(|e| bad(e.to_string()))?);
            full.push(row);
        }
        Ok(Kernel {
            rows: full,
            samplers,
        })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Next state, or `None` on exit.
    pub fn step<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> Option<usize> {
        let j = self.samplers[from].sample(rng);
        (j < self.rows.len()).then_some(j)
    }
}

#[derive(Debug, Clone)]
pub struct SeasonalKernels {
    pub winter: Kernel,
    pub summer: Kernel,
    pub spring_fall: Kernel,
}

impl SeasonalKernels {
    pub fn autonomous(rows: Vec<Vec<f64>>) -> Result<Self, SynthError> {
        Ok(SeasonalKernels {
            winter: Kernel::new(Season::Winter, rows.clone())?,
            summer: Kernel::new(Season::Summer, rows.clone())?,
            spring_fall: Kernel::new(Season::SpringFall, rows)?,
        })
    }

    pub fn get(&self, season: Season) -> &Kernel {
        match season {
            Season::Winter => &self.winter,
            Season::Summer => &self.summer,
            Season::SpringFall => &self.spring_fall,
        }
    }

    pub fn n_states(&self) -> usize {
        self.winter.n_states()
    }
}

/// How many drifters to release, where and when.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleasePlan {
    pub n_drifters: usize,
    /// Kernel steps per drifter (fewer if it exits).
    pub steps: usize,
    /// Samples recorded per kernel step; intermediate samples repeat the
    /// current position.
    pub samples_per_step: usize,
    /// Release times are whole days drawn uniformly from this range.
    pub start_day_min: f64,
    pub start_day_max: f64,
    /// Release states, drawn uniformly; every state when `None`.
    pub start_states: Option<Vec<usize>>,
}

/// Simulates drifters on `grid` and returns them as an in-memory set.
pub fn simulate(
    grid: &GridCovering,
    kernels: &SeasonalKernels,
    plan: &ReleasePlan,
    lag_days: f64,
    calendar: &SeasonCalendar,
    epoch: Epoch,
    seed: u64,
) -> Result<TrajectorySet, SynthError> {
    let n = grid.n_states();
    if kernels.n_states() != n || kernels.summer.n_states() != n || kernels.spring_fall.n_states() != n {
        return Err(SynthError::Spec(format!(
            "kernels cover {} states, grid has {n}",
            kernels.n_states()
        )));
    }
    if !(lag_days.is_finite() && lag_days > 0.0) || plan.samples_per_step == 0 {
        return Err(SynthError::Spec("lag and samples per step must be positive".into()));
    }
    let starts: Vec<usize> = match &plan.start_states {
        Some(s) if s.iter().any(|&x| x >= n) || s.is_empty() => {
            return Err(SynthError::Spec("start states must be non-empty domain states".into()))
        }
        Some(s) => s.clone(),
        None => (0..n).collect(),
    };
    let span = (plan.start_day_max - plan.start_day_min).max(0.0).floor() as i64;
    let outside = exit_point(grid);
    let dt = lag_days / plan.samples_per_step as f64;
    let width = plan.n_drifters.max(1).to_string().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    for d in 0..plan.n_drifters {
        let id = format!("d{d:0width$}");
        let mut state = starts[rng.random_range(0..starts.len())];
        let t0 = plan.start_day_min + rng.random_range(0..=span) as f64;
        let mut push = |t: f64, (lon, lat): (f64, f64)| {
            points.push((id.clone(), TrajectoryPoint { time_days: t, lon, lat }))
        };
        push(t0, grid.state_center(state));
        for k in 0..plan.steps {
            let t = t0 + k as f64 * lag_days;
            for s in 1..plan.samples_per_step {
                push(t + s as f64 * dt, grid.state_center(state));
            }
            let season = calendar.season_of(epoch.date_of(t));
            match kernels.get(season).step(state, &mut rng) {
                Some(next) => {
                    state = next;
                    push(t + lag_days, grid.state_center(state));
                }
                None => {
                    push(t + lag_days, outside);
                    break;
                }
            }
        }
    }
    Ok(TrajectorySet::from_points(points, ParseReport::default()))
}

/// A position just outside the domain rectangle.
fn exit_point(grid: &GridCovering) -> (f64, f64) {
    let b = grid.bounds();
    let lat = if b.lat_min - grid.cell_size() > -90.0 {
        b.lat_min - grid.cell_size()
    } else {
        b.lat_max + grid.cell_size()
    };
    (b.lon_min + 0.5 * grid.cell_size(), lat)
}

/// Ingest-format CSV `id,time_days,lon,lat`.
pub fn trajectories_to_csv(set: &TrajectorySet) -> String {
    let mut out = String::from("id,time_days,lon,lat\n");
    for d in &set.drifters {
        for p in &d.points {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                d.id,
                fmt_f64(p.time_days),
                fmt_f64(p.lon),
                fmt_f64(p.lat)
            );
        }
    }
    out
}

/// Samples one walk from `source` until it is absorbed or `max_steps`
/// pass. Returns the absorbing state and the step on which it was entered.
pub fn sample_absorption<R: Rng + ?Sized>(
    schedule: &ChainSchedule<'_>,
    source: usize,
    max_steps: usize,
    rng: &mut R,
) -> Option<(usize, usize)> {
    let n = schedule.n_domain();
    let mut state = source;
    for k in 0..max_steps {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = None;
        let row: Vec<(usize, f64)> = schedule.chain_at(k).matrix().row(state).collect();
        for &(j, p) in &row {
            acc += p;
            if u < acc {
                next = Some(j);
                break;
            }
        }
        // round-off can leave u just above the accumulated mass
        state = next.or(row.last().map(|e| e.0))?;
        if state >= n {
            return Some((state, k + 1));
        }
    }
    None
}

fn one() -> usize {
    1
}

/// Kernel section of a synthetic spec: either `all` or all three seasons.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub winter: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summer: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spring_fall: Option<Vec<Vec<f64>>>,
}

impl KernelSpec {
    pub fn build(&self) -> Result<SeasonalKernels, SynthError> {
        match (&self.all, &self.winter, &self.summer, &self.spring_fall) {
            (Some(a), None, None, None) => SeasonalKernels::autonomous(a.clone()),
            (None, Some(w), Some(s), Some(sf)) => Ok(SeasonalKernels {
                winter: Kernel::new(Season::Winter, w.clone())?,
                summer: Kernel::new(Season::Summer, s.clone())?,
                spring_fall: Kernel::new(Season::SpringFall, sf.clone())?,
            }),
            _ => Err(SynthError::Spec(
                "give either `kernels.all` or all of winter, summer and spring_fall".into(),
            )),
        }
    }
}

/// TOML description of a synthetic experiment.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub n_drifters: usize,
    pub steps: usize,
    #[serde(default = "default_lag")]
    pub lag_days: f64,
    #[serde(default = "one")]
    pub samples_per_step: usize,
    #[serde(default)]
    pub start_day_min: f64,
    #[serde(default)]
    pub start_day_max: f64,
    /// Day zero as `YYYY-MM-DD`.
    #[serde(default)]
    pub epoch: Option<String>,
    #[serde(default)]
    pub start_states: Option<Vec<usize>>,
    #[serde(default)]
    pub true_source: Option<usize>,
    pub grid: GridConfig,
    pub kernels: KernelSpec,
}

fn default_lag() -> f64 {
    5.0
}

impl FromStr for SyntheticSpec {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        toml::from_str(s).map_err(|e| SynthError::Spec(e.to_string()))
    }
}

/// Ground truth written next to the synthetic trajectories.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Truth {
    pub seed: u64,
    pub lag_days: f64,
    pub epoch: String,
    pub n_states: usize,
    pub n_drifters: usize,
    pub true_source: Option<usize>,
    /// Rows with the exit column appended.
    pub kernels: KernelSpec,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub grid: GridCovering,
    pub trajectories: TrajectorySet,
    pub truth: Truth,
}

impl SyntheticSpec {
    pub fn epoch(&self) -> Result<Epoch, SynthError> {
        match &self.epoch {
            None => Ok(Epoch::default()),
            Some(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .map(Epoch)
                .map_err(|e| SynthError::Spec(format!("epoch `{s}`: {e}"))),
        }
    }

    /// Runs the experiment; `base_dir` resolves a relative wet-mask path.
    pub fn run(&self, base_dir: &Path) -> Result<SynthOutput, SynthError> {
        let grid = self.grid.build(base_dir)?;
        let kernels = self.kernels.build()?;
        if let Some(s) = self.true_source {
            if s >= grid.n_states() {
                return Err(SynthError::Spec(format!("true source {s} outside the domain")));
            }
        }
        let epoch = self.epoch()?;
        let plan = ReleasePlan {
            n_drifters: self.n_drifters,
            steps: self.steps,
            samples_per_step: self.samples_per_step,
            start_day_min: self.start_day_min,
            start_day_max: self.start_day_max,
            start_states: self.start_states.clone(),
        };
        let trajectories = simulate(
            &grid,
            &kernels,
            &plan,
            self.lag_days,
            &SeasonCalendar::default(),
            epoch,
            self.seed,
        )?;
        let truth = Truth {
            seed: self.seed,
            lag_days: self.lag_days,
            epoch: epoch.0.format("%Y-%m-%d").to_string(),
            n_states: grid.n_states(),
            n_drifters: self.n_drifters,
            true_source: self.true_source,
            kernels: KernelSpec {
                all: None,
                winter: Some(kernels.winter.rows().to_vec()),
                summer: Some(kernels.summer.rows().to_vec()),
                spring_fall: Some(kernels.spring_fall.rows().to_vec()),
            },
        };
        Ok(SynthOutput {
            grid,
            trajectories,
            truth,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Bounds, WetMask};

    fn line_grid(n: usize) -> GridCovering {
        build_grid(
            Bounds {
                lon_min: 0.0,
                lon_max: 0.25 * n as f64,
                lat_min: 0.0,
                lat_max: 0.25,
            },
            0.25,
            &WetMask::all_wet(),
        )
        .unwrap()
    }

    fn plan(n_drifters: usize, steps: usize) -> ReleasePlan {
        ReleasePlan {
            n_drifters,
            steps,
            samples_per_step: 1,
            start_day_min: 0.0,
            start_day_max: 0.0,
            start_states: None,
        }
    }

    #[test]
    fn identity_kernel_stays_put() {
        let g = line_grid(1);
        let k = SeasonalKernels::autonomous(vec![vec![1.0]]).unwrap();
        let set = simulate(&g, &k, &plan(1, 4), 5.0, &SeasonCalendar::default(), Epoch::default(), 1).unwrap();
        let pts = &set.drifters[0].points;
        assert_eq!(pts.len(), 5);
        assert!(pts.iter().all(|p| (p.lon, p.lat) == (0.125, 0.125)));
        assert_eq!(pts[4].time_days, 20.0);
    }

    #[test]
    fn exit_ends_track_outside() {
        let g = line_grid(1);
        let k = SeasonalKernels::autonomous(vec![vec![0.0, 1.0]]).unwrap();
        let set = simulate(&g, &k, &plan(1, 4), 5.0, &SeasonCalendar::default(), Epoch::default(), 1).unwrap();
        let pts = &set.drifters[0].points;
        assert_eq!(pts.len(), 2);
        assert_eq!(g.point_to_state(pts[1].lon, pts[1].lat), None);
    }

    #[test]
    fn rejects_non_stochastic() {
        assert!(matches!(
            SeasonalKernels::autonomous(vec![vec![0.5, 0.4]]),
            Err(SynthError::NotStochastic { .. })
        ));
        assert!(SeasonalKernels::autonomous(vec![vec![0.5, 0.5, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn seeded_output_is_reproducible() {
        let g = line_grid(3);
        let rows = vec![
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.2, 0.3, 0.4, 0.1],
            vec![0.0, 0.3, 0.7, 0.0],
        ];
        let k = SeasonalKernels::autonomous(rows).unwrap();
        let mut p = plan(20, 10);
        p.start_day_max = 300.0;
        let run = |seed| {
            trajectories_to_csv(
                &simulate(&g, &k, &p, 5.0, &SeasonCalendar::default(), Epoch::default(), seed).unwrap(),
            )
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn spec_parses() {
        let text = r#"
            seed = 3
            n_drifters = 2
            steps = 5
            [grid]
            lon_min = 0.0
            lon_max = 0.5
            lat_min = 0.0
            lat_max = 0.25
            [kernels]
            all = [[0.5, 0.5], [0.0, 1.0]]
        "#;
        let spec: SyntheticSpec = text.parse().unwrap();
        let out = spec.run(Path::new(".")).unwrap();
        assert_eq!(out.truth.n_states, 2);
        assert_eq!(out.trajectories.drifters.len(), 2);
        assert_eq!(out.truth.kernels.winter.as_ref().unwrap()[0], vec![0.5, 0.5, 0.0]);
    }
}
