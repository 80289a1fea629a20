//! Absorption-time likelihoods and the posterior over candidate sources.
//!
//! For a candidate `c` and target `b` the cumulative absorption probability
//! after `k` steps is the mass that the row vector `𝟏_c` has placed on the
//! target cemetery of `b` after `k` forward steps through the schedule. The
//! first-absorption probability is its first difference, and independent
//! observations multiply.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::absorb::AugmentedChain;
use crate::ingest::{Season, SeasonCalendar};
use crate::sparse::MatrixError;

#[derive(Debug, Error)]
pub enum BayesError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("candidate state {state} is not a domain state (N = {n})")]
    InvalidCandidate { state: usize, n: usize },
    #[error("target label {label} outside 1..={m}")]
    InvalidTarget { label: usize, m: usize },
    #[error("cumulative absorption decreases at step {step} by {drop}")]
    DecreasingCdf { step: usize, drop: f64 },
    #[error("prior: {0}")]
    Prior(String),
    #[error("every candidate has zero likelihood; the posterior is undefined")]
    ZeroEvidence,
    #[error("observation line {line}: {message}")]
    Observation { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The matrix used at each forward step.
#[derive(Debug, Clone, Copy)]
pub enum ChainSchedule<'a> {
    Autonomous(&'a AugmentedChain),
    /// Step `j` (0-based) starts on `start + floor(j · lag)` days and uses
    /// the matrix of that date's season.
    Seasonal {
        winter: &'a AugmentedChain,
        summer: &'a AugmentedChain,
        spring_fall: &'a AugmentedChain,
        calendar: SeasonCalendar,
        start: NaiveDate,
    },
}

impl<'a> ChainSchedule<'a> {
    pub fn seasonal(
        winter: &'a AugmentedChain,
        summer: &'a AugmentedChain,
        spring_fall: &'a AugmentedChain,
        calendar: SeasonCalendar,
        start: NaiveDate,
    ) -> Result<Self, BayesError> {
        let shape = |a: &AugmentedChain| (a.n_domain(), a.n_targets(), a.lag_days());
        if shape(winter) != shape(summer) || shape(winter) != shape(spring_fall) {
            return Err(BayesError::Schedule(format!(
                "seasonal chains disagree on (N, M, lag): {:?} / {:?} / {:?}",
                shape(winter),
                shape(summer),
                shape(spring_fall)
            )));
        }
        if winter.roles() != summer.roles() || winter.roles() != spring_fall.roles() {
            return Err(BayesError::Schedule("seasonal chains carry different roles".into()));
        }
        Ok(ChainSchedule::Seasonal {
            winter,
            summer,
            spring_fall,
            calendar,
            start,
        })
    }

    fn reference(&self) -> &'a AugmentedChain {
        match *self {
            ChainSchedule::Autonomous(a) => a,
            ChainSchedule::Seasonal { winter, .. } => winter,
        }
    }

    pub fn n_domain(&self) -> usize {
        self.reference().n_domain()
    }

    pub fn n_targets(&self) -> usize {
        self.reference().n_targets()
    }

    pub fn n_total(&self) -> usize {
        self.reference().n_total()
    }

    pub fn lag_days(&self) -> f64 {
        self.reference().lag_days()
    }

    pub fn roles(&self) -> &'a crate::grid::StateRoles {
        self.reference().roles()
    }

    /// Season governing step `j`, or `None` for an autonomous schedule.
    pub fn season_at(&self, step: usize) -> Option<Season> {
        match *self {
            ChainSchedule::Autonomous(_) => None,
            ChainSchedule::Seasonal {
                calendar, start, ..
            } => {
                let days = (step as f64 * self.lag_days()).floor() as i64;
                Some(calendar.season_of(start + Duration::days(days)))
            }
        }
    }

    pub fn chain_at(&self, step: usize) -> &'a AugmentedChain {
        match *self {
            ChainSchedule::Autonomous(a) => a,
            ChainSchedule::Seasonal {
                winter,
                summer,
                spring_fall,
                ..
            } => match self.season_at(step).expect("seasonal") {
                Season::Winter => winter,
                Season::Summer => summer,
                Season::SpringFall => spring_fall,
            },
        }
    }

    /// Distributions `𝟏_c Π_{j<k} P^{(j)}` for `k = 0..=steps`, computed by
    /// `f` on each one without storing them.
    fn evolve(
        &self,
        c: usize,
        steps: usize,
        mut f: impl FnMut(usize, &[f64]),
    ) -> Result<(), BayesError> {
        let n = self.n_domain();
        if c >= n {
            return Err(BayesError::InvalidCandidate { state: c, n });
        }
        let mut v = vec![0.0; self.n_total()];
        v[c] = 1.0;
        f(0, &v);
        for j in 0..steps {
            v = self.chain_at(j).matrix().vec_mul(&v)?;
            f(j + 1, &v);
        }
        Ok(())
    }
}

/// `p_c^b(k)` for `k = 0..=steps`.
pub fn absorption_cdf(
    schedule: &ChainSchedule<'_>,
    c: usize,
    target: usize,
    steps: usize,
) -> Result<Vec<f64>, BayesError> {
    let m = schedule.n_targets();
    if target == 0 || target > m {
        return Err(BayesError::InvalidTarget { label: target, m });
    }
    let col = schedule.n_domain() + target;
    let mut out = Vec::with_capacity(steps + 1);
    schedule.evolve(c, steps, |_, v| out.push(v[col]))?;
    Ok(out)
}

/// Cumulative absorption curves for every target from one forward run;
/// entry `m − 1` belongs to label `m`.
pub fn absorption_cdfs(
    schedule: &ChainSchedule<'_>,
    c: usize,
    steps: usize,
) -> Result<Vec<Vec<f64>>, BayesError> {
    let n = schedule.n_domain();
    let m = schedule.n_targets();
    let mut out = vec![Vec::with_capacity(steps + 1); m];
    schedule.evolve(c, steps, |_, v| {
        for (k, cdf) in out.iter_mut().enumerate() {
            cdf.push(v[n + 1 + k]);
        }
    })?;
    Ok(out)
}

/// First-absorption probabilities for every target, `pmf[m − 1][k]` for
/// `k = 0..=steps`. Equal to the first differences of [`absorption_cdfs`],
/// but each increment is accumulated from the domain mass entering the
/// target, so small probabilities do not cancel against large cumulative
/// ones.
pub fn absorption_pmfs(
    schedule: &ChainSchedule<'_>,
    c: usize,
    steps: usize,
) -> Result<Vec<Vec<f64>>, BayesError> {
    let n = schedule.n_domain();
    if c >= n {
        return Err(BayesError::InvalidCandidate { state: c, n });
    }
    let mut out = vec![vec![0.0; steps + 1]; schedule.n_targets()];
    let mut v = vec![0.0; schedule.n_total()];
    v[c] = 1.0;
    for j in 0..steps {
        let a = schedule.chain_at(j).matrix();
        for (i, &mass) in v[..n].iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (col, p) in a.row(i) {
                if col > n {
                    out[col - n - 1][j + 1] += mass * p;
                }
            }
        }
        v = a.vec_mul(&v)?;
    }
    Ok(out)
}

/// Slack for round-off when differencing a cumulative curve.
pub const CDF_SLACK: f64 = 1e-14;

/// First differences of a cumulative curve; `pmf[0] = cdf[0]`.
pub fn first_absorption_pmf(cdf: &[f64]) -> Result<Vec<f64>, BayesError> {
    let mut out = Vec::with_capacity(cdf.len());
    let mut prev = 0.0;
    for (k, &c) in cdf.iter().enumerate() {
        let d = c - prev;
        if d < -CDF_SLACK {
            return Err(BayesError::DecreasingCdf { step: k, drop: -d });
        }
        out.push(d.max(0.0));
        prev = c;
    }
    Ok(out)
}

/// `Σ log factors`, or `−∞` when any factor is zero.
pub fn joint_log_likelihood(factors: &[f64]) -> f64 {
    if factors.iter().any(|&f| f <= 0.0) {
        return f64::NEG_INFINITY;
    }
    factors.iter().map(|f| f.ln()).sum()
}

/// One beaching report.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Target label `1..=M`.
    pub target: usize,
    pub days: f64,
    pub name: String,
}

impl Observation {
    /// Elapsed steps `round(days / lag)`.
    pub fn steps(&self, lag_days: f64) -> usize {
        (self.days / lag_days).round() as usize
    }
}

#[derive(Debug, Deserialize)]
struct ObservationRow {
    target_label: String,
    days_since_crash: String,
    #[serde(default)]
    name: String,
}

/// Parses `target_label,days_since_crash,name` rows.
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<Observation>, BayesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = Vec::new();
    for (k, row) in rdr.deserialize::<ObservationRow>().enumerate() {
        let line = k + 2;
        let bad = |message: String| BayesError::Observation { line, message };
        let row = row.map_err(|e| bad(e.to_string()))?;
        let target: usize = row
            .target_label
            .parse()
            .map_err(|_| bad(format!("target label `{}`", row.target_label)))?;
        let days: f64 = row
            .days_since_crash
            .parse()
            .map_err(|_| bad(format!("days `{}`", row.days_since_crash)))?;
        if target == 0 {
            return Err(bad("target labels start at 1".into()));
        }
        if !(days.is_finite() && days > 0.0) {
            return Err(bad(format!("elapsed time {days} must be positive")));
        }
        out.push(Observation {
            target,
            days,
            name: row.name,
        });
    }
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<Observation>, BayesError> {
    read_observations(File::open(path)?)
}

/// Central posterior interval as indices into the candidate list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorInterval {
    pub level: f64,
    pub lower: usize,
    pub upper: usize,
}

/// Normalized posterior over an ordered candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub weights: Vec<f64>,
    /// Index of the largest posterior weight (smallest index on ties).
    pub map_index: usize,
    pub interval: PosteriorInterval,
}

/// Uniform prior over `n` candidates.
pub fn uniform_prior(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// First index whose cumulative weight reaches `q`.
fn quantile_index(weights: &[f64], q: f64) -> usize {
    let mut cum = 0.0;
    for (k, w) in weights.iter().enumerate() {
        cum += w;
        if cum >= q {
            return k;
        }
    }
    weights.len() - 1
}

/// `p(c | t) ∝ L(c) p(c)`, normalized after shifting by the largest
/// log-likelihood among candidates with positive prior. The interval takes
/// the `(1 − level)/2` and `1 − (1 − level)/2` quantiles along list order.
pub fn posterior(log_likelihood: &[f64], prior: &[f64], level: f64) -> Result<Posterior, BayesError> {
    if log_likelihood.len() != prior.len() || prior.is_empty() {
        return Err(BayesError::Prior(format!(
            "{} log-likelihoods against {} prior weights",
            log_likelihood.len(),
            prior.len()
        )));
    }
    if prior.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
        return Err(BayesError::Prior("weights must be finite and non-negative".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(BayesError::Prior(format!("interval level {level} outside (0, 1)")));
    }
    let shift = log_likelihood
        .iter()
        .zip(prior)
        .filter(|&(l, &p)| p > 0.0 && *l > f64::NEG_INFINITY)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(BayesError::ZeroEvidence);
    }
    let raw: Vec<f64> = log_likelihood
        .iter()
        .zip(prior)
        .map(|(&l, &p)| if p > 0.0 { (l - shift).exp() * p } else { 0.0 })
        .collect();
    let z: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / z).collect();
    let tail = (1.0 - level) / 2.0;
    let interval = PosteriorInterval {
        level,
        lower: quantile_index(&weights, tail),
        upper: quantile_index(&weights, 1.0 - tail),
    };
    Ok(Posterior {
        map_index: argmax(&weights),
        weights,
        interval,
    })
}

/// Inference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferOptions {
    pub level: f64,
    /// Half-width in steps of the time window around each observation;
    /// 0 evaluates the first-absorption probability at the exact step.
    pub window_steps: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            level: 0.95,
            window_steps: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorResult {
    /// Candidate states in the order given (latitude order for the arc).
    pub candidates: Vec<usize>,
    pub observations: Vec<Observation>,
    /// Elapsed steps per observation.
    pub steps: Vec<usize>,
    /// `factors[c][b]`: likelihood of observation `b` given candidate `c`.
    pub factors: Vec<Vec<f64>>,
    pub log_likelihood: Vec<f64>,
    pub posterior: Posterior,
    /// Posterior from each observation alone; `None` on zero evidence.
    pub single: Vec<Option<Posterior>>,
    /// Index of the maximum-likelihood candidate.
    pub ml_index: usize,
}

impl PosteriorResult {
    /// State with the largest posterior weight.
    pub fn c_max(&self) -> usize {
        self.candidates[self.posterior.map_index]
    }

    /// `(lower, upper)` candidate states of the central interval.
    pub fn interval_states(&self) -> (usize, usize) {
        let iv = self.posterior.interval;
        (self.candidates[iv.lower], self.candidates[iv.upper])
    }
}

fn window_sum(pmf: &[f64], k: usize, w: usize) -> f64 {
    let lo = k.saturating_sub(w).max(1);
    let hi = (k + w).min(pmf.len() - 1);
    (lo..=hi).map(|j| pmf[j]).sum()
}

/// Likelihoods, joint posterior and single-observation posteriors for every
/// candidate. `prior` defaults to uniform.
pub fn infer_source(
    schedule: &ChainSchedule<'_>,
    candidates: &[usize],
    observations: &[Observation],
    prior: Option<&[f64]>,
    opts: InferOptions,
) -> Result<PosteriorResult, BayesError> {
    if candidates.is_empty() {
        return Err(BayesError::Prior("no candidate sources".into()));
    }
    let m = schedule.n_targets();
    let lag = schedule.lag_days();
    let mut steps = Vec::with_capacity(observations.len());
    for o in observations {
        if o.target == 0 || o.target > m {
            return Err(BayesError::InvalidTarget { label: o.target, m });
        }
        let k = o.steps(lag);
        if k == 0 {
            return Err(BayesError::Observation {
                line: 0,
                message: format!("`{}` rounds to zero steps at lag {lag} d", o.name),
            });
        }
        steps.push(k);
    }
    let horizon = steps.iter().max().map_or(0, |k| k + opts.window_steps);
    let factors: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|&c| {
            let pmfs = absorption_pmfs(schedule, c, horizon)?;
            Ok(observations
                .iter()
                .zip(&steps)
                .map(|(o, &k)| window_sum(&pmfs[o.target - 1], k, opts.window_steps))
                .collect())
        })
        .collect::<Result<_, BayesError>>()?;
    let log_likelihood: Vec<f64> = factors.iter().map(|f| joint_log_likelihood(f)).collect();
    let uniform;
    let prior = match prior {
        Some(p) => p,
        None => {
            uniform = uniform_prior(candidates.len());
            &uniform
        }
    };
    let joint = posterior(&log_likelihood, prior, opts.level)?;
    let single = (0..observations.len())
        .map(|b| {
            let ll: Vec<f64> = factors.iter().map(|f| joint_log_likelihood(&f[b..=b])).collect();
            posterior(&ll, prior, opts.level).ok()
        })
        .collect();
    Ok(PosteriorResult {
        candidates: candidates.to_vec(),
        observations: observations.to_vec(),
        steps,
        ml_index: argmax(&log_likelihood),
        factors,
        log_likelihood,
        posterior: joint,
        single,
    })
}

/// First-beaching probability at each sticky state and step.
#[derive(Debug, Clone, PartialEq)]
pub struct StickyFit {
    pub states: Vec<usize>,
    /// `mass[s][k − 1]`: probability of beaching from `states[s]` on step `k`.
    pub mass: Vec<Vec<f64>>,
}

impl StickyFit {
    pub fn total(&self) -> f64 {
        self.mass.iter().flatten().sum()
    }
}

/// Probability that the chain started at `c` beaches at sticky state `s` on
/// step `k`, i.e. `v_{k−1}(s) ℓ(s)` with `v` the evolving distribution.
pub fn sticky_fit_map(
    schedule: &ChainSchedule<'_>,
    c: usize,
    steps: usize,
) -> Result<StickyFit, BayesError> {
    let sticky: Vec<(usize, f64)> = schedule.roles().sticky().iter().map(|(&s, &l)| (s, l)).collect();
    let mut mass = vec![Vec::with_capacity(steps); sticky.len()];
    schedule.evolve(c, steps.saturating_sub(1), |_, v| {
        for (row, &(s, ell)) in mass.iter_mut().zip(&sticky) {
            row.push(v[s] * ell);
        }
    })?;
    if steps == 0 {
        mass.iter_mut().for_each(Vec::clear);
    }
    Ok(StickyFit {
        states: sticky.into_iter().map(|(s, _)| s).collect(),
        mass,
    })
}
