//! Most probable paths of fixed length into a target cemetery.
//!
//! The forward recursion works in log space. Starting from `V(0) = 0` on
//! the sources it keeps `V_j(k+1) = max_i V_i(k) + ln P^{(k)}_ij` over
//! domain states for `k + 1 < K` and evaluates only the target column on
//! the last step, so a path cannot be absorbed before step `K`. Ties go to
//! the smallest predecessor index.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::bayes::ChainSchedule;
use crate::grid::GridCovering;
use crate::ingest::Season;
use crate::sparse::SparseMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("path length must be at least one step")]
    ZeroSteps,
    #[error("no source states given")]
    NoSources,
    #[error("source {state} is not a domain state (N = {n})")]
    InvalidSource { state: usize, n: usize },
    #[error("target label {label} outside 1..={m}")]
    InvalidTarget { label: usize, m: usize },
    #[error("state {state} outside the {n}-state matrix")]
    InvalidState { state: usize, n: usize },
    #[error("no feasible path of {steps} steps into target {label}")]
    Infeasible { label: usize, steps: usize },
    #[error("target {target} is unreachable from {from}")]
    Unreachable { from: usize, target: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// Visited states, source first. For constrained paths the last entry
    /// is the target cemetery `N + m`.
    pub states: Vec<usize>,
    /// `ln P` of each transition.
    pub step_log_probs: Vec<f64>,
    pub log_prob: f64,
    /// Season governing each step; `None` for autonomous schedules.
    pub seasons: Vec<Option<Season>>,
    /// Target label for constrained paths.
    pub target_label: Option<usize>,
}

impl PathResult {
    pub fn source(&self) -> usize {
        self.states[0]
    }

    pub fn steps(&self) -> usize {
        self.step_log_probs.len()
    }

    pub fn probability(&self) -> f64 {
        self.log_prob.exp()
    }
}

/// Per-source optima and the optimum over all sources jointly.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSearch {
    pub target_label: usize,
    pub steps: usize,
    pub per_source: Vec<(usize, Result<PathResult, PathError>)>,
    pub global: Result<PathResult, PathError>,
}

struct Dp {
    /// `back[k][j]`: predecessor of `j` on step `k + 1`.
    back: Vec<Vec<u32>>,
    final_value: f64,
    final_pred: u32,
}

const NONE: u32 = u32::MAX;

fn run_dp(schedule: &ChainSchedule<'_>, sources: &[usize], col: usize, steps: usize) -> Dp {
    let n = schedule.n_domain();
    let mut v = vec![f64::NEG_INFINITY; n];
    for &s in sources {
        v[s] = 0.0;
    }
    let mut back = Vec::with_capacity(steps.saturating_sub(1));
    for k in 0..steps - 1 {
        let p = schedule.chain_at(k).matrix();
        let mut next = vec![f64::NEG_INFINITY; n];
        let mut pred = vec![NONE; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == f64::NEG_INFINITY {
                continue;
            }
            for (j, pij) in p.row(i) {
                if j < n {
                    let cand = vi + pij.ln();
                    if cand > next[j] {
                        next[j] = cand;
                        pred[j] = i as u32;
                    }
                }
            }
        }
        back.push(pred);
        v = next;
    }
    let p = schedule.chain_at(steps - 1).matrix();
    let mut final_value = f64::NEG_INFINITY;
    let mut final_pred = NONE;
    for (i, &vi) in v.iter().enumerate() {
        if vi == f64::NEG_INFINITY {
            continue;
        }
        let pit = p.get(i, col);
        if pit > 0.0 {
            let cand = vi + pit.ln();
            if cand > final_value {
                final_value = cand;
                final_pred = i as u32;
            }
        }
    }
    Dp {
        back,
        final_value,
        final_pred,
    }
}

fn reconstruct(
    schedule: &ChainSchedule<'_>,
    dp: &Dp,
    col: usize,
    label: usize,
    steps: usize,
) -> Result<PathResult, PathError> {
    if dp.final_pred == NONE {
        return Err(PathError::Infeasible { label, steps });
    }
    let mut states = vec![col, dp.final_pred as usize];
    for k in (0..steps - 1).rev() {
        let cur = *states.last().expect("non-empty");
        states.push(dp.back[k][cur] as usize);
    }
    states.reverse();
    let step_log_probs: Vec<f64> = (0..steps)
        .map(|k| schedule.chain_at(k).matrix().get(states[k], states[k + 1]).ln())
        .collect();
    let log_prob: f64 = step_log_probs.iter().sum();
    debug_assert_eq!(log_prob, dp.final_value);
    Ok(PathResult {
        states,
        step_log_probs,
        log_prob,
        seasons: (0..steps).map(|k| schedule.season_at(k)).collect(),
        target_label: Some(label),
    })
}

fn validate(
    schedule: &ChainSchedule<'_>,
    sources: &[usize],
    label: usize,
    steps: usize,
) -> Result<usize, PathError> {
    if steps == 0 {
        return Err(PathError::ZeroSteps);
    }
    if sources.is_empty() {
        return Err(PathError::NoSources);
    }
    let n = schedule.n_domain();
    if let Some(&s) = sources.iter().find(|&&s| s >= n) {
        return Err(PathError::InvalidSource { state: s, n });
    }
    let m = schedule.n_targets();
    if label == 0 || label > m {
        return Err(PathError::InvalidTarget { label, m });
    }
    Ok(n + label)
}

/// Best path of exactly `steps` steps from any of `sources` into target
/// `label`, staying in the domain until the last step.
pub fn most_probable_path(
    schedule: &ChainSchedule<'_>,
    sources: &[usize],
    label: usize,
    steps: usize,
) -> Result<PathResult, PathError> {
    let col = validate(schedule, sources, label, steps)?;
    let dp = run_dp(schedule, sources, col, steps);
    reconstruct(schedule, &dp, col, label, steps)
}

/// Per-source and joint optima for one target.
pub fn most_probable_paths(
    schedule: &ChainSchedule<'_>,
    sources: &[usize],
    label: usize,
    steps: usize,
) -> Result<PathSearch, PathError> {
    validate(schedule, sources, label, steps)?;
    let per_source = sources
        .par_iter()
        .map(|&s| (s, most_probable_path(schedule, &[s], label, steps)))
        .collect();
    Ok(PathSearch {
        target_label: label,
        steps,
        per_source,
        global: most_probable_path(schedule, sources, label, steps),
    })
}

/// Sources that are the joint optimum for more than one target, with the
/// labels that share them.
pub fn common_starts(searches: &[PathSearch]) -> BTreeMap<usize, Vec<usize>> {
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for s in searches {
        if let Ok(p) = &s.global {
            by_source.entry(p.source()).or_default().push(s.target_label);
        }
    }
    by_source.retain(|_, v| v.len() > 1);
    by_source
}

#[derive(Debug, PartialEq)]
struct Entry {
    cost: f64,
    state: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.state.cmp(&self.state))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Maximum-probability path of any length, by Dijkstra on `−ln P_ij`.
pub fn unconstrained_best_path(
    p: &SparseMatrix,
    source: usize,
    target: usize,
) -> Result<PathResult, PathError> {
    let n = p.n_rows();
    for s in [source, target] {
        if s >= n || s >= p.n_cols() {
            return Err(PathError::InvalidState { state: s, n });
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry {
        cost: 0.0,
        state: source,
    });
    while let Some(Entry { cost, state }) = heap.pop() {
        if done[state] {
            continue;
        }
        done[state] = true;
        if state == target {
            break;
        }
        for (j, pij) in p.row(state) {
            let c = cost - pij.ln();
            if c < dist[j] {
                dist[j] = c;
                pred[j] = state;
                heap.push(Entry { cost: c, state: j });
            }
        }
    }
    if !done[target] {
        return Err(PathError::Unreachable { from: source, target });
    }
    let mut states = vec![target];
    while *states.last().expect("non-empty") != source {
        states.push(pred[*states.last().expect("non-empty")]);
    }
    states.reverse();
    let step_log_probs: Vec<f64> = states.windows(2).map(|w| p.get(w[0], w[1]).ln()).collect();
    Ok(PathResult {
        log_prob: step_log_probs.iter().sum(),
        seasons: vec![None; step_log_probs.len()],
        step_log_probs,
        states,
        target_label: None,
    })
}

/// Longitude/latitude of a path vertex: domain states map to their box
/// centre, target cemeteries to the centre of their debris box.
fn vertex_position(grid: &GridCovering, schedule: &ChainSchedule<'_>, state: usize) -> Option<[f64; 2]> {
    let n = schedule.n_domain();
    let s = if state < n {
        state
    } else {
        schedule.roles().target_state(state - n)?
    };
    let (lon, lat) = grid.state_center(s);
    Some([lon, lat])
}

/// LineString feature of box centres with per-vertex step and cumulative
/// log-probability.
pub fn path_geojson(path: &PathResult, grid: &GridCovering, schedule: &ChainSchedule<'_>) -> Value {
    let coords: Vec<[f64; 2]> = path
        .states
        .iter()
        .filter_map(|&s| vertex_position(grid, schedule, s))
        .collect();
    let mut cum = vec![0.0];
    for lp in &path.step_log_probs {
        cum.push(cum.last().expect("non-empty") + lp);
    }
    let seasons: Vec<Value> = path
        .seasons
        .iter()
        .map(|s| s.map_or(Value::Null, |s| json!(s.code())))
        .collect();
    json!({
        "type": "Feature",
        "geometry": { "type": "LineString", "coordinates": coords },
        "properties": {
            "source": path.source(),
            "target_label": path.target_label,
            "steps": path.steps(),
            "log_prob": path.log_prob,
            "states": path.states,
            "step_index": (0..path.states.len()).collect::<Vec<_>>(),
            "cumulative_log_prob": cum,
            "seasons": seasons,
        }
    })
}

/// Empty-geometry feature recording why no path exists.
pub fn infeasible_geojson(source: Option<usize>, label: usize, error: &PathError) -> Value {
    json!({
        "type": "Feature",
        "geometry": { "type": "LineString", "coordinates": [] },
        "properties": {
            "source": source,
            "target_label": label,
            "error": error.to_string(),
        }
    })
}

/// Vertex coordinates of a LineString feature, in order.
pub fn parse_path_vertices(feature: &Value) -> Option<Vec<(f64, f64)>> {
    feature["geometry"]["coordinates"]
        .as_array()?
        .iter()
        .map(|c| Some((c.get(0)?.as_f64()?, c.get(1)?.as_f64()?)))
        .collect()
}
