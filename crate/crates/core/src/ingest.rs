//! Trajectory parsing, lag-T transition-pair extraction and seasonal binning.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate};
use rayon::prelude::*;
use thiserror::Error;

use crate::grid::GridCovering;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("trajectory header is missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("no valid trajectory rows ({malformed} malformed)")]
    NoValidRows { malformed: usize },
    #[error("lag must be positive, got {0}")]
    InvalidLag(f64),
    #[error("unknown season {0:?}")]
    UnknownSeason(String),
}

/// Calendar season bins of the nonautonomous model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Season {
    /// January–March.
    Winter,
    /// July–September.
    Summer,
    /// April–June and October–December.
    SpringFall,
}

impl Season {
    pub const ALL: [Season; 3] = [Season::Winter, Season::Summer, Season::SpringFall];

    pub fn code(self) -> &'static str {
        match self {
            Season::Winter => "W",
            Season::Summer => "S",
            Season::SpringFall => "SF",
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Season {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "W" => Ok(Season::Winter),
            "S" => Ok(Season::Summer),
            "SF" => Ok(Season::SpringFall),
            other => Err(IngestError::UnknownSeason(other.to_string())),
        }
    }
}

/// Month → season table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeasonCalendar {
    months: [Season; 12],
}

impl Default for SeasonCalendar {
    fn default() -> Self {
        use Season::*;
        SeasonCalendar {
            months: [
                Winter, Winter, Winter, SpringFall, SpringFall, SpringFall, Summer, Summer, Summer,
                SpringFall, SpringFall, SpringFall,
            ],
        }
    }
}

impl SeasonCalendar {
    /// Season of a 1-based month.
    pub fn season_of_month(&self, month: u32) -> Season {
        self.months[(month as usize - 1) % 12]
    }

    pub fn season_of(&self, date: NaiveDate) -> Season {
        self.season_of_month(date.month())
    }
}

/// Day zero for `time_days` values (proleptic Gregorian).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch(pub NaiveDate);

/// 8 March 2014.
pub const DEFAULT_EPOCH: Epoch = Epoch(match NaiveDate::from_ymd_opt(2014, 3, 8) {
    Some(d) => d,
    None => panic!("valid date"),
});

impl Default for Epoch {
    fn default() -> Self {
        DEFAULT_EPOCH
    }
}

impl Epoch {
    /// Calendar date containing `days` after the epoch.
    pub fn date_of(&self, days: f64) -> NaiveDate {
        self.0 + Duration::days(days.floor() as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub time_days: f64,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drifter {
    pub id: String,
    /// Strictly increasing in time.
    pub points: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub rows: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub drogued_dropped: usize,
    pub duplicate_times: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    /// Sorted by drifter id.
    pub drifters: Vec<Drifter>,
    pub report: ParseReport,
}

impl TrajectorySet {
    /// Groups points by id, sorts by time and drops repeated timestamps.
    pub fn from_points(
        points: impl IntoIterator<Item = (String, TrajectoryPoint)>,
        mut report: ParseReport,
    ) -> Self {
        let mut by_id: BTreeMap<String, Vec<TrajectoryPoint>> = BTreeMap::new();
        for (id, p) in points {
            by_id.entry(id).or_default().push(p);
        }
        let drifters = by_id
            .into_iter()
            .map(|(id, mut points)| {
                points.sort_by(|a, b| a.time_days.total_cmp(&b.time_days));
                let before = points.len();
                points.dedup_by(|b, a| a.time_days == b.time_days);
                report.duplicate_times += before - points.len();
                Drifter { id, points }
            })
            .collect();
        TrajectorySet { drifters, report }
    }

    pub fn n_points(&self) -> usize {
        self.drifters.iter().map(|d| d.points.len()).sum()
    }
}

/// Parses CSV with header `id,time_days,lon,lat[,drogued]`. Malformed rows
/// are counted and skipped; rows with `drogued = 1` are dropped.
pub fn read_trajectories<R: Read>(reader: R) -> Result<TrajectorySet, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or(IngestError::MissingColumn("id"))?;
    let t_col = col("time_days").ok_or(IngestError::MissingColumn("time_days"))?;
    let lon_col = col("lon").ok_or(IngestError::MissingColumn("lon"))?;
    let lat_col = col("lat").ok_or(IngestError::MissingColumn("lat"))?;
    let drogue_col = col("drogued");

    let mut report = ParseReport::default();
    let mut points = Vec::new();
    for record in rdr.records() {
        report.rows += 1;
        let Ok(record) = record else {
            report.malformed += 1;
            continue;
        };
        let num = |c: usize| {
            record
                .get(c)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let id = record.get(id_col).filter(|s| !s.is_empty());
        let (Some(id), Some(t), Some(lon), Some(lat)) = (id, num(t_col), num(lon_col), num(lat_col))
        else {
            report.malformed += 1;
            continue;
        };
        if let Some(dc) = drogue_col {
            match record.get(dc) {
                Some("1") => {
                    report.drogued_dropped += 1;
                    continue;
                }
                Some("0") | Some("") | None => {}
                Some(_) => {
                    report.malformed += 1;
                    continue;
                }
            }
        }
        report.accepted += 1;
        points.push((
            id.to_string(),
            TrajectoryPoint {
                time_days: t,
                lon,
                lat,
            },
        ));
    }
    if points.is_empty() && report.drogued_dropped == 0 {
        return Err(IngestError::NoValidRows {
            malformed: report.malformed,
        });
    }
    Ok(TrajectorySet::from_points(points, report))
}

pub fn parse_trajectories(path: &Path) -> Result<TrajectorySet, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_trajectories(file)
}

/// One box-to-box sample at lag T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionPair {
    /// Index into [`TrajectorySet::drifters`].
    pub drifter: usize,
    pub from: usize,
    /// `None` when the end position is outside the domain.
    pub to: Option<usize>,
    pub start_day: f64,
    pub season: Season,
}

/// Nearest sample to `target` within `tol`, ties to the earlier sample.
fn nearest_within(points: &[TrajectoryPoint], target: f64, tol: f64) -> Option<usize> {
    let k = points.partition_point(|p| p.time_days < target);
    let mut best: Option<(usize, f64)> = None;
    for idx in [k.checked_sub(1), Some(k)].into_iter().flatten() {
        if let Some(p) = points.get(idx) {
            let d = (p.time_days - target).abs();
            if d <= tol && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((idx, d));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Extracts non-overlapping lag-`lag_days` pairs from every drifter.
///
/// Starting from each drifter's first sample, the end sample is the one
/// nearest `t + lag` within `lag / 10`; it then becomes the next start. On a
/// gap the walk resumes at the first sample at or after `t + lag`. Pairs whose
/// start lies outside the domain are dropped.
pub fn extract_pairs(
    set: &TrajectorySet,
    grid: &GridCovering,
    lag_days: f64,
    calendar: &SeasonCalendar,
    epoch: Epoch,
) -> Result<Vec<TransitionPair>, IngestError> {
    if !(lag_days.is_finite() && lag_days > 0.0) {
        return Err(IngestError::InvalidLag(lag_days));
    }
    let tol = lag_days / 10.0;
    let per_drifter: Vec<Vec<TransitionPair>> = set
        .drifters
        .par_iter()
        .enumerate()
        .map(|(d, drifter)| {
            let pts = &drifter.points;
            let mut out = Vec::new();
            let mut s = 0usize;
            while s < pts.len() {
                let target = pts[s].time_days + lag_days;
                match nearest_within(pts, target, tol) {
                    Some(e) => {
                        let start = pts[s];
                        if let Some(from) = grid.point_to_state(start.lon, start.lat) {
                            let end = pts[e];
                            out.push(TransitionPair {
                                drifter: d,
                                from,
                                to: grid.point_to_state(end.lon, end.lat),
                                start_day: start.time_days,
                                season: calendar.season_of(epoch.date_of(start.time_days)),
                            });
                        }
                        s = e;
                    }
                    None => s = pts.partition_point(|p| p.time_days < target),
                }
            }
            out
        })
        .collect();
    let pairs: Vec<TransitionPair> = per_drifter.into_iter().flatten().collect();
    if pairs.is_empty() {
        log::warn!("no transition pairs extracted at lag {lag_days} d");
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeasonalPairs {
    pub winter: Vec<TransitionPair>,
    pub summer: Vec<TransitionPair>,
    pub spring_fall: Vec<TransitionPair>,
}

impl SeasonalPairs {
    pub fn get(&self, season: Season) -> &[TransitionPair] {
        match season {
            Season::Winter => &self.winter,
            Season::Summer => &self.summer,
            Season::SpringFall => &self.spring_fall,
        }
    }

    pub fn total(&self) -> usize {
        self.winter.len() + self.summer.len() + self.spring_fall.len()
    }
}

/// Partitions pairs by their season tag, preserving order.
pub fn season_split(pairs: &[TransitionPair]) -> SeasonalPairs {
    let mut out = SeasonalPairs::default();
    for p in pairs {
        match p.season {
            Season::Winter => out.winter.push(*p),
            Season::Summer => out.summer.push(*p),
            Season::SpringFall => out.spring_fall.push(*p),
        }
    }
    out
}

/// Per-state sampling diagnostics: pair starts and distinct drifters.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub samples_per_state: Vec<u64>,
    pub drifters_per_state: Vec<u64>,
}

impl Occupancy {
    pub fn from_pairs(pairs: &[TransitionPair], n: usize) -> Self {
        let mut samples = vec![0u64; n];
        let mut drifters = vec![0u64; n];
        let mut seen: std::collections::HashSet<(usize, usize)> = Default::default();
        for p in pairs {
            samples[p.from] += 1;
            if seen.insert((p.from, p.drifter)) {
                drifters[p.from] += 1;
            }
        }
        Occupancy {
            samples_per_state: samples,
            drifters_per_state: drifters,
        }
    }

    fn mean_over_visited(v: &[u64]) -> f64 {
        let visited: Vec<u64> = v.iter().copied().filter(|&c| c > 0).collect();
        if visited.is_empty() {
            0.0
        } else {
            visited.iter().sum::<u64>() as f64 / visited.len() as f64
        }
    }

    pub fn mean_samples(&self) -> f64 {
        Self::mean_over_visited(&self.samples_per_state)
    }

    pub fn mean_drifters(&self) -> f64 {
        Self::mean_over_visited(&self.drifters_per_state)
    }
}
