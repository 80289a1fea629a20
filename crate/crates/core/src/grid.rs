//! Longitude–latitude box covering of the domain and state-role annotations.
//!
//! Cells are half-open, `[lon_i, lon_i + Δ) × [lat_j, lat_j + Δ)`, so a point
//! on a shared edge belongs to the box whose lower-left corner it meets.
//! Active (wet) boxes are numbered `0..N` in latitude-major order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used for box areas.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const DIVISOR_TOLERANCE_DEG: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("degenerate bounds: {0}")]
    DegenerateBounds(String),
    #[error("cell size {cell} does not divide the {axis} extent {extent}")]
    NonDivisor { axis: &'static str, extent: f64, cell: f64 },
    #[error("wet mask selects no boxes")]
    EmptyMask,
    #[error("box ({lon}, {lat}) is outside the {n_lon}x{n_lat} grid")]
    BoxOutOfRange { lon: i64, lat: i64, n_lon: usize, n_lat: usize },
    #[error("box ({lon}, {lat}) is not an active (wet) box")]
    InactiveBox { lon: u32, lat: u32 },
    #[error("land fraction {ell} for box ({lon}, {lat}) is outside (0, 1)")]
    LandFraction { lon: u32, lat: u32, ell: f64 },
    #[error("debris box ({lon}, {lat}) is not sticky")]
    DebrisNotSticky { lon: u32, lat: u32 },
    #[error("debris target labels must be exactly 1..={expected}: {detail}")]
    TargetLabels { expected: usize, detail: String },
    #[error("duplicate {kind} entry for box ({lon}, {lat})")]
    Duplicate { kind: &'static str, lon: u32, lat: u32 },
    #[error("land fraction {ell} for state {state} is outside (0, 1)")]
    StateLandFraction { state: usize, ell: f64 },
    #[error("debris state {0} is not sticky")]
    StateNotSticky(usize),
    #[error("duplicate {kind} entry for state {state}")]
    DuplicateState { kind: &'static str, state: usize },
    #[error("state {state} is outside 0..{n}")]
    StateOutOfRange { state: usize, n: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Bounds {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

/// Integer box coordinates `(lon_index, lat_index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxId {
    pub lon: u32,
    pub lat: u32,
}

impl BoxId {
    pub fn new(lon: u32, lat: u32) -> Self {
        BoxId { lon, lat }
    }
}

/// Per-box wet/dry flags. Boxes not listed are dry unless the mask is
/// [`WetMask::all_wet`].
#[derive(Debug, Clone, Default)]
pub struct WetMask {
    all_wet: bool,
    flags: HashMap<BoxId, bool>,
}

impl WetMask {
    pub fn all_wet() -> Self {
        WetMask {
            all_wet: true,
            flags: HashMap::new(),
        }
    }

    /// All boxes wet except the listed ones.
    pub fn with_dry(dry: impl IntoIterator<Item = BoxId>) -> Self {
        WetMask {
            all_wet: true,
            flags: dry.into_iter().map(|b| (b, false)).collect(),
        }
    }

    pub fn set(&mut self, id: BoxId, wet: bool) {
        self.flags.insert(id, wet);
    }

    pub fn is_wet(&self, id: BoxId) -> bool {
        self.flags.get(&id).copied().unwrap_or(self.all_wet)
    }

    /// Reads `lon_index,lat_index,wet{0|1}` lines. `#` starts a comment and a
    /// leading non-numeric header line is skipped.
    pub fn read<R: Read>(reader: R) -> Result<Self, GridError> {
        let mut mask = WetMask::default();
        for (n, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| GridError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            let line = strip_comment(&line);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = (fields.len() == 3)
                .then(|| {
                    let lon = fields[0].parse::<u32>().ok()?;
                    let lat = fields[1].parse::<u32>().ok()?;
                    let wet = match fields[2] {
                        "1" => true,
                        "0" => false,
                        _ => return None,
                    };
                    Some((BoxId::new(lon, lat), wet))
                })
                .flatten();
            match parsed {
                Some((id, wet)) => mask.set(id, wet),
                None if n == 0 => continue,
                None => {
                    return Err(GridError::Parse {
                        line: n + 1,
                        message: format!("expected lon_index,lat_index,wet got {line:?}"),
                    })
                }
            }
        }
        Ok(mask)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let file = fs::File::open(path).map_err(|source| GridError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read(file)
    }
}

#[derive(Debug, Clone)]
pub struct GridCovering {
    bounds: Bounds,
    cell_size: f64,
    n_lon: usize,
    n_lat: usize,
    active: Vec<BoxId>,
    lookup: Vec<u32>,
}

const DRY: u32 = u32::MAX;

/// Builds the covering whose active boxes are exactly the wet boxes.
pub fn build_grid(bounds: Bounds, cell_size: f64, wet: &WetMask) -> Result<GridCovering, GridError> {
    let finite = [bounds.lon_min, bounds.lon_max, bounds.lat_min, bounds.lat_max]
        .iter()
        .all(|v| v.is_finite());
    if !finite || bounds.lon_max <= bounds.lon_min || bounds.lat_max <= bounds.lat_min {
        return Err(GridError::DegenerateBounds(format!("{bounds:?}")));
    }
    if bounds.lat_min < -90.0 || bounds.lat_max > 90.0 || bounds.lon_max - bounds.lon_min > 360.0 {
        return Err(GridError::DegenerateBounds(format!("{bounds:?} exceeds the sphere")));
    }
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(GridError::DegenerateBounds(format!("cell size {cell_size}")));
    }
    let n_lon = divide("longitude", bounds.lon_max - bounds.lon_min, cell_size)?;
    let n_lat = divide("latitude", bounds.lat_max - bounds.lat_min, cell_size)?;
    if n_lon.checked_mul(n_lat).map_or(true, |c| c >= DRY as usize) {
        return Err(GridError::DegenerateBounds(format!("{n_lon}x{n_lat} boxes")));
    }

    let mut lookup = vec![DRY; n_lon * n_lat];
    let mut active = Vec::new();
    for lat in 0..n_lat as u32 {
        for lon in 0..n_lon as u32 {
            let id = BoxId::new(lon, lat);
            if wet.is_wet(id) {
                lookup[lat as usize * n_lon + lon as usize] = active.len() as u32;
                active.push(id);
            }
        }
    }
    for (&id, _) in wet.flags.iter() {
        if id.lon as usize >= n_lon || id.lat as usize >= n_lat {
            return Err(GridError::BoxOutOfRange {
                lon: id.lon as i64,
                lat: id.lat as i64,
                n_lon,
                n_lat,
            });
        }
    }
    if active.is_empty() {
        return Err(GridError::EmptyMask);
    }
    Ok(GridCovering {
        bounds,
        cell_size,
        n_lon,
        n_lat,
        active,
        lookup,
    })
}

fn divide(axis: &'static str, extent: f64, cell: f64) -> Result<usize, GridError> {
    let ratio = extent / cell;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() * cell > DIVISOR_TOLERANCE_DEG {
        return Err(GridError::NonDivisor { axis, extent, cell });
    }
    Ok(n as usize)
}

/// Floor of `x` that snaps values within 1e-9 of the next integer up, so
/// edges computed in floating point land in the half-open cell they name.
fn snapped_floor(x: f64) -> f64 {
    let f = x.floor();
    if (x - f) > 1.0 - 1e-9 {
        f + 1.0
    } else {
        f
    }
}

impl GridCovering {
    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    /// Number of states N.
    pub fn n_states(&self) -> usize {
        self.active.len()
    }

    pub fn active_boxes(&self) -> &[BoxId] {
        &self.active
    }

    pub fn box_of_state(&self, state: usize) -> BoxId {
        self.active[state]
    }

    pub fn state_of_box(&self, id: BoxId) -> Option<usize> {
        if id.lon as usize >= self.n_lon || id.lat as usize >= self.n_lat {
            return None;
        }
        match self.lookup[id.lat as usize * self.n_lon + id.lon as usize] {
            DRY => None,
            s => Some(s as usize),
        }
    }

    /// Shifts `lon` by multiples of 360° into `[lon_min, lon_min + 360)`.
    pub fn normalize_lon(&self, lon: f64) -> f64 {
        (lon - self.bounds.lon_min).rem_euclid(360.0) + self.bounds.lon_min
    }

    /// Box containing the position, if it lies inside the rectangle.
    pub fn box_at(&self, lon: f64, lat: f64) -> Option<BoxId> {
        if !(lon.is_finite() && lat.is_finite()) {
            return None;
        }
        let lon = self.normalize_lon(lon);
        let i = snapped_floor((lon - self.bounds.lon_min) / self.cell_size);
        let j = snapped_floor((lat - self.bounds.lat_min) / self.cell_size);
        if i < 0.0 || j < 0.0 || i >= self.n_lon as f64 || j >= self.n_lat as f64 {
            return None;
        }
        Some(BoxId::new(i as u32, j as u32))
    }

    /// State index of a position; `None` is the out-of-domain marker for
    /// positions outside the rectangle or in a dry box.
    pub fn point_to_state(&self, lon: f64, lat: f64) -> Option<usize> {
        self.box_at(lon, lat).and_then(|b| self.state_of_box(b))
    }

    /// Lower-left corner of a box in degrees.
    pub fn box_corner(&self, id: BoxId) -> (f64, f64) {
        (
            self.bounds.lon_min + id.lon as f64 * self.cell_size,
            self.bounds.lat_min + id.lat as f64 * self.cell_size,
        )
    }

    pub fn box_center(&self, id: BoxId) -> (f64, f64) {
        let (lon, lat) = self.box_corner(id);
        (lon + 0.5 * self.cell_size, lat + 0.5 * self.cell_size)
    }

    pub fn state_center(&self, state: usize) -> (f64, f64) {
        self.box_center(self.active[state])
    }

    /// Box area on the sphere: `R² Δλ (sin φ₂ − sin φ₁)`.
    pub fn box_area_km2(&self, id: BoxId) -> f64 {
        let (_, lat0) = self.box_corner(id);
        let lat1 = lat0 + self.cell_size;
        EARTH_RADIUS_KM
            * EARTH_RADIUS_KM
            * self.cell_size.to_radians()
            * (lat1.to_radians().sin() - lat0.to_radians().sin())
    }

    /// Center latitude of latitude row `j`.
    pub fn row_latitude(&self, j: usize) -> f64 {
        self.bounds.lat_min + (j as f64 + 0.5) * self.cell_size
    }
}

/// Grid configuration file (TOML key-value).
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    /// Path to a wet-mask file; all boxes are wet when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wet_mask: Option<PathBuf>,
}

fn default_cell_size() -> f64 {
    0.25
}

impl GridConfig {
    pub fn bounds(&self) -> Bounds {
        Bounds {
            lon_min: self.lon_min,
            lon_max: self.lon_max,
            lat_min: self.lat_min,
            lat_max: self.lat_max,
        }
    }

    /// Builds the covering. A relative wet-mask path is resolved against
    /// `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<GridCovering, GridError> {
        let mask = match &self.wet_mask {
            Some(p) => WetMask::load(&base_dir.join(p))?,
            None => WetMask::all_wet(),
        };
        build_grid(self.bounds(), self.cell_size, &mask)
    }
}

pub fn load_grid(config_path: &Path) -> Result<GridCovering, GridError> {
    let text = fs::read_to_string(config_path).map_err(|source| GridError::Io {
        path: config_path.to_path_buf(),
        source,
    })?;
    let cfg: GridConfig = toml::from_str(&text).map_err(|e| GridError::Config(e.to_string()))?;
    cfg.build(config_path.parent().unwrap_or(Path::new(".")))
}

/// Leaky, sticky, debris and candidate-source annotations over states.
///
/// Debris targets are labelled `1..=M`. Several labels may share one debris
/// state (co-located beachings); the state's land fraction is then split
/// equally among them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateRoles {
    leaky: BTreeSet<usize>,
    sticky: BTreeMap<usize, f64>,
    targets: Vec<usize>,
    sources: Vec<usize>,
}

impl StateRoles {
    /// Validates and assembles roles over `n` states. `debris` holds
    /// `(state, label)` pairs with labels forming exactly `1..=M`.
    pub fn new(
        n: usize,
        leaky: impl IntoIterator<Item = usize>,
        sticky: impl IntoIterator<Item = (usize, f64)>,
        debris: impl IntoIterator<Item = (usize, usize)>,
        sources: impl IntoIterator<Item = usize>,
    ) -> Result<Self, GridError> {
        let check = |s: usize| {
            if s < n {
                Ok(s)
            } else {
                Err(GridError::StateOutOfRange { state: s, n })
            }
        };
        let leaky = leaky.into_iter().map(check).collect::<Result<BTreeSet<_>, _>>()?;
        let mut sticky_map = BTreeMap::new();
        for (s, ell) in sticky {
            check(s)?;
            if !(ell > 0.0 && ell < 1.0) {
                return Err(GridError::StateLandFraction { state: s, ell });
            }
            if sticky_map.insert(s, ell).is_some() {
                return Err(GridError::DuplicateState {
                    kind: "sticky",
                    state: s,
                });
            }
        }
        let mut labelled: Vec<(usize, usize)> = Vec::new();
        for (s, m) in debris {
            check(s)?;
            if !sticky_map.contains_key(&s) {
                return Err(GridError::StateNotSticky(s));
            }
            labelled.push((m, s));
        }
        labelled.sort_unstable();
        let expected = labelled.len();
        for (k, &(m, _)) in labelled.iter().enumerate() {
            if m != k + 1 {
                return Err(GridError::TargetLabels {
                    expected,
                    detail: format!("found label {m} at position {}", k + 1),
                });
            }
        }
        let targets = labelled.into_iter().map(|(_, s)| s).collect();
        let mut seen = BTreeSet::new();
        let mut src = Vec::new();
        for s in sources {
            check(s)?;
            if !seen.insert(s) {
                return Err(GridError::DuplicateState {
                    kind: "source",
                    state: s,
                });
            }
            src.push(s);
        }
        Ok(StateRoles {
            leaky,
            sticky: sticky_map,
            targets,
            sources: src,
        })
    }

    pub fn leaky(&self) -> &BTreeSet<usize> {
        &self.leaky
    }

    pub fn sticky(&self) -> &BTreeMap<usize, f64> {
        &self.sticky
    }

    pub fn land_fraction(&self, state: usize) -> Option<f64> {
        self.sticky.get(&state).copied()
    }

    /// Number of target cemeteries M.
    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }

    /// Debris state of target label `m` (1-based).
    pub fn target_state(&self, m: usize) -> Option<usize> {
        m.checked_sub(1).and_then(|k| self.targets.get(k)).copied()
    }

    /// Target labels attached to a debris state, ascending.
    pub fn targets_of(&self, state: usize) -> Vec<usize> {
        self.targets
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == state)
            .map(|(k, _)| k + 1)
            .collect()
    }

    pub fn is_debris(&self, state: usize) -> bool {
        self.targets.contains(&state)
    }

    /// `(state, label)` for every target label in label order.
    pub fn debris(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.targets.iter().enumerate().map(|(k, &s)| (s, k + 1))
    }

    /// Candidate source states in file (latitude) order.
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// Largest referenced state index plus one, or 0 with no roles.
    pub fn min_states(&self) -> usize {
        let max = self
            .leaky
            .iter()
            .chain(self.sticky.keys())
            .chain(self.sources.iter())
            .max();
        max.map_or(0, |m| m + 1)
    }
}

/// Reads a roles file with records `leaky: lon,lat`, `sticky: lon,lat,ell`,
/// `debris: lon,lat,m` and `source: lon,lat`, box coordinates given as
/// grid indices.
pub fn read_roles<R: Read>(grid: &GridCovering, reader: R) -> Result<StateRoles, GridError> {
    let mut leaky = Vec::new();
    let mut sticky: Vec<(usize, f64)> = Vec::new();
    let mut debris = Vec::new();
    let mut sources = Vec::new();
    let mut seen_sticky = BTreeSet::new();
    let mut seen_source = BTreeSet::new();

    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| GridError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = strip_comment(&line);
        if line.is_empty() {
            continue;
        }
        let (kind, rest) = line.split_once(':').ok_or_else(|| GridError::Parse {
            line: lineno,
            message: format!("expected `kind: fields`, got {line:?}"),
        })?;
        let fields: Vec<&str> = rest.split(',').map(str::trim).collect();
        let bad = |msg: &str| GridError::Parse {
            line: lineno,
            message: format!("{msg}: {line:?}"),
        };
        let arity = match kind.trim() {
            "leaky" | "source" => 2,
            "sticky" | "debris" => 3,
            other => return Err(bad(&format!("unknown record kind {other:?}"))),
        };
        if fields.len() != arity {
            return Err(bad(&format!("expected {arity} fields")));
        }
        let lon: u32 = fields[0].parse().map_err(|_| bad("bad lon index"))?;
        let lat: u32 = fields[1].parse().map_err(|_| bad("bad lat index"))?;
        let id = BoxId::new(lon, lat);
        if lon as usize >= grid.n_lon() || lat as usize >= grid.n_lat() {
            return Err(GridError::BoxOutOfRange {
                lon: lon as i64,
                lat: lat as i64,
                n_lon: grid.n_lon(),
                n_lat: grid.n_lat(),
            });
        }
        let state = grid
            .state_of_box(id)
            .ok_or(GridError::InactiveBox { lon, lat })?;
        match kind.trim() {
            "leaky" => leaky.push(state),
            "source" => {
                if !seen_source.insert(state) {
                    return Err(GridError::Duplicate { kind: "source", lon, lat });
                }
                sources.push(state)
            }
            "sticky" => {
                let ell: f64 = fields[2].parse().map_err(|_| bad("bad land fraction"))?;
                if !(ell > 0.0 && ell < 1.0) {
                    return Err(GridError::LandFraction { lon, lat, ell });
                }
                if !seen_sticky.insert(state) {
                    return Err(GridError::Duplicate { kind: "sticky", lon, lat });
                }
                sticky.push((state, ell));
            }
            "debris" => {
                let m: usize = fields[2].parse().map_err(|_| bad("bad target label"))?;
                debris.push((state, m, id));
            }
            _ => unreachable!(),
        }
    }
    for &(state, _, id) in &debris {
        if !seen_sticky.contains(&state) {
            return Err(GridError::DebrisNotSticky {
                lon: id.lon,
                lat: id.lat,
            });
        }
    }
    StateRoles::new(
        grid.n_states(),
        leaky,
        sticky,
        debris.into_iter().map(|(s, m, _)| (s, m)),
        sources,
    )
}

pub fn load_roles(grid: &GridCovering, path: &Path) -> Result<StateRoles, GridError> {
    let file = fs::File::open(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_roles(grid, file)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}
