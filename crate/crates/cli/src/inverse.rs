use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::anyhow;
use serde_json::{json, Value};
use ulamchain::bayes::{infer_source, load_observations, sticky_fit_map};
use ulamchain::paths::{common_starts, infeasible_geojson, most_probable_paths, path_geojson};
use ulamchain::serial::{fmt_f64, read_chain};
use ulamchain::{
    AugmentedChain, ChainSchedule, GridCovering, InferOptions, Observation, PathSearch, Season, SeasonCalendar,
    StateRoles,
};

use crate::config::{RunConfig, ScheduleKind};
use crate::error::{CliError, Context};
use crate::output::{kv, write_json, write_text};

enum Chains {
    Seasonal(Box<[AugmentedChain; 3]>),
    Pooled(AugmentedChain),
}

impl Chains {
    fn load(cfg: &RunConfig, kind: Option<&str>) -> Result<Self, CliError> {
        let kind = match kind {
            Some(s) => ScheduleKind::parse(s)?,
            None => cfg.schedule,
        };
        let read = |label: &str| {
            let path = cfg.out_file(&format!("A_{label}.csv"));
            read_chain(&path).ctx(format!("chain {} (run `build` first)", path.display()))
        };
        Ok(match kind {
            ScheduleKind::Seasonal => Chains::Seasonal(Box::new([
                read(Season::Winter.code())?,
                read(Season::Summer.code())?,
                read(Season::SpringFall.code())?,
            ])),
            ScheduleKind::Pooled => Chains::Pooled(read("pooled")?),
        })
    }

    fn schedule(&self, cfg: &RunConfig) -> Result<ChainSchedule<'_>, CliError> {
        match self {
            Chains::Pooled(a) => Ok(ChainSchedule::Autonomous(a)),
            Chains::Seasonal(c) => {
                let [w, s, sf] = &**c;
                ChainSchedule::seasonal(w, s, sf, SeasonCalendar::default(), cfg.crash_date).ctx("seasonal schedule")
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Chains::Seasonal(_) => "seasonal",
            Chains::Pooled(_) => "pooled",
        }
    }
}

/// Loads grid, chains and schedule and checks they agree.
struct Setup {
    grid: GridCovering,
    chains: Chains,
}

impl Setup {
    fn new(cfg: &RunConfig, kind: Option<&str>) -> Result<Self, CliError> {
        let grid = cfg.load_grid()?;
        let chains = Chains::load(cfg, kind)?;
        let n = chains.schedule(cfg)?.n_domain();
        if n != grid.n_states() {
            return Err(CliError::input(anyhow!(
                "chains have {n} domain states but the grid has {}",
                grid.n_states()
            )));
        }
        Ok(Setup { grid, chains })
    }

    /// Candidate sources ordered by latitude, then longitude.
    fn candidates(&self, roles: &StateRoles) -> Result<Vec<usize>, CliError> {
        let mut c = roles.sources().to_vec();
        if c.is_empty() {
            return Err(CliError::input(anyhow!("the roles file lists no `source` boxes")));
        }
        c.sort_by(|&a, &b| {
            let (xa, ya) = self.grid.state_center(a);
            let (xb, yb) = self.grid.state_center(b);
            ya.total_cmp(&yb).then(xa.total_cmp(&xb))
        });
        Ok(c)
    }

    /// Centre of a domain state or of the debris box of a target.
    fn position(&self, roles: &StateRoles, state: usize) -> Option<(f64, f64)> {
        let n = self.grid.n_states();
        match state.cmp(&n) {
            std::cmp::Ordering::Less => Some(self.grid.state_center(state)),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => roles.target_state(state - n).map(|s| self.grid.state_center(s)),
        }
    }
}

fn observations(cfg: &RunConfig) -> Result<Vec<Observation>, CliError> {
    let path = cfg
        .observations
        .as_ref()
        .ok_or_else(|| CliError::input(anyhow!("`observations` is not set in the config")))?;
    let obs = load_observations(path).ctx(format!("observations {}", path.display()))?;
    if obs.is_empty() {
        return Err(CliError::input(anyhow!("{} has no observations", path.display())));
    }
    Ok(obs)
}

/// Prior from `lon_index,lat_index,weight` lines; unlisted candidates get 0.
fn read_prior(path: &Path, grid: &GridCovering, candidates: &[usize]) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).ctx(format!("prior {}", path.display()))?;
    let mut prior = vec![0.0; candidates.len()];
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || CliError::input(anyhow!("prior line {}: expected lon_index,lat_index,weight", k + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let (Ok(i), Ok(j), Ok(w)) = (f[0].parse::<u32>(), f[1].parse::<u32>(), f[2].parse::<f64>()) else {
            if k == 0 {
                continue;
            }
            return Err(bad());
        };
        let state = grid
            .state_of_box(ulamchain::BoxId::new(i, j))
            .ok_or_else(|| CliError::input(anyhow!("prior line {}: box ({i}, {j}) is not active", k + 1)))?;
        let idx = candidates
            .iter()
            .position(|&c| c == state)
            .ok_or_else(|| CliError::input(anyhow!("prior line {}: box ({i}, {j}) is not a candidate", k + 1)))?;
        prior[idx] = w;
    }
    let z: f64 = prior.iter().sum();
    if !(z > 0.0 && z.is_finite()) || prior.iter().any(|&w| w < 0.0) {
        return Err(CliError::input(anyhow!("prior weights must be non-negative with a positive sum")));
    }
    Ok(prior.iter().map(|w| w / z).collect())
}

pub fn bayes(cfg: &RunConfig, kind: Option<&str>) -> Result<(), CliError> {
    let setup = Setup::new(cfg, kind)?;
    let sched = setup.chains.schedule(cfg)?;
    let roles = sched.roles();
    let candidates = setup.candidates(roles)?;
    let obs = observations(cfg)?;
    let prior = match &cfg.prior {
        Some(p) => Some(read_prior(p, &setup.grid, &candidates)?),
        None => None,
    };
    let opts = InferOptions {
        level: cfg.cpi_level,
        window_steps: cfg.window_steps,
    };
    let result = infer_source(&sched, &candidates, &obs, prior.as_deref(), opts).ctx("inference")?;
    cfg.ensure_out()?;

    let mut csv = String::from("lat,lon,logL,posterior");
    for b in 1..=obs.len() {
        let _ = write!(csv, ",single_b{b}");
    }
    csv.push('\n');
    for (i, &c) in candidates.iter().enumerate() {
        let (lon, lat) = setup.grid.state_center(c);
        let _ = write!(
            csv,
            "{},{},{},{}",
            fmt_f64(lat),
            fmt_f64(lon),
            fmt_f64(result.log_likelihood[i]),
            fmt_f64(result.posterior.weights[i])
        );
        for single in &result.single {
            let w = single.as_ref().map_or(f64::NAN, |p| p.weights[i]);
            let _ = write!(csv, ",{}", fmt_f64(w));
        }
        csv.push('\n');
    }
    write_text(&cfg.out_file("posterior.csv"), &csv)?;

    let c_max = result.c_max();
    let (lo, hi) = result.interval_states();
    let lat = |s: usize| setup.grid.state_center(s).1;
    let lon = |s: usize| setup.grid.state_center(s).0;
    let mut s = String::from("[posterior]\n");
    let _ = writeln!(s, "schedule = {}", setup.chains.name());
    let _ = writeln!(s, "crash_date = {}", cfg.crash_date);
    kv(&mut s, "lag_days", sched.lag_days());
    let _ = writeln!(s, "candidates = {}", candidates.len());
    let _ = writeln!(s, "observations = {}", obs.len());
    let _ = writeln!(s, "window_steps = {}", cfg.window_steps);
    let _ = writeln!(s, "prior = {}", if prior.is_some() { "file" } else { "uniform" });
    let _ = writeln!(s, "c_max_state = {c_max}");
    kv(&mut s, "c_max_lon", lon(c_max));
    kv(&mut s, "c_max_lat", lat(c_max));
    kv(&mut s, "c_max_posterior", result.posterior.weights[result.posterior.map_index]);
    let ml = result.candidates[result.ml_index];
    let _ = writeln!(s, "ml_state = {ml}");
    kv(&mut s, "ml_lat", lat(ml));
    kv(&mut s, "cpi_level", cfg.cpi_level);
    kv(&mut s, "cpi_lower_lat", lat(lo));
    kv(&mut s, "cpi_upper_lat", lat(hi));
    kv(&mut s, "cpi_width_deg", lat(hi) - lat(lo));
    s.push_str("\n[observations]\nindex,target,name,days,steps,single_c_max_lat\n");
    for (b, o) in obs.iter().enumerate() {
        let single = result.single[b]
            .as_ref()
            .map_or("undefined".to_string(), |p| fmt_f64(lat(candidates[p.map_index])));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            b + 1,
            o.target,
            o.name,
            fmt_f64(o.days),
            result.steps[b],
            single
        );
    }
    write_text(&cfg.out_file("posterior_summary.txt"), &s)?;

    let horizon = result.steps.iter().max().copied().unwrap_or(0);
    let fit = sticky_fit_map(&sched, c_max, horizon).ctx("sticky fit")?;
    let mut csv = String::from("state,lon_center,lat_center,step,mass\n");
    for (st, row) in fit.states.iter().zip(&fit.mass) {
        let (x, y) = setup.grid.state_center(*st);
        for (k, m) in row.iter().enumerate() {
            if *m > 0.0 {
                let _ = writeln!(csv, "{st},{},{},{},{}", fmt_f64(x), fmt_f64(y), k + 1, fmt_f64(*m));
            }
        }
    }
    write_text(&cfg.out_file("sticky_fit.csv"), &csv)
}

fn path_row(csv: &mut String, setup: &Setup, search: &PathSearch, mode: &str, source: Option<usize>, lp: f64) {
    let (lon, lat) = source.map_or((String::new(), String::new()), |s| {
        let (x, y) = setup.grid.state_center(s);
        (fmt_f64(x), fmt_f64(y))
    });
    let src = source.map_or(String::new(), |s| s.to_string());
    let _ = writeln!(
        csv,
        "{},{},{mode},{src},{lon},{lat},{}",
        search.target_label,
        search.steps,
        fmt_f64(lp)
    );
}

pub fn paths(cfg: &RunConfig, kind: Option<&str>, steps: Option<usize>) -> Result<(), CliError> {
    let setup = Setup::new(cfg, kind)?;
    let sched = setup.chains.schedule(cfg)?;
    let roles = sched.roles();
    let sources = setup.candidates(roles)?;
    let m = sched.n_targets();
    if m == 0 {
        return Err(CliError::input(anyhow!("the chains have no debris targets")));
    }
    let mut jobs: Vec<(usize, usize)> = match steps {
        Some(0) => return Err(CliError::input(anyhow!("--steps must be at least 1"))),
        Some(k) => (1..=m).map(|b| (b, k)).collect(),
        None => observations(cfg)?
            .iter()
            .map(|o| (o.target, o.steps(sched.lag_days())))
            .collect(),
    };
    let mut seen = std::collections::BTreeSet::new();
    jobs.retain(|j| seen.insert(*j));

    let searches = jobs
        .iter()
        .map(|&(b, k)| most_probable_paths(&sched, &sources, b, k))
        .collect::<Result<Vec<_>, _>>()
        .ctx("path search")?;
    cfg.ensure_out()?;

    let mut features = Vec::new();
    let mut csv = String::from("target_label,steps,mode,source_state,source_lon,source_lat,log_prob\n");
    let tag = |mut f: Value, mode: &str| {
        f["properties"]["mode"] = json!(mode);
        f
    };
    for search in &searches {
        match &search.global {
            Ok(p) => {
                features.push(tag(path_geojson(p, &setup.grid, &sched), "global"));
                path_row(&mut csv, &setup, search, "global", Some(p.source()), p.log_prob);
            }
            Err(e) => {
                features.push(tag(infeasible_geojson(None, search.target_label, e), "global"));
                path_row(&mut csv, &setup, search, "global", None, f64::NEG_INFINITY);
            }
        }
        for (src, r) in &search.per_source {
            match r {
                Ok(p) => {
                    features.push(tag(path_geojson(p, &setup.grid, &sched), "source"));
                    path_row(&mut csv, &setup, search, "source", Some(*src), p.log_prob);
                }
                Err(e) => {
                    features.push(tag(infeasible_geojson(Some(*src), search.target_label, e), "source"));
                    path_row(&mut csv, &setup, search, "source", Some(*src), f64::NEG_INFINITY);
                }
            }
        }
    }
    write_json(
        &cfg.out_file("paths.geojson"),
        &json!({ "type": "FeatureCollection", "features": features }),
    )?;
    write_text(&cfg.out_file("paths.csv"), &csv)?;

    let mut rep = String::from("[paths]\n");
    let _ = writeln!(rep, "schedule = {}", setup.chains.name());
    let _ = writeln!(rep, "sources = {}", sources.len());
    rep.push_str("target_label,steps,best_source,lon,lat,log_prob,infeasible_sources\n");
    for s in &searches {
        let infeasible = s.per_source.iter().filter(|(_, r)| r.is_err()).count();
        match &s.global {
            Ok(p) => {
                let (x, y) = setup.position(roles, p.source()).expect("domain state");
                let _ = writeln!(
                    rep,
                    "{},{},{},{},{},{},{infeasible}",
                    s.target_label,
                    s.steps,
                    p.source(),
                    fmt_f64(x),
                    fmt_f64(y),
                    fmt_f64(p.log_prob)
                );
            }
            Err(e) => {
                let _ = writeln!(rep, "{},{},none,,,,{infeasible} # {e}", s.target_label, s.steps);
            }
        }
    }
    rep.push_str("\n[common_starts]\n");
    let common = common_starts(&searches);
    if common.is_empty() {
        rep.push_str("none\n");
    }
    for (src, labels) in &common {
        let (x, y) = setup.grid.state_center(*src);
        let l: Vec<String> = labels.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(rep, "{src},{},{},{}", fmt_f64(x), fmt_f64(y), l.join(" "));
    }
    write_text(&cfg.out_file("paths_report.txt"), &rep)
}

/// Initial distribution over the augmented states.
fn initial(setup: &Setup, roles: &StateRoles, n_total: usize, init: Option<&Path>) -> Result<Vec<f64>, CliError> {
    let mut f = vec![0.0; n_total];
    match init {
        None => {
            let src = roles.sources();
            if src.is_empty() {
                return Err(CliError::input(anyhow!("no --init given and the roles list no sources")));
            }
            for &s in src {
                f[s] = 1.0 / src.len() as f64;
            }
        }
        Some(path) => {
            let all: Vec<usize> = (0..setup.grid.n_states()).collect();
            let w = read_prior(path, &setup.grid, &all)?;
            f[..w.len()].copy_from_slice(&w);
        }
    }
    Ok(f)
}

pub fn evolve(cfg: &RunConfig, kind: Option<&str>, steps: usize, init: Option<&Path>) -> Result<(), CliError> {
    let setup = Setup::new(cfg, kind)?;
    let sched = setup.chains.schedule(cfg)?;
    let roles = sched.roles();
    let n = sched.n_domain();
    let m = sched.n_targets();
    let mut f = initial(&setup, roles, sched.n_total(), init)?;
    cfg.ensure_out()?;

    let mut dump = String::from("step,state,lon_center,lat_center,value\n");
    let mut summary = String::from("step,domain,cemetery");
    for b in 1..=m {
        let _ = write!(summary, ",b{b}");
    }
    summary.push('\n');
    for k in 0..=steps {
        if k > 0 {
            f = sched.chain_at(k - 1).matrix().vec_mul(&f).ctx("evolving")?;
        }
        for (s, &x) in f.iter().enumerate() {
            if x != 0.0 {
                let (lon, lat) = setup.position(roles, s).unwrap_or((f64::NAN, f64::NAN));
                let _ = writeln!(dump, "{k},{s},{},{},{}", fmt_f64(lon), fmt_f64(lat), fmt_f64(x));
            }
        }
        let _ = write!(summary, "{k},{},{}", fmt_f64(f[..n].iter().sum()), fmt_f64(f[n]));
        for b in 1..=m {
            let _ = write!(summary, ",{}", fmt_f64(f[n + b]));
        }
        summary.push('\n');
    }
    write_text(&cfg.out_file("evolve.csv"), &dump)?;
    write_text(&cfg.out_file("evolve_summary.csv"), &summary)
}
