//! Shared fixture: a 5 x 4 box domain with a seasonal westward conveyor,
//! debris targets along the western edge and a diagonal arc of candidate
//! sources.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ulamchain::Season;

pub const N_LON: usize = 5;
pub const N_LAT: usize = 4;
pub const N: usize = N_LON * N_LAT;
/// Land fraction of the western coastal boxes.
pub const ELL: f64 = 0.9;
/// Candidate arc as `(lon_index, lat_index)`, south to north.
pub const ARC: [(usize, usize); 4] = [(1, 0), (2, 1), (3, 2), (4, 3)];

pub fn state(i: usize, j: usize) -> usize {
    j * N_LON + i
}

/// `(west, north, south, stay)` move probabilities per season.
fn moves(season: Season) -> [f64; 4] {
    match season {
        Season::Winter => [0.88, 0.06, 0.02, 0.04],
        Season::Summer => [0.88, 0.02, 0.06, 0.04],
        Season::SpringFall => [0.80, 0.04, 0.04, 0.12],
    }
}

/// Kernel rows over the 20 boxes plus an exit column. Moves off the north
/// or south edge leave the domain; the western edge is a coast where the
/// westward move becomes a stay.
pub fn conveyor_rows(season: Season) -> Vec<Vec<f64>> {
    let [w, n, s, stay] = moves(season);
    let mut rows = Vec::with_capacity(N);
    for j in 0..N_LAT {
        for i in 0..N_LON {
            let mut row = vec![0.0; N + 1];
            row[state(i, j)] += stay;
            if i == 0 {
                row[state(i, j)] += w;
            } else {
                row[state(i - 1, j)] += w;
            }
            if j + 1 < N_LAT {
                row[state(i, j + 1)] += n;
            } else {
                row[N] += n;
            }
            if j > 0 {
                row[state(i, j - 1)] += s;
            } else {
                row[N] += s;
            }
            rows.push(row);
        }
    }
    rows
}

pub fn grid_toml() -> String {
    "lon_min = 100.0\nlon_max = 101.25\nlat_min = -20.0\nlat_max = -19.0\ncell_size = 0.25\n".into()
}

pub fn roles_text() -> String {
    let mut s = String::from("# conveyor fixture\n");
    for i in 0..N_LON {
        let _ = writeln!(s, "leaky: {i},0");
        let _ = writeln!(s, "leaky: {i},{}", N_LAT - 1);
    }
    for j in 0..N_LAT {
        let _ = writeln!(s, "sticky: 0,{j},{ELL}");
        let _ = writeln!(s, "debris: 0,{j},{}", j + 1);
    }
    for (i, j) in ARC {
        let _ = writeln!(s, "source: {i},{j}");
    }
    s
}

fn toml_rows(rows: &[Vec<f64>]) -> String {
    let inner: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[\n  {},\n]", inner.join(",\n  "))
}

pub fn spec_toml(seed: u64, n_drifters: usize, steps: usize) -> String {
    let mut s = format!(
        "seed = {seed}\nn_drifters = {n_drifters}\nsteps = {steps}\nlag_days = 5.0\n\
         start_day_min = 0.0\nstart_day_max = 365.0\ntrue_source = {}\n\n[grid]\n{}\n[kernels]\n",
        state(ARC[2].0, ARC[2].1),
        grid_toml()
    );
    for (key, season) in [
        ("winter", Season::Winter),
        ("summer", Season::Summer),
        ("spring_fall", Season::SpringFall),
    ] {
        let _ = writeln!(s, "{key} = {}", toml_rows(&conveyor_rows(season)));
    }
    s
}

pub fn observations_csv() -> String {
    "target_label,days_since_crash,name\n1,30,south\n2,25,mid_south\n3,20,mid_north\n4,25,north\n".into()
}

pub fn config_toml(out: &Path) -> String {
    format!(
        "grid = \"synth/grid.toml\"\nroles = \"roles.txt\"\ntrajectories = \"synth/trajectories.csv\"\n\
         observations = \"observations.csv\"\nout = {:?}\nlag_days = 5.0\n\n[eigen]\nk = 3\n",
        out.display().to_string()
    )
}

/// Writes spec, roles, observations and a config whose output goes to
/// `out`. Returns the config path.
pub fn write_fixture(dir: &Path, out: &Path, seed: u64) -> PathBuf {
    fs::write(dir.join("spec.toml"), spec_toml(seed, 4000, 6)).unwrap();
    fs::write(dir.join("roles.txt"), roles_text()).unwrap();
    fs::write(dir.join("observations.csv"), observations_csv()).unwrap();
    let cfg = dir.join("config.toml");
    fs::write(&cfg, config_toml(out)).unwrap();
    cfg
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulamchain"))
        .args(args)
        .output()
        .expect("spawn ulamchain")
}

pub fn cli_ok(args: &[&str]) {
    let out = cli(args);
    assert!(
        out.status.success(),
        "ulamchain {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Runs synth, build, spectral, bayes, paths and evolve for the fixture in
/// `dir`, writing artifacts to `out`.
pub fn full_pipeline(dir: &Path, out: &Path, seed: u64) {
    let cfg = write_fixture(dir, out, seed);
    let cfg = cfg.to_str().unwrap();
    let synth = dir.join("synth");
    cli_ok(&["synth", "--spec", dir.join("spec.toml").to_str().unwrap(), "--out", synth.to_str().unwrap()]);
    cli_ok(&["build", "--config", cfg]);
    cli_ok(&["spectral", "--config", cfg, "--matrix", "pooled"]);
    cli_ok(&["bayes", "--config", cfg]);
    cli_ok(&["paths", "--config", cfg]);
    cli_ok(&["evolve", "--config", cfg, "--steps", "8"]);
}

/// Every file under `dir` with its bytes, sorted by relative path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
