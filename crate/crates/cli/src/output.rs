use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ulamchain::serial::fmt_f64;
use ulamchain::GridCovering;

use crate::error::{CliError, Context};

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).ctx(format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).ctx("serializing JSON")?;
    text.push('\n');
    write_text(path, &text)
}

/// `state,lon_center,lat_center,value` for a per-state vector.
pub fn state_vector_csv(grid: &GridCovering, v: &[f64]) -> String {
    let mut out = String::from("state,lon_center,lat_center,value\n");
    for (s, x) in v.iter().enumerate() {
        let (lon, lat) = grid.state_center(s);
        let _ = writeln!(out, "{s},{},{},{}", fmt_f64(lon), fmt_f64(lat), fmt_f64(*x));
    }
    out
}

/// Appends `key = value` with a float value.
pub fn kv(out: &mut String, key: &str, x: f64) {
    let _ = writeln!(out, "{key} = {}", fmt_f64(x));
}
