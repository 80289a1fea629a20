use std::fs;
use std::path::Path;

use ulamchain::synth::{trajectories_to_csv, SyntheticSpec};

use crate::error::{CliError, Context};
use crate::output::write_text;

/// Writes `trajectories.csv`, `truth.json` and `grid.toml` into `out`.
pub fn run(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path).ctx(format!("reading {}", spec_path.display()))?;
    let mut spec: SyntheticSpec = text.parse().ctx(format!("spec {}", spec_path.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let result = spec.run(base).ctx("simulating")?;
    fs::create_dir_all(out).ctx(format!("creating {}", out.display()))?;
    write_text(&out.join("trajectories.csv"), &trajectories_to_csv(&result.trajectories))?;

    let mut truth = serde_json::to_string_pretty(&result.truth).ctx("serializing truth")?;
    truth.push('\n');
    write_text(&out.join("truth.json"), &truth)?;

    // the grid file must stand alone, so the wet mask path becomes absolute
    let mut grid = spec.grid.clone();
    if let Some(mask) = &grid.wet_mask {
        let joined = base.join(mask);
        grid.wet_mask = Some(fs::canonicalize(&joined).ctx(format!("wet mask {}", joined.display()))?);
    }
    write_text(&out.join("grid.toml"), &toml::to_string(&grid).ctx("serializing grid")?)
}
