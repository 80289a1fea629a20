use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::anyhow;
use ulamchain::serial::{fmt_f64, read_matrix};
use ulamchain::spectral::{basin_analysis, basin_geojson, dominant_eigs, zonal_profile};
use ulamchain::MatrixLabel;

use crate::config::RunConfig;
use crate::error::{CliError, Context, Numerical};
use crate::output::{kv, state_vector_csv, write_json, write_text};

/// `matrix` is a label of a matrix written by `build` or a path to a matrix
/// file.
pub fn run(cfg: &RunConfig, matrix: &str, k: Option<usize>) -> Result<(), CliError> {
    let path = match matrix.parse::<MatrixLabel>() {
        Ok(label) => cfg.out_file(&format!("P_{label}.csv")),
        Err(_) => PathBuf::from(matrix),
    };
    let p = read_matrix(&path).ctx(format!("matrix {}", path.display()))?;
    let grid = cfg.load_grid()?;
    if p.n_states() != grid.n_states() {
        return Err(CliError::input(anyhow!(
            "matrix has {} states but the grid has {}",
            p.n_states(),
            grid.n_states()
        )));
    }
    let k = k.unwrap_or(cfg.eigen.k);
    let opts = cfg.eigen_options();
    let eigs = dominant_eigs(p.matrix(), k, &opts).ctx("eigensolver")?;
    cfg.ensure_out()?;

    let mut report = String::from("[matrix]\n");
    let _ = writeln!(report, "label = {}", p.label());
    let _ = writeln!(report, "states = {}", p.n_states());
    kv(&mut report, "lag_days", p.lag_days());
    let _ = writeln!(report, "\n[eigenvalues]\niterations = {}", eigs.iterations);
    report.push_str("index,re,im,modulus,complex,left_residual,right_residual,converged\n");
    for (i, pair) in eigs.pairs.iter().enumerate() {
        let _ = writeln!(
            report,
            "{},{},{},{},{},{},{},{}",
            i + 1,
            fmt_f64(pair.value.re),
            fmt_f64(pair.value.im),
            fmt_f64(pair.modulus()),
            pair.is_complex(),
            fmt_f64(pair.left_residual),
            fmt_f64(pair.right_residual),
            pair.converged
        );
        if let Some(v) = &pair.left {
            write_text(&cfg.out_file(&format!("eig_{}_left.csv", i + 1)), &state_vector_csv(&grid, v))?;
        }
        if let Some(v) = &pair.right {
            write_text(&cfg.out_file(&format!("eig_{}_right.csv", i + 1)), &state_vector_csv(&grid, v))?;
        }
    }

    let dominant = eigs.dominant();
    if let Some(right) = &dominant.right {
        let zonal = zonal_profile(right, &grid).ctx("zonal profile")?;
        let mut csv = String::from("lat,mean,deriv\n");
        for z in &zonal {
            let _ = writeln!(csv, "{},{},{}", fmt_f64(z.lat), fmt_f64(z.mean), fmt_f64(z.deriv));
        }
        write_text(&cfg.out_file("zonal_right.csv"), &csv)?;

        let basin = basin_analysis(p.matrix(), right, cfg.basin_threshold, 1.0, &opts).ctx("basin analysis")?;
        write_json(&cfg.out_file("basin.geojson"), &basin_geojson(&grid, &basin.members))?;
        report.push_str("\n[basin]\n");
        kv(&mut report, "threshold", basin.threshold);
        let _ = writeln!(report, "boxes = {}", basin.members.len());
        match basin.retention {
            Ok(r) => {
                kv(&mut report, "lambda_b", r.lambda_b);
                // `time` is in units of the lag; one annual step counts as a year
                kv(&mut report, "retention_lags", r.time);
                kv(&mut report, "retention_days", r.time * p.lag_days());
                if p.label() == MatrixLabel::Annual {
                    kv(&mut report, "retention_years", r.time);
                }
            }
            Err(lambda_b) => {
                kv(&mut report, "lambda_b", lambda_b);
                report.push_str("retention_lags = inf\n");
            }
        }
    }
    write_text(&cfg.out_file("spectral_report.txt"), &report)?;
    if !eigs.converged() {
        return Err(CliError::numerical(Numerical(format!(
            "eigensolver did not reach tolerance {} within {} iterations",
            opts.tol, opts.max_iter
        ))));
    }
    Ok(())
}
