use std::fmt::Write as _;

use anyhow::anyhow;
use rayon::prelude::*;
use ulamchain::absorb::{add_beaching, add_cemetery};
use ulamchain::grid::load_roles;
use ulamchain::ingest::{extract_pairs, parse_trajectories, season_split, Occupancy};
use ulamchain::serial::{chain_to_string, fmt_f64, matrix_to_string};
use ulamchain::sparse::DEFAULT_PRUNE;
use ulamchain::ulam::{compose_annual, estimate, markov_test};
use ulamchain::{AugmentedChain, MatrixLabel, Season, SeasonCalendar, TransitionMatrix};

use crate::config::{MarkovConfig, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{kv, write_text};

/// Length of one season block in days; `season_exponent · lag` must match.
const SEASON_BLOCK_DAYS: f64 = 90.0;

const SEASONS: [Season; 3] = [Season::Winter, Season::Summer, Season::SpringFall];

fn matrix_summary(out: &mut String, p: &TransitionMatrix) {
    let _ = writeln!(out, "[{}]", p.label());
    let _ = writeln!(out, "lag_days = {}", fmt_f64(p.lag_days()));
    let _ = writeln!(out, "nnz = {}", p.matrix().nnz());
    if let Some(c) = p.row_counts() {
        let _ = writeln!(out, "pairs = {}", c.iter().sum::<u64>());
    }
    kv(out, "empty_row_fraction", p.empty_row_fraction());
    match p.row_sum_range() {
        Some((lo, hi)) => {
            kv(out, "row_sum_min", lo);
            kv(out, "row_sum_max", hi);
        }
        None => out.push_str("row_sum_min = none\nrow_sum_max = none\n"),
    }
}

fn markov_section(
    out: &mut String,
    cfg: &RunConfig,
    mc: &MarkovConfig,
    set: &ulamchain::TrajectorySet,
    grid: &ulamchain::GridCovering,
) -> Result<(), CliError> {
    let cal = SeasonCalendar::default();
    let n = grid.n_states();
    let at_lag = |lag: f64| -> Result<TransitionMatrix, CliError> {
        let pairs = extract_pairs(set, grid, lag, &cal, cfg.epoch).ctx("extracting pairs")?;
        estimate(&pairs, n, lag, MatrixLabel::Pooled).ctx("estimating")
    };
    let base = at_lag(mc.base_lag_days)?;
    let lagged = mc
        .multiples
        .iter()
        .map(|&m| at_lag(mc.base_lag_days * m as f64))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = markov_test(&base, &lagged, mc.k, &cfg.eigen_options()).ctx("Markovianity test")?;
    out.push_str("\n[markov]\n");
    let _ = writeln!(out, "base_lag_days = {}", fmt_f64(mc.base_lag_days));
    out.push_str("n,eig,observed,predicted,relative_deviation,converged\n");
    for r in &rows {
        for (k, ((o, p), d)) in r.observed.iter().zip(&r.predicted).zip(&r.relative_deviation).enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.n,
                k + 1,
                fmt_f64(*o),
                fmt_f64(*p),
                fmt_f64(*d),
                r.converged
            );
        }
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    if (cfg.season_exponent as f64 * cfg.lag_days - SEASON_BLOCK_DAYS).abs() > 1e-9 {
        return Err(CliError::input(anyhow!(
            "season_exponent {} times lag {} d must equal the {SEASON_BLOCK_DAYS} d season block",
            cfg.season_exponent,
            cfg.lag_days
        )));
    }
    let traj_path = cfg
        .trajectories
        .as_ref()
        .ok_or_else(|| CliError::input(anyhow!("build needs `trajectories` in the config")))?;
    let grid = cfg.load_grid()?;
    let roles = load_roles(&grid, &cfg.roles).ctx(format!("roles {}", cfg.roles.display()))?;
    let set = parse_trajectories(traj_path).ctx(format!("trajectories {}", traj_path.display()))?;
    let n = grid.n_states();
    let pairs = extract_pairs(&set, &grid, cfg.lag_days, &SeasonCalendar::default(), cfg.epoch)
        .ctx("extracting pairs")?;
    let split = season_split(&pairs);

    let mut seasonal = Vec::with_capacity(3);
    for season in SEASONS {
        seasonal.push(estimate(split.get(season), n, cfg.lag_days, MatrixLabel::Season(season)).ctx("estimating")?);
    }
    let pooled = estimate(&pairs, n, cfg.lag_days, MatrixLabel::Pooled).ctx("estimating")?;
    let annual = compose_annual(&seasonal[0], &seasonal[1], &seasonal[2], cfg.season_exponent, DEFAULT_PRUNE)
        .ctx("composing the annual matrix")?;

    let to_augment: Vec<&TransitionMatrix> = seasonal.iter().chain(std::iter::once(&pooled)).collect();
    let augmented: Vec<(AugmentedChain, Vec<usize>)> = to_augment
        .par_iter()
        .map(|p| {
            let pc = add_cemetery(p, &roles)?;
            let leaks = pc.undeclared_leaks().to_vec();
            Ok((add_beaching(&pc, &roles)?, leaks))
        })
        .collect::<Result<_, ulamchain::AbsorbError>>()
        .ctx("augmenting")?;

    cfg.ensure_out()?;
    for p in seasonal.iter().chain([&pooled, &annual]) {
        write_text(&cfg.out_file(&format!("P_{}.csv", p.label())), &matrix_to_string(p))?;
    }
    for (a, _) in &augmented {
        write_text(&cfg.out_file(&format!("A_{}.csv", a.label())), &chain_to_string(a))?;
    }

    let mut report = String::from("[input]\n");
    let r = &set.report;
    let _ = writeln!(report, "drifters = {}", set.drifters.len());
    let _ = writeln!(
        report,
        "rows = {}\naccepted = {}\nmalformed = {}\ndrogued_dropped = {}\nduplicate_times = {}",
        r.rows, r.accepted, r.malformed, r.drogued_dropped, r.duplicate_times
    );
    let _ = writeln!(report, "states = {n}");
    let _ = writeln!(report, "targets = {}", roles.n_targets());
    let _ = writeln!(report, "epoch = {}", cfg.epoch.0);
    kv(&mut report, "lag_days", cfg.lag_days);
    let _ = writeln!(report, "season_exponent = {}", cfg.season_exponent);
    let _ = writeln!(report, "\n[pairs]\ntotal = {}", pairs.len());
    for season in SEASONS {
        let _ = writeln!(report, "{} = {}", season.code(), split.get(season).len());
    }
    let occ = Occupancy::from_pairs(&pairs, n);
    kv(&mut report, "mean_samples_per_visited_box", occ.mean_samples());
    kv(&mut report, "mean_drifters_per_visited_box", occ.mean_drifters());
    for p in seasonal.iter().chain([&pooled, &annual]) {
        report.push('\n');
        matrix_summary(&mut report, p);
    }
    report.push_str("\n[augmentation]\n");
    for (a, leaks) in &augmented {
        let _ = writeln!(report, "{}.undeclared_leaks = {}", a.label(), leaks.len());
        if !leaks.is_empty() {
            log::warn!("{}: {} rows leak without a leaky role", a.label(), leaks.len());
            let shown: Vec<String> = leaks.iter().take(20).map(|s| s.to_string()).collect();
            let _ = writeln!(report, "{}.undeclared_leak_states = {}", a.label(), shown.join(" "));
        }
    }
    if let Some(mc) = &cfg.markov {
        markov_section(&mut report, cfg, mc, &set, &grid)?;
    }
    write_text(&cfg.out_file("build_report.txt"), &report)
}
