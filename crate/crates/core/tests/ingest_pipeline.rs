use ulamchain::grid::{build_grid, Bounds, WetMask};
use ulamchain::ingest::{extract_pairs, read_trajectories, season_split, Epoch, Season, SeasonCalendar};
use ulamchain::synth::{simulate, trajectories_to_csv, ReleasePlan, SeasonalKernels};
use ulamchain::ulam::{estimate, MatrixLabel};

fn unit_grid() -> ulamchain::GridCovering {
    build_grid(
        Bounds {
            lon_min: 0.0,
            lon_max: 1.0,
            lat_min: 0.0,
            lat_max: 1.0,
        },
        0.25,
        &WetMask::all_wet(),
    )
    .unwrap()
}

#[test]
fn resident_drifter_gives_self_pairs() {
    let csv: String = std::iter::once("id,time_days,lon,lat".to_string())
        .chain((0..=10).map(|t| format!("a,{t},0.1,0.1")))
        .collect::<Vec<_>>()
        .join("\n");
    let set = read_trajectories(csv.as_bytes()).unwrap();
    let g = unit_grid();
    let pairs = extract_pairs(&set, &g, 5.0, &SeasonCalendar::default(), Epoch::default()).unwrap();
    assert_eq!(pairs.len(), 2);
    assert!(pairs.iter().all(|p| p.from == 0 && p.to == Some(0)));
}

#[test]
fn exit_and_seasons() {
    // epoch 2014-03-08: day 0 is winter, day 150 (2014-08-05) is summer
    let csv = "id,time_days,lon,lat,drogued\n\
               a,0,0.1,0.1,0\n\
               a,5,-3.0,0.1,0\n\
               b,150,0.6,0.6,0\n\
               b,155,0.6,0.9,0\n\
               c,1,0.6,0.6,1\n\
               d,x,0.1,0.1,0\n";
    let set = read_trajectories(csv.as_bytes()).unwrap();
    assert_eq!(set.report.malformed, 1);
    assert_eq!(set.report.drogued_dropped, 1);
    let g = unit_grid();
    let pairs = extract_pairs(&set, &g, 5.0, &SeasonCalendar::default(), Epoch::default()).unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0].to, None);
    assert_eq!(pairs[0].season, Season::Winter);
    assert_eq!(pairs[1].season, Season::Summer);
    let split = season_split(&pairs);
    assert_eq!(split.total(), 2);
    assert_eq!(split.get(Season::SpringFall).len(), 0);
}

#[test]
fn unsorted_rows_are_sorted() {
    let csv = "id,time_days,lon,lat\na,10,0.1,0.1\na,0,0.1,0.1\na,5,0.1,0.1\n";
    let set = read_trajectories(csv.as_bytes()).unwrap();
    let t: Vec<f64> = set.drifters[0].points.iter().map(|p| p.time_days).collect();
    assert_eq!(t, vec![0.0, 5.0, 10.0]);
}

#[test]
fn synthetic_round_trip_matches_direct_counts() {
    let g = build_grid(
        Bounds {
            lon_min: 0.0,
            lon_max: 0.5,
            lat_min: 0.0,
            lat_max: 0.25,
        },
        0.25,
        &WetMask::all_wet(),
    )
    .unwrap();
    let k = SeasonalKernels::autonomous(vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.8, 0.0]]).unwrap();
    let plan = ReleasePlan {
        n_drifters: 50,
        steps: 40,
        samples_per_step: 5,
        start_day_min: 0.0,
        start_day_max: 365.0,
        start_states: None,
    };
    let cal = SeasonCalendar::default();
    let set = simulate(&g, &k, &plan, 5.0, &cal, Epoch::default(), 42).unwrap();
    let text = trajectories_to_csv(&set);
    let parsed = read_trajectories(text.as_bytes()).unwrap();
    assert_eq!(parsed.drifters, set.drifters);

    // direct count over consecutive kernel-step samples
    let mut counts = [[0u64; 3]; 2];
    for d in &set.drifters {
        let pos: Vec<_> = d.points.iter().step_by(5).collect();
        for w in pos.windows(2) {
            let from = g.point_to_state(w[0].lon, w[0].lat).unwrap();
            let to = g.point_to_state(w[1].lon, w[1].lat).map_or(2, |s| s);
            counts[from][to] += 1;
        }
        // a track that exits ends with an off-grid sample between strides
        let last = d.points.last().unwrap();
        if g.point_to_state(last.lon, last.lat).is_none() && (d.points.len() - 1) % 5 != 0 {
            let prev = d.points[d.points.len() - 2];
            counts[g.point_to_state(prev.lon, prev.lat).unwrap()][2] += 1;
        }
    }
    let pairs = extract_pairs(&parsed, &g, 5.0, &cal, Epoch::default()).unwrap();
    let p = estimate(&pairs, 2, 5.0, MatrixLabel::Pooled).unwrap();
    for i in 0..2 {
        let total: u64 = counts[i].iter().sum();
        assert_eq!(p.row_counts().unwrap()[i], total);
        for j in 0..2 {
            assert_eq!(p.matrix().get(i, j), counts[i][j] as f64 / total as f64);
        }
    }
}
