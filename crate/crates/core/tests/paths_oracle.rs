mod common;

use chrono::NaiveDate;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ulamchain::bayes::ChainSchedule;
use ulamchain::ingest::{Season, SeasonCalendar};
use ulamchain::paths::{most_probable_path, most_probable_paths, unconstrained_best_path, PathError};
use ulamchain::sparse::SparseMatrix;
use ulamchain::ulam::MatrixLabel;

/// Largest log-probability over every path `s, x_1, …, x_{K−1}, target`
/// with `s` a source and all `x` in the domain, summing logs left to right.
fn enumerate_best(schedule: &ChainSchedule<'_>, sources: &[usize], m: usize, k: usize) -> f64 {
    let n = schedule.n_domain();
    let mats: Vec<Dense> = (0..k).map(|j| schedule.chain_at(j).matrix().to_dense()).collect();
    let mut best = f64::NEG_INFINITY;
    for &s in sources {
        for_each_sequence(n, k - 1, |mid| {
            let mut lp = 0.0;
            let mut cur = s;
            for (j, &x) in mid.iter().enumerate() {
                lp += mats[j][cur][x].ln();
                cur = x;
            }
            lp += mats[k - 1][cur][n + m].ln();
            if lp > best {
                best = lp;
            }
        });
    }
    best
}

#[test]
fn dp_equals_enumeration_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut feasible = 0;
    for trial in 0..200 {
        let n = rng.random_range(2..=6);
        let roles = loop {
            let r = random_roles(&mut rng, n, 2);
            if r.n_targets() > 0 {
                break r;
            }
        };
        let chains: Vec<_> = [Season::Winter, Season::Summer, Season::SpringFall]
            .iter()
            .map(|&s| random_chain(&mut rng, n, &roles, MatrixLabel::Season(s)))
            .collect();
        let start = NaiveDate::from_ymd_opt(2014, 6, 15).unwrap();
        let sched = if trial % 2 == 0 {
            ChainSchedule::Autonomous(&chains[0])
        } else {
            ChainSchedule::seasonal(&chains[0], &chains[1], &chains[2], SeasonCalendar::default(), start).unwrap()
        };
        let k = rng.random_range(1..=6);
        let m = rng.random_range(1..=roles.n_targets());
        let sources: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        let sources = if sources.is_empty() { vec![0] } else { sources };
        let oracle = enumerate_best(&sched, &sources, m, k);
        match most_probable_path(&sched, &sources, m, k) {
            Ok(p) => {
                feasible += 1;
                assert_eq!(p.log_prob, oracle, "trial {trial}");
                assert_eq!(p.states.len(), k + 1);
                assert!(sources.contains(&p.source()));
                assert_eq!(*p.states.last().unwrap(), n + m);
                assert!(p.states[..k].iter().all(|&s| s < n));
                assert!(p.log_prob.is_finite());
                let sum: f64 = p.step_log_probs.iter().sum();
                assert!((sum - p.log_prob).abs() <= 1e-12);
            }
            Err(PathError::Infeasible { .. }) => assert_eq!(oracle, f64::NEG_INFINITY, "trial {trial}"),
            Err(e) => panic!("trial {trial}: {e}"),
        }
    }
    assert!(feasible > 100);
}

#[test]
fn per_source_results_bound_the_global_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 5;
    let roles = ulamchain::StateRoles::new(n, [0], [(3, 0.4), (4, 0.3)], [(3, 1), (4, 2)], [0, 1, 2]).unwrap();
    let a = random_chain(&mut rng, n, &roles, MatrixLabel::Pooled);
    let s = ChainSchedule::Autonomous(&a);
    let r = most_probable_paths(&s, &[0, 1, 2], 2, 4).unwrap();
    let best_single = r
        .per_source
        .iter()
        .filter_map(|(_, p)| p.as_ref().ok())
        .map(|p| p.log_prob)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.global.as_ref().unwrap().log_prob, best_single);
    for (src, p) in &r.per_source {
        if let Ok(p) = p {
            assert_eq!(p.source(), *src);
            assert_eq!(p.log_prob, enumerate_best(&s, &[*src], 2, 4));
        }
    }
}

#[test]
fn autonomous_schedule_equals_repeated_seasonal_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let roles = random_roles(&mut rng, 6, 1);
    let roles = if roles.n_targets() == 0 {
        ulamchain::StateRoles::new(6, [], [(5, 0.5)], [(5, 1)], []).unwrap()
    } else {
        roles
    };
    let a = random_chain(&mut rng, 6, &roles, MatrixLabel::Pooled);
    let auto = ChainSchedule::Autonomous(&a);
    let start = NaiveDate::from_ymd_opt(2014, 1, 1).unwrap();
    let same = ChainSchedule::seasonal(&a, &a, &a, SeasonCalendar::default(), start).unwrap();
    for k in 1..=8 {
        let x = most_probable_path(&auto, &[0, 1, 2], 1, k);
        let y = most_probable_path(&same, &[0, 1, 2], 1, k);
        match (x, y) {
            (Ok(x), Ok(y)) => {
                assert_eq!(x.states, y.states);
                assert_eq!(x.log_prob, y.log_prob);
            }
            (Err(_), Err(_)) => {}
            _ => panic!("feasibility differs at K = {k}"),
        }
    }
}

/// Best walk of at most `max_len` steps by brute force over lengths.
fn bounded_best(p: &Dense, s: usize, t: usize, max_len: usize) -> f64 {
    let n = p.len();
    let mut best = if s == t { 0.0 } else { f64::NEG_INFINITY };
    for len in 1..=max_len {
        for_each_sequence(n, len - 1, |mid| {
            let mut lp = 0.0;
            let mut cur = s;
            for &x in mid {
                lp += p[cur][x].ln();
                cur = x;
            }
            lp += p[cur][t].ln();
            if lp > best {
                best = lp;
            }
        });
    }
    best
}

#[test]
fn dijkstra_matches_bounded_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let p = random_substochastic(&mut rng, 8, 0.35, &[0, 1, 2]);
        let sp = SparseMatrix::from_dense(&p).unwrap();
        for (s, t) in [(0, 7), (3, 1), (5, 5), (2, 6)] {
            let oracle = bounded_best(&p, s, t, 7);
            match unconstrained_best_path(&sp, s, t) {
                Ok(r) => {
                    assert!((r.log_prob - oracle).abs() < 1e-12, "{s}→{t}: {} vs {oracle}", r.log_prob);
                    assert_eq!(r.source(), s);
                    assert_eq!(*r.states.last().unwrap(), t);
                }
                Err(_) => assert_eq!(oracle, f64::NEG_INFINITY),
            }
        }
    }
}
