use chrono::NaiveDate;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use ulamchain::absorb::augment;
use ulamchain::bayes::{infer_source, ChainSchedule, InferOptions, Observation};
use ulamchain::ingest::{Season, SeasonCalendar};
use ulamchain::paths::most_probable_path;
use ulamchain::sparse::DEFAULT_PRUNE;
use ulamchain::spectral::{dominant_eigs, EigenOptions};
use ulamchain::ulam::{compose_annual, estimate, MatrixLabel};
use ulamchain_bench::*;

const SIDES: [usize; 2] = [20, 40];

fn bench_estimate(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate");
    for side in SIDES {
        let p = lattice(side, MatrixLabel::Season(Season::Winter), 1);
        let pairs = sample_pairs(&p, 200_000, 2);
        g.bench_with_input(BenchmarkId::from_parameter(side * side), &pairs, |b, pairs| {
            b.iter(|| estimate(black_box(pairs), side * side, LAG_DAYS, MatrixLabel::Pooled).unwrap())
        });
    }
    g.finish();
}

fn bench_compose(c: &mut Criterion) {
    let mut g = c.benchmark_group("compose_annual");
    g.sample_size(10);
    for side in SIDES {
        let [w, s, sf] = seasonal_lattices(side, 3);
        g.bench_function(BenchmarkId::from_parameter(side * side), |b| {
            b.iter(|| compose_annual(&w, &s, &sf, 18, DEFAULT_PRUNE).unwrap())
        });
    }
    g.finish();
}

fn bench_eigs(c: &mut Criterion) {
    let mut g = c.benchmark_group("dominant_eigs");
    for side in SIDES {
        let p = lattice(side, MatrixLabel::Pooled, 4);
        let opts = EigenOptions::default();
        g.bench_function(BenchmarkId::from_parameter(side * side), |b| {
            b.iter(|| dominant_eigs(p.matrix(), 4, &opts).unwrap())
        });
    }
    g.finish();
}

fn bench_inverse(c: &mut Criterion) {
    let crash = NaiveDate::from_ymd_opt(2014, 3, 8).unwrap();
    let mut g = c.benchmark_group("inverse");
    for side in SIDES {
        let roles = coastal_roles(side);
        let chains = seasonal_lattices(side, 5).map(|p| augment(&p, &roles).unwrap());
        let [w, s, sf] = &chains;
        let sched = ChainSchedule::seasonal(w, s, sf, SeasonCalendar::default(), crash).unwrap();
        let sources = roles.sources().to_vec();
        let obs: Vec<Observation> = (1..=4)
            .map(|m| Observation {
                target: m,
                days: LAG_DAYS * (side + 10 * m) as f64,
                name: format!("b{m}"),
            })
            .collect();
        g.bench_function(BenchmarkId::new("infer_source", side * side), |b| {
            b.iter(|| infer_source(&sched, &sources, &obs, None, InferOptions::default()).unwrap())
        });
        g.bench_function(BenchmarkId::new("most_probable_path", side * side), |b| {
            b.iter(|| most_probable_path(&sched, &sources, 1, 2 * side).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_estimate, bench_compose, bench_eigs, bench_inverse);
criterion_main!(benches);
