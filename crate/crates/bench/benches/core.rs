use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ldvote_core::analytic::ld_interim;
use ldvote_core::engine::{run_election, Behavior};
use ldvote_core::equilibrium::{robustness_sweep, solve_interior_ld, threshold_grid, DEFAULT_TOL};
use ldvote_core::montecarlo::simulate_batch;
use ldvote_core::rng::ElectionSeed;
use ldvote_core::{Electorate, PrecisionDistribution, StrategyProfileLD, System};

fn lab() -> PrecisionDistribution {
    PrecisionDistribution::uniform(0.5, 0.7).unwrap()
}

fn analytic(c: &mut Criterion) {
    let dist = lab();
    let mut g = c.benchmark_group("ld_interim");
    for (n, k) in [(5, 1), (15, 3), (125, 25)] {
        let el = Electorate::new(n, k, 0.7).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &el, |b, el| {
            b.iter(|| ld_interim(black_box(0.55), el, &dist).unwrap())
        });
    }
    g.finish();

    let el = Electorate::new(15, 3, 0.7).unwrap();
    c.bench_function("solve_interior_ld/15", |b| {
        b.iter(|| solve_interior_ld(black_box(&el), &dist, DEFAULT_TOL).unwrap())
    });
    let grid = threshold_grid(0.5, 0.7, 0.002).unwrap();
    c.bench_function("robustness_sweep/15", |b| {
        b.iter(|| robustness_sweep(System::Ld, &el, &dist, black_box(&grid)).unwrap())
    });
}

fn engine(c: &mut Criterion) {
    let dist = lab();
    let behavior = Behavior::Ld(StrategyProfileLD::canonical(0.6, &dist).unwrap());
    let mut g = c.benchmark_group("run_election");
    for (n, k) in [(5, 1), (15, 3), (125, 25)] {
        let el = Electorate::new(n, k, 0.7).unwrap();
        let mut i = 0u64;
        g.bench_with_input(BenchmarkId::from_parameter(n), &el, |b, el| {
            b.iter(|| {
                i += 1;
                run_election(System::Ld, el, &dist, &behavior, ElectionSeed::new(7, i)).unwrap()
            })
        });
    }
    g.finish();

    let el = Electorate::new(15, 3, 0.7).unwrap();
    let reps = 100_000;
    let mut g = c.benchmark_group("simulate_batch");
    g.throughput(Throughput::Elements(reps));
    g.sample_size(10);
    g.bench_function("15", |b| {
        b.iter(|| simulate_batch(System::Ld, &el, &dist, &behavior, reps, black_box(3)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, analytic, engine);
criterion_main!(benches);
