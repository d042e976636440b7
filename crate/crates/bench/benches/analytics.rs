use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gcmac_core::selection::order_stat_rate_pmf;
use gcmac_core::{evaluate, optimize, Regime, Scenario};

fn metrics(c: &mut Criterion) {
    let sc = Scenario::reference();
    let mut group = c.benchmark_group("evaluate");
    for regime in Regime::ALL {
        group.bench_function(regime.to_string(), |b| {
            b.iter(|| evaluate(black_box(&sc), regime).unwrap())
        });
    }
    group.finish();
}

fn grid_search(c: &mut Criterion) {
    let sc = Scenario::reference();
    c.bench_function("optimize/sat-ti", |b| b.iter(|| optimize(black_box(&sc), Regime::SAT_TI).unwrap()));
    c.bench_function("optimize/sat-tv", |b| b.iter(|| optimize(black_box(&sc), Regime::SAT_TV).unwrap()));
}

fn order_statistics(c: &mut Criterion) {
    let pi = vec![0.1; 10];
    c.bench_function("order_stat_rate_pmf/k=7,K=20,M=10", |b| {
        b.iter(|| order_stat_rate_pmf(7, 20, black_box(&pi)).unwrap())
    });
}

criterion_group!(benches, metrics, grid_search, order_statistics);
criterion_main!(benches);
