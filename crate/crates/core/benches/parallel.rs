//! Sequential versus parallel throughput on the two data-parallel surfaces:
//! contract sweeps over a parameter grid and batches of independent
//! simulation runs.
//!
//! Build with the default features to compare both paths; with
//! `--no-default-features` only the sequential benchmarks run.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use flowchain::economics::{sweep_seq, EconParams, VaryParam};
use flowchain::simnet::{run_batch_seq, SimScenario, Workload};

#[cfg(feature = "parallel")]
use flowchain::economics::sweep_par;
#[cfg(feature = "parallel")]
use flowchain::simnet::run_batch_par;

fn epsilon_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64 / (n + 1) as f64).collect()
}

fn scenario_batch(n: u64) -> Vec<SimScenario> {
    (0..n)
        .map(|seed| {
            let mut scenario = SimScenario::reference("bench", seed);
            scenario.workload = Workload {
                flows: 50,
                interarrival: 5,
            };
            scenario
        })
        .collect()
}

fn bench_sweep(c: &mut Criterion) {
    let base = EconParams::default();
    let mut group = c.benchmark_group("contract_sweep");
    for size in [1_000usize, 50_000] {
        let grid = epsilon_grid(size);
        group.throughput(Throughput::Elements(size as u64));
        group.bench_with_input(BenchmarkId::new("seq", size), &grid, |b, grid| {
            b.iter(|| sweep_seq(&base, VaryParam::Epsilon, grid).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", size), &grid, |b, grid| {
            b.iter(|| sweep_par(&base, VaryParam::Epsilon, grid).unwrap())
        });
    }
    group.finish();
}

fn bench_sim_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("sim_batch");
    group.sample_size(10);
    for size in [4u64, 16] {
        let batch = scenario_batch(size);
        group.throughput(Throughput::Elements(size));
        group.bench_with_input(BenchmarkId::new("seq", size), &batch, |b, batch| {
            b.iter(|| run_batch_seq(batch).unwrap())
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", size), &batch, |b, batch| {
            b.iter(|| run_batch_par(batch).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep, bench_sim_batch);
criterion_main!(benches);
