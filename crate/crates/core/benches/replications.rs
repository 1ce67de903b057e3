use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use qrmab::bandit::AlgorithmKind;
use qrmab::experiment::{run_outcomes, Scenario};
use qrmab::{Execution, RunConfig, SamplingPolicy};

fn batches(c: &mut Criterion) {
    let scenario = Scenario::new(5, 1);
    let mixed = SamplingPolicy::delta_uniform(0.5, 1.0).unwrap();
    let configs = [
        (
            "qr-mab-ucb",
            RunConfig::qr_mab(AlgorithmKind::Ucb, mixed, 0.8, 0.6, 5000),
        ),
        (
            "qr-mab-ts",
            RunConfig::qr_mab(AlgorithmKind::Ts, mixed, 0.8, 0.6, 5000),
        ),
        (
            "base-ufrb-ucb",
            RunConfig::base_ufrb(AlgorithmKind::Ucb, SamplingPolicy::Lifo, 0.8, 0.3, 5000),
        ),
    ];
    let mut group = c.benchmark_group("batch_of_64");
    group.sample_size(10);
    for (name, cfg) in configs {
        for (mode, exec) in [
            ("serial", Execution::Serial),
            ("parallel", Execution::Parallel),
        ] {
            group.bench_with_input(BenchmarkId::new(name, mode), &cfg, |b, cfg| {
                b.iter(|| black_box(run_outcomes(cfg, &scenario, 64, exec).unwrap()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batches);
criterion_main!(benches);
