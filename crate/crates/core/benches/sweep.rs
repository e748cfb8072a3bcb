use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dlo_msd::parallel::Execution;
use dlo_msd::scenario::{sweep, RunSettings};
use dlo_msd::{CableSpec, RandomizationRanges, Scenario};

fn sweep_execution(c: &mut Criterion) {
    let ranges = RandomizationRanges {
        time_step: [5e-6, 1e-5],
        ..RandomizationRanges::default()
    };
    let scenario = Scenario {
        settle_duration: 0.01,
        ramp_duration: 0.01,
        total_duration: 0.05,
        ..Scenario::default()
    };
    let settings = RunSettings::default();
    let base = CableSpec::default();

    let mut group = c.benchmark_group("sweep_16_runs");
    group.sample_size(10);
    for (name, execution) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_with_input(
            BenchmarkId::from_parameter(name),
            &execution,
            |b, execution| {
                b.iter(|| sweep(&ranges, &base, &scenario, 16, &settings, *execution).unwrap())
            },
        );
    }
    group.finish();
}

criterion_group!(benches, sweep_execution);
criterion_main!(benches);
