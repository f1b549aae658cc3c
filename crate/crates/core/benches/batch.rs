use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ellipsoid_fit::batch::{compare_sweep, compare_sweep_sequential};
use ellipsoid_fit::{EulerAngles, FitConfig, SynthSpec};

fn sweeps(c: &mut Criterion) {
    let cfg = FitConfig::default();
    let cases = [
        ("chi10", SynthSpec::new([10.0, 3.0, 1.0], EulerAngles::new(50.0, 60.0, 40.0), 6, 0)),
        ("chi1e4", SynthSpec::new([10000.0, 50.0, 1.0], EulerAngles::new(30.0, 80.0, 70.0), 6, 0)),
    ];
    let mut group = c.benchmark_group("compare_sweep");
    group.sample_size(20);
    for (name, spec) in &cases {
        for trials in [16usize, 128] {
            group.bench_with_input(BenchmarkId::new(format!("{name}/parallel"), trials), &trials, |b, &n| {
                b.iter(|| compare_sweep(spec, &cfg, 1, n))
            });
            group.bench_with_input(BenchmarkId::new(format!("{name}/sequential"), trials), &trials, |b, &n| {
                b.iter(|| compare_sweep_sequential(spec, &cfg, 1, n))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweeps);
criterion_main!(benches);
