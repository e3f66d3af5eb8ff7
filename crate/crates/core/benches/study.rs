use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use primsplit::experiment::{convergence_study, Execution, StudyConfig};

fn bench_config() -> StudyConfig {
    let mut cfg = StudyConfig::default();
    cfg.grid.nx = 16;
    cfg.grid.nz = 8;
    cfg.scheme.n_list = vec![4, 8, 16];
    cfg.reference.n_ref_factor = 8;
    cfg.study.paths = 8;
    cfg
}

fn study_schedules(c: &mut Criterion) {
    let cfg = bench_config();
    let mut group = c.benchmark_group("convergence_study");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| convergence_study(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, study_schedules);
criterion_main!(benches);
