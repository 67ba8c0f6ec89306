//! Hot kernels on the desk mesh: one rayon thread against the default pool.

use criterion::{criterion_group, criterion_main, Criterion};

use dgbp::config::RunConfig;
use dgbp::driver::Solver;

fn desk_solver() -> Solver {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk400.json");
    let cfg = RunConfig::load(std::path::Path::new(path)).unwrap();
    Solver::from_config(&cfg, None).unwrap()
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("single", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("pool", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn kernels(c: &mut Criterion) {
    let solver = desk_solver();
    let rs = solver.initialize().unwrap();
    let op = solver.collisions.as_ref().unwrap();
    let mut out = rs.state.clone();
    let mut group = c.benchmark_group("desk400");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(format!("collisions/{name}"), |b| {
            b.iter(|| pool.install(|| op.apply(&rs.state).unwrap()))
        });
        group.bench_function(format!("transport/{name}"), |b| {
            b.iter(|| pool.install(|| solver.transport.rate(&rs.state, &rs.field.e).unwrap()))
        });
        group.bench_function(format!("rhs/{name}"), |b| {
            b.iter(|| pool.install(|| solver.rhs(&rs.state, &rs.field, &mut out).unwrap()))
        });
        group.bench_function(format!("step/{name}"), |b| {
            b.iter(|| pool.install(|| solver.step(&rs, 1.0).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
