use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use cutofflab_bench::{families, table};
use cutofflab_core::green;
use cutofflab_core::sde::{sample_tau, DriftInterp, Scheme, SimConfig};
use cutofflab_core::{build_default, make_sphere};

fn table_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("table_build");
    g.sample_size(10);
    for w in families() {
        for n in [64u32, 1 << 20] {
            g.bench_with_input(BenchmarkId::new(w.key(), n), &n, |b, &n| {
                b.iter(|| build_default(&w, n).unwrap())
            });
        }
    }
    g.finish();
}

fn moments(c: &mut Criterion) {
    let mut g = c.benchmark_group("moments");
    g.sample_size(10);
    for w in families() {
        let t = table(&w, 4096);
        g.bench_function(BenchmarkId::new("mean", w.key()), |b| {
            b.iter(|| green::mean_tau(black_box(&t)))
        });
        g.bench_function(BenchmarkId::new("var", w.key()), |b| {
            b.iter(|| green::var_tau(black_box(&t)))
        });
        g.bench_function(BenchmarkId::new("moment_k4", w.key()), |b| {
            b.iter(|| green::moment_k(black_box(&t), 4).unwrap())
        });
    }
    g.finish();
}

fn drift(c: &mut Criterion) {
    let w = make_sphere();
    let t = table(&w, 64);
    let d = DriftInterp::new(&t);
    let rs: Vec<f64> = (1..1000).map(|i| w.length() * i as f64 / 1000.0).collect();
    c.bench_function("drift_interp_1000", |b| {
        b.iter(|| rs.iter().map(|r| d.eval(*r)).sum::<f64>())
    });
}

fn simulation(c: &mut Criterion) {
    let w = make_sphere();
    let t = table(&w, 8);
    let cfg = SimConfig::new(&w, 8, Scheme::Autonomous, 100, 1);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    g.bench_function("sphere_n8_100_paths", |b| {
        b.iter(|| sample_tau(&t, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, table_build, moments, drift, simulation);
criterion_main!(benches);
