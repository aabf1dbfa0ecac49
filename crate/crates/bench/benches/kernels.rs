use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stripwet::renewal::{green_function, Initial, MarkovRenewalProcess};
use stripwet::rng::stream;
use stripwet::{build_pq, build_tilted, critical_beta, free_energy, Boundary, LatticeSampler};
use stripwet_bench::{gauss_kernel, pq_kernel, P};

fn kernel_build(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernel_build");
    g.sample_size(10);
    for n_max in [1024, 8192] {
        g.bench_with_input(BenchmarkId::new("pq", n_max), &n_max, |b, &n| b.iter(|| build_pq(P, 1, black_box(n)).unwrap()));
    }
    g.bench_function("gauss_256x16", |b| b.iter(|| gauss_kernel(black_box(256), 16)));
    g.finish();
}

fn spectral(c: &mut Criterion) {
    let pq = pq_kernel(8192);
    let gauss = gauss_kernel(512, 32);
    let mut g = c.benchmark_group("spectral");
    g.bench_function("critical_beta_pq", |b| b.iter(|| critical_beta(black_box(&pq)).unwrap()));
    g.bench_function("critical_beta_gauss", |b| b.iter(|| critical_beta(black_box(&gauss)).unwrap()));
    let beta = critical_beta(&pq).unwrap() + 0.01;
    g.bench_function("free_energy_pq", |b| b.iter(|| free_energy(black_box(&pq), beta).unwrap()));
    g.finish();
}

fn renewal(c: &mut Criterion) {
    let k = pq_kernel(2048);
    let t = build_tilted(&k, critical_beta(&k).unwrap() + 0.5).unwrap();
    let mrp = MarkovRenewalProcess::new(t.kernel, Initial::Entry(t.entry)).unwrap();
    c.bench_function("green_function_pq_2000", |b| b.iter(|| green_function(black_box(&mrp), 2000)));
}

fn sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("pq_sampler");
    for boundary in [Boundary::Free, Boundary::Constrained] {
        let sampler = LatticeSampler::pq(P, 1, 0.0, 2048, boundary).unwrap();
        let mut rng = stream(1, 0);
        g.bench_function(format!("path_2048_{boundary}"), |b| b.iter(|| sampler.sample_heights(&mut rng)));
    }
    g.bench_function("table_2048", |b| b.iter(|| LatticeSampler::pq(P, 1, 0.0, black_box(2048), Boundary::Free).unwrap()));
    g.finish();
}

criterion_group!(benches, kernel_build, spectral, renewal, sampling);
criterion_main!(benches);
