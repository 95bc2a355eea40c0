use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use semirandom::numerics::least_squares;
use semirandom::oracle::{build_d, path_expand};
use semirandom::training::{Loss, Trainable};
use semirandom::ActivationOrder;
use semirandom_bench::{deep_lsr, sine};

fn forward(c: &mut Criterion) {
    let ds = sine(500);
    let mut group = c.benchmark_group("forward_batch_500");
    for width in [10, 50, 250] {
        let model = deep_lsr(&ds, width, 2);
        group.bench_with_input(BenchmarkId::from_parameter(width), &model, |b, m| {
            b.iter(|| m.forward_batch(black_box(&ds.x)).unwrap())
        });
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let ds = sine(500);
    let mut group = c.benchmark_group("gradients_500");
    for width in [10, 50, 250] {
        let model = deep_lsr(&ds, width, 2);
        group.bench_with_input(BenchmarkId::from_parameter(width), &model, |b, m| {
            b.iter(|| m.gradients(black_box(&ds.x), &ds.y, Loss::Squared, 0).unwrap())
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let ds = sine(1000);
    let mut group = c.benchmark_group("least_squares_1000");
    for n in [10, 50, 200] {
        let model = deep_lsr(&ds, n, 1);
        let d = build_d(&ds.x, &model.gates().layers()[0], ActivationOrder(0)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| {
            b.iter(|| least_squares(black_box(d), ds.y.as_slice()).unwrap())
        });
    }
    group.finish();
}

fn paths(c: &mut Criterion) {
    let ds = sine(1);
    let model = deep_lsr(&ds, 6, 3);
    let x = ds.x.row(0).to_vec();
    c.bench_function("path_expand_6x3", |b| b.iter(|| path_expand(black_box(&model), &x).unwrap()));
}

criterion_group!(benches, forward, gradients, oracle, paths);
criterion_main!(benches);
