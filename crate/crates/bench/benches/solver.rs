//! Timing for the hot paths: the per-row simplex QP, one full fit at growing
//! n with a fixed iteration budget, and out-of-sample prediction.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sgl_core::{
    fit_sgl, gaussian_blobs, solve, BlobSpec, Dataset, OosPredictor, RowQpBuilder, SolverConfig,
};

fn blobs(n_per: usize, dim: usize, seed: u64) -> Dataset {
    gaussian_blobs(&BlobSpec {
        n_per_cluster: n_per,
        k: 3,
        dim,
        separation: 10.0,
        std_dev: 1.0,
        seed,
    })
}

fn bench_row_qp(c: &mut Criterion) {
    let mut group = c.benchmark_group("row_qp");
    let data = blobs(200, 10, 1);
    for m in [10usize, 50, 100] {
        let anchors = sgl_core::select_anchors(&data, m, 1, 50).unwrap();
        let builder = RowQpBuilder::single(data.features(), &anchors.centers, 1.0).unwrap();
        let qp = builder.row(None, 0.0, 0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(m), &qp, |b, qp| {
            b.iter(|| solve(black_box(qp), 1e-8))
        });
    }
    group.finish();
}

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_sgl");
    group.sample_size(10);
    for n_per in [333usize, 667, 1333] {
        let data = blobs(n_per, 10, 2);
        let config = SolverConfig {
            max_iter: 5,
            fixed_iterations: true,
            ..SolverConfig::new(3, 50)
        };
        group.throughput(Throughput::Elements(data.n_samples() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(data.n_samples()), &data, |b, d| {
            b.iter(|| fit_sgl(black_box(d), &config).unwrap())
        });
    }
    group.finish();
}

fn bench_predict(c: &mut Criterion) {
    let train = blobs(100, 10, 3);
    let model = fit_sgl(&train, &SolverConfig::new(3, 30)).unwrap();
    let queries = blobs(1000, 10, 4);
    let mut group = c.benchmark_group("predict");
    group.throughput(Throughput::Elements(queries.n_samples() as u64));
    for k in [1usize, 5] {
        let predictor = OosPredictor::from_model(&model, k).unwrap();
        group.bench_with_input(BenchmarkId::new("knn", k), &predictor, |b, p| {
            b.iter(|| p.predict(black_box(queries.features())).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_row_qp, bench_fit, bench_predict);
criterion_main!(benches);
