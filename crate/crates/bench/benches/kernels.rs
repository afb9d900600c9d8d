use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use terpscape::classify::{Gbdt, GbdtParams};
use terpscape::cluster::{agglomerative, external_metrics, kmeans, silhouette, AgglomerativeConfig, KMeansConfig};
use terpscape::dimred::{tsne, TsneConfig};
use terpscape::synthetic::{gaussian_blobs, BlobSpec};

fn blobs(n: usize, dims: usize) -> (terpscape::Matrix, Vec<usize>) {
    let per = n / 3;
    gaussian_blobs(&BlobSpec::isotropic(vec![per, per, n - 2 * per], dims, 6.0, 1.0), 1)
}

fn bench_kmeans(c: &mut Criterion) {
    let mut g = c.benchmark_group("kmeans");
    for n in [1_000, 10_000] {
        let (x, _) = blobs(n, 20);
        let cfg = KMeansConfig {
            k: 3,
            ..KMeansConfig::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| kmeans(black_box(x), &cfg).unwrap())
        });
    }
    g.finish();
}

fn bench_ward(c: &mut Criterion) {
    let (x, _) = blobs(1_000, 20);
    let cfg = AgglomerativeConfig::default();
    c.bench_function("ward/1000", |b| b.iter(|| agglomerative(black_box(&x), &cfg).unwrap()));
}

fn bench_metrics(c: &mut Criterion) {
    let (x, y) = blobs(2_000, 10);
    let pred: Vec<usize> = y
        .iter()
        .enumerate()
        .map(|(i, &l)| if i % 7 == 0 { (l + 1) % 3 } else { l })
        .collect();
    c.bench_function("external_metrics/2000", |b| {
        b.iter(|| external_metrics(black_box(&y), black_box(&pred)).unwrap())
    });
    c.bench_function("silhouette/2000", |b| {
        b.iter(|| silhouette(black_box(&x), black_box(&pred)).unwrap())
    });
}

fn bench_tsne(c: &mut Criterion) {
    let (x, _) = blobs(300, 10);
    let cfg = TsneConfig {
        iters: 250,
        ..TsneConfig::default()
    };
    let mut g = c.benchmark_group("tsne");
    g.sample_size(10);
    g.bench_function("300x10/250it", |b| b.iter(|| tsne(black_box(&x), &cfg, &[]).unwrap()));
    g.finish();
}

fn bench_gbdt(c: &mut Criterion) {
    let (x, y) = blobs(6_000, 20);
    let p = GbdtParams {
        rounds: 20,
        ..GbdtParams::default()
    };
    let mut g = c.benchmark_group("gbdt");
    g.sample_size(10);
    g.bench_function("6000x20/20rounds", |b| {
        b.iter(|| Gbdt::fit(&p, black_box(&x), &y, 3).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_kmeans, bench_ward, bench_metrics, bench_tsne, bench_gbdt);
criterion_main!(benches);
