//! Ball tree construction and query throughput against brute force,
//! at the latent sizes the scorer actually uses (low-dimensional points,
//! k up to 100).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sage_core::balltree::{brute_force_knn, BallTree, DEFAULT_LEAF_SIZE};

fn random_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, dim), |_| rng.gen_range(-3.0..3.0))
}

fn bench_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("balltree_build");
    for &n in &[1_000usize, 10_000] {
        let points = random_points(n, 2, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, points| {
            b.iter(|| BallTree::build(points.clone(), DEFAULT_LEAF_SIZE).unwrap());
        });
    }
    group.finish();
}

fn bench_query(c: &mut Criterion) {
    let points = random_points(10_000, 2, 7);
    let queries = random_points(100, 2, 8);
    let tree = BallTree::build(points.clone(), DEFAULT_LEAF_SIZE).unwrap();

    let mut group = c.benchmark_group("knn_100_queries");
    for &k in &[5usize, 100] {
        group.bench_with_input(BenchmarkId::new("tree", k), &k, |b, &k| {
            b.iter(|| {
                for row in queries.rows() {
                    tree.query(row, k).unwrap();
                }
            });
        });
        group.bench_with_input(BenchmarkId::new("brute", k), &k, |b, &k| {
            b.iter(|| {
                for row in queries.rows() {
                    brute_force_knn(&points, row, k).unwrap();
                }
            });
        });
    }
    group.finish();
}

criterion_group!(benches, bench_build, bench_query);
criterion_main!(benches);
