//! Same workloads on a single-thread rayon pool and on the default pool.
//! Build with `--no-default-features` to get the plain-iterator fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use kernelkit::dcor::{permutation_test, DcorInput};
use kernelkit::kernel::gram_matrix;
use kernelkit::mmd::{pairwise_density_distances, DistanceMetric};
use kernelkit::{KernelSpec, Sample};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("sequential", one), ("parallel", all)]
}

fn bench(c: &mut Criterion) {
    let kernel = KernelSpec::gaussian(1.0).unwrap();
    let pts = points(600, 3, 1);
    let samples: Vec<Sample> = (0..30)
        .map(|i| Sample::new(points(60, 2, 10 + i)).unwrap())
        .collect();
    let x = DcorInput::univariate(&points(80, 1, 2).concat());
    let y = DcorInput::univariate(&points(80, 1, 3).concat());

    let mut g = c.benchmark_group("workloads");
    g.sample_size(20);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("gram_600x3", name), &pool, |b, pool| {
            b.iter(|| pool.install(|| gram_matrix(&kernel, &pts).unwrap()))
        });
        g.bench_with_input(
            BenchmarkId::new("pairwise_mmd_30x60", name),
            &pool,
            |b, pool| {
                b.iter(|| {
                    pool.install(|| {
                        pairwise_density_distances(&samples, &kernel, DistanceMetric::RkhsNorm)
                            .unwrap()
                    })
                })
            },
        );
        g.bench_with_input(
            BenchmarkId::new("dcor_perm_80x999", name),
            &pool,
            |b, pool| b.iter(|| pool.install(|| permutation_test(&x, &y, 999, 7).unwrap())),
        );
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
