use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ousio::cutoff::{build_null_from_scores, NullConfig};
use ousio::emd::{eemd, EemdConfig};
use ousio::series::WindowConfig;
use ousio::{Dimension, Execution, PdsScore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn series(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|t| 0.1 + (t as f64 / 40.0).sin() * 0.05 + rng.random_range(-0.1..0.1))
        .collect()
}

fn bench_eemd(c: &mut Criterion) {
    let mut group = c.benchmark_group("eemd");
    group.sample_size(10);
    let x = series(1500);
    for (name, execution) in MODES {
        let cfg = EemdConfig { execution, ..EemdConfig::default() };
        group.bench_with_input(BenchmarkId::new(name, x.len()), &x, |b, x| b.iter(|| eemd(black_box(x), &cfg).unwrap()));
    }
    group.finish();
}

fn bench_null(c: &mut Criterion) {
    let mut group = c.benchmark_group("null");
    group.sample_size(10);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let scores: Vec<Option<PdsScore>> = (0..75_000)
        .map(|_| {
            rng.random_bool(0.8).then(|| PdsScore {
                power: rng.random_range(-0.3..0.4),
                danger: rng.random_range(-0.2..0.4),
                structure: 0.0,
            })
        })
        .collect();
    for (name, execution) in MODES {
        let cfg = NullConfig { execution, ..NullConfig::default() };
        group.bench_function(BenchmarkId::new(name, scores.len()), |b| {
            b.iter(|| {
                build_null_from_scores("bench", black_box(&scores), WindowConfig::default(), &Dimension::ALL, &cfg).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_eemd, bench_null);
criterion_main!(benches);
