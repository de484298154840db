use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mlnsim_core::channel::{effective_signal, sample_channel};
use mlnsim_core::codes::{example1_delta, pairwise_codebook_from_delta};
use mlnsim_core::linalg::{sample_cn_matrix, svd};
use mlnsim_core::link::ml_detect;
use mlnsim_core::pep::pep_curve;
use mlnsim_core::query::build_query;
use mlnsim_core::{DifferenceMatrix, PepMethod, QueryKind, RandomStream, SystemDims};

fn bench_svd(c: &mut Criterion) {
    let mut rng = RandomStream::new(1).rng();
    let a = sample_cn_matrix(8, 16, &mut rng);
    c.bench_function("svd 8x16", |b| b.iter(|| svd(black_box(&a)).unwrap()));
}

fn bench_ml_detect(c: &mut Criterion) {
    let dims = SystemDims::new(2, 2, 2, 2).unwrap();
    let d = DifferenceMatrix::from_delta(example1_delta()).unwrap();
    let book = pairwise_codebook_from_delta(&d).unwrap().codebook;
    let mut rng = RandomStream::new(2).rng();
    let q = build_query(QueryKind::UnitaryDft, &dims, &mut rng).unwrap();
    let ch = sample_channel(&dims, &mut rng);
    let r = effective_signal(&q, &ch.h, &book.codewords()[0], &ch.g).unwrap();
    c.bench_function("ml_detect example1", |b| b.iter(|| ml_detect(black_box(&r), &q, &ch, &book).unwrap()));
}

fn bench_pep(c: &mut Criterion) {
    let dims = SystemDims::new(2, 2, 2, 2).unwrap();
    let d = DifferenceMatrix::from_delta(example1_delta()).unwrap();
    let grid = [10.0, 20.0, 30.0];
    let mut group = c.benchmark_group("pep_curve 4096 trials");
    for method in [PepMethod::QFunctionMc, PepMethod::EigenProductMc] {
        group.bench_function(method.as_str(), |b| {
            b.iter(|| pep_curve(method, QueryKind::Uniform, &d, &dims, &grid, 4096, RandomStream::new(3)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_svd, bench_ml_detect, bench_pep);
criterion_main!(benches);
