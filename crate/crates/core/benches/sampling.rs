//! Batch-sampler benchmarks: the data-parallel driver against the
//! sequential fallback, on the freeze-merge jump chain and the
//! continuous-time coalescent.
//!
//! Run with the default features for both drivers, or with
//! `--no-default-features` for the sequential driver alone:
//!
//! ```text
//! cargo bench -p xifreeze-core
//! cargo bench -p xifreeze-core --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use xifreeze_core::chains::{sample_continuous_sequential, sample_fm_sequential};
#[cfg(feature = "parallel")]
use xifreeze_core::chains::{sample_continuous_parallel, sample_fm_parallel};
use xifreeze_core::measures::{q_array, QArray, SimplexPoint, XiModel};
use xifreeze_core::rational::{rat, rat_int};

const N: usize = 12;
const SEED: u64 = 7;

fn bench_model() -> XiModel {
    // One Kingman part, one two-coordinate atom, and freezing: every event
    // kind occurs, so the samplers exercise all their branches.
    let point = SimplexPoint::new(vec![rat(1, 2), rat(1, 4)]).unwrap();
    XiModel::new(rat(1, 4), vec![(rat_int(1), point)], None, rat(1, 2)).unwrap()
}

fn bench_q() -> QArray {
    q_array(&bench_model(), N).unwrap()
}

fn fm_batches(c: &mut Criterion) {
    let q = bench_q();
    let mut group = c.benchmark_group("fm_batch");
    group.sample_size(10);
    for samples in [1_000u64, 10_000] {
        group.throughput(Throughput::Elements(samples));
        group.bench_with_input(
            BenchmarkId::new("sequential", samples),
            &samples,
            |b, &s| b.iter(|| sample_fm_sequential(N, &q, s, SEED).unwrap()),
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(
            BenchmarkId::new("parallel", samples),
            &samples,
            |b, &s| b.iter(|| sample_fm_parallel(N, &q, s, SEED).unwrap()),
        );
    }
    group.finish();
}

fn continuous_batches(c: &mut Criterion) {
    let model = bench_model();
    let mut group = c.benchmark_group("continuous_batch");
    group.sample_size(10);
    for samples in [1_000u64, 10_000] {
        group.throughput(Throughput::Elements(samples));
        group.bench_with_input(
            BenchmarkId::new("sequential", samples),
            &samples,
            |b, &s| b.iter(|| sample_continuous_sequential(&model, N, s, SEED).unwrap()),
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(
            BenchmarkId::new("parallel", samples),
            &samples,
            |b, &s| b.iter(|| sample_continuous_parallel(&model, N, s, SEED).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, fm_batches, continuous_batches);
criterion_main!(benches);
