use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gubqc_core::protocol::transport::InProcessTransport;
use gubqc_core::protocol::wire::{decode_frames, encode_frame};
use gubqc_core::protocol::{enumerate_session, run_session, session::sample_key, DependencyRule};
use gubqc_core::{Computation, OutputMode, Seeds, StateVector, SubgroupSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn gates(c: &mut Criterion) {
    let spec = SubgroupSpec::continuous(1);
    let mut group = c.benchmark_group("gates");
    for n in [4usize, 8, 12] {
        let mut rng = ChaCha20Rng::seed_from_u64(n as u64);
        let d = spec.sample(n, &mut rng).unwrap();
        let base = StateVector::plus(n).unwrap();
        group.bench_with_input(BenchmarkId::new("diagonal", n), &n, |b, _| {
            b.iter_batched_ref(
                || base.clone(),
                |s| s.apply_diagonal(black_box(&d)).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
        group.bench_with_input(BenchmarkId::new("hadamard_all", n), &n, |b, _| {
            b.iter_batched_ref(
                || base.clone(),
                |s| s.apply_hadamard_all(),
                criterion::BatchSize::SmallInput,
            )
        });
        group.bench_with_input(BenchmarkId::new("cz_chain", n), &n, |b, _| {
            b.iter_batched_ref(
                || base.clone(),
                |s| {
                    for q in 0..n - 1 {
                        s.apply_cz(q, q + 1).unwrap();
                    }
                },
                criterion::BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn sessions(c: &mut Criterion) {
    let spec = SubgroupSpec::cyclic(8, 1);
    let mut group = c.benchmark_group("session");
    for (n, m) in [(1usize, 3usize), (2, 3), (3, 4)] {
        let mut rng = ChaCha20Rng::seed_from_u64((n * 10 + m) as u64);
        let comp = Computation::random(&spec, n, m, OutputMode::Classical, &mut rng).unwrap();
        group.bench_function(BenchmarkId::new("in_process", format!("{n}x{m}")), |b| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                let mut t = InProcessTransport::new(seed);
                run_session(&comp, &spec, Seeds { alice: seed, bob: seed }, &mut t).unwrap()
            })
        });
        let key = sample_key(&comp, &spec, 1).unwrap();
        group.bench_function(BenchmarkId::new("enumerate_branches", format!("{n}x{m}")), |b| {
            b.iter(|| enumerate_session(black_box(&comp), &key, DependencyRule::Alternating).unwrap())
        });
    }
    group.finish();
}

fn wire(c: &mut Criterion) {
    let spec = SubgroupSpec::cyclic(8, 2);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let comp = Computation::random(&spec, 4, 3, OutputMode::Quantum, &mut rng).unwrap();
    let mut t = InProcessTransport::new(4);
    let (_, transcript) = run_session(&comp, &spec, Seeds { alice: 3, bob: 4 }, &mut t).unwrap();
    let messages = transcript.messages().unwrap();
    let bytes = transcript.wire_bytes();
    c.bench_function("wire/encode_session", |b| {
        b.iter(|| messages.iter().map(encode_frame).map(|f| f.len()).sum::<usize>())
    });
    c.bench_function("wire/decode_session", |b| {
        b.iter(|| decode_frames(black_box(&bytes)).unwrap())
    });
}

criterion_group!(benches, gates, sessions, wire);
criterion_main!(benches);
