use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use safelink_core::sim::{Engine, EntityId, RandomSource, SimTime};

/// Schedule-then-drain of a batch of events with random fire times.
fn engine_throughput(c: &mut Criterion) {
    const N: u64 = 100_000;
    let mut group = c.benchmark_group("engine");
    group.throughput(Throughput::Elements(N));
    group.bench_function("schedule_and_run_100k", |b| {
        b.iter_batched(
            || {
                let mut rng = RandomSource::new(1);
                (0..N)
                    .map(|_| rng.uniform_u64(0, 10_000_000))
                    .collect::<Vec<_>>()
            },
            |times| {
                let mut engine: Engine<u64> = Engine::new();
                for (i, &t) in times.iter().enumerate() {
                    engine
                        .schedule(SimTime::from_us(t), EntityId(0), i as u64)
                        .unwrap();
                }
                let mut sum = 0u64;
                engine
                    .run_until(SimTime::MAX, |_, ev| sum = sum.wrapping_add(ev.payload))
                    .unwrap();
                black_box(sum)
            },
            BatchSize::LargeInput,
        )
    });
    group.bench_function("self_rescheduling_chain_100k", |b| {
        b.iter(|| {
            let mut engine: Engine<()> = Engine::new();
            engine.schedule(SimTime::ZERO, EntityId(0), ()).unwrap();
            let mut left = N;
            engine
                .run_until(SimTime::MAX, |e, _| {
                    left -= 1;
                    if left > 0 {
                        e.schedule_in(SimTime::from_us(100), EntityId(0), ());
                    }
                })
                .unwrap();
            black_box(engine.processed())
        })
    });
    group.finish();
}

criterion_group!(benches, engine_throughput);
criterion_main!(benches);
