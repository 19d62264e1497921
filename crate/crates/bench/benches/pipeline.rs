//! Criterion benchmarks for the hot path of the monitoring pipeline:
//! sampling + transform, the eight-branch bank update, and aggregation
//! through the stationary tables.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

use bitbe_core::acusum::{BankState, PriorConfig, ResetScope};
use bitbe_core::aggregate::{build_stationary, BuildConfig, CalibrationArtifact};
use bitbe_core::distributions::{FamilyParams, GumbelParams, MobeParams, MobwParams};
use bitbe_core::rng::derive_rng;
use bitbe_core::transform::StreamState;

fn families() -> Vec<(&'static str, FamilyParams)> {
    vec![
        ("mobe", FamilyParams::Mobe(MobeParams::new(0.2, 0.2, 0.05).unwrap())),
        ("mobw", FamilyParams::Mobw(MobwParams::new(0.0435, 0.0105, 5.78e-8, 1.1677).unwrap())),
        ("gumbel", FamilyParams::Gumbel(GumbelParams::new(5.0, 5.0, 0.5).unwrap())),
    ]
}

fn small_artifact(ic: &FamilyParams) -> CalibrationArtifact {
    let cfg = BuildConfig {
        burn_in: 2_000,
        table_size: 50_000,
        pool_size: 200,
        spacing: 20,
        priors: PriorConfig::default(),
        reset_scope: ResetScope::All,
    };
    build_stationary(ic, &cfg, 1).unwrap()
}

fn bench_transform(c: &mut Criterion) {
    let mut g = c.benchmark_group("transform");
    for (name, p) in families() {
        g.throughput(Throughput::Elements(1));
        g.bench_function(name, |b| {
            let mut rng = derive_rng(2, 0);
            let mut state = StreamState::new();
            let mut i = 0u64;
            b.iter(|| {
                i += 1;
                let s = p.sample(&mut rng);
                black_box(state.push_vector(&p, s.x1, s.x2, i).unwrap())
            });
        });
    }
    g.finish();
}

fn bench_bank_update(c: &mut Criterion) {
    let p = families()[0].1;
    let mut rng = derive_rng(3, 0);
    let mut state = StreamState::new();
    let mut stream = Vec::new();
    for i in 1..=10_000u64 {
        let s = p.sample(&mut rng);
        stream.extend(state.push_vector(&p, s.x1, s.x2, i).unwrap());
    }
    let priors = PriorConfig::default();

    let mut g = c.benchmark_group("bank");
    g.throughput(Throughput::Elements(stream.len() as u64));
    g.bench_function("update_10k_obs", |b| {
        b.iter_batched(
            BankState::new,
            |mut bank| {
                for z in &stream {
                    bank.update(z, &priors, ResetScope::All);
                }
                bank
            },
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn bench_aggregate(c: &mut Criterion) {
    let p = families()[0].1;
    let artifact = small_artifact(&p);
    let mut rng = derive_rng(4, 0);
    let bank = artifact.pool.draw(&mut rng);

    let mut g = c.benchmark_group("aggregate");
    g.throughput(Throughput::Elements(1));
    g.bench_function("q_statistic", |b| {
        b.iter(|| black_box(artifact.q_statistic(black_box(&bank))))
    });
    g.finish();
}

criterion_group!(benches, bench_transform, bench_bank_update, bench_aggregate);
criterion_main!(benches);
