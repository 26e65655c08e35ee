//! Sequential vs rayon fan-out of jump-chain replicas.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neurofield::ensemble::Execution;
use neurofield::jumpchain::{simulate_ensemble, ChainSettings, ChainState};
use neurofield::model::{GainFunction, Network, SynapticKernel};

fn jump_chain(c: &mut Criterion) {
    let f = GainFunction::new(8.0, 0.5).unwrap();
    let net = Network::ring(&SynapticKernel::exponential(1.0).unwrap(), 8).unwrap();
    let initial = ChainState::from_activities(&[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.5], 100).unwrap();
    let settings = ChainSettings { horizon: 1.0, output_points: 11, ..Default::default() };

    let mut group = c.benchmark_group("jump_chain_ensemble");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, 64), &exec, |b, &exec| {
            b.iter(|| simulate_ensemble(&initial, &net, &f, &settings, 7, black_box(64), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, jump_chain);
criterion_main!(benches);
