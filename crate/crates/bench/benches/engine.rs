use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dfsnet_bench::{noise_hop, steering};
use dfsnet_core::{create_stream, enhance_offline, ModelConfig, ModelParams, MultichannelBuffer};

fn push_pull(c: &mut Criterion) {
    let params = Arc::new(ModelParams::init(&ModelConfig::reference(), 0).unwrap());
    let mut group = c.benchmark_group("push_pull/reference");
    for channels in [2, 4, 6] {
        let mut stream = create_stream(params.clone(), &steering(channels), channels).unwrap();
        let hop = stream.hop();
        let input = noise_hop(channels, hop, channels as u64);
        let mut out = vec![0.0; hop];
        group.throughput(Throughput::Elements(hop as u64));
        group.bench_with_input(BenchmarkId::from_parameter(channels), &channels, |b, _| {
            b.iter(|| stream.push_pull(black_box(&input), &mut out).unwrap())
        });
    }
    group.finish();
}

fn offline_tiny(c: &mut Criterion) {
    let params = ModelParams::init(&ModelConfig::tiny(), 0).unwrap();
    let plan = steering(2);
    let samples = noise_hop(2, 16000, 1);
    let mix = MultichannelBuffer::new(
        vec![
            samples.iter().step_by(2).copied().collect(),
            samples.iter().skip(1).step_by(2).copied().collect(),
        ],
        16000,
    )
    .unwrap();
    c.bench_function("enhance_offline/tiny/1s", |b| {
        b.iter(|| enhance_offline(&params, &plan, black_box(&mix)).unwrap())
    });
}

criterion_group!(benches, push_pull, offline_tiny);
criterion_main!(benches);
