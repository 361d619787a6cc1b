use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use sparsecomm_core::coordinator::Coordinator;
use sparsecomm_core::harness::wire::{Body, PayloadBody};
use sparsecomm_core::harness::{decode, encode, run_round, AgentState, WireMessage};
use sparsecomm_core::routing::{route, AssembledTensor, RoutingParams};
use sparsecomm_core::scenario::{full_exchange, generate_scene, SceneConfig};
use sparsecomm_core::sender::{analyze, score_patches, SenderParams};
use sparsecomm_core::{BudgetConfig, HeadInit, PatchGrid};

fn scene(size: usize, channels: usize) -> SceneConfig {
    SceneConfig {
        height: size,
        width: size,
        channels,
        primary_channels: channels / 4,
        secondary_channels: channels / 4,
        ..Default::default()
    }
}

fn sender(c: &mut Criterion) {
    let mut group = c.benchmark_group("sender");
    for size in [16, 32, 64] {
        let features = generate_scene(&scene(size, 32), 1, 0).unwrap().features.swap_remove(1);
        let grid = PatchGrid::new(size, size, 2).unwrap();
        let params = SenderParams::new(1, 32, HeadInit::Prior);
        group.throughput(Throughput::Elements((size * size * 32) as u64));
        group.bench_with_input(BenchmarkId::new("score_patches", size), &features, |b, x| {
            b.iter(|| score_patches(black_box(x), &grid).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("analyze", size), &features, |b, x| {
            b.iter(|| analyze(1, black_box(x), &grid, &params).unwrap())
        });
    }
    group.finish();
}

fn coordinator(c: &mut Criterion) {
    let cfg = scene(32, 32);
    let features = generate_scene(&cfg, 2, 0).unwrap().features;
    let grid = PatchGrid::new(32, 32, 2).unwrap();
    let params = SenderParams::new(2, 32, HeadInit::Prior);
    let bundles: Vec<_> = features[1..]
        .iter()
        .enumerate()
        .map(|(i, f)| analyze(i as u16 + 1, f, &grid, &params).unwrap().bundle())
        .collect();
    let full = (bundles.len() * grid.count() * 32) as u64;
    let mut group = c.benchmark_group("plan_round");
    for percent in [1u64, 5, 20, 100] {
        let config = BudgetConfig { budget_blocks: full * percent / 100, patch_size: 2, seed: 2, ..Default::default() };
        let planner = Coordinator::new(config, grid, 32).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{percent}%")), |b| {
            b.iter(|| planner.plan_round(0, black_box(&bundles)).unwrap())
        });
    }
    group.finish();
}

fn wire(c: &mut Criterion) {
    let features = generate_scene(&scene(32, 32), 3, 0).unwrap().features.swap_remove(1);
    let grid = PatchGrid::new(32, 32, 2).unwrap();
    let analysis = analyze(1, &features, &grid, &SenderParams::new(3, 32, HeadInit::Prior)).unwrap();
    let message = analysis.respond(&features, &vec![8; grid.count()]).unwrap();
    let msg = WireMessage {
        round: 0,
        sender: 1,
        receiver: 0,
        body: Body::Payload(PayloadBody::from_message(&message).unwrap()),
    };
    let bytes = encode(&msg).unwrap();
    let mut group = c.benchmark_group("wire");
    group.throughput(Throughput::Bytes(bytes.len() as u64));
    group.bench_function("encode_payload", |b| b.iter(|| encode(black_box(&msg)).unwrap()));
    group.bench_function("decode_payload", |b| b.iter(|| decode(black_box(&bytes)).unwrap()));
    group.finish();
}

fn routing(c: &mut Criterion) {
    let mut group = c.benchmark_group("route");
    group.sample_size(20);
    for agents in [2, 4, 6] {
        let cfg = SceneConfig { agents, ..scene(32, 32) };
        let features = generate_scene(&cfg, 4, 0).unwrap().features;
        let x: AssembledTensor = full_exchange(&features, 1).unwrap();
        let params = RoutingParams::new(4, 32, 4, HeadInit::Prior);
        group.bench_with_input(BenchmarkId::from_parameter(agents), &x, |b, x| b.iter(|| route(black_box(x), &params)));
    }
    group.finish();
}

fn round(c: &mut Criterion) {
    let cfg = scene(32, 32);
    let agents: Vec<_> = generate_scene(&cfg, 5, 0)
        .unwrap()
        .features
        .into_iter()
        .enumerate()
        .map(|(i, f)| AgentState::new(i as u16, f, 5, HeadInit::Prior))
        .collect();
    let full = ((agents.len() - 1) * 16 * 16 * 32) as u64;
    let config = BudgetConfig { budget_blocks: full / 20, patch_size: 2, seed: 5, ..Default::default() };
    let mut group = c.benchmark_group("round");
    group.sample_size(20);
    group.bench_function("run_round_5pct", |b| b.iter(|| run_round(black_box(&agents), 0, &config, 0).unwrap()));
    group.finish();
}

criterion_group!(benches, sender, coordinator, wire, routing, round);
criterion_main!(benches);
