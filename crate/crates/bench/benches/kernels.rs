// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lockgraph::gnn::{train, GnnConfig, GnnModel, ModelSpec};
use lockgraph::graphprep::{
    build_attack_graph, build_dataset, extract_enclosing_subgraph, DatasetParams, Scenario,
    DEFAULT_MAX_DRNL,
};
use lockgraph::locking::{lock_interlock, lock_random_mux};
use lockgraph::netlist::{parse_bench, CompiledSim};
use lockgraph_bench::{benchmark_path, load};

fn netlist(c: &mut Criterion) {
    let text = std::fs::read_to_string(benchmark_path("c7552")).unwrap();
    c.bench_function("parse_bench/c7552", |b| {
        b.iter(|| parse_bench(black_box(&text), "c7552").unwrap())
    });

    let n = load("c7552");
    let sim = CompiledSim::new(&n, None).unwrap();
    let words: Vec<u64> = (0..n.inputs().len() as u64)
        .map(|i| i.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .collect();
    c.bench_function("simulate_64_patterns/c7552", |b| {
        b.iter(|| sim.eval_words(black_box(&words)))
    });
}

fn locking(c: &mut Criterion) {
    let n = load("c7552");
    c.bench_function("lock_random_mux/c7552_k64", |b| {
        b.iter(|| lock_random_mux(black_box(&n), 64, 1).unwrap())
    });
    let b20 = load("b20_C");
    c.bench_function("lock_interlock/b20_1x8", |b| {
        b.iter(|| lock_interlock(black_box(&b20), 1, 8, 1).unwrap())
    });
}

fn graphprep(c: &mut Criterion) {
    let d = lock_random_mux(&load("c7552"), 64, 1).unwrap();
    c.bench_function("build_attack_graph/c7552_k64", |b| {
        b.iter(|| build_attack_graph(black_box(d.public())).unwrap())
    });
    let (g, links) = build_attack_graph(d.public()).unwrap();
    for h in [2, 3] {
        c.bench_function(&format!("enclosing_subgraphs_h{h}/c7552_k64"), |b| {
            b.iter(|| {
                for l in &links.links {
                    black_box(extract_enclosing_subgraph(
                        &g,
                        l.driver,
                        l.sink,
                        h,
                        DEFAULT_MAX_DRNL,
                    ));
                }
            })
        });
    }
}

fn gnn(c: &mut Criterion) {
    let d = lock_random_mux(&load("c3540"), 64, 1).unwrap();
    let (g, links) = build_attack_graph(d.public()).unwrap();
    let ds = build_dataset(
        &g,
        &links,
        &[],
        Scenario::SelfReferencing,
        &DatasetParams::default(),
    )
    .unwrap();
    let config = GnnConfig::default();
    let model = GnnModel::new(ModelSpec::from_config(&config, 28).unwrap(), 1);
    c.bench_function("predict_batch/c3540_128_links", |b| {
        b.iter(|| model.predict_batch(black_box(&ds.test)).unwrap())
    });

    let mut small = ds.clone();
    small.train.truncate(200);
    small.validation.truncate(50);
    let one_epoch = GnnConfig {
        epochs: 1,
        ..config
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one_epoch/200_samples", |b| {
        b.iter_batched(
            || small.clone(),
            |s| train(&one_epoch, &s).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, netlist, locking, graphprep, gnn);
criterion_main!(benches);
