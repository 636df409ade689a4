use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hralert_core::config::{Config, Sizes};
use hralert_core::kg::HyperRelGraph;
use hralert_core::models::{build_model, ModelKind};
use hralert_core::synthetic::random_graph;

fn tail_scoring(c: &mut Criterion) {
    let cfg = Config {
        dim: 32,
        layers: 2,
        ..Config::default()
    };
    let mut group = c.benchmark_group("score_tails");
    group.sample_size(20);
    for entities in [200, 800] {
        let sizes = Sizes {
            entities,
            relations: 8,
            qual_keys: 4,
            qual_values: 16,
        };
        let stmts = random_graph(sizes, entities * 4, 3, 5);
        let graph = HyperRelGraph::build(&stmts, entities, sizes.relations, cfg.q_max).unwrap();
        let query = &stmts[0];
        for kind in [ModelKind::AlertStar, ModelKind::HrNbfNet] {
            let model = build_model(kind, sizes, &cfg).unwrap();
            group.bench_with_input(BenchmarkId::new(kind.label(), entities), &graph, |b, graph| {
                b.iter(|| {
                    model
                        .score_tails(graph, black_box(query.head), query.relation, &query.qualifiers)
                        .unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, tail_scoring);
criterion_main!(benches);
