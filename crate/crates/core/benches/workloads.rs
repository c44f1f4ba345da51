use circulate::workloads::{compose_pattern_with, gen_expression_at, mine_rules_with, Exec, MiningParams, RegionSet};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn generate(c: &mut Criterion) {
    let mut g = c.benchmark_group("gen_expression");
    for regions in [10_000, 100_000] {
        for (name, exec) in EXECS {
            g.bench_with_input(BenchmarkId::new(name, regions), &regions, |b, &n| {
                b.iter(|| gen_expression_at(7, 32, n, 0.5, 0, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn mine(c: &mut Criterion) {
    let m = gen_expression_at(7, 24, 50_000, 0.5, 0, Exec::Parallel).unwrap();
    let params = MiningParams { min_support: 0.1, min_confidence: 0.4, max_itemset: 3 };
    let mut g = c.benchmark_group("mine_rules");
    g.sample_size(20);
    for (name, exec) in EXECS {
        g.bench_function(name, |b| b.iter(|| mine_rules_with(black_box(&m), &params, exec).unwrap()));
    }
    g.finish();
}

fn compose(c: &mut Criterion) {
    let m = gen_expression_at(7, 40, 50_000, 0.3, 0, Exec::Parallel).unwrap();
    let target = RegionSet::from_indices(m.n_regions(), (0..m.n_regions()).filter(|r| r % 3 == 0));
    let mut g = c.benchmark_group("compose_pattern");
    g.sample_size(20);
    for (name, exec) in EXECS {
        g.bench_function(name, |b| b.iter(|| compose_pattern_with(black_box(&m), &target, 4, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, generate, mine, compose);
criterion_main!(benches);
