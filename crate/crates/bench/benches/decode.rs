use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hcfr_bench::random_distributions;
use hcfr_core::{iterative_decode, map_decode, LabelSpace, Taxonomy};

fn bench_decode(c: &mut Criterion) {
    let taxonomy = Arc::new(Taxonomy::bundled());
    for gated in [false, true] {
        let space = LabelSpace::new(taxonomy.clone(), gated);
        let dists: Vec<_> = (0..64).map(|s| random_distributions(&space, s)).collect();
        let tag = if gated { "gated" } else { "ungated" };
        c.bench_function(&format!("map_decode/{tag}"), |b| {
            b.iter(|| {
                for d in &dists {
                    black_box(map_decode(d, &space));
                }
            })
        });
        c.bench_function(&format!("iterative_decode/{tag}"), |b| {
            b.iter(|| {
                for d in &dists {
                    black_box(iterative_decode(d, &space));
                }
            })
        });
    }
}

criterion_group!(benches, bench_decode);
criterion_main!(benches);
