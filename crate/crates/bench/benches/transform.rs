use criterion::{black_box, criterion_group, criterion_main, Criterion};
use iat_core::annotation::SourceUnit;
use iat_core::codegen::{transform, TemplateSet};
use iat_core::silo::CORPUS_SOURCE;

fn bench(c: &mut Criterion) {
    let unit = SourceUnit::new("silo.c", CORPUS_SOURCE);
    let templates = TemplateSet::contiki_c();
    c.bench_function("transform/silo", |b| {
        b.iter(|| transform(black_box(&unit), &templates).unwrap())
    });
}

criterion_group!(benches, bench);
criterion_main!(benches);
