use criterion::{criterion_group, criterion_main, Criterion};
use iat_core::silo::{Command, Plant, PlantConstants};

fn bench(c: &mut Criterion) {
    c.bench_function("plant/fill-cycle", |b| {
        b.iter(|| {
            let mut p = Plant::liqueur_plant(PlantConstants::default());
            for i in 0..4 {
                p.command(i, Command::Initialize).unwrap();
                p.command(i, Command::Fill).unwrap();
            }
            p.advance(10.0)
        })
    });
}

criterion_group!(benches, bench);
criterion_main!(benches);
