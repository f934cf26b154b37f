use criterion::{black_box, criterion_group, criterion_main, Criterion};
use iat_bench::{notification, register_request};
use iat_core::coap::{decode, encode};

fn codec(c: &mut Criterion) {
    for (name, msg) in [("register", register_request()), ("notify", notification())] {
        let bytes = encode(&msg).unwrap();
        c.bench_function(&format!("encode/{name}"), |b| b.iter(|| encode(black_box(&msg)).unwrap()));
        c.bench_function(&format!("decode/{name}"), |b| b.iter(|| decode(black_box(&bytes)).unwrap()));
    }
}

criterion_group!(benches, codec);
criterion_main!(benches);
