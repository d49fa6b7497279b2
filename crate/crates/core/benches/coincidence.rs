use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use qtwtt_core::coincidence::cross_correlate;
use qtwtt_core::sim::poisson_stream;
use qtwtt_core::{Channel, Span};

// Two 5·10⁶-tag streams (10⁷ tags total) over one second.
fn bench_cross_correlate(c: &mut Criterion) {
    let span = Span::new(0, 1_000_000_000_000).unwrap();
    let a = poisson_stream(Channel::D3, 5e6, span, 1);
    let b = poisson_stream(Channel::D1, 5e6, span, 2);
    let mut g = c.benchmark_group("cross_correlate");
    g.sample_size(10);
    g.throughput(Throughput::Elements((a.len() + b.len()) as u64));
    g.bench_function("1e7_tags_2ns_window", |bench| {
        bench.iter(|| cross_correlate(black_box(&a), black_box(&b), 2000, 10, 0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_cross_correlate);
criterion_main!(benches);
