use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use mvdlmc::exec::{map_indexed, map_indexed_sequential};
use mvdlmc::model::{ModelSpec, Observable, ScalarLaw};
use mvdlmc::particle::simulate_particles;
use mvdlmc::rng::StreamKey;
use mvdlmc::sampler::{inner_samples, Control};

// One outer sample: a particle system followed by its inner loop.
fn outer_sample(model: &ModelSpec, g: &Observable, m: usize) -> f64 {
    let key = StreamKey::new(7).derive(m as u64);
    let law = simulate_particles(model, 40, 16, key.derive(0)).unwrap();
    let slices = law.slices(16).unwrap();
    let values = inner_samples(model, g, &slices, Control::Zero, 64, key.derive(1)).unwrap();
    values.iter().sum::<f64>() / values.len() as f64
}

fn bench(c: &mut Criterion) {
    let model = ModelSpec::kuramoto(
        0.4,
        ScalarLaw::Uniform { low: -0.2, high: 0.2 },
        ScalarLaw::Normal { mean: 0.0, std_dev: 0.2 },
        1.0,
    )
    .unwrap();
    let g = Observable::Cosine;
    let mut group = c.benchmark_group("outer_loop");
    group.sample_size(20);
    for m1 in [16usize, 64] {
        group.bench_with_input(BenchmarkId::new("sequential", m1), &m1, |b, &m1| {
            b.iter(|| map_indexed_sequential(m1, |m| outer_sample(&model, &g, m)))
        });
        group.bench_with_input(BenchmarkId::new("map_indexed", m1), &m1, |b, &m1| {
            b.iter(|| map_indexed(m1, |m| outer_sample(&model, &g, m)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
