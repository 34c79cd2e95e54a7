use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use steerlab_bench::synthetic_text;
use steerlab_core::corpus::{ContrastPair, PairDataset};
use steerlab_core::model::{GenerationConfig, LanguageModel, TinyModel};
use steerlab_core::steering::{extract_steering_vector, make_intervention, SteeringSpec};
use steerlab_core::Behavior;

fn generate(c: &mut Criterion) {
    let model = TinyModel::reference();
    let prompt = model.tokenize(&synthetic_text(60, 5));
    let pairs = (0..8)
        .map(|i| ContrastPair::new(format!("p{i}"), synthetic_text(12, i), synthetic_text(12, 100 + i)))
        .collect();
    let dataset = PairDataset::new(Behavior::Sentiment, pairs, "bench").expect("pairs");
    let vector = extract_steering_vector(&model, &dataset, 1, 1).expect("vector");
    let steer = make_intervention(&SteeringSpec::new(vector, 1.0), model.descriptor()).expect("intervention");
    let cfg = GenerationConfig::greedy(150);
    c.bench_function("tiny_generate/150", |b| b.iter(|| model.generate(black_box(&prompt), &cfg, &[])));
    c.bench_function("tiny_generate_steered/150", |b| {
        b.iter(|| model.generate(black_box(&prompt), &cfg, std::slice::from_ref(&steer)))
    });
    c.bench_function("extract/8_pairs", |b| b.iter(|| extract_steering_vector(&model, black_box(&dataset), 1, 1)));
}

criterion_group!(benches, generate);
criterion_main!(benches);
