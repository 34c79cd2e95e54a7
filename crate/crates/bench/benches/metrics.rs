use std::collections::HashMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use steerlab_bench::synthetic_text;
use steerlab_core::metrics::{distinct2_word, rouge_l, rouge_n, RougeOptions};
use steerlab_core::newts::TopicModelArtifacts;
use steerlab_core::scorers::topic::dictionary_bag;
use steerlab_core::scorers::fold_in;

fn rouge(c: &mut Criterion) {
    let mut g = c.benchmark_group("rouge");
    for n in [50, 150, 400] {
        let (cand, reference) = (synthetic_text(n, 1), synthetic_text(n, 2));
        g.bench_with_input(BenchmarkId::new("rouge2", n), &n, |b, _| {
            b.iter(|| rouge_n(black_box(&cand), black_box(&reference), 2, RougeOptions::default()))
        });
        g.bench_with_input(BenchmarkId::new("rougeL", n), &n, |b, _| {
            b.iter(|| rouge_l(black_box(&cand), black_box(&reference), RougeOptions::default()))
        });
    }
    g.finish();
}

fn distinct(c: &mut Criterion) {
    let text = synthetic_text(150, 3);
    c.bench_function("distinct2_word/150", |b| b.iter(|| distinct2_word(black_box(&text))));
}

fn topic_fold_in(c: &mut Criterion) {
    let text = synthetic_text(150, 4);
    let vocab: Vec<String> = text.split(' ').map(str::to_string).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let topics: Vec<Vec<(String, f64)>> = (0..50)
        .map(|t| vocab.iter().enumerate().map(|(i, w)| (w.clone(), 1.0 + ((i * 7 + t * 13) % 17) as f64)).collect())
        .collect();
    let dict = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
    let artifacts = TopicModelArtifacts::new(topics, dict, HashMap::new()).expect("valid artifacts");
    let bag = dictionary_bag(&text, &artifacts);
    c.bench_function("fold_in/50_topics", |b| b.iter(|| fold_in(black_box(&bag), &artifacts)));
}

criterion_group!(benches, rouge, distinct, topic_fold_in);
criterion_main!(benches);
