//! Independent recomputations of model and metric outputs.

mod common;

use std::fs;

use steerlab_core::metrics::{cosine, greedy_match, perplexity, semantic_similarity, HashEmbedder};
use steerlab_core::model::{
    BigramModel, CharTokenizer, GenerationConfig, InterventionHandle, LanguageModel, Matrix, PositionPolicy, TinyModel,
    TinyWeights,
};
use steerlab_core::prompt::{render, PromptRequest, PromptVariant};
use steerlab_core::rng::SeededRng;
use steerlab_core::scorers::flesch_kincaid_grade;
use steerlab_core::BehaviorKind;

fn vec_mat(x: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols).map(|c| (0..m.rows).map(|r| x[r] * m.get(r, c)).sum()).collect()
}

fn norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    (0..x.len()).map(|i| (x[i] - mu) / (var + 1e-5).sqrt() * gain[i] + bias[i]).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Whole-sequence forward with an explicit causal mask and no cache.
fn naive_forward(w: &TinyWeights, tokens: &[u32], steer: Option<(usize, &[f64], usize)>) -> Vec<Vec<f64>> {
    let d = w.embed.cols;
    let mut xs: Vec<Vec<f64>> = tokens.iter().map(|&t| w.embed.row(t as usize).to_vec()).collect();
    for (layer, b) in w.blocks.iter().enumerate() {
        let a: Vec<Vec<f64>> = xs.iter().map(|x| norm(x, &b.ln1_gain, &b.ln1_bias)).collect();
        let q: Vec<Vec<f64>> = a.iter().map(|r| vec_mat(r, &b.wq)).collect();
        let k: Vec<Vec<f64>> = a.iter().map(|r| vec_mat(r, &b.wk)).collect();
        let v: Vec<Vec<f64>> = a.iter().map(|r| vec_mat(r, &b.wv)).collect();
        for i in 0..xs.len() {
            let scores: Vec<f64> = (0..xs.len())
                .map(|j| {
                    if j > i {
                        f64::NEG_INFINITY
                    } else {
                        q[i].iter().zip(&k[j]).map(|(x, y)| x * y).sum::<f64>() / (d as f64).sqrt()
                    }
                })
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            let attended: Vec<f64> = (0..d).map(|c| (0..=i).map(|j| scores[j].exp() / z * v[j][c]).sum()).collect();
            let o = vec_mat(&attended, &b.wo);
            for c in 0..d {
                xs[i][c] += o[c];
            }
            let m = norm(&xs[i], &b.ln2_gain, &b.ln2_bias);
            let h: Vec<f64> = vec_mat(&m, &b.w_in).iter().zip(&b.b_in).map(|(x, bb)| gelu(x + bb)).collect();
            let out = vec_mat(&h, &b.w_out);
            for c in 0..d {
                xs[i][c] += out[c] + b.b_out[c];
            }
            if let Some((l, add, prompt_len)) = steer {
                if l == layer && i + 1 >= prompt_len {
                    for c in 0..d {
                        xs[i][c] += add[c];
                    }
                }
            }
        }
    }
    xs.iter()
        .map(|x| vec_mat(&norm(x, &w.lnf_gain, &w.lnf_bias), &w.unembed))
        .collect()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn tiny_logits_match_uncached_forward() {
    let model = TinyModel::reference();
    for text in ["a", "The council met.", "Summaries of the article: wind, solar & rain!"] {
        let toks = model.tokenize(text);
        let got = model.forward(&toks, &[], toks.len(), None).unwrap().logits;
        let want = naive_forward(model.weights(), &toks, None);
        assert!(max_diff(&got, &want) < 1e-9, "{text}: {}", max_diff(&got, &want));
    }
}

#[test]
fn tiny_steered_logits_match_uncached_forward() {
    let model = TinyModel::reference();
    let d = model.descriptor().hidden_dim;
    let mut rng = SeededRng::new(3);
    let add: Vec<f64> = (0..d).map(|_| rng.unit() - 0.5).collect();
    let toks = model.tokenize("Steer this prompt, then keep going");
    let prompt_len = 12;
    let h = InterventionHandle::add(0, add.clone(), PositionPolicy::GeneratedOnly);
    let got = model.forward(&toks, &[h], prompt_len, None).unwrap().logits;
    let want = naive_forward(model.weights(), &toks, Some((0, &add, prompt_len)));
    assert!(max_diff(&got, &want) < 1e-9);
    let plain = model.forward(&toks, &[], prompt_len, None).unwrap().logits;
    assert_eq!(got[..prompt_len - 1], plain[..prompt_len - 1]);
    assert_ne!(got[prompt_len - 1], plain[prompt_len - 1]);
}

#[test]
fn greedy_generation_follows_uncached_argmax() {
    let model = TinyModel::reference();
    let prompt = model.tokenize("Write a summary.");
    let gen = model.generate(&prompt, &GenerationConfig::greedy(12), &[]).unwrap();
    let mut seq = prompt.clone();
    for &t in &gen.tokens {
        let logits = naive_forward(model.weights(), &seq, None);
        let last = logits.last().unwrap();
        let best = (0..last.len()).fold(0, |b, i| if last[i] > last[b] { i } else { b });
        assert_eq!(t as usize, best);
        if Some(t) == model.eos_token() {
            break;
        }
        seq.push(t);
    }
}

fn hand_bigram() -> BigramModel {
    let table = vec![vec![0.0, 1.0, 2.0], vec![3.0, 0.0, 0.0], vec![0.5, 0.5, -1.0]];
    BigramModel::new("hand", CharTokenizer::from_alphabet("abc", false), table).unwrap()
}

#[test]
fn bigram_logprob_is_hand_softmax() {
    let m = hand_bigram();
    let lp = m.sequence_logprob(&m.tokenize("abca")).unwrap();
    let ln = f64::ln;
    let e = f64::exp;
    let want = [
        1.0 - ln(e(0.0) + e(1.0) + e(2.0)),
        0.0 - ln(e(3.0) + 2.0),
        0.5 - ln(2.0 * e(0.5) + e(-1.0)),
    ];
    for (g, w) in lp.iter().zip(want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
    let ppl = perplexity("abca", &m).unwrap();
    assert!((ppl - (-(want.iter().sum::<f64>()) / 3.0).exp()).abs() < 1e-12);
}

#[test]
fn bigram_steering_shifts_one_hot_state() {
    let m = hand_bigram();
    let h = InterventionHandle::add(0, vec![0.0, 1.0, 0.0], PositionPolicy::AllPositions);
    let out = m.forward(&m.tokenize("a"), &[h], 1, Some(0)).unwrap();
    assert_eq!(out.capture.unwrap().rows, vec![vec![1.0, 1.0, 0.0]]);
    assert_eq!(out.logits[0], vec![3.0, 1.0, 2.0]);
}

#[test]
fn greedy_match_agrees_with_unit_vector_loops() {
    let mut rng = SeededRng::new(11);
    for _ in 0..200 {
        let dim = 1 + rng.below(5);
        let draw = |rng: &mut SeededRng, n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..dim).map(|_| rng.unit() * 2.0 - 1.0).collect()).collect()
        };
        let (nc, nr) = (1 + rng.below(6), 1 + rng.below(6));
        let c = draw(&mut rng, nc);
        let r = draw(&mut rng, nr);
        let unit = |v: &Vec<f64>| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let (cu, ru): (Vec<_>, Vec<_>) = (c.iter().map(unit).collect(), r.iter().map(unit).collect());
        let mut sim = vec![vec![0.0; nr]; nc];
        for i in 0..nc {
            for j in 0..nr {
                sim[i][j] = cu[i].iter().zip(&ru[j]).map(|(a, b)| a * b).sum();
            }
        }
        let p: f64 = (0..nc).map(|i| sim[i].iter().cloned().fold(-2.0, f64::max)).sum::<f64>() / nc as f64;
        let rr: f64 = (0..nr).map(|j| (0..nc).map(|i| sim[i][j]).fold(-2.0, f64::max)).sum::<f64>() / nr as f64;
        let g = greedy_match(&c, &r);
        assert!((g.precision - p).abs() < 1e-9 && (g.recall - rr).abs() < 1e-9);
        if p > 0.0 && rr > 0.0 {
            assert!((g.f1 - 2.0 * p * rr / (p + rr)).abs() < 1e-9);
        } else {
            assert_eq!(g.f1, 0.0);
        }
    }
}

#[test]
fn hash_embedder_identity_and_cosine() {
    let e = HashEmbedder::default();
    let s = semantic_similarity("wind farms cut costs", "wind farms cut costs", &e).unwrap();
    assert!((s.f1 - 1.0).abs() < 1e-12);
    assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-12);
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
}

#[test]
fn flesch_kincaid_hand_counts() {
    // 12 words, 2 sentences, 14 syllables.
    let g = flesch_kincaid_grade("The cat sat on the mat. A dog ran far away today.").unwrap();
    let want = 0.39 * 6.0 + 11.8 * 14.0 / 12.0 - 15.59;
    assert!((g - want).abs() < 1e-12, "{g} vs {want}");
    // Clamped at zero for one-syllable fragments.
    assert_eq!(flesch_kincaid_grade("Go. Run. Sit.").unwrap(), 0.0);
}

#[test]
fn golden_instructions_and_prompt_layout() {
    let golden = fs::read_to_string(common::fixture("instructions.golden")).unwrap();
    let line = golden.lines().find(|l| l.starts_with("sentiment:encourage\t")).unwrap();
    let instruction = line.split('\t').nth(1).unwrap();
    let article = "Prices fell.";
    let p = render(&PromptRequest::new(BehaviorKind::Sentiment, PromptVariant::Encourage), article).unwrap();
    assert_eq!(p.instruction, instruction);
    assert!(p.text.starts_with(instruction));
    assert_eq!(p.article(), article);
}
