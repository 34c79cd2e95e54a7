//! Shared inputs for the benchmarks in `benches/`.

use steerlab_core::rng::SeededRng;

const WORDS: &[&str] = &[
    "the", "council", "approved", "a", "new", "energy", "policy", "after", "months", "of", "debate", "over",
    "wind", "farms", "and", "school", "funding", "while", "critics", "said", "costs", "would", "rise",
];

/// `n` words sampled from a fixed news-like vocabulary.
pub fn synthetic_text(n: usize, seed: u64) -> String {
    let mut rng = SeededRng::new(seed);
    (0..n).map(|_| WORDS[rng.below(WORDS.len())]).collect::<Vec<_>>().join(" ")
}
