//! Synthetic corpora for benchmarks and scale tests.

use orqa_core::Passage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` passages of 20 to 60 words drawn Zipf-like from a vocabulary of `vocab` words.
pub fn synthetic_passages(n: usize, vocab: usize, seed: u64) -> Vec<Passage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    (0..n)
        .map(|i| {
            let len = rng.gen_range(20..=60);
            let text = (0..len)
                .map(|_| {
                    // Squaring a uniform skews draws toward frequent words.
                    let u: f64 = rng.gen();
                    words[((u * u) * vocab as f64) as usize % vocab].as_str()
                })
                .collect::<Vec<_>>()
                .join(" ");
            Passage::new(format!("p{i}"), text)
        })
        .collect()
}

/// Queries of 2 to 5 words from the same vocabulary.
pub fn synthetic_queries(n: usize, vocab: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(2..=5);
            (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}
