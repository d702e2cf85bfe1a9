//! Synthetic inputs shared by the metric benchmarks.

use empathy_core::causal::OutcomeTable;
use empathy_core::{Persona, Taxonomy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

pub fn diffs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
}

pub fn sentence(words: usize, seed: u64) -> String {
    const VOCAB: [&str; 12] = [
        "i", "felt", "alone", "when", "my", "friend", "left", "the", "city", "without", "a", "word",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..words)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// A full-grid outcome table with random affect and EPITOME levels.
pub fn outcome_table(taxonomy: &Taxonomy, records: usize, seed: u64) -> OutcomeTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = OutcomeTable::new("bench");
    let grid: Vec<Persona> = taxonomy.build_grid();
    for r in 0..records {
        let id = format!("r{r}");
        for p in &grid {
            let a: [f64; 8] = std::array::from_fn(|_| rng.random::<f64>());
            let e: [f64; 3] = std::array::from_fn(|_| rng.random_range(0..3) as f64);
            t.set_raw(&id, p, Some(a), Some(e));
        }
    }
    t
}
