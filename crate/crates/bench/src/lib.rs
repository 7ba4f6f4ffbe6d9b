//! Deterministic inputs shared by the benchmarks in `benches/`.

use cdwce_core::numerics::softmax;
use cdwce_core::{Head, Matrix, MlpConfig, MlpModel, SeededRng};

/// `n` probability vectors over `k` classes with their true labels.
pub fn prob_batch(n: usize, k: usize, seed: u64) -> Vec<(Vec<f64>, usize)> {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..k).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let c = (rng.next_u64() % k as u64) as usize;
            (softmax(&logits).expect("finite logits").into_inner(), c)
        })
        .collect()
}

/// Noisy ordinal predictions: the truth shifted by at most one class.
pub fn label_pairs(n: usize, k: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = SeededRng::new(seed);
    (0..n)
        .map(|_| {
            let t = (rng.next_u64() % k as u64) as usize;
            let p = match rng.next_u64() % 4 {
                0 => t.saturating_sub(1),
                1 => (t + 1).min(k - 1),
                _ => t,
            };
            (t, p)
        })
        .unzip()
}

/// Points drawn around one center per class.
pub fn clustered_points(n: usize, dim: usize, k: usize, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = SeededRng::new(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let data = labels
        .iter()
        .flat_map(|&c| (0..dim).map(|_| c as f64 + 0.7 * rng.standard_normal()).collect::<Vec<_>>())
        .collect();
    (Matrix::new(n, dim, data).expect("consistent shape"), labels)
}

/// The default `input_dim → 32 → 16` network with a softmax head.
pub fn default_model(input_dim: usize, classes: usize) -> MlpModel {
    MlpModel::init(MlpConfig::default_for(input_dim, Head::Softmax { classes }, 1)).expect("valid config")
}
