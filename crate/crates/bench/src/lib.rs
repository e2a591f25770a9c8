//! Shared inputs for the kernel benchmarks.

use anytime_core::data::Image;
use anytime_core::metrics::ScoreMatrix;
use anytime_core::rng;
use rand::Rng;

/// Scores with ties and labels with both classes present.
pub fn scored_column(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut r = rng::stream(seed, &[0]);
    let scores = (0..n).map(|_| f64::from(r.random_range(0..100u8)) / 100.0).collect();
    let labels = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    (scores, labels)
}

pub fn random_scores(rows: usize, cols: usize, seed: u64) -> ScoreMatrix {
    let mut r = rng::stream(seed, &[1]);
    let data = (0..rows * cols).map(|_| r.random::<f64>()).collect();
    ScoreMatrix::new(rows, cols, data).expect("finite scores")
}

pub fn random_images(count: usize, side: usize, channels: usize, seed: u64) -> Vec<Image> {
    let mut r = rng::stream(seed, &[2]);
    (0..count)
        .map(|_| {
            let pixels = (0..side * side * channels).map(|_| r.random::<f32>()).collect();
            Image::new(side, side, channels, pixels).expect("valid image")
        })
        .collect()
}
