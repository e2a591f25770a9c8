//! Synthetic shape-classification fixtures.
//!
//! Each class is one shape drawn at a random position, scale and intensity
//! over a noisy background. `shape_offset` rotates the shape catalogue so that
//! two fixtures can form related but distinct tasks.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{LabelMatrix, LabeledDataset};
use super::image::Image;
use crate::error::{Error, Result};
use crate::rng;

pub const CHECKSUM_FILE: &str = "checksum.txt";
pub const SHAPES: [&str; 8] = ["hbar", "vbar", "square", "ring", "cross", "diag_down", "diag_up", "dot"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub name: String,
    pub num_classes: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise: f32,
    pub shape_offset: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            name: "shapes".into(),
            num_classes: 4,
            height: 16,
            width: 16,
            channels: 3,
            n_train: 2000,
            n_test: 500,
            noise: 0.2,
            shape_offset: 0,
            seed: 0,
        }
    }
}

/// Signed distance-like membership test in unit coordinates centred on the shape.
fn inside(shape: usize, u: f32, v: f32) -> bool {
    let thick = 0.22;
    match SHAPES[shape % SHAPES.len()] {
        "hbar" => v.abs() < thick && u.abs() < 1.0,
        "vbar" => u.abs() < thick && v.abs() < 1.0,
        "square" => u.abs() < 0.7 && v.abs() < 0.7,
        "ring" => {
            let r = (u * u + v * v).sqrt();
            (0.55..0.95).contains(&r)
        }
        "cross" => (u.abs() < thick && v.abs() < 0.95) || (v.abs() < thick && u.abs() < 0.95),
        "diag_down" => (u - v).abs() < thick * 1.4 && u.abs() < 0.9,
        "diag_up" => (u + v).abs() < thick * 1.4 && u.abs() < 0.9,
        _ => u * u + v * v < 0.3,
    }
}

fn render(cfg: &FixtureConfig, class: usize, rng: &mut rng::Rng) -> Result<Image> {
    let (h, w) = (cfg.height as f32, cfg.width as f32);
    let side = h.min(w);
    let half = side * rng.random_range(0.28..0.42);
    let cy = rng.random_range(half * 0.6..(h - half * 0.6).max(half * 0.6 + 1e-3));
    let cx = rng.random_range(half * 0.6..(w - half * 0.6).max(half * 0.6 + 1e-3));
    let background: f32 = rng.random_range(0.0..0.3);
    let level: f32 = rng.random_range(0.6..1.0);
    let tint: Vec<f32> = (0..cfg.channels).map(|_| rng.random_range(0.7..1.0)).collect();
    let noise = Normal::new(0.0f32, cfg.noise.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let shape = cfg.shape_offset + class;
    let mut pixels = Vec::with_capacity(cfg.height * cfg.width * cfg.channels);
    for r in 0..cfg.height {
        for c in 0..cfg.width {
            let u = (c as f32 + 0.5 - cx) / half;
            let v = (r as f32 + 0.5 - cy) / half;
            let on = inside(shape, u, v);
            for &t in &tint {
                let base = if on { level * t } else { background };
                pixels.push((base + noise.sample(rng)).clamp(0.0, 1.0));
            }
        }
    }
    Image::new(cfg.height, cfg.width, cfg.channels, pixels)
}

fn generate_split(cfg: &FixtureConfig, n: usize, split: u64, name: &str) -> Result<LabeledDataset> {
    let mut rng = rng::stream(cfg.seed, &[rng::tag::FIXTURE, split]);
    let classes: Vec<usize> = (0..n).map(|i| i % cfg.num_classes).collect();
    let images = classes
        .iter()
        .map(|&c| render(cfg, c, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::from_parts(name, images, LabelMatrix::one_hot(&classes, cfg.num_classes)?)
}

/// Train and test datasets of a fixture.
pub fn generate(cfg: &FixtureConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    if cfg.num_classes == 0 || cfg.num_classes > SHAPES.len() {
        return Err(Error::Config(format!("num_classes must be in 1..={}", SHAPES.len())));
    }
    if cfg.height == 0 || cfg.width == 0 || !(1..=4).contains(&cfg.channels) {
        return Err(Error::Config("invalid fixture geometry".into()));
    }
    Ok((
        generate_split(cfg, cfg.n_train, 0, &format!("{}-train", cfg.name))?,
        generate_split(cfg, cfg.n_test, 1, &format!("{}-test", cfg.name))?,
    ))
}

/// Writes `<dir>/train` and `<dir>/test`, each with a `checksum.txt`.
pub fn write_fixture(cfg: &FixtureConfig, dir: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = generate(cfg)?;
    for (sub, ds) in [("train", &train), ("test", &test)] {
        let out = dir.join(sub);
        ds.save(&out)?;
        let path = out.join(CHECKSUM_FILE);
        fs::write(&path, format!("{}\n", ds.checksum())).map_err(|e| Error::io(&path, e))?;
    }
    Ok((train, test))
}

pub fn read_checksum(dir: &Path) -> Result<String> {
    let path = dir.join(CHECKSUM_FILE);
    fs::read_to_string(&path)
        .map(|s| s.trim().to_string())
        .map_err(|e| Error::io(&path, e))
}
