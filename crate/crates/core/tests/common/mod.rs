#![allow(dead_code)]

pub mod grad;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 8;

fn idx_bytes(magic: u32, dims: &[u32], data: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Ten classes of `SIDE × SIDE` images: a per-class stripe pattern plus
/// pixel noise, written as a `train` IDX pair.
pub fn write_toy_idx(dir: &Path, per_class: usize) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * 10 {
        let class = (i % 10) as u8;
        for p in 0..SIDE * SIDE {
            let (r, c) = (p / SIDE, p % SIDE);
            let on = (r + c * (class as usize + 1)) % 10 < 4;
            let base: f64 = if on { 200.0 } else { 30.0 };
            let v = base + rng.random_range(-25.0..25.0);
            pixels.push(v.clamp(0.0, 255.0) as u8);
        }
        labels.push(class);
    }
    let n = (per_class * 10) as u32;
    fs::write(dir.join("train-images-idx3-ubyte"), idx_bytes(0x0803, &[n, SIDE as u32, SIDE as u32], &pixels)).unwrap();
    fs::write(dir.join("train-labels-idx1-ubyte"), idx_bytes(0x0801, &[n], &labels)).unwrap();
}

/// A config small enough to run the full protocol in seconds.
pub fn toy_config(data: &Path, out: &Path, robust_epochs: usize) -> String {
    format!(
        r#"inlier_classes = [3]
outlier_percentages = [50]
seeds = [0]
attack_epsilons = [0.5, 1.0]
out_dir = "{out}"

[data]
name = "toy"
path = "{data}"

[architecture]
ambient_dim = {dim}
latent_dim = 3
encoder_hidden = [16]
discriminator_hidden = [8]

[aae]
epochs = 3
batch_size = 32
lr = 0.001

[robust]
epochs = {robust_epochs}
batch_size = 32
"#,
        out = out.display(),
        data = data.display(),
        dim = SIDE * SIDE,
    )
}
