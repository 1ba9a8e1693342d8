#![allow(dead_code)]

use poolal_core::{FeatureMatrix, LabelVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-feature pool with a smooth target.
pub fn plane_pool(n: usize, seed: u64) -> (FeatureMatrix, LabelVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
    let y = rows.iter().map(|r| (1.5 * r[0]).sin() + 0.3 * r[1] * r[1]).collect();
    (FeatureMatrix::from_rows(&rows).unwrap(), LabelVector::new(y).unwrap())
}

/// `y = sin(3x) + 0.1x²` on uniform draws from [-3, 3].
pub fn wave_pool(n: usize, seed: u64) -> (FeatureMatrix, LabelVector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..=3.0)).collect();
    let y = xs.iter().map(|x| (3.0 * x).sin() + 0.1 * x * x).collect();
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    (FeatureMatrix::from_rows(&rows).unwrap(), LabelVector::new(y).unwrap())
}

/// History text with the start-time token and runtime column blanked.
pub fn masked(text: &str) -> String {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 {
                let (_, rest) = line.split_once(", mode:").expect("header line");
                format!("#start time: <masked>, mode:{rest}")
            } else if i == 1 {
                line.to_owned()
            } else {
                let mut fields: Vec<&str> = line.split('\t').collect();
                let last = fields.len() - 1;
                fields[last] = "<masked>";
                fields.join("\t")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Tab-separated column `k` of every body line.
pub fn column(text: &str, k: usize) -> Vec<String> {
    text.lines().skip(2).map(|l| l.split('\t').nth(k).unwrap().to_owned()).collect()
}
