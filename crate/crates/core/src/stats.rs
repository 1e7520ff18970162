//! Small sample-statistics helpers shared by the experiment and fit code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::sim::derive_seed;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

pub fn standard_error(xs: &[f64]) -> f64 {
    sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Resamples `xs` with replacement.
pub fn resample<R: Rng + ?Sized>(xs: &[f64], rng: &mut R) -> Vec<f64> {
    (0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]).collect()
}

/// Standard deviation of `statistic` over `k` bootstrap resamples of `xs`.
///
/// Resample `j` draws from its own generator seeded by `(seed, j)`, so the
/// result does not depend on the rayon pool size.
pub fn bootstrap_std<F>(xs: &[f64], k: usize, seed: u64, statistic: F) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if xs.is_empty() || k < 2 {
        return 0.0;
    }
    let stats: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[j as u64]));
            statistic(&resample(xs, &mut rng))
        })
        .collect();
    sample_std(&stats)
}
