//! Test-only oracles and synthetic data generators.
//!
//! The numerical oracles here are deliberately independent of the
//! implementations they check: the normal CDF uses a Taylor series and a
//! continued fraction rather than rational approximations, and gradients are
//! checked by central finite differences of the loss alone.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use featnorm::dataset::BinaryFeatureMatrix;

/// erf by its Taylor series: `2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1))`.
/// Accurate near machine precision for |x| <= 2.
fn erf_series(x: f64) -> f64 {
    let two_over_sqrt_pi = 2.0 / std::f64::consts::PI.sqrt();
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    for n in 1..200 {
        let n = n as f64;
        term *= -x2 / n;
        let contribution = term / (2.0 * n + 1.0);
        sum += contribution;
        if contribution.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    two_over_sqrt_pi * sum
}

/// erfc by the Legendre continued fraction
/// `sqrt(pi) exp(x^2) erfc(x) = 1/(x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...))))`,
/// evaluated with the modified Lentz algorithm. Valid for x >= 1.
fn erfc_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    for j in 1..500 {
        let a = if j == 1 { 1.0 } else { (j - 1) as f64 / 2.0 };
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() * f
}

/// Independent standard normal CDF: series core, continued-fraction tails.
pub fn normal_cdf_oracle(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    if x.abs() <= 1.5 {
        0.5 * (1.0 + erf_series(x))
    } else if x > 0.0 {
        1.0 - 0.5 * erfc_continued_fraction(x)
    } else {
        0.5 * erfc_continued_fraction(-x)
    }
}

/// Inverts [`normal_cdf_oracle`] by bisection to ~1e-13.
pub fn bisect_normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p must be in (0, 1)");
    let mut lo = -40.0f64;
    let mut hi = 40.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf_oracle(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Central finite differences of `f` at `point`, one coordinate at a time.
pub fn finite_difference_gradient(
    f: impl Fn(&[f64]) -> f64,
    point: &[f64],
    step: f64,
) -> Vec<f64> {
    let mut gradient = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[i] += step;
        minus[i] -= step;
        gradient.push((f(&plus) - f(&minus)) / (2.0 * step));
    }
    gradient
}

/// Binary matrix obtained by thresholding a random rank-`rank` logit model at
/// zero: `logits = scale * A Bᵀ / sqrt(rank) + shift` with standard normal
/// factors. Rows that come out constant are resampled so every concept has
/// both present and absent features.
pub fn low_rank_binary_matrix(
    n: usize,
    m: usize,
    rank: usize,
    logit_scale: f64,
    logit_shift: f64,
    seed: u64,
) -> BinaryFeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let feature_factors: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..rank).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let norm = (rank as f64).sqrt();

    let mut cells = Array2::<u8>::zeros((n, m));
    for i in 0..n {
        loop {
            let mut concept_factor: Vec<f64> =
                (0..rank).map(|_| rng.sample(StandardNormal)).collect();
            let norm_cf = concept_factor.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm_cf > 0.0 {
                let target = (rank as f64).sqrt();
                for v in concept_factor.iter_mut() {
                    *v *= target / norm_cf;
                }
            }
            let mut ones = 0usize;
            for j in 0..m {
                let dot: f64 = concept_factor
                    .iter()
                    .zip(&feature_factors[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let logit = logit_scale * dot / norm + logit_shift;
                let bit = u8::from(logit > 0.0);
                ones += bit as usize;
                cells[[i, j]] = bit;
            }
            if ones > 0 && ones < m {
                break;
            }
        }
    }

    let concepts = (0..n).map(|i| format!("c{i:03}")).collect();
    let features = (0..m).map(|j| format!("f{j:03}")).collect();
    BinaryFeatureMatrix::new(concepts, features, cells).expect("valid synthetic matrix")
}

/// Binary matrix of exactly `patterns.len()` distinct row patterns, each
/// repeated `copies` times, so the real-valued rank is at most the pattern
/// count. Useful for noiseless self-consistency checks.
pub fn pattern_matrix(patterns: &[Vec<u8>], copies: usize) -> BinaryFeatureMatrix {
    let m = patterns[0].len();
    assert!(patterns.iter().all(|p| p.len() == m));
    let n = patterns.len() * copies;
    let mut cells = Array2::<u8>::zeros((n, m));
    for (i, pattern) in patterns
        .iter()
        .flat_map(|p| std::iter::repeat_n(p, copies))
        .enumerate()
    {
        for (j, &bit) in pattern.iter().enumerate() {
            cells[[i, j]] = bit;
        }
    }
    let concepts = (0..n).map(|i| format!("c{i:03}")).collect();
    let features = (0..m).map(|j| format!("f{j:03}")).collect();
    BinaryFeatureMatrix::new(concepts, features, cells).expect("valid pattern matrix")
}

/// Flips each cell of `row` with the given per-direction probabilities,
/// deterministically for a seed.
pub fn flip_bits(row: &[u8], fp_rate: f64, fn_rate: f64, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    row.iter()
        .map(|&bit| {
            let u: f64 = rng.random();
            match bit {
                0 if u < fp_rate => 1,
                1 if u < fn_rate => 0,
                other => other,
            }
        })
        .collect()
}
