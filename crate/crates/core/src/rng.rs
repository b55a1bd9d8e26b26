//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha::ChaCha8Rng`)
//! seeded with `seed_from_u64(seed)`. Independent sub-streams are selected with
//! `set_stream`, so a document's draws depend only on `(seed, stream)` and not on
//! the order or thread in which documents are processed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

/// Human-readable identity of the generator, echoed into output metadata.
pub const RNG_IDENTITY: &str =
    "ChaCha8 (rand_chacha 0.9), seed_from_u64(seed), set_stream(stream)";

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws from a symmetric Dirichlet(`concentration` · 1_dim).
///
/// Sampling happens in log space: for shape < 1, Gamma(a) is drawn as
/// Gamma(a + 1) · U^(1/a), so tiny concentrations (0.01 over a large
/// vocabulary) never underflow to an all-zero vector.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, concentration: f64, dim: usize) -> Vec<f64> {
    assert!(concentration > 0.0 && dim > 0);
    let boosted = concentration < 1.0;
    let shape = if boosted { concentration + 1.0 } else { concentration };
    let gamma = Gamma::new(shape, 1.0).expect("positive gamma shape");
    let mut logs: Vec<f64> = (0..dim)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let mut lg = g.ln();
            if boosted {
                let u: f64 = rng.random::<f64>();
                // random() is in [0, 1); avoid ln(0)
                lg += (1.0 - u).ln() / concentration;
            }
            lg
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logs.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logs.iter_mut() {
        *l /= total;
    }
    logs
}

/// Inverse-CDF draw from a probability vector that sums to one.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum; take the last non-zero entry
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut order);
    order
}

pub fn shuffle<R: Rng + ?Sized, T>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
