//! Seeded, splittable random streams.
//!
//! Every randomized routine takes a `(seed, index)` pair and draws from its own
//! ChaCha stream, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

/// Independent stream `index` of the generator seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform (flat Dirichlet) draw from the simplex of dimension `k`.
pub fn simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = v.iter().sum();
    for x in &mut v {
        *x /= s;
    }
    v
}

/// Simplex draw where each coordinate is zeroed with probability `p_zero`
/// (at least one coordinate stays positive).
pub fn sparse_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize, p_zero: f64) -> Vec<f64> {
    let mut v = simplex(rng, k);
    let keep = rng.random_range(0..k);
    for (i, x) in v.iter_mut().enumerate() {
        if i != keep && rng.random::<f64>() < p_zero {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Draw an index from a pmf.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the last cumulative value.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}
