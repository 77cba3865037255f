//! Random network generation for demos, tests and benches.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, Layer, Network};
use crate::error::Result;

/// Half-width of the uniform weight distribution.
pub const WEIGHT_RANGE: f64 = 1.0;
/// Half-width of the uniform bias distribution.
pub const BIAS_RANGE: f64 = 0.5;

/// Deterministic RNG used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Network with the given hidden widths, weights `U[-1,1]` and biases `U[-0.5,0.5]`.
pub fn random_network<R: Rng + ?Sized>(
    rng: &mut R,
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    activation: Activation,
) -> Result<Network> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    let widths = hidden.iter().copied().chain(std::iter::once(output_dim));
    for (l, width) in widths.enumerate() {
        let weights = DMatrix::from_fn(width, prev, |_, _| rng.gen_range(-WEIGHT_RANGE..=WEIGHT_RANGE));
        let bias = (0..width).map(|_| rng.gen_range(-BIAS_RANGE..=BIAS_RANGE)).collect();
        let act = if l < hidden.len() { activation } else { Activation::Identity };
        layers.push(Layer::new(weights, bias, act)?);
        prev = width;
    }
    Network::new(input_dim, layers)
}

/// Convenience wrapper seeding a fresh ChaCha8 stream.
pub fn random_network_seeded(
    seed: u64,
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    activation: Activation,
) -> Result<Network> {
    random_network(&mut seeded_rng(seed), input_dim, hidden, output_dim, activation)
}
