//! Seeded benchmark instances shared by the criterion benches.

use surropt::nn::random::random_network_seeded;
use surropt::problems::SurrogateProblem;
use surropt::{Activation, Network};

/// A ReLU net with `hidden` widths over `inputs` inputs and one output.
pub fn relu_net(seed: u64, inputs: usize, hidden: &[usize]) -> Network {
    random_network_seeded(seed, inputs, hidden, 1, Activation::Relu).expect("valid sizes")
}

/// Minimize the single output plus a small linear input term over `[-1, 1]^n`.
pub fn surrogate(net: &Network) -> SurrogateProblem {
    let n = net.input_dim();
    let gx = (0..n).map(|j| if j % 2 == 0 { 0.1 } else { -0.2 }).collect();
    SurrogateProblem::linear(vec![(-1.0, 1.0); n], vec![1.0]).with_gx(gx)
}
