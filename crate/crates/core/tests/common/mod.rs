#![allow(dead_code)]

use bab_verify::lirpa::{SplitAssignment, SplitState};
use bab_verify::model::{InputBox, Network};
use bab_verify::oracle::random_network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// f(x) = ReLU(x) − ReLU(x) on [−1, 1]: two hidden neurons that both equal x.
pub fn a1_net() -> Network {
    Network::from_rows(&[
        (vec![vec![1.0], vec![1.0]], None),
        (vec![vec![1.0, -1.0]], None),
    ])
    .unwrap()
}

pub fn a1_box() -> InputBox {
    InputBox::new(vec![-1.0], vec![1.0]).unwrap()
}

pub fn splits(states: &[&[SplitState]]) -> SplitAssignment {
    SplitAssignment::from_states(states.iter().map(|s| s.to_vec()).collect())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scalar-output net with random depth and widths.
pub fn random_scalar_net(rng: &mut impl Rng, max_input: usize, layers: (usize, usize), max_width: usize) -> Network {
    let input = rng.gen_range(1..=max_input);
    let depth = rng.gen_range(layers.0..=layers.1);
    let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=max_width)).collect();
    random_network(rng, input, &widths, 1)
}

pub fn random_box(rng: &mut impl Rng, dim: usize) -> InputBox {
    let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eps = rng.gen_range(0.05..1.0);
    InputBox::linf_ball(&center, eps).unwrap()
}

pub fn sample_in(rng: &mut impl Rng, bx: &InputBox) -> Vec<f64> {
    bx.lower
        .iter()
        .zip(&bx.upper)
        .map(|(l, u)| if l < u { rng.gen_range(*l..=*u) } else { *l })
        .collect()
}

pub fn random_alpha(rng: &mut impl Rng, net: &Network) -> bab_verify::lirpa::AlphaParams {
    use bab_verify::lirpa::{AlphaParams, NeuronId};
    let mut a = AlphaParams::constant(net, 0.0);
    for k in 0..net.num_hidden() {
        for j in 0..net.hidden_dim(k) {
            a.set(NeuronId::new(k, j), rng.gen_range(0.0..=1.0));
        }
    }
    a
}
