use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::model::Network;

/// Address of a hidden (pre-activation) neuron: hidden layer `layer` is the
/// output of affine layer `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }
}

/// Branching constraint on one pre-activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum SplitState {
    #[default]
    Free,
    /// `h ≥ 0`
    Pos,
    /// `h < 0` (handled as `h ≤ 0` by the relaxation)
    Neg,
}

/// Per-neuron split states for every hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplitAssignment {
    states: Vec<Vec<SplitState>>,
}

impl SplitAssignment {
    /// All neurons free.
    pub fn free(net: &Network) -> Self {
        Self {
            states: (0..net.num_hidden())
                .map(|i| vec![SplitState::Free; net.hidden_dim(i)])
                .collect(),
        }
    }

    pub fn from_states(states: Vec<Vec<SplitState>>) -> Self {
        Self { states }
    }

    pub fn get(&self, id: NeuronId) -> SplitState {
        self.states[id.layer][id.index]
    }

    pub fn layer(&self, layer: usize) -> &[SplitState] {
        &self.states[layer]
    }

    pub fn num_layers(&self) -> usize {
        self.states.len()
    }

    pub fn set(&mut self, id: NeuronId, state: SplitState) {
        self.states[id.layer][id.index] = state;
    }

    pub fn with(&self, id: NeuronId, state: SplitState) -> Self {
        let mut next = self.clone();
        next.set(id, state);
        next
    }

    pub fn split_count(&self) -> usize {
        self.states
            .iter()
            .flatten()
            .filter(|s| **s != SplitState::Free)
            .count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, SplitState)> + '_ {
        self.states.iter().enumerate().flat_map(|(l, row)| {
            row.iter()
                .enumerate()
                .map(move |(j, s)| (NeuronId::new(l, j), *s))
        })
    }

    pub fn matches_shape(&self, net: &Network) -> bool {
        self.states.len() == net.num_hidden()
            && self
                .states
                .iter()
                .enumerate()
                .all(|(i, row)| row.len() == net.hidden_dim(i))
    }

    /// Whether pre-activations `pre` (per hidden layer) satisfy the closed split
    /// constraints.
    pub fn admits(&self, pre: &[Vec<f64>]) -> bool {
        self.iter().all(|(id, s)| {
            let h = pre[id.layer][id.index];
            match s {
                SplitState::Free => true,
                SplitState::Pos => h >= 0.0,
                SplitState::Neg => h <= 0.0,
            }
        })
    }
}

/// Pre-activation bounds for every hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntermediateBounds {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl IntermediateBounds {
    pub fn num_layers(&self) -> usize {
        self.lower.len()
    }

    pub fn get(&self, id: NeuronId) -> (f64, f64) {
        (self.lower[id.layer][id.index], self.upper[id.layer][id.index])
    }

    /// Unstable neurons (`l < 0 < u`) whose split state is free.
    pub fn unstable(&self, splits: &SplitAssignment) -> Vec<NeuronId> {
        let mut out = Vec::new();
        for (layer, (lo, up)) in self.lower.iter().zip(&self.upper).enumerate() {
            for (j, (l, u)) in lo.iter().zip(up).enumerate() {
                let id = NeuronId::new(layer, j);
                if *l < 0.0 && *u > 0.0 && splits.get(id) == SplitState::Free {
                    out.push(id);
                }
            }
        }
        out
    }
}

/// Lower-relaxation slopes, stored densely for every hidden neuron. Only the
/// entries of unstable free neurons influence the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    slopes: Vec<Vec<f64>>,
}

impl AlphaParams {
    pub fn constant(net: &Network, value: f64) -> Self {
        Self {
            slopes: (0..net.num_hidden())
                .map(|i| vec![value.clamp(0.0, 1.0); net.hidden_dim(i)])
                .collect(),
        }
    }

    /// Adaptive slope choice: 1 when `u ≥ |l|`, else 0.
    pub fn heuristic(ibounds: &IntermediateBounds) -> Self {
        Self {
            slopes: ibounds
                .lower
                .iter()
                .zip(&ibounds.upper)
                .map(|(lo, up)| {
                    lo.iter()
                        .zip(up)
                        .map(|(l, u)| heuristic_slope(*l, *u))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn get(&self, id: NeuronId) -> f64 {
        self.slopes[id.layer][id.index]
    }

    pub fn set(&mut self, id: NeuronId, value: f64) {
        self.slopes[id.layer][id.index] = value.clamp(0.0, 1.0);
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.slopes[layer]
    }

    pub(crate) fn layer_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.slopes[layer]
    }

    pub fn num_layers(&self) -> usize {
        self.slopes.len()
    }

    /// Flat view over `support`, in order.
    pub fn flat(&self, support: &[NeuronId]) -> Vec<f64> {
        support.iter().map(|id| self.get(*id)).collect()
    }

    pub fn set_flat(&mut self, support: &[NeuronId], values: &[f64]) {
        for (id, v) in support.iter().zip(values) {
            self.set(*id, *v);
        }
    }

    pub fn is_valid(&self) -> bool {
        self.slopes
            .iter()
            .flatten()
            .all(|a| (0.0..=1.0).contains(a))
    }
}

pub fn heuristic_slope(lower: f64, upper: f64) -> f64 {
    if upper >= lower.abs() {
        1.0
    } else {
        0.0
    }
}

/// `A_low·x + b_low ≤ h(x) ≤ A_up·x + b_up`, one row per target neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBounds {
    pub a_low: Array2<f64>,
    pub b_low: Array1<f64>,
    pub a_up: Array2<f64>,
    pub b_up: Array1<f64>,
}
