use crate::error::{Error, Result};

use super::types::SplitState;

/// How a neuron is treated by the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronKind {
    /// `u ≤ 0` or split negative: `g = 0`.
    Inactive,
    /// `l ≥ 0` or split positive: `g = h`.
    Active,
    /// `l < 0 < u`, free: needs a relaxation.
    Unstable,
}

pub fn classify(lower: f64, upper: f64, state: SplitState) -> NeuronKind {
    match state {
        SplitState::Pos => NeuronKind::Active,
        SplitState::Neg => NeuronKind::Inactive,
        SplitState::Free if upper <= 0.0 => NeuronKind::Inactive,
        SplitState::Free if lower >= 0.0 => NeuronKind::Active,
        SplitState::Free => NeuronKind::Unstable,
    }
}

/// Linear lower and upper bounding lines of one ReLU:
/// `a_low·h + b_low ≤ ReLU(h) ≤ a_up·h + b_up` on `[l, u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub a_low: f64,
    pub b_low: f64,
    pub a_up: f64,
    pub b_up: f64,
}

impl Relaxation {
    const ZERO: Self = Self {
        a_low: 0.0,
        b_low: 0.0,
        a_up: 0.0,
        b_up: 0.0,
    };
    const IDENTITY: Self = Self {
        a_low: 1.0,
        b_low: 0.0,
        a_up: 1.0,
        b_up: 0.0,
    };
}

/// Upper chord slope and intercept of an unstable neuron.
pub fn chord(lower: f64, upper: f64) -> (f64, f64) {
    let width = upper - lower;
    (upper / width, -upper * lower / width)
}

pub fn relu_relaxation(lower: f64, upper: f64, alpha: f64, state: SplitState) -> Result<Relaxation> {
    if lower > upper {
        return Err(Error::InvalidBounds { lower, upper });
    }
    Ok(relaxation_unchecked(lower, upper, alpha, state))
}

pub(crate) fn relaxation_unchecked(lower: f64, upper: f64, alpha: f64, state: SplitState) -> Relaxation {
    match classify(lower, upper, state) {
        NeuronKind::Inactive => Relaxation::ZERO,
        NeuronKind::Active => Relaxation::IDENTITY,
        NeuronKind::Unstable => {
            let (a_up, b_up) = chord(lower, upper);
            Relaxation {
                a_low: alpha,
                b_low: 0.0,
                a_up,
                b_up,
            }
        }
    }
}

/// Relaxations for a whole hidden layer.
#[derive(Debug, Clone)]
pub(crate) struct LayerRelax {
    pub kind: Vec<NeuronKind>,
    pub lines: Vec<Relaxation>,
}

impl LayerRelax {
    pub fn build(lower: &[f64], upper: &[f64], alpha: &[f64], states: &[SplitState]) -> Self {
        let kind: Vec<NeuronKind> = lower
            .iter()
            .zip(upper)
            .zip(states)
            .map(|((l, u), s)| classify(*l, *u, *s))
            .collect();
        let lines = (0..lower.len())
            .map(|j| relaxation_unchecked(lower[j], upper[j], alpha[j], states[j]))
            .collect();
        Self { kind, lines }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unstable_uses_alpha_and_chord() {
        let r = relu_relaxation(-1.0, 1.0, 0.3, SplitState::Free).unwrap();
        assert_eq!(
            r,
            Relaxation {
                a_low: 0.3,
                b_low: 0.0,
                a_up: 0.5,
                b_up: 0.5
            }
        );
    }

    #[test]
    fn stable_active_is_identity() {
        for alpha in [0.0, 0.4, 1.0] {
            let r = relu_relaxation(0.2, 3.0, alpha, SplitState::Free).unwrap();
            assert_eq!(r, Relaxation::IDENTITY);
        }
    }

    #[test]
    fn neg_split_is_zero() {
        for alpha in [0.0, 0.7] {
            let r = relu_relaxation(-1.0, 1.0, alpha, SplitState::Neg).unwrap();
            assert_eq!(r, Relaxation::ZERO);
        }
    }

    #[test]
    fn pos_split_is_identity() {
        let r = relu_relaxation(-1.0, 1.0, 0.2, SplitState::Pos).unwrap();
        assert_eq!(r, Relaxation::IDENTITY);
    }

    #[test]
    fn stable_inactive_is_zero() {
        let r = relu_relaxation(-3.0, -0.5, 0.5, SplitState::Free).unwrap();
        assert_eq!(r, Relaxation::ZERO);
    }

    #[test]
    fn inverted_bounds_rejected() {
        assert!(matches!(
            relu_relaxation(1.0, -1.0, 0.5, SplitState::Free),
            Err(Error::InvalidBounds { .. })
        ));
    }

    #[test]
    fn relaxation_brackets_relu() {
        let (l, u) = (-2.0, 0.7);
        for alpha in [0.0, 0.25, 1.0] {
            let r = relu_relaxation(l, u, alpha, SplitState::Free).unwrap();
            for k in 0..=100 {
                let h = l + (u - l) * k as f64 / 100.0;
                let g = h.max(0.0);
                assert!(r.a_low * h + r.b_low <= g + 1e-12);
                assert!(r.a_up * h + r.b_up >= g - 1e-12);
            }
        }
    }
}
