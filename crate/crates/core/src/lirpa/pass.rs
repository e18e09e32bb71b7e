//! One backward propagation of linear bounds from a target layer to the input.

use ndarray::{Array1, Array2};

use crate::model::{InputBox, Network};

use super::relax::{LayerRelax, NeuronKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Lower,
    Upper,
}

impl Direction {
    /// Whether a coefficient `m` on a ReLU output picks that neuron's lower line.
    #[inline]
    pub fn picks_lower(self, m: f64) -> bool {
        match self {
            Direction::Lower => m >= 0.0,
            Direction::Upper => m < 0.0,
        }
    }

    /// Box coordinate that optimizes `m·x` in this direction.
    #[inline]
    pub fn extreme(self, m: f64, lo: f64, hi: f64) -> f64 {
        match (self, m >= 0.0) {
            (Direction::Lower, true) | (Direction::Upper, false) => lo,
            _ => hi,
        }
    }
}

/// Recorded backward pass. `coefs[k]` holds the coefficients on the input of
/// affine layer `k` (so `coefs[0]` is the final matrix on `x`), one row per
/// target neuron.
#[derive(Debug, Clone)]
pub(crate) struct Pass {
    pub dir: Direction,
    pub target: usize,
    pub coefs: Vec<Array2<f64>>,
    pub offset: Array1<f64>,
    pub bound: Array1<f64>,
}

pub(crate) fn run_pass(
    net: &Network,
    relax: &[LayerRelax],
    target: usize,
    dir: Direction,
    bx: &InputBox,
) -> Pass {
    let top = net.layer(target);
    let rows = top.out_dim();
    let mut coefs: Vec<Array2<f64>> = Vec::with_capacity(target + 1);
    let mut offset = top.bias.clone();
    let mut m = top.weight.clone();
    for k in (0..target).rev() {
        let lr = &relax[k];
        let layer = net.layer(k);
        let mut next = Array2::<f64>::zeros((rows, layer.in_dim()));
        for r in 0..rows {
            let mut acc = 0.0;
            let mut out = next.row_mut(r);
            for j in 0..lr.len() {
                let mij = m[[r, j]];
                if mij == 0.0 {
                    continue;
                }
                let line = &lr.lines[j];
                let (a, b) = match lr.kind[j] {
                    NeuronKind::Inactive => continue,
                    NeuronKind::Active => (1.0, 0.0),
                    NeuronKind::Unstable => {
                        if dir.picks_lower(mij) {
                            (line.a_low, line.b_low)
                        } else {
                            (line.a_up, line.b_up)
                        }
                    }
                };
                acc += mij * b;
                let lam = mij * a;
                if lam != 0.0 {
                    acc += lam * layer.bias[j];
                    out.scaled_add(lam, &layer.weight.row(j));
                }
            }
            offset[r] += acc;
        }
        coefs.push(std::mem::replace(&mut m, next));
    }
    coefs.push(m);
    coefs.reverse();
    let bound = concretize_rows(&coefs[0], &offset, bx, dir);
    Pass {
        dir,
        target,
        coefs,
        offset,
        bound,
    }
}

pub(crate) fn concretize_rows(
    a: &Array2<f64>,
    b: &Array1<f64>,
    bx: &InputBox,
    dir: Direction,
) -> Array1<f64> {
    Array1::from_iter(a.outer_iter().zip(b.iter()).map(|(row, off)| {
        row.iter()
            .zip(bx.lower.iter().zip(&bx.upper))
            .map(|(m, (lo, hi))| m * dir.extreme(*m, *lo, *hi))
            .sum::<f64>()
            + off
    }))
}

impl Pass {
    /// Box point attaining `bound[row]`.
    pub fn extreme_point(&self, row: usize, bx: &InputBox) -> Vec<f64> {
        self.coefs[0]
            .row(row)
            .iter()
            .zip(bx.lower.iter().zip(&bx.upper))
            .map(|(m, (lo, hi))| self.dir.extreme(*m, *lo, *hi))
            .collect()
    }
}
