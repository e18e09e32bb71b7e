//! Backward linear-relaxation bound propagation.
//!
//! Every hidden ReLU is replaced by a pair of bounding lines (see
//! [`relu_relaxation`]); linear bounds on a target layer are then pushed back
//! through the network to the input and concretized over the input box. The
//! pre-activation bounds that select each neuron's lines are computed the same
//! way, one layer at a time.

mod pass;
mod relax;
mod types;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{InputBox, Network};

pub(crate) use pass::{concretize_rows, run_pass, Direction, Pass};
pub(crate) use relax::LayerRelax;
pub use relax::{chord, classify, relu_relaxation, NeuronKind, Relaxation};
pub use types::{
    heuristic_slope, AlphaParams, IntermediateBounds, LinearBounds, NeuronId, SplitAssignment,
    SplitState,
};

/// Crossings `l > u` smaller than this (relative) are rounding noise, not
/// infeasibility.
const EMPTY_TOL: f64 = 1e-9;

/// Pre-computed bounds valid on a superset of the domain (typically the
/// parent node). Layers before `from_layer` are taken as-is; later layers are
/// recomputed and intersected with them.
#[derive(Debug, Clone, Copy)]
pub struct Reuse<'a> {
    pub bounds: &'a IntermediateBounds,
    pub from_layer: usize,
}

impl<'a> Reuse<'a> {
    /// Keep every layer fixed.
    pub fn frozen(bounds: &'a IntermediateBounds) -> Self {
        Self {
            bounds,
            from_layer: bounds.num_layers(),
        }
    }
}

/// Intermediate bounds plus the infeasibility flag.
#[derive(Debug, Clone)]
pub struct IntermediateOutcome {
    pub ibounds: IntermediateBounds,
    /// Split clamping produced `l > u`: the domain is empty.
    pub empty: bool,
}

/// Bounds on the scalar output over one sub-domain.
#[derive(Debug, Clone)]
pub struct DomainBounds {
    pub lower: f64,
    pub upper: f64,
    pub ibounds: IntermediateBounds,
    pub empty: bool,
    /// Box point minimizing the linear lower bound.
    pub minimizer: Vec<f64>,
    /// Backward coefficient reaching each ReLU output when bounding the
    /// output from below, per hidden layer.
    pub relu_coeffs: Vec<Vec<f64>>,
}

impl DomainBounds {
    fn empty(ibounds: IntermediateBounds) -> Self {
        Self {
            lower: f64::INFINITY,
            upper: f64::NEG_INFINITY,
            ibounds,
            empty: true,
            minimizer: Vec::new(),
            relu_coeffs: Vec::new(),
        }
    }
}

/// Everything computed for one domain, kept for reverse-mode differentiation.
#[derive(Debug)]
pub(crate) struct Evaluation {
    pub ibounds: IntermediateBounds,
    pub relax: Vec<LayerRelax>,
    pub empty: bool,
    /// Lower and upper passes of each recomputed hidden layer.
    pub layer_passes: Vec<Option<(Pass, Pass)>>,
    /// Whether the final `l` / `u` of a neuron came from its recomputed pass.
    pub from_pass: Vec<(Vec<bool>, Vec<bool>)>,
    /// Lower bound pass of the output layer.
    pub output: Option<Pass>,
}

fn check_shapes(net: &Network, splits: &SplitAssignment, alpha: &AlphaParams, bx: &InputBox) -> Result<()> {
    if bx.dim() != net.input_dim() {
        return Err(Error::Dimension {
            what: "input box",
            expected: net.input_dim(),
            actual: bx.dim(),
        });
    }
    if !splits.matches_shape(net) {
        return Err(Error::Dimension {
            what: "split assignment layers",
            expected: net.num_hidden(),
            actual: splits.num_layers(),
        });
    }
    if alpha.num_layers() != net.num_hidden()
        || (0..net.num_hidden()).any(|i| alpha.layer(i).len() != net.hidden_dim(i))
    {
        return Err(Error::Dimension {
            what: "alpha layers",
            expected: net.num_hidden(),
            actual: alpha.num_layers(),
        });
    }
    Ok(())
}

fn check_reuse(net: &Network, reuse: &Option<Reuse<'_>>) -> Result<()> {
    if let Some(r) = reuse {
        let needed = r.from_layer.min(net.num_hidden());
        if r.bounds.num_layers() < needed {
            return Err(Error::MissingBounds(r.bounds.num_layers()));
        }
    }
    Ok(())
}

/// Core pipeline. When `fill_heuristic` is set, `alpha` of each layer is
/// overwritten with the adaptive heuristic as soon as that layer's bounds are
/// known.
pub(crate) fn evaluate(
    net: &Network,
    splits: &SplitAssignment,
    alpha: &mut AlphaParams,
    fill_heuristic: bool,
    bx: &InputBox,
    reuse: Option<Reuse<'_>>,
    want_output: bool,
) -> Evaluation {
    let hidden = net.num_hidden();
    let mut lower: Vec<Vec<f64>> = Vec::with_capacity(hidden);
    let mut upper: Vec<Vec<f64>> = Vec::with_capacity(hidden);
    let mut relax: Vec<LayerRelax> = Vec::with_capacity(hidden);
    let mut layer_passes = Vec::with_capacity(hidden);
    let mut from_pass = Vec::with_capacity(hidden);
    let mut empty = false;

    for t in 0..hidden {
        let width = net.hidden_dim(t);
        let prior = reuse.and_then(|r| {
            (t < r.bounds.num_layers()).then(|| (&r.bounds.lower[t], &r.bounds.upper[t]))
        });
        let recompute = reuse.map_or(true, |r| t >= r.from_layer);
        let (mut l, mut u, took) = if recompute {
            let lo = run_pass(net, &relax, t, Direction::Lower, bx);
            let up = run_pass(net, &relax, t, Direction::Upper, bx);
            let mut l = lo.bound.to_vec();
            let mut u = up.bound.to_vec();
            let mut took_l = vec![true; width];
            let mut took_u = vec![true; width];
            if let Some((pl, pu)) = prior {
                for j in 0..width {
                    if pl[j] > l[j] {
                        l[j] = pl[j];
                        took_l[j] = false;
                    }
                    if pu[j] < u[j] {
                        u[j] = pu[j];
                        took_u[j] = false;
                    }
                }
            }
            layer_passes.push(Some((lo, up)));
            (l, u, (took_l, took_u))
        } else {
            let (pl, pu) = prior.expect("reused layer present");
            layer_passes.push(None);
            (pl.clone(), pu.clone(), (vec![false; width], vec![false; width]))
        };
        from_pass.push(took);

        let states = splits.layer(t);
        for j in 0..width {
            match states[j] {
                SplitState::Pos => l[j] = l[j].max(0.0),
                SplitState::Neg => u[j] = u[j].min(0.0),
                SplitState::Free => {}
            }
            if l[j] > u[j] {
                let scale = 1.0 + l[j].abs().max(u[j].abs());
                if l[j] - u[j] > EMPTY_TOL * scale {
                    empty = true;
                } else {
                    let v = match states[j] {
                        SplitState::Pos | SplitState::Neg => 0.0,
                        SplitState::Free => 0.5 * (l[j] + u[j]),
                    };
                    l[j] = v;
                    u[j] = v;
                }
            }
        }
        if fill_heuristic {
            for (a, (lj, uj)) in alpha.layer_mut(t).iter_mut().zip(l.iter().zip(&u)) {
                *a = heuristic_slope(*lj, *uj);
            }
        }
        relax.push(LayerRelax::build(&l, &u, alpha.layer(t), states));
        lower.push(l);
        upper.push(u);
        if empty {
            break;
        }
    }

    let output = (want_output && !empty)
        .then(|| run_pass(net, &relax, hidden, Direction::Lower, bx));
    Evaluation {
        ibounds: IntermediateBounds { lower, upper },
        relax,
        empty,
        layer_passes,
        from_pass,
        output,
    }
}

/// Backward propagation for `target_layer` (an affine layer index; the
/// output layer is `net.num_hidden()`), using `ibounds` for every earlier
/// hidden layer.
pub fn backward_bounds(
    net: &Network,
    splits: &SplitAssignment,
    ibounds: &IntermediateBounds,
    alpha: &AlphaParams,
    target_layer: usize,
) -> Result<LinearBounds> {
    if target_layer > net.num_hidden() {
        return Err(Error::Dimension {
            what: "target layer",
            expected: net.num_hidden(),
            actual: target_layer,
        });
    }
    if !splits.matches_shape(net) {
        return Err(Error::Dimension {
            what: "split assignment layers",
            expected: net.num_hidden(),
            actual: splits.num_layers(),
        });
    }
    let mut relax = Vec::with_capacity(target_layer);
    for k in 0..target_layer {
        if k >= ibounds.num_layers() || ibounds.lower[k].len() != net.hidden_dim(k) {
            return Err(Error::MissingBounds(k));
        }
        for (l, u) in ibounds.lower[k].iter().zip(&ibounds.upper[k]) {
            if l > u {
                return Err(Error::InvalidBounds { lower: *l, upper: *u });
            }
        }
        relax.push(LayerRelax::build(
            &ibounds.lower[k],
            &ibounds.upper[k],
            alpha.layer(k),
            splits.layer(k),
        ));
    }
    // Concretization is irrelevant here, any box of the right size works.
    let dummy = InputBox {
        lower: vec![0.0; net.input_dim()],
        upper: vec![0.0; net.input_dim()],
    };
    let lo = run_pass(net, &relax, target_layer, Direction::Lower, &dummy);
    let up = run_pass(net, &relax, target_layer, Direction::Upper, &dummy);
    Ok(LinearBounds {
        a_low: lo.coefs[0].clone(),
        b_low: lo.offset,
        a_up: up.coefs[0].clone(),
        b_up: up.offset,
    })
}

/// Exact minimum of the lower function and maximum of the upper function
/// over the box.
pub fn concretize(lb: &LinearBounds, bx: &InputBox) -> Result<(Vec<f64>, Vec<f64>)> {
    if lb.a_low.ncols() != bx.dim() || lb.a_up.ncols() != bx.dim() {
        return Err(Error::Dimension {
            what: "input box",
            expected: lb.a_low.ncols(),
            actual: bx.dim(),
        });
    }
    Ok((
        concretize_rows(&lb.a_low, &lb.b_low, bx, Direction::Lower).to_vec(),
        concretize_rows(&lb.a_up, &lb.b_up, bx, Direction::Upper).to_vec(),
    ))
}

pub fn compute_intermediate_bounds(
    net: &Network,
    splits: &SplitAssignment,
    alpha: &AlphaParams,
    bx: &InputBox,
    reuse: Option<Reuse<'_>>,
) -> Result<IntermediateOutcome> {
    check_shapes(net, splits, alpha, bx)?;
    check_reuse(net, &reuse)?;
    let mut alpha = alpha.clone();
    let ev = evaluate(net, splits, &mut alpha, false, bx, reuse, false);
    Ok(IntermediateOutcome {
        ibounds: ev.ibounds,
        empty: ev.empty,
    })
}

/// Bounds with the adaptive α heuristic chosen layer by layer; returns the
/// chosen α as well.
pub fn initial_bounds(
    net: &Network,
    splits: &SplitAssignment,
    bx: &InputBox,
    reuse: Option<Reuse<'_>>,
) -> Result<(AlphaParams, DomainBounds)> {
    let mut alpha = AlphaParams::constant(net, 0.0);
    check_shapes(net, splits, &alpha, bx)?;
    check_reuse(net, &reuse)?;
    let ev = evaluate(net, splits, &mut alpha, true, bx, reuse, true);
    let bounds = finish(net, splits, bx, ev)?;
    Ok((alpha, bounds))
}

pub fn compute_output_bounds(
    net: &Network,
    splits: &SplitAssignment,
    alpha: &AlphaParams,
    bx: &InputBox,
) -> Result<DomainBounds> {
    compute_output_bounds_with(net, splits, alpha, bx, None)
}

pub fn compute_output_bounds_with(
    net: &Network,
    splits: &SplitAssignment,
    alpha: &AlphaParams,
    bx: &InputBox,
    reuse: Option<Reuse<'_>>,
) -> Result<DomainBounds> {
    check_shapes(net, splits, alpha, bx)?;
    check_reuse(net, &reuse)?;
    let mut alpha = alpha.clone();
    let ev = evaluate(net, splits, &mut alpha, false, bx, reuse, true);
    finish(net, splits, bx, ev)
}

pub(crate) fn finish(
    net: &Network,
    splits: &SplitAssignment,
    bx: &InputBox,
    ev: Evaluation,
) -> Result<DomainBounds> {
    if net.output_dim() != 1 {
        return Err(Error::Dimension {
            what: "output (merge the property first)",
            expected: 1,
            actual: net.output_dim(),
        });
    }
    if ev.empty {
        return Ok(DomainBounds::empty(ev.ibounds));
    }
    let out = ev.output.expect("output pass requested");
    // Upper bound with the heuristic slopes on the final intermediate bounds.
    let heur = AlphaParams::heuristic(&ev.ibounds);
    let relax_up: Vec<LayerRelax> = (0..net.num_hidden())
        .map(|k| {
            LayerRelax::build(
                &ev.ibounds.lower[k],
                &ev.ibounds.upper[k],
                heur.layer(k),
                splits.layer(k),
            )
        })
        .collect();
    let up = run_pass(net, &relax_up, net.num_hidden(), Direction::Upper, bx);
    let relu_coeffs = (0..net.num_hidden())
        .map(|k| out.coefs[k + 1].row(0).to_vec())
        .collect();
    Ok(DomainBounds {
        lower: out.bound[0],
        upper: up.bound[0],
        minimizer: out.extreme_point(0, bx),
        ibounds: ev.ibounds,
        empty: false,
        relu_coeffs,
    })
}

/// One entry of a bounding batch.
#[derive(Debug, Clone, Copy)]
pub struct DomainQuery<'a> {
    pub splits: &'a SplitAssignment,
    pub alpha: &'a AlphaParams,
    pub reuse: Option<Reuse<'a>>,
}

/// Bounds every domain of the batch. With `parallel` set the work is spread
/// over the current rayon pool; results keep input order and are identical
/// to the serial computation.
pub fn batch_output_bounds(
    net: &Network,
    domains: &[DomainQuery<'_>],
    bx: &InputBox,
    parallel: bool,
) -> Vec<Result<DomainBounds>> {
    let run = |q: &DomainQuery<'_>| compute_output_bounds_with(net, q.splits, q.alpha, bx, q.reuse);
    if parallel {
        domains.par_iter().map(run).collect()
    } else {
        domains.iter().map(run).collect()
    }
}
