//! Tightening of the output lower bound by projected gradient ascent on the
//! lower-relaxation slopes α.
//!
//! The gradient is the total derivative through the whole pipeline: changing
//! α of an early layer moves later intermediate bounds, which moves their
//! upper chords, which moves the output bound. Reusing (or freezing)
//! intermediate bounds cuts those paths for the layers involved.

mod grad;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lirpa::{
    self, evaluate, AlphaParams, DomainBounds, NeuronId, NeuronKind, Reuse, SplitAssignment,
};
use crate::model::{InputBox, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub step_size: f64,
    /// Multiplicative step decay per iteration, in `(0, 1]`.
    pub decay: f64,
    /// Stop after this many iterations without improving the best bound
    /// (0 disables).
    pub early_stop_no_improve: usize,
    /// Stop as soon as the best bound is positive.
    pub early_stop_verified: bool,
}

impl OptimizerConfig {
    /// Settings for the root domain.
    pub fn initial() -> Self {
        Self {
            iterations: 100,
            ..Self::default()
        }
    }

    /// Settings for each branch-and-bound node.
    pub fn per_node() -> Self {
        Self {
            iterations: 10,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!("decay must be in (0, 1], got {}", self.decay)));
        }
        Ok(())
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            step_size: 0.1,
            decay: 0.98,
            early_stop_no_improve: 5,
            early_stop_verified: true,
        }
    }
}

/// Output lower bound and its gradient over the unstable free neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Neurons the entries of `grad` refer to.
    pub support: Vec<NeuronId>,
}

pub fn grad_lower_bound(
    net: &Network,
    splits: &SplitAssignment,
    alpha: &AlphaParams,
    bx: &InputBox,
) -> Result<GradResult> {
    grad_lower_bound_with(net, splits, alpha, bx, None)
}

pub fn grad_lower_bound_with(
    net: &Network,
    splits: &SplitAssignment,
    alpha: &AlphaParams,
    bx: &InputBox,
    reuse: Option<Reuse<'_>>,
) -> Result<GradResult> {
    // Validates shapes and the scalar output.
    lirpa::compute_output_bounds_with(net, splits, alpha, bx, reuse)?;
    let (value, dense, support) = dense_gradient(net, splits, alpha, bx, reuse);
    let grad = support.iter().map(|id| dense[id.layer][id.index]).collect();
    Ok(GradResult {
        value,
        grad,
        support,
    })
}

/// `(f_lb, ∂f_lb/∂α dense, unstable support)`; assumes validated inputs.
fn dense_gradient(
    net: &Network,
    splits: &SplitAssignment,
    alpha: &AlphaParams,
    bx: &InputBox,
    reuse: Option<Reuse<'_>>,
) -> (f64, Vec<Vec<f64>>, Vec<NeuronId>) {
    let mut a = alpha.clone();
    let ev = evaluate(net, splits, &mut a, false, bx, reuse, true);
    if ev.empty {
        let zeros = (0..net.num_hidden())
            .map(|i| vec![0.0; net.hidden_dim(i)])
            .collect();
        return (f64::INFINITY, zeros, Vec::new());
    }
    let support: Vec<NeuronId> = ev
        .relax
        .iter()
        .enumerate()
        .flat_map(|(k, lr)| {
            lr.kind
                .iter()
                .enumerate()
                .filter(|(_, kind)| **kind == NeuronKind::Unstable)
                .map(move |(j, _)| NeuronId::new(k, j))
        })
        .collect();
    let value = ev.output.as_ref().expect("output pass").bound[0];
    let dense = grad::lower_bound_gradient(net, &ev, bx);
    (value, dense, support)
}

/// Result of optimizing one domain.
#[derive(Debug, Clone)]
pub struct OptimizeResult {
    /// Slopes of the best iterate.
    pub alpha: AlphaParams,
    /// Best lower bound found.
    pub lower: f64,
    /// Full bounds at the best iterate.
    pub bounds: DomainBounds,
    /// Lower bound of every evaluated iterate, starting with `alpha0`.
    pub trace: Vec<f64>,
}

impl OptimizeResult {
    /// Running maximum of `trace`.
    pub fn best_trace(&self) -> Vec<f64> {
        self.trace
            .iter()
            .scan(f64::NEG_INFINITY, |best, v| {
                *best = best.max(*v);
                Some(*best)
            })
            .collect()
    }
}

pub fn optimize_alpha(
    net: &Network,
    splits: &SplitAssignment,
    alpha0: &AlphaParams,
    bx: &InputBox,
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult> {
    optimize_alpha_with(net, splits, alpha0, bx, None, cfg)
}

/// Projected gradient ascent `α ← clip(α + step·∇, 0, 1)` keeping the best
/// iterate.
pub fn optimize_alpha_with(
    net: &Network,
    splits: &SplitAssignment,
    alpha0: &AlphaParams,
    bx: &InputBox,
    reuse: Option<Reuse<'_>>,
    cfg: &OptimizerConfig,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let initial = lirpa::compute_output_bounds_with(net, splits, alpha0, bx, reuse)?;
    if initial.empty || cfg.iterations == 0 {
        return Ok(OptimizeResult {
            alpha: alpha0.clone(),
            lower: initial.lower,
            trace: vec![initial.lower],
            bounds: initial,
        });
    }

    let mut alpha = alpha0.clone();
    let mut best_alpha = alpha0.clone();
    let mut best = f64::NEG_INFINITY;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut step = cfg.step_size;
    let mut stale = 0usize;

    for it in 0..=cfg.iterations {
        let (value, dense, support) = dense_gradient(net, splits, &alpha, bx, reuse);
        trace.push(value);
        if value > best {
            best = value;
            best_alpha = alpha.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if it == cfg.iterations
            || support.is_empty()
            || (cfg.early_stop_verified && best > 0.0)
            || (cfg.early_stop_no_improve > 0 && stale >= cfg.early_stop_no_improve)
        {
            break;
        }
        for (k, row) in dense.iter().enumerate() {
            let slopes = alpha.layer_mut(k);
            for (a, g) in slopes.iter_mut().zip(row) {
                *a = (*a + step * g).clamp(0.0, 1.0);
            }
        }
        step *= cfg.decay;
    }

    let bounds = lirpa::compute_output_bounds_with(net, splits, &best_alpha, bx, reuse)?;
    Ok(OptimizeResult {
        alpha: best_alpha,
        lower: bounds.lower,
        bounds,
        trace,
    })
}

/// One domain of an optimization batch.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeQuery<'a> {
    pub splits: &'a SplitAssignment,
    pub alpha0: &'a AlphaParams,
    pub reuse: Option<Reuse<'a>>,
}

/// [`optimize_alpha_with`] for every domain; input order is preserved.
pub fn batch_optimize_alpha(
    net: &Network,
    domains: &[OptimizeQuery<'_>],
    bx: &InputBox,
    cfg: &OptimizerConfig,
    parallel: bool,
) -> Vec<Result<OptimizeResult>> {
    let run = |q: &OptimizeQuery<'_>| optimize_alpha_with(net, q.splits, q.alpha0, bx, q.reuse, cfg);
    if parallel {
        domains.par_iter().map(run).collect()
    } else {
        domains.iter().map(run).collect()
    }
}
