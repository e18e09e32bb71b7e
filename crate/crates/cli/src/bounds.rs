//! Root-domain bound trace: the optimized LiRPA bound per iteration next to
//! the LP bound on the initial intermediate bounds and the LP bound on the
//! optimized ones.

use std::path::PathBuf;

use bab_verify::alpha_opt::{optimize_alpha, OptimizerConfig};
use bab_verify::lirpa::{initial_bounds, IntermediateBounds, SplitAssignment};
use bab_verify::lp::{lp_bound, LpOutcome};
use bab_verify::model::{load_network, load_property_for, merge_property, InputBox, Network};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::bench::write_csv;
use crate::CliResult;

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub net: PathBuf,
    #[arg(long)]
    pub prop: PathBuf,
    /// Optimization iterations `K`.
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.98)]
    pub decay: f64,
    /// Trace CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl BoundsArgs {
    pub fn new(net: impl Into<PathBuf>, prop: impl Into<PathBuf>, iters: usize) -> Self {
        Self {
            net: net.into(),
            prop: prop.into(),
            iters,
            lr: 0.1,
            decay: 0.98,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub iteration: usize,
    /// LiRPA lower bound at this iterate.
    pub lirpa: f64,
    /// Best LiRPA lower bound so far.
    pub lirpa_best: f64,
    /// LP on the intermediate bounds of the heuristic slopes.
    pub lp_initial: f64,
    /// LP on the intermediate bounds of the best iterate.
    pub lp_optimized: f64,
}

const CROSSING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsTrace {
    pub rows: Vec<BoundsRow>,
    pub lp_initial: f64,
    pub lp_optimized: f64,
}

impl BoundsTrace {
    pub fn final_lirpa(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.lirpa_best)
    }

    /// First iteration whose best bound exceeds the initial-bounds LP by
    /// more than rounding.
    pub fn crossing(&self) -> Option<usize> {
        let tol = CROSSING_TOL * (1.0 + self.lp_initial.abs());
        self.rows
            .iter()
            .find(|r| r.lirpa_best > self.lp_initial + tol)
            .map(|r| r.iteration)
    }

    /// `final_lirpa − lp_initial`.
    pub fn margin(&self) -> f64 {
        self.final_lirpa() - self.lp_initial
    }

    pub fn summary(&self) -> String {
        format!(
            "iterations {} lirpa {} lp_initial {} lp_optimized {} crossing {}",
            self.rows.len().saturating_sub(1),
            self.final_lirpa(),
            self.lp_initial,
            self.lp_optimized,
            self.crossing().map_or("none".into(), |i| i.to_string())
        )
    }
}

fn lp_value(net: &Network, s: &SplitAssignment, ib: &IntermediateBounds, bx: &InputBox) -> CliResult<f64> {
    Ok(match lp_bound(net, s, ib, bx)?.outcome {
        LpOutcome::Optimal { value, .. } => value,
        LpOutcome::Infeasible => f64::INFINITY,
        LpOutcome::Unbounded => f64::NEG_INFINITY,
        LpOutcome::NumericalFailure => f64::NAN,
    })
}

/// Trace for an already merged scalar network.
pub fn bounds_trace(net: &Network, bx: &InputBox, cfg: &OptimizerConfig) -> CliResult<BoundsTrace> {
    let root = SplitAssignment::free(net);
    let (alpha0, init) = initial_bounds(net, &root, bx, None)?;
    let lp_initial = lp_value(net, &root, &init.ibounds, bx)?;
    let opt = optimize_alpha(net, &root, &alpha0, bx, cfg)?;
    let lp_optimized = lp_value(net, &root, &opt.bounds.ibounds, bx)?;
    let rows = opt
        .trace
        .iter()
        .zip(opt.best_trace())
        .enumerate()
        .map(|(iteration, (&lirpa, lirpa_best))| BoundsRow {
            iteration,
            lirpa,
            lirpa_best,
            lp_initial,
            lp_optimized,
        })
        .collect();
    Ok(BoundsTrace {
        rows,
        lp_initial,
        lp_optimized,
    })
}

pub fn cmd_bounds(args: &BoundsArgs) -> CliResult<BoundsTrace> {
    let cfg = OptimizerConfig {
        iterations: args.iters,
        step_size: args.lr,
        decay: args.decay,
        early_stop_no_improve: 0,
        early_stop_verified: false,
    };
    cfg.validate()?;
    let net = load_network(&args.net)?;
    let prop = load_property_for(&args.prop, &net)?;
    let merged = merge_property(&net, &prop)?;
    let trace = bounds_trace(&merged, &prop.input, &cfg)?;
    if let Some(path) = &args.out {
        write_csv(path, &trace.rows)?;
    }
    Ok(trace)
}
