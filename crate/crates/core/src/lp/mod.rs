//! Linear-programming bounds and feasibility checks for sub-domains.
//!
//! The LP keeps one variable per input, pre-activation and post-activation
//! and encodes every split as a sign constraint, so conflicting splits that
//! bound propagation cannot see show up as infeasibility.

mod simplex;

pub use simplex::{
    solve_lp, solve_lp_with_limit, Constraint, LpOutcome, LpProblem, Relation, CERTIFICATE_TOL,
    FEASIBILITY_TOL, MAX_PIVOTS, OPTIMALITY_TOL,
};

use crate::error::{Error, Result};
use crate::lirpa::{chord, classify, IntermediateBounds, NeuronKind, SplitAssignment, SplitState};
use crate::model::{InputBox, Network};

/// A strictly negative split must leave at least this much room below zero
/// for the sub-domain to count as nonempty.
pub const STRICT_MARGIN_TOL: f64 = 1e-9;

/// Triangle-relaxation LP of one sub-domain together with its variable map.
#[derive(Debug, Clone)]
pub struct RelaxationLp {
    pub problem: LpProblem,
    /// Input variables are always `0..input_dim`.
    pub input_dim: usize,
    pub pre: Vec<Vec<usize>>,
    pub post: Vec<Vec<usize>>,
    pub output: usize,
    /// Margin variable `t` of the strict-feasibility variant.
    pub margin: Option<usize>,
}

impl RelaxationLp {
    pub fn input_point(&self, point: &[f64]) -> Vec<f64> {
        point[..self.input_dim].to_vec()
    }
}

/// Triangle relaxation for unstable free neurons, exact encodings for stable
/// and split neurons, objective = output variable.
pub fn build_lp(
    net: &Network,
    splits: &SplitAssignment,
    ibounds: &IntermediateBounds,
    bx: &InputBox,
) -> Result<RelaxationLp> {
    build(net, splits, ibounds, bx, false)
}

/// Same constraints, but every negative split becomes `h + t ≤ 0` and the
/// objective maximizes `t ∈ [0, 1]`. A zero optimum means the open
/// sub-domain `h < 0` is empty.
pub fn build_strict_feasibility_lp(
    net: &Network,
    splits: &SplitAssignment,
    ibounds: &IntermediateBounds,
    bx: &InputBox,
) -> Result<RelaxationLp> {
    build(net, splits, ibounds, bx, true)
}

fn build(
    net: &Network,
    splits: &SplitAssignment,
    ibounds: &IntermediateBounds,
    bx: &InputBox,
    strict: bool,
) -> Result<RelaxationLp> {
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
    for k in 0..net.num_hidden() {
        if k >= ibounds.num_layers()
            || ibounds.lower[k].len() != net.hidden_dim(k)
            || ibounds.upper[k].len() != net.hidden_dim(k)
        {
            return Err(Error::MissingBounds(k));
        }
    }

    let mut p = LpProblem::new();
    for d in 0..bx.dim() {
        p.add_var(format!("x{d}"), bx.lower[d], bx.upper[d]);
    }
    let margin = strict.then(|| p.add_var("t", 0.0, 1.0));

    let mut prev: Vec<usize> = (0..bx.dim()).collect();
    let mut pre = Vec::with_capacity(net.num_hidden());
    let mut post = Vec::with_capacity(net.num_hidden());
    for k in 0..net.num_hidden() {
        let layer = net.layer(k);
        let mut h_vars = Vec::with_capacity(layer.out_dim());
        let mut g_vars = Vec::with_capacity(layer.out_dim());
        for j in 0..layer.out_dim() {
            let (l, u) = (ibounds.lower[k][j], ibounds.upper[k][j]);
            let h = p.add_var(format!("h_{k}_{j}"), l.min(u), u.max(l));
            let mut coeffs = vec![(h, 1.0)];
            coeffs.extend(prev.iter().zip(layer.weight.row(j)).filter(|(_, w)| **w != 0.0).map(|(v, w)| (*v, -w)));
            p.add_constraint(format!("aff_{k}_{j}"), coeffs, Relation::Eq, layer.bias[j]);

            let state = splits.layer(k)[j];
            let g = match classify(l, u, state) {
                NeuronKind::Unstable => {
                    let g = p.add_var(format!("g_{k}_{j}"), f64::NEG_INFINITY, f64::INFINITY);
                    let (a, b) = chord(l, u);
                    p.add_constraint(format!("tri_{k}_{j}_nonneg"), vec![(g, 1.0)], Relation::Ge, 0.0);
                    p.add_constraint(
                        format!("tri_{k}_{j}_above"),
                        vec![(g, 1.0), (h, -1.0)],
                        Relation::Ge,
                        0.0,
                    );
                    p.add_constraint(
                        format!("tri_{k}_{j}_chord"),
                        vec![(g, 1.0), (h, -a)],
                        Relation::Le,
                        b,
                    );
                    g
                }
                NeuronKind::Active => {
                    let g = p.add_var(format!("g_{k}_{j}"), f64::NEG_INFINITY, f64::INFINITY);
                    p.add_constraint(
                        format!("act_{k}_{j}"),
                        vec![(g, 1.0), (h, -1.0)],
                        Relation::Eq,
                        0.0,
                    );
                    if state == SplitState::Pos {
                        p.add_constraint(format!("split_pos_{k}_{j}"), vec![(h, 1.0)], Relation::Ge, 0.0);
                    }
                    g
                }
                NeuronKind::Inactive => {
                    let g = p.add_var(format!("g_{k}_{j}"), 0.0, 0.0);
                    if state == SplitState::Neg {
                        let mut coeffs = vec![(h, 1.0)];
                        if let Some(t) = margin {
                            coeffs.push((t, 1.0));
                        }
                        p.add_constraint(format!("split_neg_{k}_{j}"), coeffs, Relation::Le, 0.0);
                    }
                    g
                }
            };
            h_vars.push(h);
            g_vars.push(g);
        }
        prev = g_vars.clone();
        pre.push(h_vars);
        post.push(g_vars);
    }

    let out_layer = net.layer(net.num_hidden());
    if out_layer.out_dim() != 1 {
        return Err(Error::Dimension {
            what: "output (merge the property first)",
            expected: 1,
            actual: out_layer.out_dim(),
        });
    }
    let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
    let mut coeffs = vec![(y, 1.0)];
    coeffs.extend(prev.iter().zip(out_layer.weight.row(0)).filter(|(_, w)| **w != 0.0).map(|(v, w)| (*v, -w)));
    p.add_constraint("out", coeffs, Relation::Eq, out_layer.bias[0]);
    match margin {
        Some(t) => p.objective[t] = -1.0,
        None => p.objective[y] = 1.0,
    }
    Ok(RelaxationLp {
        problem: p,
        input_dim: bx.dim(),
        pre,
        post,
        output: y,
        margin,
    })
}

pub fn has_crossed_bounds(ibounds: &IntermediateBounds) -> bool {
    ibounds
        .lower
        .iter()
        .zip(&ibounds.upper)
        .any(|(lo, up)| lo.iter().zip(up).any(|(l, u)| l > u))
}

/// Result of bounding one sub-domain by LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LpBound {
    pub outcome: LpOutcome,
    /// Input part of the optimal point, when optimal.
    pub input_point: Option<Vec<f64>>,
}

/// Solves the relaxation LP. `Optimal(v)` is a sound lower bound on the
/// output over the sub-domain; `Infeasible` certifies that the sub-domain
/// (with `h < 0` read strictly) is empty.
pub fn lp_bound(
    net: &Network,
    splits: &SplitAssignment,
    ibounds: &IntermediateBounds,
    bx: &InputBox,
) -> Result<LpBound> {
    if has_crossed_bounds(ibounds) {
        return Ok(LpBound {
            outcome: LpOutcome::Infeasible,
            input_point: None,
        });
    }
    let lp = build_lp(net, splits, ibounds, bx)?;
    let outcome = solve_lp(&lp.problem);
    let LpOutcome::Optimal { point, .. } = &outcome else {
        return Ok(LpBound {
            outcome,
            input_point: None,
        });
    };
    let input_point = Some(lp.input_point(point));
    let has_neg = splits.iter().any(|(_, s)| s == SplitState::Neg);
    if has_neg && !strictly_feasible(net, splits, ibounds, bx)? {
        return Ok(LpBound {
            outcome: LpOutcome::Infeasible,
            input_point: None,
        });
    }
    Ok(LpBound {
        outcome,
        input_point,
    })
}

/// Whether some point of the relaxation satisfies every negative split
/// strictly.
pub fn strictly_feasible(
    net: &Network,
    splits: &SplitAssignment,
    ibounds: &IntermediateBounds,
    bx: &InputBox,
) -> Result<bool> {
    let lp = build_strict_feasibility_lp(net, splits, ibounds, bx)?;
    Ok(match solve_lp(&lp.problem) {
        LpOutcome::Optimal { value, .. } => -value > STRICT_MARGIN_TOL,
        LpOutcome::Infeasible => false,
        // Undecided: keep the domain.
        LpOutcome::Unbounded | LpOutcome::NumericalFailure => true,
    })
}
