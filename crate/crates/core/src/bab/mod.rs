//! Batched branch and bound over ReLU splits.
//!
//! The loop keeps a set of unverified sub-domains, repeatedly takes the `n`
//! worst, splits each on the neuron with the highest BaBSR score and bounds
//! all children in one batch with optimized linear relaxation. Children that
//! are proved, empty or fully split leave the set; fully split leaves and,
//! once the set grows past `η`, the most recent children are handed to the LP,
//! which also checks their parents. Disproof only ever comes from a concrete
//! forward evaluation below zero.

mod domain;

use std::collections::{HashMap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use domain::{DomainId, DomainSet, EventKind, NodeEvent, NodeRecord, SearchTree, SubDomain};

use crate::alpha_opt::{optimize_alpha, optimize_alpha_with, OptimizerConfig};
use crate::error::{Error, Result};
use crate::lirpa::{
    initial_bounds, AlphaParams, IntermediateBounds, NeuronId, NeuronKind, Reuse,
    SplitAssignment, SplitState, classify,
};
use crate::lp::{lp_bound, LpBound, LpOutcome};
use crate::model::{merge_property, InputBox, Network, PropertySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Domains split per iteration (`n`).
    pub batch_size: usize,
    /// Domain-set size that triggers the LP pass (`η`).
    pub lp_threshold: usize,
    /// Wall-clock budget in seconds.
    pub timeout: f64,
    pub thread_count: usize,
    pub initial_opt: OptimizerConfig,
    pub node_opt: OptimizerConfig,
    /// Bound every domain with the heuristic slopes only.
    pub disable_alpha_opt: bool,
    pub force_batch_size_1: bool,
    /// Never call the LP: infeasible leaves stay unresolved.
    pub disable_lp_fallback: bool,
    /// Reference mode: LP-check every child as soon as it is created.
    pub lp_every_node: bool,
    /// Keep one [`NodeEvent`] per domain event in the verdict.
    pub record_events: bool,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lp_threshold: 512,
            timeout: 300.0,
            thread_count: 1,
            initial_opt: OptimizerConfig::initial(),
            node_opt: OptimizerConfig::per_node(),
            disable_alpha_opt: false,
            force_batch_size_1: false,
            disable_lp_fallback: false,
            lp_every_node: false,
            record_events: false,
        }
    }
}

impl VerifierConfig {
    pub fn effective_batch_size(&self) -> usize {
        if self.force_batch_size_1 {
            1
        } else {
            self.batch_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.lp_threshold < 2 * self.batch_size {
            return Err(Error::Config(format!(
                "lp threshold {} must be at least twice the batch size {}",
                self.lp_threshold, self.batch_size
            )));
        }
        if !(self.timeout > 0.0) {
            return Err(Error::Config(format!("timeout must be positive, got {}", self.timeout)));
        }
        if self.thread_count == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        if self.lp_every_node && self.disable_lp_fallback {
            return Err(Error::Config("LP-per-node mode needs the LP".into()));
        }
        self.initial_opt.validate()?;
        self.node_opt.validate()
    }
}

/// Input with a negative output, confirmed by a forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub input: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Verified,
    Falsified { witness: Vec<f64>, value: f64 },
    Timeout,
    IncompleteModeExhausted,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Verified => "VERIFIED",
            Status::Falsified { .. } => "FALSIFIED",
            Status::Timeout => "TIMEOUT",
            Status::IncompleteModeExhausted => "INCOMPLETE_MODE_EXHAUSTED",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    pub bounding_s: f64,
    pub lp_s: f64,
    /// Everything else: picking, splitting, filtering, bookkeeping.
    pub branching_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// Domains split.
    pub branches: usize,
    /// Domains created, root included.
    pub domains: usize,
    pub iterations: usize,
    pub lp_calls: usize,
    pub lp_infeasible: usize,
    pub lp_proved: usize,
    pub verified_by_bounds: usize,
    pub empty_by_bounds: usize,
    /// Domains removed because an ancestor was resolved by LP.
    pub pruned: usize,
    pub max_depth: usize,
    pub timing: Timing,
}

/// Global bounds after each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Minimum bound over the current frontier.
    pub lower: f64,
    /// Best frontier minimum seen so far.
    pub certified_lower: f64,
    /// Smallest output value evaluated so far.
    pub upper: f64,
    pub domains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    /// Global lower bound `f̲`: minimum bound over the final frontier
    /// (resolved, open and exhausted domains; infeasible ones excluded).
    pub lower: f64,
    /// Running maximum of `lower`.
    pub certified_lower: f64,
    /// Global upper bound `f̄`: smallest concrete output value evaluated.
    pub upper: f64,
    pub stats: Stats,
    pub trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<NodeEvent>,
}

// ---------------------------------------------------------------------------
// Branching

/// `|λ|·u·(−l)/(u−l)` for every unstable free neuron, best first (ties:
/// shallower layer, then smaller index).
pub fn babsr_scores(domain: &SubDomain) -> Vec<(NeuronId, f64)> {
    let mut scores: Vec<(NeuronId, f64)> = domain
        .unstable()
        .into_iter()
        .map(|id| {
            let (l, u) = domain.ibounds.get(id);
            let lam = domain
                .relu_coeffs
                .get(id.layer)
                .and_then(|row| row.get(id.index))
                .copied()
                .unwrap_or(0.0);
            (id, lam.abs() * u * (-l) / (u - l))
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scores
}

/// Removes the `min(n, |P|)` worst domains and picks a split neuron for each.
pub fn batch_pick_out(set: &mut DomainSet, n: usize) -> Result<Vec<(SubDomain, NeuronId)>> {
    set.pop_worst(n)
        .into_iter()
        .map(|d| {
            let Some((id, _)) = babsr_scores(&d).first().copied() else {
                return Err(Error::Config(format!("domain {} has nothing left to split", d.id)));
            };
            Ok((d, id))
        })
        .collect()
}

/// A child about to be bounded.
#[derive(Debug, Clone)]
pub struct ChildSpec {
    pub id: DomainId,
    pub parent_id: Option<DomainId>,
    pub splits: SplitAssignment,
    pub split: Option<(NeuronId, SplitState)>,
    /// Warm start.
    pub alpha0: AlphaParams,
    /// Parent bounds, valid for the child on every layer.
    pub prior: Option<IntermediateBounds>,
    /// First layer the split can affect.
    pub from_layer: usize,
    pub depth: usize,
}

/// One POS and one NEG child per picked domain, in pick order.
pub fn batch_split(picked: &[(SubDomain, NeuronId)], tree: &mut SearchTree) -> Result<Vec<ChildSpec>> {
    let mut out = Vec::with_capacity(2 * picked.len());
    for (d, id) in picked {
        let (l, u) = d.ibounds.get(*id);
        let state = d.splits.get(*id);
        if state != SplitState::Free || classify(l, u, state) != NeuronKind::Unstable {
            return Err(Error::NotBranchable {
                layer: id.layer,
                index: id.index,
            });
        }
        for s in [SplitState::Pos, SplitState::Neg] {
            out.push(ChildSpec {
                id: tree.fresh_id(),
                parent_id: Some(d.id),
                splits: d.splits.with(*id, s),
                split: Some((*id, s)),
                alpha0: d.alpha.clone(),
                prior: Some(d.ibounds.clone()),
                from_layer: id.layer,
                depth: d.depth + 1,
            });
        }
    }
    Ok(out)
}

/// Bounds one domain: heuristic slopes, then (unless disabled) projected
/// gradient ascent from the warm start.
pub fn bound_domain(net: &Network, bx: &InputBox, cfg: &VerifierConfig, spec: &ChildSpec) -> Result<SubDomain> {
    let reuse = spec.prior.as_ref().map(|bounds| Reuse {
        bounds,
        from_layer: spec.from_layer,
    });
    let (alpha, bounds) = if cfg.disable_alpha_opt {
        initial_bounds(net, &spec.splits, bx, reuse)?
    } else if spec.parent_id.is_none() {
        let (alpha0, _) = initial_bounds(net, &spec.splits, bx, reuse)?;
        let r = optimize_alpha(net, &spec.splits, &alpha0, bx, &cfg.initial_opt)?;
        (r.alpha, r.bounds)
    } else {
        let r = optimize_alpha_with(net, &spec.splits, &spec.alpha0, bx, reuse, &cfg.node_opt)?;
        (r.alpha, r.bounds)
    };
    Ok(SubDomain::from_bounds(
        spec.id,
        spec.parent_id,
        spec.splits.clone(),
        alpha,
        spec.depth,
        bounds,
    ))
}

/// Forward pass at the minimizer of the domain's linear lower bound.
pub fn confirm_counterexample(net: &Network, domain: &SubDomain) -> Option<Witness> {
    if domain.empty || domain.minimizer.is_empty() {
        return None;
    }
    confirm_at(net, &domain.minimizer)
}

fn confirm_at(net: &Network, x: &[f64]) -> Option<Witness> {
    let value = net.eval_scalar(x).ok()?;
    (value < 0.0).then(|| Witness {
        input: x.to_vec(),
        value,
    })
}

/// Children sorted by what happens to them next.
#[derive(Debug, Default)]
pub struct Filtered {
    pub verified: Vec<SubDomain>,
    pub empty: Vec<SubDomain>,
    /// Still negative and splittable.
    pub survivors: Vec<SubDomain>,
    /// Still negative, nothing left to split.
    pub leaves: Vec<SubDomain>,
    /// First confirmed counterexample and the domain it came from.
    pub witness: Option<(SubDomain, Witness)>,
    /// Output values of every forward evaluation done while filtering.
    pub evaluated: Vec<f64>,
}

/// Drops proved and empty children and tries a counterexample at every
/// remaining child's minimizer; the first confirmed one is kept.
pub fn domain_filter(net: &Network, children: Vec<SubDomain>) -> Filtered {
    let mut f = Filtered::default();
    for d in children {
        if d.empty {
            f.empty.push(d);
            continue;
        }
        if d.f_lb >= 0.0 {
            f.verified.push(d);
            continue;
        }
        if let Ok(v) = net.eval_scalar(&d.minimizer) {
            f.evaluated.push(v);
        }
        if f.witness.is_none() {
            if let Some(w) = confirm_counterexample(net, &d) {
                f.witness = Some((d, w));
                continue;
            }
        }
        if d.is_leaf() {
            f.leaves.push(d);
        } else {
            f.survivors.push(d);
        }
    }
    f
}

// ---------------------------------------------------------------------------
// Search state

/// Complete state of one verification run.
pub struct Search<'a> {
    net: &'a Network,
    bx: &'a InputBox,
    cfg: VerifierConfig,
    pool: Option<rayon::ThreadPool>,
    pub set: DomainSet,
    pub tree: SearchTree,
    /// Fully split domains nothing could resolve.
    pub exhausted: Vec<SubDomain>,
    pub stats: Stats,
    /// Smallest bound among domains that left the frontier without being
    /// split or shown empty.
    closed_min: f64,
    upper: f64,
    certified: f64,
    witness: Option<Witness>,
    parent_checked: HashSet<DomainId>,
    pruned_roots: HashSet<DomainId>,
    recent: VecDeque<DomainId>,
    trace: Vec<TracePoint>,
    events: Vec<NodeEvent>,
    split_of: HashMap<DomainId, (NeuronId, SplitState)>,
    bounding: Duration,
    lp_time: Duration,
    start: Instant,
}

impl<'a> Search<'a> {
    /// `net` must have a scalar output.
    pub fn new(net: &'a Network, bx: &'a InputBox, cfg: &VerifierConfig) -> Result<Self> {
        cfg.validate()?;
        if net.output_dim() != 1 {
            return Err(Error::Dimension {
                what: "output (merge the property first)",
                expected: 1,
                actual: net.output_dim(),
            });
        }
        if bx.dim() != net.input_dim() {
            return Err(Error::Dimension {
                what: "input box",
                expected: net.input_dim(),
                actual: bx.dim(),
            });
        }
        let pool = if cfg.thread_count > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.thread_count)
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            net,
            bx,
            cfg: *cfg,
            pool,
            set: DomainSet::new(),
            tree: SearchTree::new(),
            exhausted: Vec::new(),
            stats: Stats::default(),
            closed_min: f64::INFINITY,
            upper: f64::INFINITY,
            certified: f64::NEG_INFINITY,
            witness: None,
            parent_checked: HashSet::new(),
            pruned_roots: HashSet::new(),
            recent: VecDeque::new(),
            trace: Vec::new(),
            events: Vec::new(),
            split_of: HashMap::new(),
            bounding: Duration::ZERO,
            lp_time: Duration::ZERO,
            start: Instant::now(),
        })
    }

    fn lp_enabled(&self) -> bool {
        !self.cfg.disable_lp_fallback
    }

    /// Frontier minimum: open, exhausted and resolved domains.
    pub fn global_lower(&self) -> f64 {
        let ex = self.exhausted.iter().map(|d| d.f_lb).fold(f64::INFINITY, f64::min);
        self.set.lower_bound().min(ex).min(self.closed_min)
    }

    fn event(&mut self, d: &SubDomain, kind: EventKind) {
        if self.cfg.record_events {
            self.events.push(NodeEvent {
                id: d.id,
                parent_id: d.parent_id,
                depth: d.depth,
                event: kind,
                f_lb: d.f_lb,
                f_ub: d.f_ub,
                split: self.split_of.get(&d.id).copied(),
            });
        }
    }

    fn map_parallel<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            None => items.iter().map(f).collect(),
        }
    }

    /// Bounds a batch of children.
    pub fn bound_batch(&mut self, specs: &[ChildSpec]) -> Result<Vec<SubDomain>> {
        let t = Instant::now();
        let (net, bx, cfg) = (self.net, self.bx, self.cfg);
        let out = self.map_parallel(specs, |s| bound_domain(net, bx, &cfg, s));
        self.bounding += t.elapsed();
        for s in specs {
            if let Some(split) = s.split {
                self.split_of.insert(s.id, split);
            }
        }
        out.into_iter().collect()
    }

    /// Records new domains and routes them: proved and empty ones are
    /// dropped, leaves go to the LP (or to the exhausted list without it),
    /// the rest join the set.
    pub fn admit(&mut self, children: Vec<SubDomain>) -> Result<()> {
        for d in &children {
            self.tree.record(d);
            self.stats.domains += 1;
            self.stats.max_depth = self.stats.max_depth.max(d.depth);
            self.event(d, EventKind::Created);
        }
        let f = domain_filter(self.net, children);
        for v in &f.evaluated {
            self.upper = self.upper.min(*v);
        }
        for d in &f.empty {
            self.stats.empty_by_bounds += 1;
            self.event(d, EventKind::Empty);
        }
        for d in &f.verified {
            self.stats.verified_by_bounds += 1;
            self.closed_min = self.closed_min.min(d.f_lb);
            self.event(d, EventKind::Verified);
        }
        if let Some((d, w)) = f.witness {
            self.event(&d, EventKind::Counterexample);
            self.closed_min = self.closed_min.min(d.f_lb);
            self.upper = self.upper.min(w.value);
            self.witness = Some(w);
            self.insert_all(f.survivors);
            for d in &f.leaves {
                self.closed_min = self.closed_min.min(d.f_lb);
            }
            return Ok(());
        }
        for d in &f.survivors {
            self.recent.push_back(d.id);
        }
        let cap = 2 * self.cfg.effective_batch_size();
        while self.recent.len() > cap {
            self.recent.pop_front();
        }
        if self.lp_enabled() {
            let mut to_check = f.leaves;
            if self.cfg.lp_every_node {
                to_check.extend(f.survivors);
                to_check.sort_by_key(|d| d.id);
            } else {
                self.insert_all(f.survivors);
            }
            self.lp_fallback(to_check)?;
        } else {
            self.insert_all(f.survivors);
            for d in f.leaves {
                self.event(&d, EventKind::Exhausted);
                self.exhausted.push(d);
            }
        }
        Ok(())
    }

    fn insert_all(&mut self, ds: Vec<SubDomain>) {
        for d in ds {
            let _ = self.set.insert(d);
        }
    }

    fn solve_lps(&mut self, targets: &[(SplitAssignment, IntermediateBounds)]) -> Vec<Result<LpBound>> {
        let t = Instant::now();
        let (net, bx) = (self.net, self.bx);
        let out = self.map_parallel(targets, |(s, ib)| lp_bound(net, s, ib, bx));
        self.lp_time += t.elapsed();
        self.stats.lp_calls += targets.len();
        out
    }

    /// LP pass over `candidates` (already out of the set). Proved or
    /// infeasible domains are resolved and their parent is checked; a
    /// resolved parent takes all its descendants with it. Unresolved
    /// domains return to the set with `f_lb = max(f_lb, LP value)`;
    /// unresolved leaves are exhausted.
    pub fn lp_fallback(&mut self, candidates: Vec<SubDomain>) -> Result<()> {
        if candidates.is_empty() {
            return Ok(());
        }
        let targets: Vec<_> = candidates
            .iter()
            .map(|d| (d.splits.clone(), d.ibounds.clone()))
            .collect();
        let results = self.solve_lps(&targets);
        for (mut d, r) in candidates.into_iter().zip(results) {
            if self.is_pruned(d.id) {
                self.stats.pruned += 1;
                self.event(&d, EventKind::Pruned);
                continue;
            }
            let r = r?;
            d.lp_checked = true;
            let leaf = d.is_leaf();
            match r.outcome {
                LpOutcome::Infeasible => {
                    self.stats.lp_infeasible += 1;
                    self.event(&d, EventKind::LpInfeasible);
                    self.check_parent(d.parent_id)?;
                }
                LpOutcome::Optimal { value, .. } if value >= 0.0 => {
                    self.stats.lp_proved += 1;
                    self.closed_min = self.closed_min.min(value);
                    d.f_lb = d.f_lb.max(value);
                    self.event(&d, EventKind::LpProved);
                    self.check_parent(d.parent_id)?;
                }
                LpOutcome::Optimal { value, .. } => {
                    if let Some(x) = r.input_point.as_ref().map(|x| self.clamp_to_box(x)) {
                        if let Ok(v) = self.net.eval_scalar(&x) {
                            self.upper = self.upper.min(v);
                        }
                        if self.witness.is_none() {
                            if let Some(w) = confirm_at(self.net, &x) {
                                d.f_lb = d.f_lb.max(value);
                                self.closed_min = self.closed_min.min(d.f_lb);
                                self.event(&d, EventKind::Counterexample);
                                self.witness = Some(w);
                                continue;
                            }
                        }
                    }
                    d.f_lb = d.f_lb.max(value);
                    if leaf {
                        self.event(&d, EventKind::Exhausted);
                        self.exhausted.push(d);
                    } else {
                        self.event(&d, EventKind::LpTightened);
                        let _ = self.set.insert(d);
                    }
                }
                LpOutcome::Unbounded | LpOutcome::NumericalFailure => {
                    self.event(&d, EventKind::LpFailed);
                    if leaf {
                        self.exhausted.push(d);
                    } else {
                        let _ = self.set.insert(d);
                    }
                }
            }
        }
        Ok(())
    }

    fn clamp_to_box(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.bx.lower.iter().zip(&self.bx.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    fn is_pruned(&self, id: DomainId) -> bool {
        !self.pruned_roots.is_empty() && self.tree.ancestors(id).any(|p| self.pruned_roots.contains(&p))
    }

    /// LP on the parent (once per parent); a proved or infeasible parent
    /// removes every descendant still open or exhausted.
    fn check_parent(&mut self, parent: Option<DomainId>) -> Result<()> {
        let Some(pid) = parent else { return Ok(()) };
        if !self.parent_checked.insert(pid) {
            return Ok(());
        }
        let Some(rec) = self.tree.get(pid) else { return Ok(()) };
        let target = vec![(rec.splits.clone(), rec.ibounds.clone())];
        let r = self.solve_lps(&target).pop().expect("one result")?;
        let resolved = match r.outcome {
            LpOutcome::Infeasible => {
                self.stats.lp_infeasible += 1;
                true
            }
            LpOutcome::Optimal { value, .. } if value >= 0.0 => {
                self.stats.lp_proved += 1;
                self.closed_min = self.closed_min.min(value);
                true
            }
            _ => false,
        };
        if !resolved {
            return Ok(());
        }
        self.pruned_roots.insert(pid);
        for id in self.set.ids() {
            if self.tree.descends_from(id, pid) {
                let d = self.set.remove(id).expect("listed id");
                self.stats.pruned += 1;
                self.event(&d, EventKind::Pruned);
            }
        }
        let (gone, kept): (Vec<_>, Vec<_>) = std::mem::take(&mut self.exhausted)
            .into_iter()
            .partition(|d| self.tree.descends_from(d.id, pid));
        self.exhausted = kept;
        for d in gone {
            self.stats.pruned += 1;
            self.event(&d, EventKind::Pruned);
        }
        Ok(())
    }

    /// Bounds and admits the root.
    pub fn start(&mut self) -> Result<()> {
        let spec = ChildSpec {
            id: self.tree.fresh_id(),
            parent_id: None,
            splits: SplitAssignment::free(self.net),
            split: None,
            alpha0: AlphaParams::constant(self.net, 0.0),
            prior: None,
            from_layer: 0,
            depth: 0,
        };
        let root = self.bound_batch(std::slice::from_ref(&spec))?;
        self.admit(root)?;
        self.push_trace();
        Ok(())
    }

    fn push_trace(&mut self) {
        let lower = self.global_lower();
        self.certified = self.certified.max(lower);
        self.trace.push(TracePoint {
            iteration: self.stats.iterations,
            lower,
            certified_lower: self.certified,
            upper: self.upper,
            domains: self.set.len(),
        });
    }

    fn timed_out(&self) -> bool {
        self.start.elapsed().as_secs_f64() >= self.cfg.timeout
    }

    /// One pick/split/bound/filter round plus the threshold LP pass.
    /// Returns `false` once nothing is left to do.
    pub fn step(&mut self) -> Result<bool> {
        if self.witness.is_some() || self.set.is_empty() {
            return Ok(false);
        }
        let n = self.cfg.effective_batch_size();
        let picked = batch_pick_out(&mut self.set, n)?;
        self.stats.branches += picked.len();
        for (d, _) in &picked {
            self.event(d, EventKind::Split);
        }
        let specs = batch_split(&picked, &mut self.tree)?;
        let children = self.bound_batch(&specs)?;
        self.admit(children)?;
        if self.witness.is_none() && self.lp_enabled() && self.set.len() > self.cfg.lp_threshold {
            let ids: Vec<DomainId> = self
                .recent
                .iter()
                .copied()
                .filter(|id| self.set.get(*id).is_some_and(|d| !d.lp_checked))
                .collect();
            let mut batch: Vec<SubDomain> = ids.iter().filter_map(|id| self.set.remove(*id)).collect();
            batch.sort_by_key(|d| d.id);
            self.recent.clear();
            self.lp_fallback(batch)?;
        }
        self.stats.iterations += 1;
        self.push_trace();
        Ok(true)
    }

    /// Runs to a verdict.
    pub fn run(mut self) -> Result<Verdict> {
        self.start = Instant::now();
        self.start()?;
        let mut timed_out = false;
        while self.witness.is_none() && !self.set.is_empty() {
            if self.timed_out() {
                timed_out = true;
                break;
            }
            self.step()?;
        }
        let status = if let Some(w) = &self.witness {
            Status::Falsified {
                witness: w.input.clone(),
                value: w.value,
            }
        } else if timed_out {
            Status::Timeout
        } else if !self.exhausted.is_empty() {
            Status::IncompleteModeExhausted
        } else {
            Status::Verified
        };
        let total = self.start.elapsed().as_secs_f64();
        let bounding = self.bounding.as_secs_f64();
        let lp = self.lp_time.as_secs_f64();
        self.stats.timing = Timing {
            total_s: total,
            bounding_s: bounding,
            lp_s: lp,
            branching_s: (total - bounding - lp).max(0.0),
        };
        let lower = self.global_lower();
        Ok(Verdict {
            status,
            lower,
            certified_lower: self.certified.max(lower),
            upper: self.upper,
            stats: self.stats,
            trace: self.trace,
            events: self.events,
        })
    }
}

/// Verifies `c·f(x) + d ≥ 0` over the property's box.
pub fn verify(net: &Network, prop: &PropertySpec, cfg: &VerifierConfig) -> Result<Verdict> {
    cfg.validate()?;
    let merged = merge_property(net, prop)?;
    verify_scalar(&merged, &prop.input, cfg)
}

/// Verifies `f(x) ≥ 0` for a scalar-output network.
pub fn verify_scalar(net: &Network, bx: &InputBox, cfg: &VerifierConfig) -> Result<Verdict> {
    Search::new(net, bx, cfg)?.run()
}
