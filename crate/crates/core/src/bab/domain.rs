//! Search-tree nodes and the set of unverified sub-domains.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::lirpa::{AlphaParams, DomainBounds, IntermediateBounds, NeuronId, SplitAssignment, SplitState};

pub type DomainId = u64;

/// One node of the branch-and-bound tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDomain {
    pub id: DomainId,
    pub parent_id: Option<DomainId>,
    pub splits: SplitAssignment,
    pub f_lb: f64,
    pub f_ub: f64,
    /// Slopes the bounds were computed with (warm start for children).
    pub alpha: AlphaParams,
    pub ibounds: IntermediateBounds,
    pub depth: usize,
    pub lp_checked: bool,
    /// Split clamping proved the domain empty.
    pub empty: bool,
    /// Box point minimizing the linear lower bound.
    pub minimizer: Vec<f64>,
    /// Backward coefficients at each ReLU for the output lower bound.
    pub relu_coeffs: Vec<Vec<f64>>,
}

impl SubDomain {
    pub fn from_bounds(
        id: DomainId,
        parent_id: Option<DomainId>,
        splits: SplitAssignment,
        alpha: AlphaParams,
        depth: usize,
        b: DomainBounds,
    ) -> Self {
        Self {
            id,
            parent_id,
            splits,
            f_lb: b.lower,
            f_ub: b.upper,
            alpha,
            ibounds: b.ibounds,
            depth,
            lp_checked: false,
            empty: b.empty,
            minimizer: b.minimizer,
            relu_coeffs: b.relu_coeffs,
        }
    }

    /// Unstable neurons that are not split yet.
    pub fn unstable(&self) -> Vec<NeuronId> {
        if self.empty {
            return Vec::new();
        }
        self.ibounds.unstable(&self.splits)
    }

    /// No unstable free neuron is left to branch on.
    pub fn is_leaf(&self) -> bool {
        self.unstable().is_empty()
    }
}

/// Ordering key `(f_lb, id)` with a total order on the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Rank(f64, DomainId);

impl Eq for Rank {}

impl PartialOrd for Rank {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rank {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Unverified sub-domains, worst bound first.
#[derive(Debug, Clone, Default)]
pub struct DomainSet {
    members: BTreeMap<DomainId, SubDomain>,
    order: BTreeSet<Rank>,
}

impl DomainSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts an unverified domain. Domains with `f_lb ≥ 0` or the empty
    /// flag are refused and handed back.
    pub fn insert(&mut self, d: SubDomain) -> Result<(), SubDomain> {
        if d.empty || d.f_lb >= 0.0 {
            return Err(d);
        }
        if let Some(old) = self.members.get(&d.id) {
            self.order.remove(&Rank(old.f_lb, old.id));
        }
        self.order.insert(Rank(d.f_lb, d.id));
        self.members.insert(d.id, d);
        Ok(())
    }

    pub fn remove(&mut self, id: DomainId) -> Option<SubDomain> {
        let d = self.members.remove(&id)?;
        self.order.remove(&Rank(d.f_lb, d.id));
        Some(d)
    }

    pub fn get(&self, id: DomainId) -> Option<&SubDomain> {
        self.members.get(&id)
    }

    pub fn contains(&self, id: DomainId) -> bool {
        self.members.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `min f_lb` over members, `+∞` when empty.
    pub fn lower_bound(&self) -> f64 {
        self.order.first().map_or(f64::INFINITY, |r| r.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SubDomain> {
        self.members.values()
    }

    pub fn ids(&self) -> Vec<DomainId> {
        self.members.keys().copied().collect()
    }

    /// Member ids ordered by `(f_lb, id)`.
    pub fn ids_by_bound(&self) -> Vec<DomainId> {
        self.order.iter().map(|r| r.1).collect()
    }

    /// Removes and returns the `k` worst domains.
    pub fn pop_worst(&mut self, k: usize) -> Vec<SubDomain> {
        let mut out = Vec::with_capacity(k.min(self.len()));
        while out.len() < k {
            let Some(r) = self.order.pop_first() else { break };
            out.push(self.members.remove(&r.1).expect("indexed id"));
        }
        out
    }
}

/// What the tree remembers about every node ever created, for parent
/// look-ups after the node itself has left the domain set.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub parent_id: Option<DomainId>,
    pub splits: SplitAssignment,
    pub ibounds: IntermediateBounds,
    pub depth: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SearchTree {
    nodes: HashMap<DomainId, NodeRecord>,
    next_id: DomainId,
}

impl SearchTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh_id(&mut self) -> DomainId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn record(&mut self, d: &SubDomain) {
        self.nodes.insert(
            d.id,
            NodeRecord {
                parent_id: d.parent_id,
                splits: d.splits.clone(),
                ibounds: d.ibounds.clone(),
                depth: d.depth,
            },
        );
    }

    pub fn get(&self, id: DomainId) -> Option<&NodeRecord> {
        self.nodes.get(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Strict ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: DomainId) -> impl Iterator<Item = DomainId> + '_ {
        let first = self.nodes.get(&id).and_then(|n| n.parent_id);
        std::iter::successors(first, move |p| self.nodes.get(p).and_then(|n| n.parent_id))
    }

    /// Whether `ancestor` lies strictly above `id`.
    pub fn descends_from(&self, id: DomainId, ancestor: DomainId) -> bool {
        self.ancestors(id).any(|p| p == ancestor)
    }
}

/// Serializable snapshot of a node for trace logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub id: DomainId,
    pub parent_id: Option<DomainId>,
    pub depth: usize,
    pub event: EventKind,
    pub f_lb: f64,
    pub f_ub: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<(NeuronId, SplitState)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Created,
    Verified,
    Empty,
    Split,
    LpInfeasible,
    LpProved,
    LpTightened,
    LpFailed,
    Pruned,
    Exhausted,
    Counterexample,
}
