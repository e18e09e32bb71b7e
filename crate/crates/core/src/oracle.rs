//! Ground truth for small networks.
//!
//! [`exact_min`] enumerates activation patterns depth-first. Each decided
//! neuron contributes a sign constraint on an affine function of the input,
//! built by composing the layers directly (no bound propagation involved);
//! a prefix whose region is empty is pruned, and at every full pattern the
//! output is affine, so its minimum over the region is one small LP in input
//! space.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpOutcome, LpProblem, Relation};
use crate::model::{
    load_network, load_property, merge_property, write_json, AffineLayer, InputBox, Network,
    PropertySpec,
};

/// Largest number of hidden neurons [`exact_min`] will enumerate.
pub const ENUMERATION_LIMIT: usize = 20;
/// Margin a pattern region needs below zero on its negative constraints to
/// count as nonempty.
const STRICT_TOL: f64 = 1e-9;

/// Sign of every hidden neuron: `true` for `h ≥ 0`, `false` for `h < 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActivationPattern {
    pub signs: Vec<Vec<bool>>,
}

impl ActivationPattern {
    pub fn of_input(net: &Network, x: &[f64]) -> Result<Self> {
        let pre = net.pre_activations(x)?;
        Ok(Self {
            signs: pre[..net.num_hidden()]
                .iter()
                .map(|h| h.iter().map(|v| *v >= 0.0).collect())
                .collect(),
        })
    }
}

/// Affine function `a·x + c` of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub a: Array2<f64>,
    pub c: Array1<f64>,
}

impl Affine {
    fn identity(dim: usize) -> Self {
        Self {
            a: Array2::eye(dim),
            c: Array1::zeros(dim),
        }
    }

    fn then_layer(&self, layer: &AffineLayer) -> Self {
        Self {
            a: layer.weight.dot(&self.a),
            c: layer.weight.dot(&self.c) + &layer.bias,
        }
    }

    fn gate(mut self, signs: &[bool]) -> Self {
        for (j, on) in signs.iter().enumerate() {
            if !on {
                self.a.row_mut(j).fill(0.0);
                self.c[j] = 0.0;
            }
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let x = Array1::from(x.to_vec());
        (self.a.dot(&x) + &self.c).to_vec()
    }
}

/// Output of the network as an affine function of `x` on the pattern's region.
pub fn affine_restriction(net: &Network, pattern: &ActivationPattern) -> Affine {
    let mut f = Affine::identity(net.input_dim());
    for (k, layer) in net.layers().iter().enumerate() {
        f = f.then_layer(layer);
        if k < net.num_hidden() {
            f = f.gate(&pattern.signs[k]);
        }
    }
    f
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactMin {
    pub value: f64,
    pub argmin: Vec<f64>,
    /// Number of nonempty activation regions.
    pub feasible_patterns: usize,
}

struct SignConstraint {
    a: Vec<f64>,
    c: f64,
    positive: bool,
}

/// x-space LP: box + sign constraints. With `margin`, negative constraints
/// become `a·x + c + t ≤ 0` and the objective is `max t`.
fn region_lp(bx: &InputBox, cons: &[SignConstraint], margin: bool, objective: Option<(&[f64], f64)>) -> LpProblem {
    let mut p = LpProblem::new();
    for d in 0..bx.dim() {
        p.add_var(format!("x{d}"), bx.lower[d], bx.upper[d]);
    }
    let t = margin.then(|| p.add_var("t", 0.0, 1.0));
    for (i, sc) in cons.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = sc
            .a
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(d, v)| (d, *v))
            .collect();
        if sc.positive {
            p.add_constraint(format!("s{i}"), coeffs, Relation::Ge, -sc.c);
        } else {
            if let Some(t) = t {
                coeffs.push((t, 1.0));
            }
            p.add_constraint(format!("s{i}"), coeffs, Relation::Le, -sc.c);
        }
    }
    if let Some(t) = t {
        p.objective[t] = -1.0;
    } else if let Some((a, c)) = objective {
        p.objective[..a.len()].copy_from_slice(a);
        p.objective_constant = c;
    }
    p
}

fn region_nonempty(bx: &InputBox, cons: &[SignConstraint]) -> bool {
    if cons.iter().all(|c| c.positive) {
        return !matches!(solve_lp(&region_lp(bx, cons, false, None)), LpOutcome::Infeasible);
    }
    match solve_lp(&region_lp(bx, cons, true, None)) {
        LpOutcome::Optimal { value, .. } => -value > STRICT_TOL,
        LpOutcome::Infeasible => false,
        LpOutcome::Unbounded | LpOutcome::NumericalFailure => true,
    }
}

struct Search<'a> {
    net: &'a Network,
    bx: &'a InputBox,
    best: Option<(f64, Vec<f64>)>,
    feasible: usize,
}

impl Search<'_> {
    /// `pre` is the affine map of hidden layer `layer`'s pre-activations.
    fn descend(
        &mut self,
        layer: usize,
        index: usize,
        pre: &Affine,
        signs: &mut Vec<Vec<bool>>,
        cons: &mut Vec<SignConstraint>,
    ) {
        let net = self.net;
        if layer == net.num_hidden() {
            self.leaf(pre, cons);
            return;
        }
        if index == net.hidden_dim(layer) {
            let post = pre.clone().gate(&signs[layer]);
            let next = post.then_layer(net.layer(layer + 1));
            signs.push(Vec::new());
            self.descend(layer + 1, 0, &next, signs, cons);
            signs.pop();
            return;
        }
        for positive in [true, false] {
            cons.push(SignConstraint {
                a: pre.a.row(index).to_vec(),
                c: pre.c[index],
                positive,
            });
            if region_nonempty(self.bx, cons) {
                signs[layer].push(positive);
                self.descend(layer, index + 1, pre, signs, cons);
                signs[layer].pop();
            }
            cons.pop();
        }
    }

    fn leaf(&mut self, out: &Affine, cons: &[SignConstraint]) {
        self.feasible += 1;
        let a = out.a.row(0).to_vec();
        let lp = region_lp(self.bx, cons, false, Some((&a, out.c[0])));
        if let LpOutcome::Optimal { value, point } = solve_lp(&lp) {
            if self.best.as_ref().map_or(true, |(b, _)| value < *b) {
                self.best = Some((value, point));
            }
        }
    }
}

/// Exact minimum of a scalar-output network over the box.
pub fn exact_min(net: &Network, bx: &InputBox) -> Result<ExactMin> {
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
    let neurons = net.total_hidden();
    if neurons > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded {
            neurons,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut search = Search {
        net,
        bx,
        best: None,
        feasible: 0,
    };
    let first = Affine::identity(net.input_dim()).then_layer(net.layer(0));
    let mut signs = vec![Vec::new()];
    let mut cons = Vec::new();
    search.descend(0, 0, &first, &mut signs, &mut cons);
    let (value, argmin) = search
        .best
        .ok_or_else(|| Error::InvalidNetwork("no activation region could be solved".into()))?;
    Ok(ExactMin {
        value,
        argmin,
        feasible_patterns: search.feasible,
    })
}

/// Whether some input in the box has exactly this activation pattern
/// (negative signs read strictly).
pub fn pattern_feasible(net: &Network, bx: &InputBox, pattern: &ActivationPattern) -> Result<bool> {
    if pattern.signs.len() != net.num_hidden()
        || (0..net.num_hidden()).any(|k| pattern.signs[k].len() != net.hidden_dim(k))
    {
        return Err(Error::Dimension {
            what: "activation pattern layers",
            expected: net.num_hidden(),
            actual: pattern.signs.len(),
        });
    }
    let mut cons = Vec::new();
    let mut f = Affine::identity(net.input_dim());
    for k in 0..net.num_hidden() {
        f = f.then_layer(net.layer(k));
        for (j, positive) in pattern.signs[k].iter().enumerate() {
            cons.push(SignConstraint {
                a: f.a.row(j).to_vec(),
                c: f.c[j],
                positive: *positive,
            });
        }
        f = f.gate(&pattern.signs[k]);
    }
    Ok(region_nonempty(bx, &cons))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ExactVerdict {
    Safe { min: f64 },
    Unsafe { witness: Vec<f64>, value: f64 },
}

impl ExactVerdict {
    pub fn is_safe(&self) -> bool {
        matches!(self, ExactVerdict::Safe { .. })
    }

    pub fn min_value(&self) -> f64 {
        match self {
            ExactVerdict::Safe { min } => *min,
            ExactVerdict::Unsafe { value, .. } => *value,
        }
    }
}

/// Safe iff the exact minimum of `c·f + d` over the box is nonnegative. The
/// unsafe witness's value is recomputed by a forward pass.
pub fn exact_verify(net: &Network, prop: &PropertySpec) -> Result<ExactVerdict> {
    let merged = merge_property(net, prop)?;
    let m = exact_min(&merged, &prop.input)?;
    if m.value >= 0.0 {
        Ok(ExactVerdict::Safe { min: m.value })
    } else {
        let value = merged.eval_scalar(&m.argmin)?;
        Ok(ExactVerdict::Unsafe {
            witness: m.argmin,
            value,
        })
    }
}

// ---------------------------------------------------------------------------
// Instance generation

/// Size ranges for generated instances (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub input_dim: (usize, usize),
    pub hidden_layers: (usize, usize),
    pub width: (usize, usize),
    pub max_hidden: usize,
    pub outputs: (usize, usize),
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            input_dim: (1, 3),
            hidden_layers: (1, 3),
            width: (2, 6),
            max_hidden: 12,
            outputs: (2, 3),
        }
    }
}

/// Dense layer with weights uniform in `[-1, 1]/√fan_in`.
pub fn random_layer(rng: &mut impl Rng, out_dim: usize, in_dim: usize) -> AffineLayer {
    let scale = 1.0 / (in_dim as f64).sqrt();
    let weight = Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-1.0..1.0) * scale);
    let bias = Array1::from_shape_fn(out_dim, |_| rng.gen_range(-0.5..0.5));
    AffineLayer { weight, bias }
}

pub fn random_network(rng: &mut impl Rng, input_dim: usize, widths: &[usize], outputs: usize) -> Network {
    let mut layers = Vec::with_capacity(widths.len() + 1);
    let mut prev = input_dim;
    for &w in widths.iter().chain(std::iter::once(&outputs)) {
        layers.push(random_layer(rng, w, prev));
        prev = w;
    }
    Network::new(layers).expect("consistent random layers")
}

fn sample_widths(rng: &mut impl Rng, spec: &InstanceSpec) -> Vec<usize> {
    let layers = rng.gen_range(spec.hidden_layers.0..=spec.hidden_layers.1);
    let mut widths = Vec::with_capacity(layers);
    let mut budget = spec.max_hidden;
    for i in 0..layers {
        let remaining_layers = layers - i - 1;
        let hi = spec.width.1.min(budget.saturating_sub(remaining_layers * spec.width.0));
        let lo = spec.width.0.min(hi).max(1);
        let w = rng.gen_range(lo..=hi.max(lo));
        budget -= w;
        widths.push(w);
    }
    widths
}

/// Per-instance RNG: instance `index` of `seed` is generated independently of
/// every other index.
pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub index: usize,
    pub net: Network,
    pub prop: PropertySpec,
    pub verdict: ExactVerdict,
    pub center: Vec<f64>,
    pub epsilon: f64,
    /// Bisected radius where the exact minimum crosses zero.
    pub boundary_epsilon: f64,
}

const EPS_MAX: f64 = 2.0;
const BISECTION_STEPS: usize = 24;
/// Generated instances keep the exact minimum at least this far from zero.
pub const MIN_MARGIN: f64 = 1e-6;

/// One instance. Even indices are pushed inside the safe side of the
/// bisected boundary radius, odd ones outside, so a corpus is half safe.
pub fn gen_instance(seed: u64, index: usize, spec: &InstanceSpec) -> Result<Instance> {
    let mut rng = instance_rng(seed, index);
    let want_safe = index % 2 == 0;
    for _attempt in 0..200 {
        let input_dim = rng.gen_range(spec.input_dim.0..=spec.input_dim.1);
        let outputs = rng.gen_range(spec.outputs.0..=spec.outputs.1);
        let widths = sample_widths(&mut rng, spec);
        let net = random_network(&mut rng, input_dim, &widths, outputs);
        let center: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = net.forward(&center)?;
        let target = (0..outputs)
            .max_by(|a, b| y[*a].total_cmp(&y[*b]))
            .expect("outputs > 0");
        let mut other = rng.gen_range(0..outputs - 1);
        if other >= target {
            other += 1;
        }
        if y[target] - y[other] < 1e-3 {
            continue;
        }
        let min_at = |eps: f64| -> Result<f64> {
            let prop = PropertySpec::margin(InputBox::linf_ball(&center, eps)?, outputs, target, other)?;
            let merged = merge_property(&net, &prop)?;
            Ok(exact_min(&merged, &prop.input)?.value)
        };
        if min_at(EPS_MAX)? >= 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (0.0, EPS_MAX);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if min_at(mid)? >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut delta = rng.gen_range(0.05..0.3);
        for _ in 0..8 {
            let epsilon = if want_safe {
                lo * (1.0 - delta)
            } else {
                (hi * (1.0 + delta)).min(EPS_MAX)
            };
            let prop =
                PropertySpec::margin(InputBox::linf_ball(&center, epsilon)?, outputs, target, other)?;
            let verdict = exact_verify(&net, &prop)?;
            if verdict.is_safe() == want_safe && verdict.min_value().abs() >= MIN_MARGIN {
                return Ok(Instance {
                    index,
                    net,
                    prop,
                    verdict,
                    center,
                    epsilon,
                    boundary_epsilon: 0.5 * (lo + hi),
                });
            }
            delta *= 1.5;
        }
    }
    Err(Error::InvalidNetwork(format!(
        "could not generate instance {index} for seed {seed}"
    )))
}

pub fn gen_instances(seed: u64, count: usize, spec: &InstanceSpec) -> Result<Vec<Instance>> {
    (0..count).map(|i| gen_instance(seed, i, spec)).collect()
}

// ---------------------------------------------------------------------------
// Corpus files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub network: String,
    pub property: String,
    /// `"safe"` or `"unsafe"`, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub instances: Vec<ManifestEntry>,
}

/// Writes `net_<i>.json`, `prop_<i>.json` and `manifest.json` into `dir`.
pub fn write_corpus(dir: impl AsRef<Path>, seed: u64, instances: &[Instance]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::with_capacity(instances.len());
    for inst in instances {
        let network = format!("net_{:03}.json", inst.index);
        let property = format!("prop_{:03}.json", inst.index);
        write_json(dir.join(&network), &inst.net.to_json())?;
        write_json(dir.join(&property), &inst.prop.to_json())?;
        entries.push(ManifestEntry {
            index: inst.index,
            network,
            property,
            expected: Some(if inst.verdict.is_safe() { "safe" } else { "unsafe" }.into()),
            exact_min: Some(inst.verdict.min_value()),
        });
    }
    let path = dir.join("manifest.json");
    write_json(
        &path,
        &Manifest {
            seed,
            instances: entries,
        },
    )?;
    Ok(path)
}

/// Loads a manifest and every referenced file (paths relative to the
/// manifest's directory).
pub fn read_corpus(manifest: impl AsRef<Path>) -> Result<(Manifest, Vec<(Network, PropertySpec)>)> {
    let path = manifest.as_ref();
    let m = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let items = m
        .instances
        .iter()
        .map(|e| {
            let net = load_network(base.join(&e.network))?;
            let prop = load_property(base.join(&e.property))?;
            prop.check_against(&net)?;
            Ok((net, prop))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m, items))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// Small-LP and box-extremum oracles

/// Minimum and maximum of `a·x + c` over the box, by visiting all `2^d`
/// vertices.
pub fn box_extrema(a: &[f64], c: f64, bx: &InputBox) -> Result<(f64, f64)> {
    let d = bx.dim();
    if a.len() != d {
        return Err(Error::Dimension {
            what: "linear function",
            expected: d,
            actual: a.len(),
        });
    }
    if d > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded {
            neurons: d,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for mask in 0u64..(1 << d) {
        let v = c + (0..d)
            .map(|i| a[i] * if mask >> i & 1 == 1 { bx.upper[i] } else { bx.lower[i] })
            .sum::<f64>();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Brute-force LP minimum over all basic solutions, for problems whose
/// variables all have finite bounds. A candidate vertex makes a set `S` of
/// general rows tight and puts every variable outside a chosen set of `|S|`
/// free variables at one of its bounds. `None` means infeasible.
pub fn vertex_lp_min(p: &LpProblem, tol: f64) -> Option<(f64, Vec<f64>)> {
    let n = p.num_vars();
    assert!(
        p.lower.iter().chain(&p.upper).all(|v| v.is_finite()),
        "vertex enumeration needs finite variable bounds"
    );
    let m = p.constraints.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let subsets_of = |k: usize, size: usize| -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(start: usize, k: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == size {
                out.push(cur.clone());
                return;
            }
            for i in start..k {
                cur.push(i);
                rec(i + 1, k, size, cur, out);
                cur.pop();
            }
        }
        rec(0, k, size, &mut cur, &mut out);
        out
    };
    for rows in 0usize..(1 << m) {
        let tight: Vec<usize> = (0..m).filter(|i| rows >> i & 1 == 1).collect();
        let s = tight.len();
        if s > n {
            continue;
        }
        for free in subsets_of(n, s) {
            let fixed: Vec<usize> = (0..n).filter(|v| !free.contains(v)).collect();
            for corner in 0u64..(1 << fixed.len()) {
                let mut x = vec![0.0; n];
                for (bit, v) in fixed.iter().enumerate() {
                    x[*v] = if corner >> bit & 1 == 1 { p.upper[*v] } else { p.lower[*v] };
                }
                if s > 0 {
                    let mut a = vec![vec![0.0; s]; s];
                    let mut b = vec![0.0; s];
                    for (r, ci) in tight.iter().enumerate() {
                        let c = &p.constraints[*ci];
                        b[r] = c.rhs;
                        for (v, coef) in &c.coeffs {
                            match free.iter().position(|f| f == v) {
                                Some(col) => a[r][col] += coef,
                                None => b[r] -= coef * x[*v],
                            }
                        }
                    }
                    let Some(sol) = solve_dense(a, b) else {
                        continue;
                    };
                    for (col, v) in free.iter().enumerate() {
                        x[*v] = sol[col];
                    }
                }
                let in_bounds = (0..n).all(|v| x[v] >= p.lower[v] - tol && x[v] <= p.upper[v] + tol);
                if !in_bounds || p.max_violation(&x) > tol {
                    continue;
                }
                let val = p.objective_value(&x);
                if best.as_ref().map_or(true, |(b, _)| val < *b) {
                    best = Some((val, x));
                }
            }
        }
    }
    best
}
