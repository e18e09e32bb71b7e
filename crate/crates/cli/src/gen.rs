//! Seeded corpus generation.
//!
//! Labelled corpora come from the exact oracle, so their networks stay within
//! its enumeration budget. Unlabelled corpora take larger networks and set the
//! radius to a fraction of a sampled attack radius; their verdicts are only
//! known once a complete run finishes.

use std::path::PathBuf;

use bab_verify::lirpa::{initial_bounds, SplitAssignment};
use bab_verify::model::{merge_property, write_json, InputBox, Network, PropertySpec};
use bab_verify::oracle::{gen_instance, instance_rng, random_network, InstanceSpec, Manifest, ManifestEntry};
use clap::Args;
use rand::Rng;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_input_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub max_input_dim: usize,
    #[arg(long, default_value_t = 1)]
    pub min_layers: usize,
    #[arg(long, default_value_t = 3)]
    pub max_layers: usize,
    #[arg(long, default_value_t = 2)]
    pub min_width: usize,
    #[arg(long, default_value_t = 6)]
    pub max_width: usize,
    /// Cap on hidden neurons per labelled network.
    #[arg(long, default_value_t = 12)]
    pub max_hidden: usize,
    /// Keep only instances that the root bound with heuristic slopes leaves
    /// undecided; `count` is then the number kept.
    #[arg(long)]
    pub require_branching: bool,
    /// Skip the oracle: no expected verdicts, no neuron cap.
    #[arg(long)]
    pub unlabeled: bool,
    /// Radius range as fractions of the sampled attack radius (unlabelled
    /// corpora only).
    #[arg(long, default_value_t = 0.4)]
    pub min_radius_fraction: f64,
    #[arg(long, default_value_t = 0.9)]
    pub max_radius_fraction: f64,
}

impl GenArgs {
    pub fn new(out: impl Into<PathBuf>, seed: u64, count: usize) -> Self {
        Self {
            seed,
            count,
            out: out.into(),
            min_input_dim: 1,
            max_input_dim: 3,
            min_layers: 1,
            max_layers: 3,
            min_width: 2,
            max_width: 6,
            max_hidden: 12,
            require_branching: false,
            unlabeled: false,
            min_radius_fraction: 0.4,
            max_radius_fraction: 0.9,
        }
    }

    pub fn spec(&self) -> CliResult<InstanceSpec> {
        let ranges = [
            (self.min_input_dim, self.max_input_dim),
            (self.min_layers, self.max_layers),
            (self.min_width, self.max_width),
        ];
        if ranges.iter().any(|(lo, hi)| *lo < 1 || lo > hi) {
            return Err(CliError::Usage("corpus size ranges must satisfy 1 <= min <= max".into()));
        }
        let f = (self.min_radius_fraction, self.max_radius_fraction);
        if !(f.0 > 0.0 && f.0 <= f.1) {
            return Err(CliError::Usage("radius fractions must satisfy 0 < min <= max".into()));
        }
        Ok(InstanceSpec {
            input_dim: ranges[0],
            hidden_layers: ranges[1],
            width: ranges[2],
            max_hidden: if self.unlabeled { usize::MAX } else { self.max_hidden },
            outputs: InstanceSpec::default().outputs,
        })
    }
}

/// One corpus entry before it is written.
#[derive(Debug, Clone)]
pub struct Generated {
    pub index: usize,
    pub net: Network,
    pub prop: PropertySpec,
    pub expected: Option<String>,
    pub exact_min: Option<f64>,
}

/// Whether plain LiRPA at the root neither proves the property nor finds a
/// counterexample at its own minimizer.
pub fn needs_branching(net: &Network, prop: &PropertySpec) -> CliResult<bool> {
    let merged = merge_property(net, prop)?;
    let root = SplitAssignment::free(&merged);
    let (_, b) = initial_bounds(&merged, &root, &prop.input, None)?;
    Ok(b.lower < 0.0 && merged.eval_scalar(&b.minimizer)? >= 0.0)
}

const ATTACK_SAMPLES: usize = 512;
const ATTACK_BISECTION_STEPS: usize = 20;
const EPS_MAX: f64 = 2.0;

/// Smallest radius (by bisection) at which one of a fixed set of sampled
/// directions, or a box corner for small inputs, gives a negative margin.
fn attack_radius(net: &Network, center: &[f64], dirs: &[Vec<f64>]) -> CliResult<Option<f64>> {
    let breaks = |eps: f64| -> CliResult<bool> {
        for u in dirs {
            let x: Vec<f64> = center.iter().zip(u).map(|(c, d)| c + eps * d).collect();
            if net.eval_scalar(&x)? < 0.0 {
                return Ok(true);
            }
        }
        Ok(false)
    };
    if !breaks(EPS_MAX)? {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, EPS_MAX);
    for _ in 0..ATTACK_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if breaks(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

pub fn unlabeled_instance(seed: u64, index: usize, spec: &InstanceSpec, fractions: (f64, f64)) -> CliResult<Generated> {
    let mut rng = instance_rng(seed, index);
    for _attempt in 0..200 {
        let input_dim = rng.gen_range(spec.input_dim.0..=spec.input_dim.1);
        let outputs = rng.gen_range(spec.outputs.0..=spec.outputs.1);
        let layers = rng.gen_range(spec.hidden_layers.0..=spec.hidden_layers.1);
        let widths: Vec<usize> = (0..layers).map(|_| rng.gen_range(spec.width.0..=spec.width.1)).collect();
        let net = random_network(&mut rng, input_dim, &widths, outputs);
        let center: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = net.forward(&center)?;
        let target = (0..outputs).max_by(|a, b| y[*a].total_cmp(&y[*b])).expect("outputs > 0");
        let mut other = rng.gen_range(0..outputs - 1);
        if other >= target {
            other += 1;
        }
        if y[target] - y[other] < 1e-3 {
            continue;
        }
        let mut dirs: Vec<Vec<f64>> = (0..ATTACK_SAMPLES)
            .map(|_| (0..input_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        if input_dim <= 8 {
            dirs.extend((0..1usize << input_dim).map(|m| {
                (0..input_dim).map(|d| if m >> d & 1 == 1 { 1.0 } else { -1.0 }).collect()
            }));
        }
        let probe = PropertySpec::margin(InputBox::linf_ball(&center, 1.0)?, outputs, target, other)?;
        let merged = merge_property(&net, &probe)?;
        let Some(radius) = attack_radius(&merged, &center, &dirs)? else {
            continue;
        };
        let epsilon = radius * rng.gen_range(fractions.0..=fractions.1);
        let prop = PropertySpec::margin(InputBox::linf_ball(&center, epsilon)?, outputs, target, other)?;
        return Ok(Generated {
            index,
            net,
            prop,
            expected: None,
            exact_min: None,
        });
    }
    Err(CliError::Core(bab_verify::Error::InvalidNetwork(format!(
        "could not generate instance {index} for seed {seed}"
    ))))
}

fn labeled_instance(seed: u64, index: usize, spec: &InstanceSpec) -> CliResult<Generated> {
    let inst = gen_instance(seed, index, spec)?;
    Ok(Generated {
        index,
        expected: Some(if inst.verdict.is_safe() { "safe" } else { "unsafe" }.into()),
        exact_min: Some(inst.verdict.min_value()),
        net: inst.net,
        prop: inst.prop,
    })
}

/// Instances in index order; with `require_branching`, indices that the
/// filter rejects are skipped.
pub fn generate(args: &GenArgs) -> CliResult<Vec<Generated>> {
    let spec = args.spec()?;
    let fractions = (args.min_radius_fraction, args.max_radius_fraction);
    let mut kept = Vec::with_capacity(args.count);
    let mut index = 0;
    while kept.len() < args.count {
        let g = if args.unlabeled {
            unlabeled_instance(args.seed, index, &spec, fractions)?
        } else {
            labeled_instance(args.seed, index, &spec)?
        };
        if !args.require_branching || needs_branching(&g.net, &g.prop)? {
            kept.push(g);
        }
        index += 1;
    }
    Ok(kept)
}

/// Writes `net_<i>.json`, `prop_<i>.json` and `manifest.json`.
pub fn write_generated(dir: &std::path::Path, seed: u64, items: &[Generated]) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut instances = Vec::with_capacity(items.len());
    for g in items {
        let network = format!("net_{:03}.json", g.index);
        let property = format!("prop_{:03}.json", g.index);
        write_json(dir.join(&network), &g.net.to_json())?;
        write_json(dir.join(&property), &g.prop.to_json())?;
        instances.push(ManifestEntry {
            index: g.index,
            network,
            property,
            expected: g.expected.clone(),
            exact_min: g.exact_min,
        });
    }
    let path = dir.join("manifest.json");
    write_json(&path, &Manifest { seed, instances })?;
    Ok(path)
}

/// Writes a corpus and returns its manifest path.
pub fn cmd_gen(args: &GenArgs) -> CliResult<PathBuf> {
    let items = generate(args)?;
    write_generated(&args.out, args.seed, &items)
}
