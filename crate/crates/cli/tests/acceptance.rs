//! Acceptance harness. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero if any fails. Criterion numbers given as arguments select a subset
//! (`cargo test --release --test acceptance -- 2 8`).

use std::path::{Path, PathBuf};
use std::time::Instant;

use bab_verify::alpha_opt::{grad_lower_bound, optimize_alpha_with, OptimizerConfig};
use bab_verify::bab::{self, Status, VerifierConfig};
use bab_verify::lirpa::{
    backward_bounds, compute_output_bounds, compute_output_bounds_with, initial_bounds, AlphaParams,
    IntermediateBounds, NeuronId, Reuse, SplitAssignment,
};
use bab_verify::lp::{lp_bound, solve_lp, LpOutcome, LpProblem, Relation};
use bab_verify::model::{merge_property, write_json, InputBox, Network, PropertySpec};
use bab_verify::oracle::{exact_verify, gen_instances, random_network, vertex_lp_min, Instance, InstanceSpec};
use bab_verify_cli::bench::{median_time, read_rows};
use bab_verify_cli::{cmd_bench, cmd_bounds, cmd_gen, cmd_verify, BenchArgs, BenchMode, BoundsArgs, GenArgs, VerifyArgs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn random_box(r: &mut impl Rng, dim: usize) -> InputBox {
    let center: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
    InputBox::linf_ball(&center, r.gen_range(0.05..1.0)).unwrap()
}

fn sample_in(r: &mut impl Rng, bx: &InputBox) -> Vec<f64> {
    bx.lower.iter().zip(&bx.upper).map(|(l, u)| r.gen_range(*l..=*u)).collect()
}

fn random_alpha(r: &mut impl Rng, net: &Network, lo: f64, hi: f64) -> AlphaParams {
    let mut a = AlphaParams::constant(net, 0.0);
    for k in 0..net.num_hidden() {
        for j in 0..net.hidden_dim(k) {
            a.set(NeuronId::new(k, j), r.gen_range(lo..=hi));
        }
    }
    a
}

/// Scalar net with `layers` hidden layers of width up to `max_width`.
fn random_scalar_net(r: &mut impl Rng, max_input: usize, layers: (usize, usize), max_width: usize) -> Network {
    let input = r.gen_range(1..=max_input);
    let depth = r.gen_range(layers.0..=layers.1);
    let widths: Vec<usize> = (0..depth).map(|_| r.gen_range(2..=max_width)).collect();
    random_network(r, input, &widths, 1)
}

/// The seeded 50-net corpus: 2 to 4 hidden layers, width at most 16, input
/// dimension at most 8.
fn corpus50() -> Vec<(Network, InputBox)> {
    let mut r = rng(50);
    (0..50)
        .map(|_| {
            let net = random_scalar_net(&mut r, 8, (2, 4), 16);
            let bx = random_box(&mut r, net.input_dim());
            (net, bx)
        })
        .collect()
}

fn oracle_corpus() -> Vec<Instance> {
    gen_instances(2024, 100, &InstanceSpec::default()).unwrap()
}

fn lp_value(net: &Network, ib: &IntermediateBounds, bx: &InputBox) -> Result<f64, String> {
    let s = SplitAssignment::free(net);
    match lp_bound(net, &s, ib, bx).map_err(|e| e.to_string())?.outcome {
        LpOutcome::Optimal { value, .. } => Ok(value),
        other => Err(format!("lp outcome {other:?}")),
    }
}

// ---------------------------------------------------------------------------

fn soundness_sweep() -> Check {
    const SAMPLES: usize = 100_000;
    const ALPHAS: usize = 20;
    let mut r = rng(51);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0usize;
    for (i, (net, bx)) in corpus50().iter().enumerate() {
        let free = SplitAssignment::free(net);
        let mut cases = Vec::with_capacity(ALPHAS);
        for _ in 0..ALPHAS {
            let alpha = random_alpha(&mut r, net, 0.0, 1.0);
            let b = compute_output_bounds(net, &free, &alpha, bx).map_err(|e| e.to_string())?;
            let lin = backward_bounds(net, &free, &b.ibounds, &alpha, net.num_hidden()).map_err(|e| e.to_string())?;
            cases.push((b, lin, f64::NEG_INFINITY));
        }
        let hidden = net.num_hidden();
        let mut lo: Vec<Vec<f64>> = (0..hidden).map(|k| vec![f64::INFINITY; net.hidden_dim(k)]).collect();
        let mut hi: Vec<Vec<f64>> = (0..hidden).map(|k| vec![f64::NEG_INFINITY; net.hidden_dim(k)]).collect();
        let (mut fmin, mut fmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for _ in 0..SAMPLES {
            let x = sample_in(&mut r, bx);
            let pre = net.pre_activations(&x).map_err(|e| e.to_string())?;
            for k in 0..hidden {
                for (j, v) in pre[k].iter().enumerate() {
                    lo[k][j] = lo[k][j].min(*v);
                    hi[k][j] = hi[k][j].max(*v);
                }
            }
            let f = pre[hidden][0];
            fmin = fmin.min(f);
            fmax = fmax.max(f);
            for (_, lin, excess) in cases.iter_mut() {
                let low: f64 = lin.a_low.row(0).iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + lin.b_low[0];
                let up: f64 = lin.a_up.row(0).iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + lin.b_up[0];
                *excess = excess.max(low - f).max(f - up);
            }
        }
        for (b, _, excess) in &cases {
            let mut e = excess.max(b.lower - fmin).max(fmax - b.upper);
            for k in 0..hidden {
                for j in 0..net.hidden_dim(k) {
                    e = e.max(b.ibounds.lower[k][j] - lo[k][j]).max(hi[k][j] - b.ibounds.upper[k][j]);
                }
            }
            worst = worst.max(e);
            if e > 1e-9 {
                violations += 1;
                eprintln!("  net {i}: bound exceeded by {e:e}");
            }
        }
    }
    let detail = format!("50 nets x 1e5 samples x 20 alpha, {violations} violations, largest excess {worst:.3e}");
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn completeness_vs_oracle() -> Check {
    let cfg = VerifierConfig::default();
    let (mut agree, mut witnesses, mut unsafe_count) = (0, 0, 0);
    let mut problems = Vec::new();
    for inst in oracle_corpus() {
        let exact = exact_verify(&inst.net, &inst.prop).map_err(|e| e.to_string())?;
        let v = bab::verify(&inst.net, &inst.prop, &cfg).map_err(|e| e.to_string())?;
        let ok = match &v.status {
            Status::Verified => exact.is_safe(),
            Status::Falsified { witness, value } => {
                unsafe_count += 1;
                let merged = merge_property(&inst.net, &inst.prop).map_err(|e| e.to_string())?;
                let fx = merged.eval_scalar(witness).map_err(|e| e.to_string())?;
                if fx < 0.0 && inst.prop.input.contains(witness) && fx == *value {
                    witnesses += 1;
                } else {
                    problems.push(format!("instance {}: witness evaluates to {fx}", inst.index));
                }
                !exact.is_safe()
            }
            _ => false,
        };
        if ok {
            agree += 1;
        } else {
            problems.push(format!("instance {}: {} vs exact {:?}", inst.index, v.status.name(), exact));
        }
    }
    let detail = format!("{agree}/100 verdicts match the oracle, {witnesses}/{unsafe_count} witnesses negative in the box");
    if agree == 100 && witnesses == unsafe_count {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

fn appendix_a1() -> Check {
    let (net, prop) = (fixture("a1_net.json"), fixture("a1_prop.json"));
    let mut no_lp = VerifyArgs::new(&net, &prop);
    no_lp.no_lp = true;
    let (_, a) = cmd_verify(&no_lp).map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("events.jsonl");
    let mut with_lp = VerifyArgs::new(&net, &prop);
    with_lp.events = Some(log.clone());
    let (_, b) = cmd_verify(&with_lp).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(&log).map_err(|e| e.to_string())?;
    let infeasible: Vec<serde_json::Value> = text
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter(|v| v["event"] == "lp_infeasible")
        .collect();
    let leaves = infeasible.iter().filter(|v| v["depth"] == 2).count();

    let detail = format!(
        "--no-lp: {} lower {}; with LP: {} lower {}, {} leaves certified infeasible",
        a.verdict, a.lower, b.verdict, b.lower, leaves
    );
    let ok = a.verdict == "INCOMPLETE_MODE_EXHAUSTED"
        && (a.lower + 1.0).abs() <= 1e-9
        && b.verdict == "VERIFIED"
        && b.lower.abs() <= 1e-9
        && infeasible.len() == 2
        && leaves == 2;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Best frozen bound over the single free slope: a 1001-point grid, then
/// 1001-point refinements around the best cell (the bound is concave in it).
fn grid_max(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..4 {
        let step = (hi - lo) / 1000.0;
        let mut arg = lo;
        for i in 0..=1000 {
            let a = lo + step * i as f64;
            let v = f(a);
            if v > best {
                best = v;
                arg = a;
            }
        }
        lo = (arg - step).max(0.0);
        hi = (arg + step).min(1.0);
    }
    best
}

fn lp_alpha_equivalence() -> Check {
    let mut r = rng(4);
    let (mut single, mut single_ok, mut worst_single) = (0, 0, 0.0f64);
    while single < 20 {
        let net = random_scalar_net(&mut r, 3, (1, 2), 4);
        let bx = random_box(&mut r, net.input_dim());
        let s = SplitAssignment::free(&net);
        let (alpha0, b) = initial_bounds(&net, &s, &bx, None).map_err(|e| e.to_string())?;
        let unstable = b.ibounds.unstable(&s);
        if unstable.len() != 1 {
            continue;
        }
        single += 1;
        let frozen = Reuse::frozen(&b.ibounds);
        let grid = grid_max(|a| {
            let mut al = alpha0.clone();
            al.set(unstable[0], a);
            compute_output_bounds_with(&net, &s, &al, &bx, Some(frozen)).unwrap().lower
        });
        let lp = lp_value(&net, &b.ibounds, &bx)?;
        worst_single = worst_single.max((grid - lp).abs());
        if (grid - lp).abs() <= 1e-6 {
            single_ok += 1;
        }
    }

    let cfg = OptimizerConfig {
        iterations: 2000,
        step_size: 10.0,
        decay: 0.995,
        early_stop_no_improve: 0,
        early_stop_verified: false,
    };
    let (mut multi, mut never_above, mut close) = (0, 0, 0);
    while multi < 30 {
        let net = random_scalar_net(&mut r, 3, (1, 3), 6);
        let bx = random_box(&mut r, net.input_dim());
        let s = SplitAssignment::free(&net);
        let (alpha0, b) = initial_bounds(&net, &s, &bx, None).map_err(|e| e.to_string())?;
        if b.ibounds.unstable(&s).len() < 2 {
            continue;
        }
        multi += 1;
        let frozen = Reuse::frozen(&b.ibounds);
        let opt = optimize_alpha_with(&net, &s, &alpha0, &bx, Some(frozen), &cfg).map_err(|e| e.to_string())?;
        let lp = lp_value(&net, &b.ibounds, &bx)?;
        if opt.lower <= lp + 1e-6 {
            never_above += 1;
        }
        if lp - opt.lower <= 0.02 * lp.abs() + 1e-9 {
            close += 1;
        }
    }
    let detail = format!(
        "single unstable: {single_ok}/20 grid = LP (largest gap {worst_single:.2e}); \
         multi: {never_above}/30 at or below LP, {close}/30 within 2%"
    );
    if single_ok == 20 && never_above == multi && close * 5 >= multi * 4 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bounds_crossing() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut crossings = Vec::new();
    let mut best: Option<(usize, bab_verify_cli::BoundsTrace, PathBuf)> = None;
    for (i, (net, bx)) in corpus50().into_iter().enumerate() {
        let net_path = dir.path().join(format!("net_{i:02}.json"));
        let prop_path = dir.path().join(format!("prop_{i:02}.json"));
        write_json(&net_path, &net.to_json()).map_err(|e| e.to_string())?;
        let prop = PropertySpec::new(bx, vec![1.0], 0.0).map_err(|e| e.to_string())?;
        write_json(&prop_path, &prop.to_json()).map_err(|e| e.to_string())?;
        let mut args = BoundsArgs::new(&net_path, &prop_path, 200);
        let csv = dir.path().join(format!("trace_{i:02}.csv"));
        args.out = Some(csv.clone());
        let trace = cmd_bounds(&args).map_err(|e| e.to_string())?;
        if trace.crossing().is_some() && trace.margin() >= 1e-6 {
            crossings.push(i);
            if best.as_ref().map_or(true, |f| trace.margin() > f.1.margin()) {
                best = Some((i, trace, csv));
            }
        }
    }
    match best {
        Some((i, t, csv)) => {
            let rows = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?.lines().count() - 1;
            Ok(format!(
                "{} of 50 instances cross by at least 1e-6; largest on net {i}: lirpa {:.6} > lp_initial {:.6} \
                 from iteration {} (lp_optimized {:.6}, {rows} trace rows)",
                crossings.len(),
                t.final_lirpa(),
                t.lp_initial,
                t.crossing().unwrap(),
                t.lp_optimized
            ))
        }
        None => Err("no instance where optimized LiRPA exceeds the heuristic-bounds LP by 1e-6".into()),
    }
}

fn gradient_check() -> Check {
    let mut r = rng(6);
    let h = 1e-6;
    let (mut ok, mut total, mut skipped) = (0usize, 0usize, 0usize);
    for (net, bx) in corpus50().into_iter().take(20) {
        let s = SplitAssignment::free(&net);
        let alpha = random_alpha(&mut r, &net, 0.05, 0.95);
        let g = grad_lower_bound(&net, &s, &alpha, &bx).map_err(|e| e.to_string())?;
        let f = |a: &AlphaParams| compute_output_bounds(&net, &s, a, &bx).unwrap().lower;
        for (i, id) in g.support.iter().enumerate() {
            let a0 = alpha.get(*id);
            let mut ap = alpha.clone();
            ap.set(*id, a0 + h);
            let mut am = alpha.clone();
            am.set(*id, a0 - h);
            let (fp, fm) = (f(&ap), f(&am));
            // One-sided differences that disagree mark a breakpoint within h.
            let (right, left) = ((fp - g.value) / h, (g.value - fm) / h);
            if (right - left).abs() > 1e-3 * right.abs().max(left.abs()).max(1e-3) {
                skipped += 1;
                continue;
            }
            let fd = (fp - fm) / (2.0 * h);
            total += 1;
            if (fd - g.grad[i]).abs() / fd.abs().max(g.grad[i].abs()).max(1e-6) <= 1e-4 {
                ok += 1;
            }
        }
    }
    let detail = format!("{ok}/{total} coordinates within 1e-4 relative ({skipped} breakpoint-adjacent skipped)");
    if total > 0 && ok as f64 >= 0.95 * total as f64 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn batch_invariance() -> Check {
    let corpus = oracle_corpus();
    let mut mismatches = Vec::new();
    let mut runs = 0;
    for inst in &corpus {
        let mut seen: Option<&'static str> = None;
        for n in [1, 4, 32] {
            for t in [1, 4] {
                let cfg = VerifierConfig {
                    batch_size: n,
                    thread_count: t,
                    ..VerifierConfig::default()
                };
                let v = bab::verify(&inst.net, &inst.prop, &cfg).map_err(|e| e.to_string())?;
                runs += 1;
                let name = v.status.name();
                match seen {
                    None => seen = Some(name),
                    Some(s) if s != name => mismatches.push(format!("instance {} n={n} t={t}: {name} vs {s}", inst.index)),
                    _ => {}
                }
            }
        }
    }
    let detail = format!("{runs} runs over batch {{1,4,32}} x threads {{1,4}}, {} mismatches", mismatches.len());
    if mismatches.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", mismatches.join("; ")))
    }
}

fn ablation_ordering() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut g = GenArgs::new(dir.path().join("corpus"), 2024, 30);
    g.unlabeled = true;
    g.require_branching = true;
    g.min_input_dim = 2;
    g.max_input_dim = 5;
    g.min_layers = 2;
    g.max_layers = 2;
    g.min_width = 6;
    g.max_width = 10;
    g.min_radius_fraction = 0.3;
    g.max_radius_fraction = 0.6;
    let manifest = cmd_gen(&g).map_err(|e| e.to_string())?;

    let modes = vec![BenchMode::Lirpa, BenchMode::Opt, BenchMode::OptBatch];
    let mut args = BenchArgs::new(&manifest, modes.clone());
    args.search.lr = 1.0;
    args.search.timeout = 10.0;
    args.repeat = 3;
    let csv = dir.path().join("bench.csv");
    args.out = Some(csv.clone());
    args.cactus = Some(dir.path().join("cactus.csv"));
    cmd_bench(&args).map_err(|e| e.to_string())?;

    let rows = read_rows(&csv).map_err(|e| e.to_string())?;
    let med: Vec<f64> = modes.iter().map(|m| median_time(&rows, *m)).collect();
    let solved: Vec<usize> = modes
        .iter()
        .map(|m| rows.iter().filter(|r| r.mode == *m && r.solved).count())
        .collect();
    // Definite verdicts must agree across modes.
    let mut conflicts = 0;
    for entry in rows.iter().filter(|r| r.mode == BenchMode::Lirpa) {
        let verdicts: Vec<&str> = rows
            .iter()
            .filter(|r| r.index == entry.index && r.solved)
            .map(|r| r.status.as_str())
            .collect();
        if verdicts.windows(2).any(|w| w[0] != w[1]) {
            conflicts += 1;
        }
    }
    let detail = format!(
        "median s: opt-batch {:.5} (solved {}), opt {:.5} (solved {}), lirpa {:.5} (solved {}); {conflicts} verdict conflicts",
        med[2], solved[2], med[1], solved[1], med[0], solved[0]
    );
    if med[2] <= med[1] && med[1] <= med[0] && conflicts == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Bounded LP with up to 12 variables and up to 3 general rows.
fn random_lp(r: &mut impl Rng) -> LpProblem {
    let n = r.gen_range(1..=12);
    let m = r.gen_range(1..=3);
    let mut p = LpProblem::new();
    for i in 0..n {
        let lo = r.gen_range(-3.0..1.0);
        p.add_var(format!("v{i}"), lo, lo + r.gen_range(0.1..4.0));
    }
    for i in 0..n {
        p.objective[i] = r.gen_range(-2.0..2.0);
    }
    for c in 0..m {
        let mut coeffs = Vec::new();
        for v in 0..n {
            if r.gen_bool(0.7) {
                coeffs.push((v, r.gen_range(-2.0..2.0)));
            }
        }
        let rel = match r.gen_range(0..5) {
            0 => Relation::Eq,
            1 | 2 => Relation::Ge,
            _ => Relation::Le,
        };
        p.add_constraint(format!("c{c}"), coeffs, rel, r.gen_range(-2.0..2.0));
    }
    p
}

/// Infeasible by construction, cycling through three kinds of conflict.
fn infeasible_lp(r: &mut impl Rng, kind: usize) -> LpProblem {
    let mut p = random_lp(r);
    let n = p.num_vars();
    match kind % 3 {
        // a·x ≤ b and a·x ≥ b + δ.
        0 => {
            let a: Vec<(usize, f64)> = (0..n).map(|v| (v, r.gen_range(-1.0..1.0))).collect();
            let b = r.gen_range(-1.0..1.0);
            p.add_constraint("le", a.clone(), Relation::Le, b);
            p.add_constraint("ge", a, Relation::Ge, b + r.gen_range(1e-3..1.0));
        }
        // Σ x above the sum of the upper bounds.
        1 => {
            let top: f64 = p.upper.iter().sum();
            p.add_constraint("sum", (0..n).map(|v| (v, 1.0)).collect(), Relation::Ge, top + r.gen_range(1e-3..1.0));
        }
        // x0 pinned to two different values.
        _ => {
            let v = r.gen_range(-1.0..1.0);
            p.add_constraint("pin_a", vec![(0, 1.0)], Relation::Eq, v);
            p.add_constraint("pin_b", vec![(0, 1.0)], Relation::Eq, v + r.gen_range(1e-3..1.0));
        }
    }
    p
}

fn simplex_correctness() -> Check {
    let mut r = rng(9);
    let (mut matched, mut optimal, mut infeasible) = (0, 0, 0);
    let mut problems = Vec::new();
    for i in 0..200 {
        let p = random_lp(&mut r);
        match (solve_lp(&p), vertex_lp_min(&p, 1e-9)) {
            (LpOutcome::Optimal { value, .. }, Some((v, _))) if (value - v).abs() <= 1e-6 => {
                matched += 1;
                optimal += 1;
            }
            (LpOutcome::Infeasible, None) => {
                matched += 1;
                infeasible += 1;
            }
            (got, want) => problems.push(format!("lp {i}: simplex {got:?}, vertices {:?}", want.map(|w| w.0))),
        }
    }
    let certified = (0..50).filter(|k| solve_lp(&infeasible_lp(&mut r, *k)) == LpOutcome::Infeasible).count();
    let detail = format!(
        "{matched}/200 random LPs match vertex enumeration ({optimal} optimal, {infeasible} infeasible); \
         {certified}/50 constructed systems infeasible"
    );
    if matched == 200 && certified == 50 {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", problems.join("; ")))
    }
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget_s: f64,
    run: fn() -> Check,
}

const CRITERIA: [Criterion; 9] = [
    Criterion { id: 1, name: "soundness sweep", budget_s: 120.0, run: soundness_sweep },
    Criterion { id: 2, name: "completeness vs oracle", budget_s: 300.0, run: completeness_vs_oracle },
    Criterion { id: 3, name: "incompleteness without LP, completeness with LP", budget_s: 1.0, run: appendix_a1 },
    Criterion { id: 4, name: "LP and optimized slopes agree on frozen bounds", budget_s: 180.0, run: lp_alpha_equivalence },
    Criterion { id: 5, name: "joint optimization beats the initial-bounds LP", budget_s: 120.0, run: bounds_crossing },
    Criterion { id: 6, name: "gradient vs finite differences", budget_s: 60.0, run: gradient_check },
    Criterion { id: 7, name: "batch and thread invariance", budget_s: 600.0, run: batch_invariance },
    Criterion { id: 8, name: "ablation ordering of median solve time", budget_s: 600.0, run: ablation_ordering },
    Criterion { id: 9, name: "simplex correctness", budget_s: 60.0, run: simplex_correctness },
];

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let t = Instant::now();
        let outcome = (c.run)();
        let secs = t.elapsed().as_secs_f64();
        let over = secs > c.budget_s;
        let (pass, detail) = match outcome {
            Ok(d) if !over => (true, d),
            Ok(d) => (false, format!("{d}; over the time budget")),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{}] {}: {} ({:.1}s of {:.0}s)",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            secs,
            c.budget_s
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
