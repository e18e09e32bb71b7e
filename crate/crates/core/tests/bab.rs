mod common;

use approx::assert_abs_diff_eq;
use bab_verify::bab::{
    babsr_scores, batch_pick_out, batch_split, bound_domain, confirm_counterexample,
    domain_filter, verify, verify_scalar, ChildSpec, DomainSet, EventKind, Search, Status,
    SubDomain, VerifierConfig,
};
use bab_verify::lirpa::{
    AlphaParams, IntermediateBounds, NeuronId, SplitAssignment, SplitState::*,
};
use bab_verify::model::{InputBox, Network, PropertySpec};
use bab_verify::oracle::{exact_min, exact_verify, gen_instances, InstanceSpec};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn cfg() -> VerifierConfig {
    VerifierConfig {
        record_events: true,
        ..VerifierConfig::default()
    }
}

#[test]
fn a1_with_lp_is_verified_at_zero() {
    let v = verify_scalar(&a1_net(), &a1_box(), &cfg()).unwrap();
    assert_eq!(v.status, Status::Verified);
    assert_abs_diff_eq!(v.lower, 0.0, epsilon = 1e-9);
    assert!(v.stats.lp_calls >= 2);
    let infeasible_leaves: Vec<_> = v
        .events
        .iter()
        .filter(|e| e.event == EventKind::LpInfeasible)
        .collect();
    assert_eq!(infeasible_leaves.len(), 2);
    assert!(infeasible_leaves.iter().all(|e| e.depth == 2));
}

#[test]
fn a1_without_lp_is_incomplete_at_minus_one() {
    let c = VerifierConfig {
        disable_lp_fallback: true,
        ..cfg()
    };
    let v = verify_scalar(&a1_net(), &a1_box(), &c).unwrap();
    assert_eq!(v.status, Status::IncompleteModeExhausted);
    assert_abs_diff_eq!(v.lower, -1.0, epsilon = 1e-9);
    assert_eq!(v.stats.lp_calls, 0);
    let exhausted = v.events.iter().filter(|e| e.event == EventKind::Exhausted).count();
    assert_eq!(exhausted, 2);
}

#[test]
fn shifted_identity_is_falsified_at_zero() {
    let net = Network::from_rows(&[(vec![vec![1.0]], Some(vec![-0.5]))]).unwrap();
    let bx = InputBox::new(vec![0.0], vec![1.0]).unwrap();
    let v = verify_scalar(&net, &bx, &cfg()).unwrap();
    match v.status {
        Status::Falsified { witness, value } => {
            assert_eq!(witness, vec![0.0]);
            assert_abs_diff_eq!(value, -0.5, epsilon = 1e-15);
        }
        s => panic!("{s:?}"),
    }
}

fn domain_with(ib: IntermediateBounds, lam: Vec<Vec<f64>>, f_lb: f64, id: u64) -> SubDomain {
    let splits = SplitAssignment::from_states(ib.lower.iter().map(|l| vec![Free; l.len()]).collect());
    let alpha = AlphaParams::heuristic(&ib);
    SubDomain {
        id,
        parent_id: None,
        splits,
        f_lb,
        f_ub: 1.0,
        alpha,
        ibounds: ib,
        depth: 0,
        lp_checked: false,
        empty: false,
        minimizer: vec![0.0],
        relu_coeffs: lam,
    }
}

#[test]
fn babsr_prefers_larger_bias_mass() {
    let ib = IntermediateBounds {
        lower: vec![vec![-1.0, -0.1]],
        upper: vec![vec![1.0, 0.1]],
    };
    let d = domain_with(ib, vec![vec![2.0, -2.0]], -1.0, 0);
    let s = babsr_scores(&d);
    assert_eq!(s[0].0, NeuronId::new(0, 0));
    assert_abs_diff_eq!(s[0].1, 2.0 * 0.5, epsilon = 1e-15);
    assert_abs_diff_eq!(s[1].1, 2.0 * 0.05, epsilon = 1e-15);
}

#[test]
fn babsr_singleton_and_ties() {
    let ib = IntermediateBounds {
        lower: vec![vec![0.5, -1.0], vec![-1.0]],
        upper: vec![vec![1.0, 2.0], vec![1.0]],
    };
    // Only zero coefficients: the lone-score order falls back to position.
    let d = domain_with(ib.clone(), vec![vec![0.0, 0.0], vec![0.0]], -1.0, 0);
    let s = babsr_scores(&d);
    assert_eq!(s.iter().map(|x| x.0).collect::<Vec<_>>(), vec![NeuronId::new(0, 1), NeuronId::new(1, 0)]);
    let one = IntermediateBounds {
        lower: vec![vec![-1.0, 0.5]],
        upper: vec![vec![3.0, 1.0]],
    };
    let d = domain_with(one, vec![vec![1e-9, 5.0]], -1.0, 0);
    assert_eq!(babsr_scores(&d)[0].0, NeuronId::new(0, 0));
}

#[test]
fn babsr_argmax_is_scale_invariant() {
    let mut r = rng(12);
    for _ in 0..20 {
        let net = random_scalar_net(&mut r, 3, (2, 3), 5);
        let bx = random_box(&mut r, net.input_dim());
        let spec = root_spec(&net);
        let c = VerifierConfig { disable_alpha_opt: true, ..cfg() };
        let d = bound_domain(&net, &bx, &c, &spec).unwrap();
        if d.is_leaf() {
            continue;
        }
        let mut layers = net.layers().to_vec();
        let last = layers.last_mut().unwrap();
        last.weight *= 3.5;
        last.bias *= 3.5;
        let scaled = Network::new(layers).unwrap();
        let ds = bound_domain(&scaled, &bx, &c, &spec).unwrap();
        assert_eq!(babsr_scores(&d)[0].0, babsr_scores(&ds)[0].0);
    }
}

fn root_spec(net: &Network) -> ChildSpec {
    ChildSpec {
        id: 0,
        parent_id: None,
        splits: SplitAssignment::free(net),
        split: None,
        alpha0: AlphaParams::constant(net, 0.0),
        prior: None,
        from_layer: 0,
        depth: 0,
    }
}

#[test]
fn pick_takes_the_worst_domains() {
    let ib = IntermediateBounds {
        lower: vec![vec![-1.0]],
        upper: vec![vec![1.0]],
    };
    let mut set = DomainSet::new();
    for (id, lb) in [(0, -5.0), (1, -1.0), (2, -3.0)] {
        set.insert(domain_with(ib.clone(), vec![vec![1.0]], lb, id)).unwrap();
    }
    let picked = batch_pick_out(&mut set, 2).unwrap();
    assert_eq!(picked.iter().map(|p| p.0.id).collect::<Vec<_>>(), vec![0, 2]);
    assert_eq!(set.len(), 1);
    let rest = batch_pick_out(&mut set, 400).unwrap();
    assert_eq!(rest.len(), 1);
    assert!(set.is_empty());
    assert!(set.insert(domain_with(ib, vec![vec![1.0]], 0.0, 9)).is_err());
}

proptest! {
    /// The ordered index agrees with a plain sort after any mix of inserts,
    /// replacements and removals.
    #[test]
    fn domain_set_order_matches_sort(ops in prop::collection::vec((0u64..24, -4i32..0, any::<bool>()), 1..80), k in 1usize..8) {
        let ib = IntermediateBounds { lower: vec![vec![-1.0]], upper: vec![vec![1.0]] };
        let mut set = DomainSet::new();
        let mut model = std::collections::BTreeMap::new();
        for (id, lb, keep) in ops {
            if keep {
                set.insert(domain_with(ib.clone(), vec![vec![1.0]], lb as f64, id)).unwrap();
                model.insert(id, lb as f64);
            } else {
                prop_assert_eq!(set.remove(id).is_some(), model.remove(&id).is_some());
            }
        }
        let mut want: Vec<(f64, u64)> = model.iter().map(|(id, lb)| (*lb, *id)).collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        prop_assert_eq!(set.lower_bound(), want.first().map_or(f64::INFINITY, |w| w.0));
        let got: Vec<u64> = set.pop_worst(k).iter().map(|d| d.id).collect();
        let expect: Vec<u64> = want.iter().take(k).map(|w| w.1).collect();
        prop_assert_eq!(got, expect);
        prop_assert_eq!(set.len(), want.len().saturating_sub(k));
    }
}

#[test]
fn a1_root_split_children() {
    let net = a1_net();
    let bx = a1_box();
    let mut search = Search::new(&net, &bx, &cfg()).unwrap();
    search.start().unwrap();
    let root = search.set.get(0).unwrap().clone();
    let picked = batch_pick_out(&mut search.set, 1).unwrap();
    assert_eq!(picked[0].1, NeuronId::new(0, 0));
    let kids = batch_split(&picked, &mut search.tree).unwrap();
    assert_eq!(kids.len(), 2);
    assert_eq!(kids[0].splits.layer(0), &[Pos, Free]);
    assert_eq!(kids[1].splits.layer(0), &[Neg, Free]);
    assert!(kids.iter().all(|k| k.depth == root.depth + 1 && k.parent_id == Some(root.id)));
    // Splitting an already split neuron is refused.
    let child = bound_domain(&net, &a1_box(), &cfg(), &kids[0]).unwrap();
    assert!(batch_split(&[(child, NeuronId::new(0, 0))], &mut search.tree).is_err());
}

/// Every sample of the parent region falls in exactly one child (ties at
/// h = 0 count for both).
#[test]
fn split_children_partition_parent() {
    let mut r = rng(21);
    for _ in 0..20 {
        let net = random_scalar_net(&mut r, 3, (1, 3), 5);
        let bx = random_box(&mut r, net.input_dim());
        let c = VerifierConfig { disable_alpha_opt: true, ..cfg() };
        let root = bound_domain(&net, &bx, &c, &root_spec(&net)).unwrap();
        let Some((id, _)) = babsr_scores(&root).first().copied() else { continue };
        let mut tree = bab_verify::bab::SearchTree::new();
        tree.fresh_id();
        let kids = batch_split(&[(root, id)], &mut tree).unwrap();
        for _ in 0..500 {
            let x = sample_in(&mut r, &bx);
            let pre = net.pre_activations(&x).unwrap();
            let hits = kids.iter().filter(|k| k.splits.admits(&pre)).count();
            let on_boundary = pre[id.layer][id.index] == 0.0;
            assert!(hits == 1 || (on_boundary && hits == 2));
        }
    }
}

#[test]
fn filter_routes_children() {
    let net = a1_net();
    let ib = IntermediateBounds {
        lower: vec![vec![-1.0, -1.0]],
        upper: vec![vec![1.0, 1.0]],
    };
    let proved = domain_with(ib.clone(), vec![vec![1.0, 1.0]], 0.2, 1);
    let mut empty = domain_with(ib.clone(), vec![vec![1.0, 1.0]], -1.0, 2);
    empty.empty = true;
    let open = domain_with(ib.clone(), vec![vec![1.0, 1.0]], -1.0, 3);
    let f = domain_filter(&net, vec![proved, empty, open]);
    assert_eq!(f.verified.len(), 1);
    assert_eq!(f.empty.len(), 1);
    assert_eq!(f.survivors.len(), 1);
    assert!(f.witness.is_none());
}

#[test]
fn a1_leaves_survive_pure_bounding() {
    let net = a1_net();
    let bx = a1_box();
    let leaves: Vec<SubDomain> = [[Pos, Pos], [Neg, Neg], [Neg, Pos], [Pos, Neg]]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let spec = ChildSpec {
                id: i as u64,
                splits: splits(&[s]),
                ..root_spec(&net)
            };
            bound_domain(&net, &bx, &cfg(), &spec).unwrap()
        })
        .collect();
    let f = domain_filter(&net, leaves);
    assert_eq!(f.verified.len(), 2);
    assert_eq!(f.leaves.len(), 2);
    for d in &f.leaves {
        assert_abs_diff_eq!(d.f_lb, -1.0, epsilon = 1e-12);
        assert!(confirm_counterexample(&net, d).is_none());
    }
}

/// Three copies of x: the parent (h1 < 0, h2 ≥ 0) is empty but its bounds
/// cannot tell, so it is split on h3; once one child is shown infeasible the
/// parent LP removes the sibling too.
#[test]
fn infeasible_parent_prunes_sibling() {
    let net = Network::from_rows(&[
        (vec![vec![1.0], vec![1.0], vec![1.0]], Some(vec![0.0, 0.0, 0.25])),
        (vec![vec![1.0, -1.0, -1.0]], None),
    ])
    .unwrap();
    let bx = InputBox::new(vec![-1.0], vec![1.0]).unwrap();
    let c = VerifierConfig { disable_alpha_opt: true, ..cfg() };
    let mut search = Search::new(&net, &bx, &c).unwrap();
    let pid = search.tree.fresh_id();
    let parent = bound_domain(
        &net,
        &bx,
        &c,
        &ChildSpec { id: pid, splits: splits(&[&[Neg, Pos, Free]]), ..root_spec(&net) },
    )
    .unwrap();
    assert!(parent.f_lb < 0.0 && !parent.empty);
    search.tree.record(&parent);
    let kids = batch_split(&[(parent, NeuronId::new(0, 2))], &mut search.tree).unwrap();
    let kids: Vec<SubDomain> = kids.iter().map(|k| bound_domain(&net, &bx, &c, k).unwrap()).collect();
    for k in &kids {
        search.tree.record(k);
    }
    let (first, second) = (kids[0].clone(), kids[1].clone());
    assert!(first.f_lb < 0.0 && second.f_lb < 0.0);
    search.set.insert(second.clone()).unwrap();
    search.lp_fallback(vec![first]).unwrap();
    assert!(search.set.is_empty());
    assert_eq!(search.stats.lp_calls, 2);
    assert_eq!(search.stats.pruned, 1);
}

/// Safe instances (exact minimum shifted to +0.01): the LP either proves the
/// root or raises its bound, never past the exact minimum.
#[test]
fn lp_raises_unresolved_bounds() {
    let mut r = rng(77);
    let (mut raised, mut proved) = (0, 0);
    for _ in 0..200 {
        let raw = random_scalar_net(&mut r, 3, (2, 3), 5);
        let bx = random_box(&mut r, raw.input_dim());
        let m = exact_min(&raw, &bx).unwrap().value;
        let mut layers = raw.layers().to_vec();
        layers.last_mut().unwrap().bias[0] += 0.01 - m;
        let net = Network::new(layers).unwrap();
        let c = VerifierConfig { disable_alpha_opt: true, ..cfg() };
        let mut search = Search::new(&net, &bx, &c).unwrap();
        let id = search.tree.fresh_id();
        let d = bound_domain(&net, &bx, &c, &ChildSpec { id, ..root_spec(&net) }).unwrap();
        if d.f_lb >= 0.0 || d.is_leaf() {
            continue;
        }
        search.tree.record(&d);
        let before = d.f_lb;
        search.lp_fallback(vec![d]).unwrap();
        match search.set.get(id) {
            Some(after) => {
                assert!(after.f_lb >= before && after.lp_checked);
                assert!(after.f_lb <= 0.01 + 1e-9);
                raised += 1;
            }
            None => {
                assert_eq!(search.stats.lp_proved, 1);
                proved += 1;
            }
        }
    }
    assert!(raised > 5 && proved > 5, "{raised} raised, {proved} proved");
}

#[test]
fn config_is_validated() {
    for bad in [
        VerifierConfig { batch_size: 0, ..cfg() },
        VerifierConfig { batch_size: 16, lp_threshold: 31, ..cfg() },
        VerifierConfig { timeout: 0.0, ..cfg() },
        VerifierConfig { thread_count: 0, ..cfg() },
    ] {
        assert!(verify_scalar(&a1_net(), &a1_box(), &bad).is_err());
    }
}

/// Verdicts agree with the oracle; the bound trace never exceeds the exact
/// minimum; the certified bound never decreases.
#[test]
fn verdicts_match_oracle_on_seeded_instances() {
    let insts = gen_instances(2024, 24, &InstanceSpec::default()).unwrap();
    for inst in &insts {
        let v = verify(&inst.net, &inst.prop, &cfg()).unwrap();
        let exact = inst.verdict.min_value();
        match &v.status {
            Status::Verified => assert!(inst.verdict.is_safe(), "instance {}", inst.index),
            Status::Falsified { witness, value } => {
                assert!(!inst.verdict.is_safe(), "instance {}", inst.index);
                assert!(inst.prop.input.contains(witness));
                let merged = bab_verify::model::merge_property(&inst.net, &inst.prop).unwrap();
                assert_eq!(merged.eval_scalar(witness).unwrap(), *value);
                assert!(*value < 0.0);
            }
            s => panic!("instance {}: {s:?}", inst.index),
        }
        for t in &v.trace {
            assert!(t.lower <= exact + 1e-9, "instance {}: {} > {}", inst.index, t.lower, exact);
        }
        assert!(v.trace.windows(2).all(|w| w[0].certified_lower <= w[1].certified_lower));
    }
}

#[test]
fn batch_size_and_threads_do_not_change_verdicts() {
    let insts = gen_instances(7, 10, &InstanceSpec::default()).unwrap();
    for inst in &insts {
        let base = verify(&inst.net, &inst.prop, &cfg()).unwrap().status;
        for (n, t) in [(1, 1), (4, 1), (32, 1), (16, 4)] {
            let c = VerifierConfig {
                batch_size: n,
                lp_threshold: 512.max(2 * n),
                thread_count: t,
                ..cfg()
            };
            let v = verify(&inst.net, &inst.prop, &c).unwrap().status;
            assert_eq!(v.name(), base.name());
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let inst = &gen_instances(3, 2, &InstanceSpec::default()).unwrap()[1];
    let a = verify(&inst.net, &inst.prop, &cfg()).unwrap();
    let b = verify(&inst.net, &inst.prop, &cfg()).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.events, b.events);
    assert_eq!(a.stats.branches, b.stats.branches);
}

#[test]
fn constructed_counterexamples_are_found() {
    let mut r = rng(31);
    let mut found = 0;
    let total = 40;
    for _ in 0..total {
        let net = random_scalar_net(&mut r, 3, (1, 3), 5);
        let d = net.input_dim();
        let x_adv: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = net.eval_scalar(&x_adv).unwrap();
        // Shift the output so x_adv is a counterexample with margin.
        let prop = PropertySpec::new(InputBox::linf_ball(&x_adv, 0.2).unwrap(), vec![1.0], -y - 0.05).unwrap();
        assert!(!exact_verify(&net, &prop).unwrap().is_safe());
        let c = VerifierConfig { timeout: 10.0, ..cfg() };
        if let Status::Falsified { .. } = verify(&net, &prop, &c).unwrap().status {
            found += 1;
        }
    }
    assert!(found as f64 >= 0.95 * total as f64, "{found}/{total}");
}
