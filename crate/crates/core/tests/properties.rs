use coarse_causal::coarsening::{join, meet};
use coarse_causal::lattice::enumerate_valid;
use coarse_causal::pipeline::learn_exact;
use coarse_causal::{induce, interventional_coarsening, Coarsening, Dag, NodeSet, Partition};
use proptest::prelude::*;

/// A DAG on `d` nodes: pairs of a hidden random order, each kept or not.
fn dag(max_d: usize) -> impl Strategy<Value = Dag> {
    (2..=max_d).prop_flat_map(|d| {
        let pairs = d * (d - 1) / 2;
        (Just(d), Just((0..d).collect::<Vec<usize>>()).prop_shuffle(), proptest::collection::vec(any::<bool>(), pairs))
    })
    .prop_map(|(d, order, keep)| {
        let mut edges = Vec::new();
        let mut k = 0;
        for i in 0..d {
            for j in i + 1..d {
                if keep[k] {
                    edges.push((order[i], order[j]));
                }
                k += 1;
            }
        }
        Dag::new(d, edges).unwrap()
    })
}

fn subset(d: usize, mask: u32) -> NodeSet {
    (0..d).filter(|&v| mask >> v & 1 == 1).collect()
}

/// d-connection by enumerating every simple path in the skeleton.
fn brute_d_connected(g: &Dag, a: usize, b: usize, c: &NodeSet) -> bool {
    let d = g.node_count();
    let de: Vec<NodeSet> = (0..d).map(|v| g.descendants(&NodeSet::singleton(v)).unwrap()).collect();
    let adjacent = |u: usize| (0..d).filter(move |&w| g.has_edge(u, w) || g.has_edge(w, u));
    let active = |path: &[usize]| {
        path.windows(3).all(|w| {
            let collider = g.has_edge(w[0], w[1]) && g.has_edge(w[2], w[1]);
            if collider {
                !de[w[1]].is_disjoint(c)
            } else {
                !c.contains(w[1])
            }
        })
    };
    fn walk(path: &mut Vec<usize>, b: usize, next: &dyn Fn(usize) -> Vec<usize>, ok: &dyn Fn(&[usize]) -> bool) -> bool {
        let last = *path.last().unwrap();
        if last == b {
            return ok(path);
        }
        for w in next(last) {
            if !path.contains(&w) {
                path.push(w);
                if walk(path, b, next, ok) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    walk(&mut vec![a], b, &|u| adjacent(u).collect(), &active)
}

fn pick(valid: &[Coarsening], i: usize) -> &Coarsening {
    &valid[i % valid.len()]
}

fn expand(c: &Coarsening, parts: &NodeSet) -> NodeSet {
    parts.iter().flat_map(|i| c.partition().part(i).iter().collect::<Vec<_>>()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ancestors_and_descendants_are_dual(g in dag(8)) {
        let d = g.node_count();
        for u in 0..d {
            let de = g.descendants(&NodeSet::singleton(u)).unwrap();
            for v in 0..d {
                let an = g.ancestors(&NodeSet::singleton(v)).unwrap();
                prop_assert_eq!(de.contains(v), an.contains(u));
            }
        }
    }

    #[test]
    fn d_separation_matches_path_enumeration(g in dag(6), a in 0usize..6, b in 0usize..6, mask in 0u32..64) {
        let d = g.node_count();
        let (a, b) = (a % d, b % d);
        prop_assume!(a != b);
        let c = subset(d, mask).difference(&NodeSet::new([a, b]));
        let sep = g.d_separated(&NodeSet::singleton(a), &NodeSet::singleton(b), &c).unwrap();
        prop_assert_eq!(sep, !brute_d_connected(&g, a, b, &c));
    }

    #[test]
    fn intervened_ancestors_grow_along_paths(g in dag(8), masks in proptest::collection::vec(1u32..256, 1..5)) {
        let d = g.node_count();
        let ivs: Vec<NodeSet> = masks.iter().map(|&m| subset(d, m)).collect();
        for v in 0..d {
            let sig_v = g.intervened_ancestors(v, &ivs).unwrap();
            for u in g.ancestors(&NodeSet::singleton(v)).unwrap().iter() {
                let sig_u = g.intervened_ancestors(u, &ivs).unwrap();
                prop_assert!(sig_u.iter().all(|k| sig_v.contains(k)), "{:?} vs {:?}", sig_u, sig_v);
            }
        }
    }

    #[test]
    fn meet_and_join_stay_valid_and_bound(g in dag(5), i in any::<usize>(), j in any::<usize>()) {
        let valid = enumerate_valid(&g).unwrap();
        let (c1, c2) = (pick(&valid, i), pick(&valid, j));
        let lo = meet(&g, c1, c2).unwrap();
        let hi = join(&g, c1, c2).unwrap();
        prop_assert!(lo.is_coarsening_of(&g) && hi.is_coarsening_of(&g));
        for c in [c1, c2] {
            prop_assert!(lo.partition().refines(c.partition()).unwrap());
            prop_assert!(c.partition().refines(hi.partition()).unwrap());
        }
        // least upper bound and greatest lower bound among valid coarsenings
        for c in &valid {
            let p = c.partition();
            if c1.partition().refines(p).unwrap() && c2.partition().refines(p).unwrap() {
                prop_assert!(hi.partition().refines(p).unwrap());
            }
            if p.refines(c1.partition()).unwrap() && p.refines(c2.partition()).unwrap() {
                prop_assert!(p.refines(lo.partition()).unwrap());
            }
        }
    }

    #[test]
    fn coarse_separation_implies_fine_separation(g in dag(6), i in any::<usize>(), a in any::<u32>(), b in any::<u32>(), c in any::<u32>()) {
        let valid = enumerate_valid(&g).unwrap();
        let coarse = pick(&valid, i);
        let k = coarse.len();
        prop_assume!(k >= 2);
        let h = coarse.to_dag();
        let sa = subset(k, a % (1 << k));
        let sb = subset(k, b % (1 << k)).difference(&sa);
        let sc = subset(k, c % (1 << k)).difference(&sa.union(&sb));
        prop_assume!(!sa.is_empty() && !sb.is_empty());
        if h.d_separated(&sa, &sb, &sc).unwrap() {
            prop_assert!(g.d_separated(&expand(coarse, &sa), &expand(coarse, &sb), &expand(coarse, &sc)).unwrap());
        }
    }

    #[test]
    fn induced_quotients_are_acyclic_or_rejected(g in dag(7), labels in proptest::collection::vec(0usize..4, 7)) {
        let d = g.node_count();
        let p = Partition::from_keys(&labels[..d]);
        if let Ok(c) = induce(&g, &p) {
            prop_assert!(c.is_coarsening_of(&g));
            for (u, v) in g.edges() {
                let (pu, pv) = (p.part_of(u), p.part_of(v));
                prop_assert!(pu == pv || c.edges().contains(&(pu, pv)));
            }
        }
    }

    #[test]
    fn exact_oracles_learn_the_interventional_coarsening(g in dag(8), masks in proptest::collection::vec(1u32..256, 1..5)) {
        let d = g.node_count();
        let ivs: Vec<NodeSet> = masks.iter().map(|&m| subset(d, m % (1 << d))).filter(|t| !t.is_empty()).collect();
        let (learned, _) = learn_exact(&g, &ivs).unwrap();
        prop_assert_eq!(learned, interventional_coarsening(&g, &ivs).unwrap());
    }
}
