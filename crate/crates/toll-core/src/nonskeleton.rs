//! Pricing of the non-skeleton part of a level.
//!
//! Skeleton edges are free. Each non-skeleton component is priced as a
//! rooted instance hanging from its anchor; then, per fragment, every
//! black/white colouring of its child fragments is tried and the best kept.

use std::collections::BTreeMap;

use crate::decomposition::{BuyerLevels, Decomposition};
use crate::evaluator::revenue_restricted;
use crate::graph::{Buyer, CactusGraph, Subgraph};
use crate::rooted::{solve_rooted, RootedInstance, RootedSolution};
use crate::scalar::Scalar;
use crate::skeleton::SkeletonLevel;

#[derive(Debug, Clone)]
pub struct ComponentInstance<T> {
    pub component: usize,
    pub sub: Subgraph,
    pub instance: RootedInstance<T>,
}

/// Rooted instance of every non-skeleton component with at least one demand.
///
/// A level-`j` buyer contributes one demand per terminal that lies off the
/// skeleton, in the component holding that terminal.
pub fn build_rooted_instances<T: Scalar>(g: &CactusGraph, sk: &SkeletonLevel, buyers: &[Buyer<T>], at_level: &[usize]) -> Vec<ComponentInstance<T>> {
    let mut demands: BTreeMap<usize, Vec<(usize, T)>> = BTreeMap::new();
    for &i in at_level {
        let b = &buyers[i];
        if !b.is_active() {
            continue;
        }
        let cs = sk.component_of_vertex[b.s];
        let ct = sk.component_of_vertex[b.t];
        if cs.is_some() && cs == ct {
            continue;
        }
        for (v, c) in [(b.s, cs), (b.t, ct)] {
            if let Some(c) = c {
                demands.entry(c).or_default().push((v, b.budget.clone()));
            }
        }
    }
    demands
        .into_iter()
        .map(|(c, list)| {
            let comp = &sk.components[c];
            let sub = Subgraph::new(g, &comp.edges, &[comp.anchor]);
            let local: Vec<(usize, T)> = list.into_iter().map(|(v, b)| (sub.local_vertex[&v], b)).collect();
            let instance = RootedInstance::new(sub.graph.clone(), sub.local_vertex[&comp.anchor], local);
            ComponentInstance { component: c, sub, instance }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FragmentColoring {
    pub fragment: usize,
    /// Child fragments that host at least one priced component, ascending.
    pub children: Vec<usize>,
    /// Bit `i` set means `children[i]` is black.
    pub mask: u64,
}

#[derive(Debug, Clone)]
pub struct NonSkeletonPlan<T> {
    pub level: usize,
    pub instances: Vec<ComponentInstance<T>>,
    pub solutions: Vec<RootedSolution<T>>,
    pub colorings: Vec<FragmentColoring>,
    pub prices: Vec<T>,
    /// Revenue from the level's buyers.
    pub revenue: T,
}

/// Non-skeleton prices for level `j`, which must not be the last level.
pub fn solve_nonskeleton<T: Scalar>(g: &CactusGraph, d: &Decomposition, sk: &SkeletonLevel, buyers: &[Buyer<T>], levels: &BuyerLevels) -> NonSkeletonPlan<T> {
    let j = sk.level;
    assert!(j + 1 < d.depth(), "no non-skeleton subproblem at the last level");
    let m = g.edge_count();
    let at_level = &levels.buyers_at_level[j];
    let instances = build_rooted_instances(g, sk, buyers, at_level);
    let solutions: Vec<RootedSolution<T>> = instances.iter().map(|ci| solve_rooted(&ci.instance).expect("unconstrained rooted instance")).collect();

    let next = &d.levels[j + 1];
    let mut by_fragment: BTreeMap<usize, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
    for (k, ci) in instances.iter().enumerate() {
        let child = sk.components[ci.component].fragment;
        let parent = next.parent_fragment[child].expect("child fragment has a parent");
        by_fragment.entry(parent).or_default().entry(child).or_default().push(k);
    }

    let mut prices = vec![T::zero(); m];
    let mut colorings = Vec::new();
    let mut revenue = T::zero();
    for (f, children) in by_fragment {
        let own: Vec<usize> = at_level.iter().copied().filter(|&i| levels.fragment_of_buyer[i] == f).collect();
        let child_ids: Vec<usize> = children.keys().copied().collect();
        let blocks: Vec<Vec<(usize, T)>> = children
            .values()
            .map(|ks| {
                ks.iter()
                    .flat_map(|&k| {
                        let ci = &instances[k];
                        ci.sub.global_edge.iter().copied().zip(solutions[k].prices.iter().cloned())
                    })
                    .collect()
            })
            .collect();
        assert!(blocks.len() < 64, "too many child fragments to enumerate");
        let mut best: Option<(T, u64)> = None;
        let mut trial = vec![T::zero(); m];
        for mask in 0..(1u64 << blocks.len()) {
            for (i, block) in blocks.iter().enumerate() {
                let black = mask >> i & 1 == 1;
                for (e, p) in block {
                    trial[*e] = if black { p.clone() } else { T::zero() };
                }
            }
            let r = revenue_restricted(g, &trial, buyers, &own);
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, mask));
            }
        }
        let (r, mask) = best.expect("at least the empty colouring");
        for (i, block) in blocks.iter().enumerate() {
            if mask >> i & 1 == 1 {
                for (e, p) in block {
                    prices[*e] = p.clone();
                }
            }
        }
        revenue = revenue + r;
        colorings.push(FragmentColoring { fragment: f, children: child_ids, mask });
    }
    NonSkeletonPlan { level: j, instances, solutions, colorings, prices, revenue }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{assign_buyers, Level};
    use crate::graph::BcTree;
    use crate::skeleton::build_skeleton;
    use crate::Rational;

    fn r(n: i64) -> Rational {
        Rational::from_int(n)
    }

    /// Star centred at 0 split into one child fragment per leaf edge, plus
    /// a last level of single edges.
    fn star_decomposition(g: &CactusGraph, children: Vec<Vec<usize>>, border: Vec<usize>) -> Decomposition {
        let m = g.edge_count();
        let n = g.vertex_count();
        let mark = |vs: &[usize]| {
            let mut v = vec![false; n];
            vs.iter().for_each(|&x| v[x] = true);
            v
        };
        let mut foe = vec![0; m];
        for (i, f) in children.iter().enumerate() {
            for &e in f {
                foe[e] = i;
            }
        }
        Decomposition {
            k: 2,
            levels: vec![
                Level {
                    fragments: vec![(0..m).collect()],
                    fragment_of_edge: vec![0; m],
                    is_border: mark(&border),
                    border_vertices: border,
                    parent_fragment: vec![None],
                },
                Level {
                    parent_fragment: vec![Some(0); children.len()],
                    fragments: children,
                    fragment_of_edge: foe,
                    border_vertices: (0..n).collect(),
                    is_border: vec![true; n],
                },
            ],
        }
    }

    #[test]
    fn one_component_keeps_rooted_optimum() {
        // path 1-0-2-3, children {0} and {1,2}; border {0}
        let g = CactusGraph::new(4, vec![(0, 1), (0, 2), (2, 3)]).unwrap();
        let d = star_decomposition(&g, vec![vec![0], vec![1, 2]], vec![0]);
        let t = BcTree::build(&g, 0);
        let sk = build_skeleton(&g, &t, &d, 0);
        let buyers = vec![Buyer::new(0, 3, r(5)), Buyer::new(2, 0, r(2))];
        let lv = BuyerLevels { level_of_buyer: vec![0, 0], fragment_of_buyer: vec![0, 0], buyers_at_level: vec![vec![0, 1], vec![]] };
        let plan = solve_nonskeleton(&g, &d, &sk, &buyers, &lv);
        assert_eq!(plan.instances.len(), 1);
        assert_eq!(plan.revenue, r(7));
        assert_eq!(plan.colorings[0].mask, 1);
    }

    #[test]
    fn shared_buyer_prices_one_side() {
        let g = CactusGraph::new(3, vec![(0, 1), (0, 2)]).unwrap();
        let d = star_decomposition(&g, vec![vec![0], vec![1]], vec![0]);
        let t = BcTree::build(&g, 0);
        let sk = build_skeleton(&g, &t, &d, 0);
        let buyers = vec![Buyer::new(1, 2, r(4))];
        let lv = assign_buyers(&g, &d, &buyers);
        assert_eq!(lv.level_of_buyer, vec![0]);
        let inst = build_rooted_instances(&g, &sk, &buyers, &lv.buyers_at_level[0]);
        assert_eq!(inst.len(), 2);
        let plan = solve_nonskeleton(&g, &d, &sk, &buyers, &lv);
        assert_eq!(plan.revenue, r(4));
        assert_eq!(plan.colorings[0].mask, 1);
        assert_eq!(plan.prices, vec![r(4), r(0)]);
    }

    #[test]
    fn skeleton_terminals_give_no_instances() {
        let g = CactusGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let d = star_decomposition(&g, vec![vec![0], vec![1]], vec![0, 1, 2]);
        let t = BcTree::build(&g, 0);
        let sk = build_skeleton(&g, &t, &d, 0);
        let buyers = vec![Buyer::new(0, 2, r(3))];
        assert!(build_rooted_instances(&g, &sk, &buyers, &[0]).is_empty());
    }
}
