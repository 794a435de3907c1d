//! Envy-free allocation: every buyer takes a cheapest path iff it fits the budget.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::graph::{Buyer, CactusGraph};
use crate::scalar::Scalar;

/// Shortest-path costs from `src` under `prices`.
pub fn distances_from<T: Scalar>(g: &CactusGraph, prices: &[T], src: usize) -> Vec<T> {
    let n = g.vertex_count();
    let mut dist: Vec<Option<T>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = Some(T::zero());
    heap.push(Reverse((T::zero(), src)));
    while let Some(Reverse((d, v))) = heap.pop() {
        if done[v] {
            continue;
        }
        done[v] = true;
        for &(w, e) in g.neighbors(v) {
            if done[w] {
                continue;
            }
            let nd = d.clone() + prices[e].clone();
            if dist[w].as_ref().is_none_or(|cur| nd < *cur) {
                dist[w] = Some(nd.clone());
                heap.push(Reverse((nd, w)));
            }
        }
    }
    dist.into_iter().map(|d| d.expect("graph is connected")).collect()
}

pub fn distance<T: Scalar>(g: &CactusGraph, prices: &[T], u: usize, v: usize) -> T {
    distances_from(g, prices, u).swap_remove(v)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Purchase<T> {
    Bought { path: Vec<usize>, paid: T },
    Nothing,
}

impl<T: Scalar> Purchase<T> {
    pub fn paid(&self) -> T {
        match self {
            Purchase::Bought { paid, .. } => paid.clone(),
            Purchase::Nothing => T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation<T> {
    pub purchases: Vec<Purchase<T>>,
    pub revenue: T,
}

/// Full allocation with recorded paths.
///
/// Among cheapest paths the one with fewest edges is taken, and among those
/// the lexicographically smallest edge-id sequence.
pub fn allocate<T: Scalar>(g: &CactusGraph, prices: &[T], buyers: &[Buyer<T>]) -> Allocation<T> {
    let mut purchases = Vec::with_capacity(buyers.len());
    let mut revenue = T::zero();
    for b in buyers {
        if b.s == b.t {
            purchases.push(Purchase::Bought { path: Vec::new(), paid: T::zero() });
            continue;
        }
        let dist_t = distances_from(g, prices, b.t);
        if dist_t[b.s] > b.budget {
            purchases.push(Purchase::Nothing);
            continue;
        }
        let path = canonical_path(g, prices, &dist_t, b.s, b.t);
        revenue = revenue + dist_t[b.s].clone();
        purchases.push(Purchase::Bought { path, paid: dist_t[b.s].clone() });
    }
    Allocation { purchases, revenue }
}

fn canonical_path<T: Scalar>(g: &CactusGraph, prices: &[T], dist_t: &[T], s: usize, t: usize) -> Vec<usize> {
    let tight = |x: usize, y: usize, e: usize| dist_t[x] == prices[e].clone() + dist_t[y].clone();
    let mut hops = vec![usize::MAX; g.vertex_count()];
    hops[t] = 0;
    let mut queue = VecDeque::from([t]);
    while let Some(y) = queue.pop_front() {
        for &(x, e) in g.neighbors(y) {
            if hops[x] == usize::MAX && tight(x, y, e) {
                hops[x] = hops[y] + 1;
                queue.push_back(x);
            }
        }
    }
    let mut path = Vec::new();
    let mut x = s;
    while x != t {
        let (_, e, y) = g
            .neighbors(x)
            .iter()
            .filter(|&&(y, e)| hops[y] != usize::MAX && hops[y] + 1 == hops[x] && tight(x, y, e))
            .map(|&(y, e)| (e, e, y))
            .min()
            .expect("tight edge toward target");
        path.push(e);
        x = y;
    }
    path
}

/// Total revenue without recording paths.
pub fn revenue<T: Scalar>(g: &CactusGraph, prices: &[T], buyers: &[Buyer<T>]) -> T {
    let all: Vec<usize> = (0..buyers.len()).collect();
    revenue_restricted(g, prices, buyers, &all)
}

/// Revenue collected from the buyers listed in `subset`.
pub fn revenue_restricted<T: Scalar>(g: &CactusGraph, prices: &[T], buyers: &[Buyer<T>], subset: &[usize]) -> T {
    let mut order: Vec<usize> = subset.iter().copied().filter(|&i| buyers[i].s != buyers[i].t).collect();
    order.sort_by_key(|&i| buyers[i].s);
    let mut total = T::zero();
    let mut cached: Option<(usize, Vec<T>)> = None;
    for i in order {
        let b = &buyers[i];
        if cached.as_ref().is_none_or(|(src, _)| *src != b.s) {
            cached = Some((b.s, distances_from(g, prices, b.s)));
        }
        let d = &cached.as_ref().unwrap().1[b.t];
        if *d <= b.budget {
            total = total + d.clone();
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn r(n: i64) -> Rational {
        Rational::from_int(n)
    }

    fn triangle() -> CactusGraph {
        CactusGraph::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn distances() {
        let g = triangle();
        assert_eq!(distance(&g, &[r(0), r(0), r(0)], 0, 1), r(0));
        assert_eq!(distance(&g, &[r(5), r(0), r(0)], 0, 1), r(0));
        let path = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(distance(&path, &[r(1), r(2), r(4)], 0, 3), r(7));
    }

    #[test]
    fn buys_direct_edge_when_affordable() {
        let g = triangle();
        let p = [r(5), r(6), r(6)];
        let a = allocate(&g, &p, &[Buyer::new(0, 1, r(5))]);
        assert_eq!(a.purchases[0], Purchase::Bought { path: vec![0], paid: r(5) });
        let a = allocate(&g, &p, &[Buyer::new(0, 1, r(4))]);
        assert_eq!(a.purchases[0], Purchase::Nothing);
        assert_eq!(a.revenue, r(0));
    }

    #[test]
    fn unlimited_supply() {
        let g = CactusGraph::new(2, vec![(0, 1)]).unwrap();
        let buyers = [Buyer::new(0, 1, r(3)), Buyer::new(1, 0, r(3))];
        assert_eq!(allocate(&g, &[r(3)], &buyers).revenue, r(6));
    }

    #[test]
    fn tie_prefers_fewer_edges_then_smaller_ids() {
        let g = triangle();
        let p = [r(2), r(1), r(1)];
        let a = allocate(&g, &p, &[Buyer::new(0, 1, r(9))]);
        assert_eq!(a.purchases[0], Purchase::Bought { path: vec![0], paid: r(2) });
        let zero = [r(0), r(0), r(0)];
        let a = allocate(&g, &zero, &[Buyer::new(1, 0, r(1))]);
        assert_eq!(a.purchases[0], Purchase::Bought { path: vec![0], paid: r(0) });
    }

    #[test]
    fn same_terminals_buy_empty_path() {
        let g = triangle();
        let a = allocate(&g, &[r(1), r(1), r(1)], &[Buyer::new(2, 2, r(4))]);
        assert_eq!(a.purchases[0], Purchase::Bought { path: vec![], paid: r(0) });
    }

    #[test]
    fn restricted_revenue_adds_over_disjoint_subsets() {
        let g = triangle();
        let p = [r(1), r(2), r(3)];
        let buyers = [Buyer::new(0, 1, r(5)), Buyer::new(1, 2, r(1)), Buyer::new(0, 2, r(3))];
        let all = revenue(&g, &p, &buyers);
        assert_eq!(all, allocate(&g, &p, &buyers).revenue);
        let a = revenue_restricted(&g, &p, &buyers, &[0]);
        let b = revenue_restricted(&g, &p, &buyers, &[1, 2]);
        assert_eq!(a + b, all);
        assert_eq!(revenue_restricted(&g, &p, &buyers, &[]), r(0));
    }
}
