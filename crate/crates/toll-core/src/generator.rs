//! Seeded random cacti and buyers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Buyer, CactusGraph, CactusInstance};
use crate::rooted::RootedInstance;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub edges: usize,
    pub buyers: usize,
    pub max_budget: u64,
    /// Probability of attaching a cycle instead of a pendant edge.
    pub cycle_prob: f64,
    pub seed: u64,
}

/// Grows a cactus with exactly `m` edges: at a random existing vertex attach
/// either a pendant edge or a cycle of length 3..=6 (shortened to fit).
pub fn random_cactus<R: Rng>(rng: &mut R, m: usize, cycle_prob: f64) -> CactusGraph {
    let mut n = 1usize;
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let at = rng.gen_range(0..n);
        let left = m - edges.len();
        let len = if left >= 3 && rng.gen_bool(cycle_prob.clamp(0.0, 1.0)) { rng.gen_range(3..=6).min(left) } else { 1 };
        if len == 1 {
            edges.push((at, n));
            n += 1;
            continue;
        }
        let mut prev = at;
        for _ in 0..len - 1 {
            edges.push((prev, n));
            prev = n;
            n += 1;
        }
        edges.push((prev, at));
    }
    CactusGraph::new(n, edges).expect("generator builds cacti")
}

pub fn random_buyers<T: Scalar, R: Rng>(rng: &mut R, g: &CactusGraph, count: usize, max_budget: u64) -> Vec<Buyer<T>> {
    let n = g.vertex_count();
    if n < 2 {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let s = rng.gen_range(0..n);
            let mut t = rng.gen_range(0..n - 1);
            if t >= s {
                t += 1;
            }
            let b = rng.gen_range(1..=max_budget.max(1));
            Buyer::new(s, t, T::from_u64(b).expect("budget fits"))
        })
        .collect()
}

pub fn random_instance<T: Scalar>(p: &GenParams) -> CactusInstance<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let g = random_cactus(&mut rng, p.edges, p.cycle_prob);
    let buyers = random_buyers(&mut rng, &g, p.buyers, p.max_budget);
    CactusInstance::new(g, buyers).expect("generated buyers are valid")
}

/// Random rooted instance rooted at vertex 0 with up to `max_demands`
/// demands and integer budgets in `0..=max_budget`.
pub fn random_rooted<T: Scalar>(seed: u64, max_edges: usize, max_demands: usize, max_budget: u64) -> RootedInstance<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=max_edges.max(1));
    let q = rng.gen_range(0.0..1.0);
    let g = random_cactus(&mut rng, m, q);
    let k = rng.gen_range(0..=max_demands);
    let demands = (0..k)
        .map(|_| {
            let v = rng.gen_range(0..g.vertex_count());
            (v, T::from_u64(rng.gen_range(0..=max_budget)).expect("budget fits"))
        })
        .collect();
    RootedInstance::new(g, 0, demands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{BcTree, Component, Rational};

    #[test]
    fn tree_when_no_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_cactus(&mut rng, 20, 0.0);
        assert_eq!(g.vertex_count(), 21);
        let t = BcTree::build(&g, 0);
        assert!(t.components.iter().all(|c| !matches!(c, Component::Cycle { .. })));
    }

    #[test]
    fn exact_edge_count_and_determinism() {
        for m in 1..40 {
            let p = GenParams { edges: m, buyers: 3, max_budget: 5, cycle_prob: 0.7, seed: m as u64 };
            let a = random_instance::<Rational>(&p);
            let b = random_instance::<Rational>(&p);
            assert_eq!(a.graph.edge_count(), m);
            assert_eq!(a.graph, b.graph);
            assert_eq!(a.buyers, b.buyers);
            assert!(a.buyers.iter().all(|x| x.s != x.t));
        }
    }

    #[test]
    fn single_edge() {
        let p = GenParams { edges: 1, buyers: 1, max_budget: 3, cycle_prob: 1.0, seed: 9 };
        let inst = random_instance::<Rational>(&p);
        assert_eq!(inst.graph.edges(), &[(0, 1)]);
    }
}
