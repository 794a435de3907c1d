//! Exact solver for rooted instances: every buyer travels from one common root.
//!
//! The optimum is found by a dynamic program over the block tree. Each vertex
//! is assigned a root distance ("depth") from a small candidate set; bridges
//! pick a non-decreasing depth for their lower endpoint, cycles additionally
//! pick the single edge left off the shortest-path tree and solve the two
//! remaining arcs as chains.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::evaluator::distances_from;
use crate::graph::{BcTree, CactusGraph, Component};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RootedError {
    #[error("depth constraints cannot be met by any price assignment")]
    InfeasibleConstraints,
    #[error("vertex {0} is not in the instance graph")]
    BadVertex(usize),
    #[error("demand {0} has a negative budget")]
    NegativeBudget(usize),
}

#[derive(Debug, Clone)]
pub struct RootedInstance<T> {
    pub graph: CactusGraph,
    pub root: usize,
    /// `(destination, budget)`.
    pub demands: Vec<(usize, T)>,
    /// Required root distance per vertex.
    pub constraints: BTreeMap<usize, T>,
}

impl<T: Scalar> RootedInstance<T> {
    pub fn new(graph: CactusGraph, root: usize, demands: Vec<(usize, T)>) -> Self {
        RootedInstance { graph, root, demands, constraints: BTreeMap::new() }
    }

    pub fn with_constraint(mut self, v: usize, depth: T) -> Self {
        self.constraints.insert(v, depth);
        self
    }

    fn validate(&self) -> Result<(), RootedError> {
        let n = self.graph.vertex_count();
        if self.root >= n {
            return Err(RootedError::BadVertex(self.root));
        }
        for (i, (v, b)) in self.demands.iter().enumerate() {
            if *v >= n {
                return Err(RootedError::BadVertex(*v));
            }
            if *b < T::zero() {
                return Err(RootedError::NegativeBudget(i));
            }
        }
        for (v, e) in &self.constraints {
            if *v >= n {
                return Err(RootedError::BadVertex(*v));
            }
            if *e < T::zero() {
                return Err(RootedError::InfeasibleConstraints);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootedSolution<T> {
    pub prices: Vec<T>,
    pub revenue: T,
    /// Root distance of every vertex under `prices`.
    pub depths: Vec<T>,
    /// The edge left off the shortest-path tree, per cycle, in component order.
    pub unused_edges: Vec<usize>,
}

/// Candidate depth set per vertex: the constraint value for constrained
/// vertices, otherwise zero, every budget and every constraint value.
pub fn candidate_depths<T: Scalar>(inst: &RootedInstance<T>) -> Vec<Vec<T>> {
    let mut common: Vec<T> = std::iter::once(T::zero()).chain(inst.demands.iter().map(|(_, b)| b.clone())).chain(inst.constraints.values().cloned()).collect();
    common.sort();
    common.dedup();
    (0..inst.graph.vertex_count())
        .map(|v| match inst.constraints.get(&v) {
            Some(e) => vec![e.clone()],
            None => common.clone(),
        })
        .collect()
}

/// Σ over demands of their root distance when affordable.
pub fn eval_rooted<T: Scalar>(inst: &RootedInstance<T>, prices: &[T]) -> T {
    let dist = distances_from(&inst.graph, prices, inst.root);
    inst.demands.iter().filter(|(v, b)| dist[*v] <= *b).fold(T::zero(), |acc, (v, _)| acc + dist[*v].clone())
}

type Val<T> = Option<T>;

fn add<T: Scalar>(a: &Val<T>, b: &Val<T>) -> Val<T> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.clone() + y.clone()),
        _ => None,
    }
}

fn better<T: Scalar>(cand: &Val<T>, best: &Val<T>) -> bool {
    match (cand, best) {
        (Some(c), Some(b)) => c > b,
        (Some(_), None) => true,
        _ => false,
    }
}

/// One step of a chain table: value and chosen depth index of the next vertex.
type ChainStep<T> = Vec<(Val<T>, usize)>;

struct Solver<'a, T> {
    inst: &'a RootedInstance<T>,
    tree: BcTree,
    cand: Vec<Vec<T>>,
    /// Budgets at each vertex, sorted descending.
    budgets_at: Vec<Vec<T>>,
    /// Child components grouped by their topmost vertex.
    hanging: Vec<Vec<usize>>,
    /// `dp[c][i]` for depth `cand[topmost(c)][i]`.
    dp: Vec<Vec<Val<T>>>,
    /// Bridge: chosen depth index of the lower vertex. Cycle: chosen unused position.
    choice: Vec<Vec<usize>>,
    blocked: T,
}

impl<'a, T: Scalar> Solver<'a, T> {
    fn new(inst: &'a RootedInstance<T>) -> Self {
        let g = &inst.graph;
        let tree = BcTree::build(g, inst.root);
        let cand = candidate_depths(inst);
        let mut budgets_at = vec![Vec::new(); g.vertex_count()];
        for (v, b) in &inst.demands {
            budgets_at[*v].push(b.clone());
        }
        for list in &mut budgets_at {
            list.sort_by(|a, b| b.cmp(a));
        }
        let mut hanging = vec![Vec::new(); g.vertex_count()];
        for c in 1..tree.components.len() {
            hanging[tree.topmost[c]].push(c);
        }
        let top_depth = cand.iter().flatten().max().cloned().unwrap_or_else(T::zero);
        let count = tree.components.len();
        Solver { inst, tree, cand, budgets_at, hanging, dp: vec![Vec::new(); count], choice: vec![Vec::new(); count], blocked: top_depth + T::one() }
    }

    /// Revenue of demands at `v` plus everything hanging below `v`, at depth index `di`.
    fn vertex_value(&self, v: usize, di: usize) -> Val<T> {
        let d = &self.cand[v][di];
        let buyers = self.budgets_at[v].iter().take_while(|b| *b >= d).count();
        let mut total = Some(d.clone() * T::from_count(buyers));
        for &c in &self.hanging[v] {
            total = add(&total, &self.dp[c][di]);
        }
        total
    }

    /// Chain tables for the path `top = chain[0], chain[1], ...`.
    /// `tables[j][i]` is the best value of `chain[j+1..]` when `chain[j]` sits
    /// at depth index `i`, together with the depth index picked for `chain[j+1]`.
    fn chain_tables(&self, chain: &[usize]) -> Vec<ChainStep<T>> {
        let p = chain.len();
        let mut tables: Vec<ChainStep<T>> = vec![Vec::new(); p.saturating_sub(1)];
        let mut below: Vec<Val<T>> = Vec::new();
        for j in (0..p.saturating_sub(1)).rev() {
            let (u, w) = (chain[j], chain[j + 1]);
            let own: Vec<Val<T>> = (0..self.cand[w].len())
                .map(|wi| {
                    let mut v = self.vertex_value(w, wi);
                    if !below.is_empty() {
                        v = add(&v, &below[wi]);
                    }
                    v
                })
                .collect();
            let table: ChainStep<T> = self.cand[u]
                .iter()
                .map(|d| {
                    let mut best: (Val<T>, usize) = (None, 0);
                    for (wi, dw) in self.cand[w].iter().enumerate() {
                        if dw >= d && better(&own[wi], &best.0) {
                            best = (own[wi].clone(), wi);
                        }
                    }
                    best
                })
                .collect();
            below = table.iter().map(|(v, _)| v.clone()).collect();
            tables[j] = table;
        }
        tables
    }

    fn chain_value(&self, tables: &[ChainStep<T>], di: usize) -> Val<T> {
        match tables.first() {
            Some(t) => t[di].0.clone(),
            None => Some(T::zero()),
        }
    }

    /// The two arcs left after dropping the edge at cycle position `pos`.
    fn arcs(vertices: &[usize], pos: usize) -> (Vec<usize>, Vec<usize>) {
        let k = vertices.len();
        let first: Vec<usize> = vertices[..=pos].to_vec();
        let mut second = vec![vertices[0]];
        second.extend((pos + 1..k).rev().map(|i| vertices[i]));
        (first, second)
    }

    fn fill(&mut self) {
        let order = self.tree.preorder();
        for &c in order.iter().rev() {
            let top = self.tree.topmost[c];
            match self.tree.components[c].clone() {
                Component::Root(_) => {}
                Component::Bridge(e) => {
                    let low = self.inst.graph.other_end(e, top);
                    let tables = self.chain_tables(&[top, low]);
                    self.dp[c] = tables[0].iter().map(|(v, _)| v.clone()).collect();
                    self.choice[c] = tables[0].iter().map(|(_, i)| *i).collect();
                }
                Component::Cycle { vertices, .. } => {
                    let slots = self.cand[top].len();
                    let mut best: Vec<Val<T>> = vec![None; slots];
                    let mut pick = vec![0usize; slots];
                    for pos in 0..vertices.len() {
                        let (a, b) = Self::arcs(&vertices, pos);
                        let ta = self.chain_tables(&a);
                        let tb = self.chain_tables(&b);
                        for di in 0..slots {
                            let v = add(&self.chain_value(&ta, di), &self.chain_value(&tb, di));
                            if better(&v, &best[di]) {
                                best[di] = v;
                                pick[di] = pos;
                            }
                        }
                    }
                    self.dp[c] = best;
                    self.choice[c] = pick;
                }
            }
        }
    }

    fn assign_chain(&self, tables: &[ChainStep<T>], chain: &[usize], start: usize, depth_idx: &mut [usize]) {
        let mut di = start;
        for j in 0..tables.len() {
            di = tables[j][di].1;
            depth_idx[chain[j + 1]] = di;
        }
    }

    fn reconstruct(&self) -> (Vec<T>, Vec<T>, Vec<usize>) {
        let g = &self.inst.graph;
        let mut depth_idx = vec![0usize; g.vertex_count()];
        let mut prices = vec![T::zero(); g.edge_count()];
        let mut unused = Vec::new();
        for c in self.tree.preorder() {
            let top = self.tree.topmost[c];
            let di = depth_idx[top];
            match &self.tree.components[c] {
                Component::Root(_) => {}
                Component::Bridge(e) => {
                    let low = g.other_end(*e, top);
                    depth_idx[low] = self.choice[c][di];
                }
                Component::Cycle { vertices, edges } => {
                    let pos = self.choice[c][di];
                    let (a, b) = Self::arcs(vertices, pos);
                    self.assign_chain(&self.chain_tables(&a), &a, di, &mut depth_idx);
                    self.assign_chain(&self.chain_tables(&b), &b, di, &mut depth_idx);
                    unused.push(edges[pos]);
                }
            }
        }
        let depth: Vec<T> = (0..g.vertex_count()).map(|v| self.cand[v][depth_idx[v]].clone()).collect();
        for (e, &(a, b)) in g.edges().iter().enumerate() {
            prices[e] = if depth[a] >= depth[b] { depth[a].clone() - depth[b].clone() } else { depth[b].clone() - depth[a].clone() };
        }
        for &e in &unused {
            prices[e] = self.blocked.clone();
        }
        (prices, depth, unused)
    }
}

pub fn solve_rooted<T: Scalar>(inst: &RootedInstance<T>) -> Result<RootedSolution<T>, RootedError> {
    inst.validate()?;
    if let Some(e) = inst.constraints.get(&inst.root) {
        if !e.is_zero() {
            return Err(RootedError::InfeasibleConstraints);
        }
    }
    let mut solver = Solver::new(inst);
    solver.fill();
    // the root sits at depth 0, which is index 0 of its candidate list
    let root_idx = solver.cand[inst.root].iter().position(|d| d.is_zero()).expect("zero is a candidate");
    debug_assert_eq!(root_idx, 0);
    let mut total = Some(T::zero());
    for &c in &solver.tree.children[0] {
        total = add(&total, &solver.dp[c][root_idx]);
    }
    let revenue = total.ok_or(RootedError::InfeasibleConstraints)?;
    let (prices, depths, unused_edges) = solver.reconstruct();
    Ok(RootedSolution { prices, revenue, depths, unused_edges })
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
    fn candidate_sets() {
        let g = triangle();
        let inst = RootedInstance::new(g, 0, vec![(1, r(2)), (2, r(3))]);
        assert_eq!(candidate_depths(&inst)[1], vec![r(0), r(2), r(3)]);
        let inst = inst.with_constraint(2, r(5));
        let c = candidate_depths(&inst);
        assert_eq!(c[2], vec![r(5)]);
        assert_eq!(c[1], vec![r(0), r(2), r(3), r(5)]);
        let empty = RootedInstance::<Rational>::new(triangle(), 0, vec![]);
        assert!(candidate_depths(&empty).iter().all(|d| d == &vec![r(0)]));
    }

    #[test]
    fn triangle_two_demands() {
        let inst = RootedInstance::new(triangle(), 0, vec![(1, r(1)), (1, r(3))]);
        let sol = solve_rooted(&inst).unwrap();
        assert_eq!(sol.revenue, r(3));
        assert_eq!(eval_rooted(&inst, &sol.prices), r(3));
    }

    #[test]
    fn square_collects_all_budgets() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let inst = RootedInstance::new(g, 0, vec![(1, r(2)), (2, r(4)), (3, r(3))]);
        let sol = solve_rooted(&inst).unwrap();
        assert_eq!(sol.revenue, r(9));
        // dropping (1,2) or (2,3) both reach every budget; the first in cycle order wins
        assert_eq!(sol.unused_edges, vec![1]);
        assert_eq!(eval_rooted(&inst, &sol.prices), r(9));
    }

    #[test]
    fn path_shares_depth() {
        let g = CactusGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let inst = RootedInstance::new(g, 0, vec![(1, r(3)), (2, r(2))]);
        let sol = solve_rooted(&inst).unwrap();
        assert_eq!(sol.revenue, r(4));
        assert_eq!(sol.depths, vec![r(0), r(2), r(2)]);
    }

    #[test]
    fn constraints_are_respected() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let inst = RootedInstance::new(g, 0, vec![(1, r(2)), (3, r(3))]).with_constraint(2, r(7));
        let sol = solve_rooted(&inst).unwrap();
        let dist = distances_from(&inst.graph, &sol.prices, 0);
        assert_eq!(dist[2], r(7));
        assert_eq!(sol.revenue, r(5));
        assert_eq!(eval_rooted(&inst, &sol.prices), r(5));
    }

    #[test]
    fn nonzero_root_constraint_is_infeasible() {
        let inst = RootedInstance::new(triangle(), 0, vec![(1, r(2))]).with_constraint(0, r(1));
        assert_eq!(solve_rooted(&inst).unwrap_err(), RootedError::InfeasibleConstraints);
    }

    #[test]
    fn zero_prices_give_zero() {
        let inst = RootedInstance::new(triangle(), 0, vec![(1, r(2))]);
        assert_eq!(eval_rooted(&inst, &[r(0), r(0), r(0)]), r(0));
        assert_eq!(eval_rooted(&inst, &[r(3), r(9), r(9)]), r(0));
        assert_eq!(eval_rooted(&inst, &[r(2), r(9), r(9)]), r(2));
    }
}
