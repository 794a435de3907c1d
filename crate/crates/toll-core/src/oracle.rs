//! Brute-force references used to check the solvers.
//!
//! [`oracle_rooted`] is exact for rooted instances. [`oracle_grid`] maximizes
//! revenue over price vectors drawn from a finite grid, which is only a lower
//! bound on the true optimum of a general instance.

use std::collections::VecDeque;

use thiserror::Error;

use crate::graph::{BcTree, Buyer, CactusGraph, Component, Dsu};
use crate::rooted::{candidate_depths, eval_rooted, RootedInstance};
use crate::scalar::{integer_scale, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("search space exceeds the guard of {guard} (needed more than {needed})")]
    TooLarge { needed: u128, guard: u128 },
    #[error("rooted instance has an infeasible root constraint")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOutcome<T> {
    pub revenue: T,
    pub prices: Vec<T>,
}

/// Exact optimum of a rooted instance.
///
/// Enumerates every assignment of candidate depths to vertices, keeps those
/// realizable as root distances (each vertex reachable from the root along
/// edges whose depth never decreases) and prices each edge by the depth gap
/// of its endpoints. `guard` caps the number of labelings.
pub fn oracle_rooted<T: Scalar>(inst: &RootedInstance<T>, guard: u128) -> Result<OracleOutcome<T>, OracleError> {
    let g = &inst.graph;
    let n = g.vertex_count();
    let mut cand = candidate_depths(inst);
    match inst.constraints.get(&inst.root) {
        Some(e) if !e.is_zero() => return Err(OracleError::Infeasible),
        _ => cand[inst.root] = vec![T::zero()],
    }
    let space = cand.iter().fold(1u128, |acc, c| acc.saturating_mul(c.len() as u128));
    if space > guard {
        return Err(OracleError::TooLarge { needed: space, guard });
    }
    let mut all: Vec<T> = cand.iter().flatten().cloned().collect();
    all.sort();
    all.dedup();
    let rank: Vec<Vec<usize>> = cand.iter().map(|c| c.iter().map(|d| all.binary_search(d).unwrap()).collect()).collect();
    let gain: Vec<Vec<T>> = (0..n)
        .map(|v| {
            cand[v]
                .iter()
                .map(|d| {
                    let count = inst.demands.iter().filter(|(w, b)| *w == v && b >= d).count();
                    d.clone() * T::from_count(count)
                })
                .collect()
        })
        .collect();

    let mut label = vec![0usize; n];
    let mut best: Option<(T, Vec<usize>)> = None;
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    loop {
        seen.iter_mut().for_each(|s| *s = false);
        seen[inst.root] = true;
        queue.push_back(inst.root);
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in g.neighbors(v) {
                if !seen[w] && rank[w][label[w]] >= rank[v][label[v]] {
                    seen[w] = true;
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if reached == n {
            let value = (0..n).fold(T::zero(), |acc, v| acc + gain[v][label[v]].clone());
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                best = Some((value, label.clone()));
            }
        }
        let mut i = 0;
        while i < n {
            label[i] += 1;
            if label[i] < cand[i].len() {
                break;
            }
            label[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
    }
    let (revenue, label) = best.expect("the all-zero labeling is realizable");
    let depth: Vec<T> = (0..n).map(|v| cand[v][label[v]].clone()).collect();
    let prices: Vec<T> =
        g.edges().iter().map(|&(a, b)| if depth[a] >= depth[b] { depth[a].clone() - depth[b].clone() } else { depth[b].clone() - depth[a].clone() }).collect();
    debug_assert_eq!(eval_rooted(inst, &prices), revenue);
    Ok(OracleOutcome { revenue, prices })
}

/// Candidate prices per edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec<T> {
    pub per_edge: Vec<Vec<T>>,
}

impl<T: Scalar> GridSpec<T> {
    pub fn uniform(m: usize, values: &[T]) -> Self {
        let mut v = values.to_vec();
        v.push(T::zero());
        v.retain(|x| *x >= T::zero());
        v.sort();
        v.dedup();
        GridSpec { per_edge: vec![v; m] }
    }

    /// Zero, every budget, every half budget and every nonnegative budget difference.
    pub fn default_for(m: usize, buyers: &[Buyer<T>]) -> Self {
        let budgets: Vec<T> = buyers.iter().map(|b| b.budget.clone()).collect();
        let mut values = budgets.clone();
        values.extend(budgets.iter().map(|b| b.half()));
        for a in &budgets {
            for b in &budgets {
                if a > b {
                    values.push(a.clone() - b.clone());
                }
            }
        }
        Self::uniform(m, &values)
    }

    /// Zero and every budget.
    pub fn budgets_for(m: usize, buyers: &[Buyer<T>]) -> Self {
        let values: Vec<T> = buyers.iter().map(|b| b.budget.clone()).collect();
        Self::uniform(m, &values)
    }
}

/// Cost structure of all simple paths of one buyer: bridges are paid in full,
/// cycles through their cheaper arc.
#[derive(Debug, Clone)]
enum Hop {
    Edge(usize),
    Cycle(Vec<usize>, Vec<usize>),
}

fn route(g: &CactusGraph, s: usize, t: usize) -> Vec<Hop> {
    let tree = BcTree::build(g, s);
    let mut hops = Vec::new();
    let mut exit = t;
    let mut c = tree.main_component[t];
    while c != 0 {
        match &tree.components[c] {
            Component::Bridge(e) => hops.push(Hop::Edge(*e)),
            Component::Cycle { edges, vertices } => {
                let at = vertices.iter().position(|&v| v == exit).expect("exit vertex on cycle");
                hops.push(Hop::Cycle(edges[..at].to_vec(), edges[at..].to_vec()));
            }
            Component::Root(_) => unreachable!(),
        }
        exit = tree.topmost[c];
        c = tree.parent[c].unwrap();
    }
    hops
}

/// A buyer's route over merged edge groups.
#[derive(Debug, Clone)]
enum GroupHop {
    One(usize),
    Cycle(Vec<usize>, Vec<usize>),
}

struct GridSearch<N> {
    buyers: Vec<(N, Vec<GroupHop>)>,
    values: Vec<Vec<N>>,
    order: Vec<usize>,
    choice: Vec<Option<usize>>,
    best: N,
    best_choice: Vec<usize>,
    nodes: u128,
    guard: u128,
}

impl<N: Scalar> GridSearch<N> {
    fn price(&self, g: usize, upper: bool) -> N {
        match self.choice[g] {
            Some(i) => self.values[g][i].clone(),
            None if upper => self.values[g].last().unwrap().clone(),
            None => self.values[g][0].clone(),
        }
    }

    fn cost(&self, hops: &[GroupHop], upper: bool) -> N {
        let mut total = N::zero();
        for h in hops {
            match h {
                GroupHop::One(g) => total = total + self.price(*g, upper),
                GroupHop::Cycle(a, b) => {
                    let x = a.iter().fold(N::zero(), |acc, g| acc + self.price(*g, upper));
                    let y = b.iter().fold(N::zero(), |acc, g| acc + self.price(*g, upper));
                    total = total + x.min(y);
                }
            }
        }
        total
    }

    fn bound(&self) -> N {
        let mut total = N::zero();
        for (budget, hops) in &self.buyers {
            if self.cost(hops, false) > *budget {
                continue;
            }
            total = total + self.cost(hops, true).min(budget.clone());
        }
        total
    }

    /// Revenue with unassigned groups at their lowest value.
    fn exact(&self) -> N {
        let mut total = N::zero();
        for (budget, hops) in &self.buyers {
            let c = self.cost(hops, false);
            if c <= *budget {
                total = total + c;
            }
        }
        total
    }

    fn record(&mut self) {
        let v = self.exact();
        if v > self.best {
            self.best = v;
            self.best_choice = self.choice.iter().map(|c| c.unwrap_or(0)).collect();
        }
    }

    /// Coordinate ascent from the all-lowest point, to seed the incumbent.
    fn warm_start(&mut self) {
        for &g in &self.order {
            self.choice[g] = Some(0);
        }
        self.record();
        loop {
            let mut improved = false;
            for k in 0..self.order.len() {
                let g = self.order[k];
                let keep = self.choice[g];
                let mut best_here = (self.exact(), keep);
                for i in 0..self.values[g].len() {
                    self.choice[g] = Some(i);
                    let v = self.exact();
                    if v > best_here.0 {
                        best_here = (v, Some(i));
                    }
                }
                self.choice[g] = best_here.1;
                if best_here.1 != keep {
                    improved = true;
                }
            }
            self.record();
            if !improved {
                break;
            }
        }
        for &g in &self.order {
            self.choice[g] = None;
        }
    }

    fn search(&mut self, depth: usize) -> Result<(), OracleError> {
        self.nodes += 1;
        if self.nodes > self.guard {
            return Err(OracleError::TooLarge { needed: self.nodes, guard: self.guard });
        }
        if depth == self.order.len() {
            self.record();
            return Ok(());
        }
        if self.bound() <= self.best {
            return Ok(());
        }
        let g = self.order[depth];
        for i in (0..self.values[g].len()).rev() {
            self.choice[g] = Some(i);
            self.search(depth + 1)?;
        }
        self.choice[g] = None;
        Ok(())
    }
}

/// Runs the search over `N`, returning the best value and choice per group.
fn run_search<N: Scalar>(buyers: Vec<(N, Vec<GroupHop>)>, values: Vec<Vec<N>>, guard: u128) -> Result<(N, Vec<usize>, u128), OracleError> {
    let groups = values.len();
    // buyers with the fewest unplaced groups first, so their cost is fixed early
    let mut order = Vec::with_capacity(groups);
    let mut placed = vec![false; groups];
    let mut done = vec![false; buyers.len()];
    let group_list = |hops: &[GroupHop]| -> Vec<usize> {
        hops.iter()
            .flat_map(|h| match h {
                GroupHop::One(g) => vec![*g],
                GroupHop::Cycle(a, b) => a.iter().chain(b.iter()).copied().collect(),
            })
            .collect()
    };
    let lists: Vec<Vec<usize>> = buyers.iter().map(|(_, h)| group_list(h)).collect();
    while let Some(i) = (0..buyers.len()).filter(|&i| !done[i]).min_by_key(|&i| (lists[i].iter().filter(|&&g| !placed[g]).count(), i)) {
        done[i] = true;
        for &g in &lists[i] {
            if !placed[g] {
                placed[g] = true;
                order.push(g);
            }
        }
    }
    let mut search = GridSearch { buyers, values, order, choice: vec![None; groups], best: N::zero(), best_choice: vec![0; groups], nodes: 0, guard };
    search.warm_start();
    search.search(0)?;
    Ok((search.best, search.best_choice, search.nodes))
}

/// Best revenue over price vectors drawn from `grid`, with `zero_edges`
/// forced to 0.
///
/// The search is exhaustive in effect: prices of edges no buyer can use are
/// irrelevant, edges used identically by every buyer only matter through
/// their sum, prices above every relevant budget are interchangeable, buyers
/// sharing no edge are solved independently, and branches whose revenue
/// upper bound cannot beat the incumbent are cut. `guard` caps the number of
/// search nodes.
pub fn oracle_grid<T: Scalar>(
    g: &CactusGraph,
    buyers: &[Buyer<T>],
    grid: &GridSpec<T>,
    zero_edges: &[usize],
    guard: u128,
) -> Result<OracleOutcome<T>, OracleError> {
    let m = g.edge_count();
    let mut forced = vec![false; m];
    for &e in zero_edges {
        forced[e] = true;
    }
    let active: Vec<&Buyer<T>> = buyers.iter().filter(|b| b.is_active()).collect();
    let routes: Vec<Vec<Hop>> = active.iter().map(|b| route(g, b.s, b.t)).collect();

    // (buyer, hop, side) occurrences per edge
    let mut signature: Vec<Vec<(usize, usize, u8)>> = vec![Vec::new(); m];
    let mut cap: Vec<Option<T>> = vec![None; m];
    for (i, hops) in routes.iter().enumerate() {
        let mut touch = |e: usize, h: usize, side: u8| {
            if forced[e] {
                return;
            }
            signature[e].push((i, h, side));
            if cap[e].as_ref().is_none_or(|c| active[i].budget > *c) {
                cap[e] = Some(active[i].budget.clone());
            }
        };
        for (h, hop) in hops.iter().enumerate() {
            match hop {
                Hop::Edge(e) => touch(*e, h, 0),
                Hop::Cycle(a, b) => {
                    a.iter().for_each(|&e| touch(e, h, 1));
                    b.iter().for_each(|&e| touch(e, h, 2));
                }
            }
        }
    }
    let mut group_of_sig: std::collections::BTreeMap<Vec<(usize, usize, u8)>, usize> = Default::default();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut group_of_edge: Vec<Option<usize>> = vec![None; m];
    for e in 0..m {
        if signature[e].is_empty() {
            continue;
        }
        let id = *group_of_sig.entry(signature[e].clone()).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[id].push(e);
        group_of_edge[e] = Some(id);
    }

    // capped sumsets, each sum with one witness split over the member edges
    let capped = |vals: &[T], c: &T| -> Vec<T> {
        let mut v: Vec<T> = vals.iter().filter(|x| *x <= c).cloned().collect();
        if let Some(above) = vals.iter().filter(|x| *x > c).min() {
            v.push(above.clone());
        }
        if v.is_empty() {
            v.push(T::zero());
        }
        v.sort();
        v.dedup();
        v
    };
    let mut group_values: Vec<Vec<T>> = Vec::new();
    let mut witness: Vec<Vec<Vec<T>>> = Vec::new();
    for mem in &members {
        let c = cap[mem[0]].clone().unwrap();
        let mut sums: std::collections::BTreeMap<T, Vec<T>> = Default::default();
        sums.insert(T::zero(), Vec::new());
        for &e in mem {
            let vals = capped(&grid.per_edge[e], &c);
            let mut next: std::collections::BTreeMap<T, Vec<T>> = Default::default();
            for (s, w) in &sums {
                for v in &vals {
                    let t = s.clone() + v.clone();
                    next.entry(t).or_insert_with(|| {
                        let mut w2 = w.clone();
                        w2.push(v.clone());
                        w2
                    });
                }
            }
            let keys: Vec<T> = next.keys().cloned().collect();
            let keep = capped(&keys, &c);
            next.retain(|k, _| keep.contains(k));
            sums = next;
        }
        group_values.push(sums.keys().cloned().collect());
        witness.push(sums.into_values().collect());
    }

    let group_hops: Vec<Vec<GroupHop>> = routes
        .iter()
        .map(|hops| {
            let ids = |es: &[usize]| -> Vec<usize> {
                let mut v: Vec<usize> = es.iter().filter_map(|&e| group_of_edge[e]).collect();
                v.sort_unstable();
                v.dedup();
                v
            };
            hops.iter()
                .filter_map(|h| match h {
                    Hop::Edge(e) => group_of_edge[*e].map(GroupHop::One),
                    Hop::Cycle(a, b) => Some(GroupHop::Cycle(ids(a), ids(b))),
                })
                .collect()
        })
        .collect();

    // independent clusters of buyers
    let groups = members.len();
    let mut dsu = Dsu::new(groups + active.len());
    for (i, hops) in group_hops.iter().enumerate() {
        for h in hops {
            match h {
                GroupHop::One(x) => {
                    dsu.union(groups + i, *x);
                }
                GroupHop::Cycle(a, b) => {
                    for x in a.iter().chain(b.iter()) {
                        dsu.union(groups + i, *x);
                    }
                }
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..active.len() {
        clusters.entry(dsu.find(groups + i)).or_default().push(i);
    }

    let mut prices = vec![T::zero(); m];
    let mut revenue = T::zero();
    let mut nodes = 0u128;
    for (_, who) in clusters {
        let mut local: Vec<usize> = Vec::new();
        for x in 0..groups {
            if who.iter().any(|&i| dsu.find(groups + i) == dsu.find(x)) {
                local.push(x);
            }
        }
        let index: std::collections::HashMap<usize, usize> = local.iter().enumerate().map(|(k, &x)| (x, k)).collect();
        let remap = |hops: &[GroupHop]| -> Vec<GroupHop> {
            hops.iter()
                .map(|h| match h {
                    GroupHop::One(x) => GroupHop::One(index[x]),
                    GroupHop::Cycle(a, b) => GroupHop::Cycle(a.iter().map(|x| index[x]).collect(), b.iter().map(|x| index[x]).collect()),
                })
                .collect()
        };
        let values: Vec<Vec<T>> = local.iter().map(|&x| group_values[x].clone()).collect();
        let mut all: Vec<T> = values.iter().flatten().cloned().collect();
        all.extend(who.iter().map(|&i| active[i].budget.clone()));
        let left = guard.saturating_sub(nodes);
        let (value, choice, used) = match integer_scale(&all, 4096) {
            Some(s) => {
                let scale = |v: &T| (v.clone() * T::from_int(s)).to_i64().unwrap();
                let bs = who.iter().map(|&i| (scale(&active[i].budget), remap(&group_hops[i]))).collect();
                let vs = values.iter().map(|v| v.iter().map(scale).collect()).collect();
                let (val, choice, used) = run_search::<i64>(bs, vs, left)?;
                (T::from_int(val) / T::from_int(s), choice, used)
            }
            None => {
                let bs = who.iter().map(|&i| (active[i].budget.clone(), remap(&group_hops[i]))).collect();
                run_search::<T>(bs, values, left)?
            }
        };
        nodes += used;
        revenue = revenue + value;
        for (k, &x) in local.iter().enumerate() {
            for (e, p) in members[x].iter().zip(witness[x][choice[k]].iter()) {
                prices[*e] = p.clone();
            }
        }
    }
    Ok(OracleOutcome { revenue, prices })
}

/// Plain odometer over the full grid product; reference for [`oracle_grid`].
pub fn oracle_grid_exhaustive<T: Scalar>(
    g: &CactusGraph,
    buyers: &[Buyer<T>],
    grid: &GridSpec<T>,
    zero_edges: &[usize],
    guard: u128,
) -> Result<OracleOutcome<T>, OracleError> {
    let m = g.edge_count();
    let values: Vec<Vec<T>> = (0..m).map(|e| if zero_edges.contains(&e) { vec![T::zero()] } else { grid.per_edge[e].clone() }).collect();
    let space = values.iter().fold(1u128, |acc, v| acc.saturating_mul(v.len() as u128));
    if space > guard {
        return Err(OracleError::TooLarge { needed: space, guard });
    }
    let mut idx = vec![0usize; m];
    let mut best = OracleOutcome { revenue: T::zero(), prices: vec![T::zero(); m] };
    loop {
        let prices: Vec<T> = (0..m).map(|e| values[e][idx[e]].clone()).collect();
        let r = crate::evaluator::revenue(g, &prices, buyers);
        if r > best.revenue {
            best = OracleOutcome { revenue: r, prices };
        }
        let mut i = 0;
        while i < m {
            idx[i] += 1;
            if idx[i] < values[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == m {
            return Ok(best);
        }
    }
}
