//! Pricing of the skeleton part of a level.
//!
//! Segment lengths are restricted to a geometric grid `P`. For every fragment
//! and every pricing strategy (a grid cost per inner segment and a length
//! interval per outer extension) prices implementing the strategy are found
//! by trying four pricing options per segment. A tree recursion over the
//! cycles shared between fragments then picks a valid combination of
//! strategies with the largest total score.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use crate::decomposition::{BuyerLevels, Decomposition};
use crate::evaluator::{allocate, revenue_restricted, Purchase};
use crate::graph::{simple_path_edges, BcTree, Buyer, CactusGraph, Component, Subgraph};
use crate::rooted::{solve_rooted, RootedInstance};
use crate::scalar::{from_i128, integer_scale, Scalar};
use crate::skeleton::{fragment_skeleton, split_cycles, FragmentSkeleton, OuterExtension, Segment, Segments, SkeletonLevel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SkeletonError {
    #[error("every budget at this level is zero")]
    AllBudgetsZero,
    #[error("fragment {fragment} has {count} pricing strategies, above the limit of {limit}")]
    TooManyStrategies { fragment: usize, count: u128, limit: u128 },
}

/// Grids of admissible segment costs (`p`) and outer-extension interval
/// ends (`p_prime`), both ascending and starting at 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceGrid<T> {
    pub p: Vec<T>,
    pub p_prime: Vec<T>,
}

fn ceil_log2(x: u128) -> u32 {
    let mut t = 0;
    while (1u128 << t) < x {
        t += 1;
    }
    t
}

/// Exponent ranges of `p` and `p_prime`.
pub fn grid_exponents(m: usize, n_j: usize) -> (u32, u32) {
    let m = m.max(1) as u128;
    let n = n_j.max(1) as u128;
    (ceil_log2(1024 * m * m * n), ceil_log2(1024 * m * m * m * n))
}

/// `p = {m·b_max/2^t} ∪ {0}` and `p_prime = {m²·b_max/2^t} ∪ {0}`.
pub fn make_grids<T: Scalar>(m: usize, b_max: &T, n_j: usize) -> Result<PriceGrid<T>, SkeletonError> {
    if *b_max <= T::zero() {
        return Err(SkeletonError::AllBudgetsZero);
    }
    let (t1, t2) = grid_exponents(m, n_j);
    let build = |base: T, top: u32| {
        let mut v: Vec<T> = (0..=top).map(|t| base.clone() / T::pow2(t)).collect();
        v.push(T::zero());
        v.sort();
        v.dedup();
        v
    };
    let mm = T::from_count(m.max(1));
    Ok(PriceGrid { p: build(mm.clone() * b_max.clone(), t1), p_prime: build(mm.clone() * mm * b_max.clone(), t2) })
}

/// Allowed length of an outer extension: exactly zero, or `(lo, hi]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Interval<T> {
    Zero,
    Range(T, T),
}

impl<T: Scalar> Interval<T> {
    pub fn contains(&self, x: &T) -> bool {
        match self {
            Interval::Zero => x.is_zero(),
            Interval::Range(lo, hi) => x > lo && x <= hi,
        }
    }

    /// Length assumed for the extension when approximating revenue.
    pub fn upper(&self) -> T {
        match self {
            Interval::Zero => T::zero(),
            Interval::Range(_, hi) => hi.clone(),
        }
    }

    fn map<U>(&self, f: impl Fn(&T) -> U) -> Interval<U> {
        match self {
            Interval::Zero => Interval::Zero,
            Interval::Range(a, b) => Interval::Range(f(a), f(b)),
        }
    }
}

impl<T: Scalar> PriceGrid<T> {
    /// The zero interval followed by every consecutive pair of `p_prime`.
    pub fn intervals(&self) -> Vec<Interval<T>> {
        std::iter::once(Interval::Zero).chain(self.p_prime.windows(2).map(|w| Interval::Range(w[0].clone(), w[1].clone()))).collect()
    }

    /// Interval containing `x`, if `x` is within range.
    pub fn interval_of(&self, x: &T) -> Option<Interval<T>> {
        self.intervals().into_iter().find(|i| i.contains(x))
    }

    /// A thinner grid for when exact enumeration is too expensive: first
    /// the values strictly between `b_max` and the top merge into the top,
    /// then each call drops the smallest positive value of both grids.
    /// `None` once both grids are down to `{0, top}`.
    pub fn coarsened(&self, b_max: &T) -> Option<Self> {
        let thin_top = |v: &[T]| -> Vec<T> {
            let top = v.last().cloned().unwrap_or_else(T::zero);
            v.iter().filter(|x| *x <= b_max || **x == top).cloned().collect()
        };
        let (p, q) = (thin_top(&self.p), thin_top(&self.p_prime));
        if p.len() < self.p.len() || q.len() < self.p_prime.len() {
            return Some(PriceGrid { p, p_prime: q });
        }
        let drop_low = |v: &[T]| -> Vec<T> {
            if v.len() <= 2 {
                v.to_vec()
            } else {
                std::iter::once(v[0].clone()).chain(v[2..].iter().cloned()).collect()
            }
        };
        let (p, q) = (drop_low(&self.p), drop_low(&self.p_prime));
        (p.len() < self.p.len() || q.len() < self.p_prime.len()).then_some(PriceGrid { p, p_prime: q })
    }

    /// Largest grid value not above `x`.
    pub fn floor(&self, x: &T) -> T {
        self.p.iter().rev().find(|v| *v <= x).cloned().unwrap_or_else(T::zero)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Strategy<T> {
    pub inner: Vec<T>,
    pub outer: Vec<Interval<T>>,
}

/// Mixed-radix counter; the first digit varies slowest.
#[derive(Debug, Clone)]
struct Odometer {
    radix: Vec<usize>,
    digits: Vec<usize>,
    done: bool,
}

impl Odometer {
    fn new(radix: Vec<usize>) -> Self {
        let done = radix.contains(&0);
        Odometer { digits: vec![0; radix.len()], radix, done }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.digits.clone();
        let mut i = self.radix.len();
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            self.digits[i] += 1;
            if self.digits[i] < self.radix[i] {
                break;
            }
            self.digits[i] = 0;
        }
        Some(out)
    }
}

fn decode(mut index: u128, radix: &[usize]) -> Vec<usize> {
    let mut digits = vec![0; radix.len()];
    for i in (0..radix.len()).rev() {
        digits[i] = (index % radix[i] as u128) as usize;
        index /= radix[i] as u128;
    }
    digits
}

/// Every strategy for a fragment with the given numbers of inner segments
/// and outer extensions.
pub fn enumerate_strategies<T: Scalar>(inner: usize, outer: usize, grid: &PriceGrid<T>) -> impl Iterator<Item = Strategy<T>> + '_ {
    let intervals = grid.intervals();
    let mut radix = vec![grid.p.len(); inner];
    radix.extend(std::iter::repeat_n(intervals.len(), outer));
    Odometer::new(radix).map(move |d| Strategy {
        inner: d[..inner].iter().map(|&i| grid.p[i].clone()).collect(),
        outer: d[inner..].iter().map(|&i| intervals[i].clone()).collect(),
    })
}

/// Cheapest `l`–`r` path inside the segment and its cost.
pub fn segment_path<T: Scalar>(g: &CactusGraph, prices: &[T], seg: &Segment) -> (T, Vec<usize>) {
    let sub = Subgraph::new(g, &seg.edges, &[]);
    let local: Vec<T> = sub.global_edge.iter().map(|&e| prices[e].clone()).collect();
    let l = sub.local_vertex[&seg.l];
    let r = sub.local_vertex[&seg.r];
    let probe = Buyer::new(l, r, T::zero());
    let dist = crate::evaluator::distance(&sub.graph, &local, l, r);
    let probe = Buyer { budget: dist.clone(), ..probe };
    match &allocate(&sub.graph, &local, std::slice::from_ref(&probe)).purchases[0] {
        Purchase::Bought { path, .. } => (dist, path.iter().map(|&e| sub.global_edge[e]).collect()),
        Purchase::Nothing => unreachable!("probe budget equals the distance"),
    }
}

/// Length of a segment under `prices`.
pub fn segment_length<T: Scalar>(g: &CactusGraph, prices: &[T], seg: &Segment) -> T {
    segment_path(g, prices, seg).0
}

/// Caps prices at `b_max`, then scales one cheapest path of every segment
/// so that the segment length becomes the largest grid value not above it.
pub fn round_prices<T: Scalar>(g: &CactusGraph, prices: &[T], segs: &Segments, grid: &PriceGrid<T>, b_max: &T) -> Vec<T> {
    let mut out: Vec<T> = prices.iter().map(|p| p.clone().min(b_max.clone())).collect();
    for seg in &segs.segments {
        let (len, path) = segment_path(g, &out, seg);
        if len.is_zero() {
            continue;
        }
        let target = grid.floor(&len);
        for e in path {
            out[e] = out[e].clone() * target.clone() / len.clone();
        }
    }
    out
}

/// What an involved buyer can spend inside a segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InvolvedView<T> {
    /// Terminal representative inside the segment.
    pub u: usize,
    /// Residual budget when leaving through `l`; `None` if `l` is unusable.
    pub b_l: Option<T>,
    pub b_r: Option<T>,
    /// For cyclic segments: every path to the other terminal leaves via `l`.
    pub via_l: bool,
}

fn ends_at<T: Scalar>(g: &CactusGraph, seg: &Segment, end: usize, c: &T) -> Vec<(usize, T)> {
    seg.edges
        .iter()
        .map(|&e| {
            let (a, b) = g.endpoints(e);
            (e, if a == end || b == end { c.clone() } else { T::zero() })
        })
        .collect()
}

fn rooted_on<T: Scalar>(g: &CactusGraph, edges: &[usize], root: usize, demands: &[(usize, T)], fixed: Option<(usize, T)>) -> (Vec<(usize, T)>, T) {
    let sub = Subgraph::new(g, edges, &[root]);
    let local: Vec<(usize, T)> = demands.iter().map(|(v, b)| (sub.local_vertex[v], b.clone())).collect();
    let mut inst = RootedInstance::new(sub.graph.clone(), sub.local_vertex[&root], local);
    if let Some((v, depth)) = fixed {
        inst = inst.with_constraint(sub.local_vertex[&v], depth);
    }
    let sol = solve_rooted(&inst).expect("nonnegative constraint away from the root");
    (sub.global_edge.iter().copied().zip(sol.prices).collect(), sol.revenue)
}

fn path_vertices(g: &CactusGraph, seg: &Segment) -> Vec<usize> {
    let mut out = vec![seg.l];
    for &e in &seg.path {
        out.push(g.other_end(e, *out.last().unwrap()));
    }
    out
}

/// Prices of the segment's edges under one of the four options; every
/// option makes the segment length exactly `c`.
pub fn price_segment<T: Scalar>(g: &CactusGraph, seg: &Segment, c: &T, view: &[InvolvedView<T>], option: u8) -> Vec<(usize, T)> {
    let usable = |b: &Option<T>| b.as_ref().filter(|x| **x >= T::zero()).cloned();
    match (option, seg.cyclic) {
        (1, _) => ends_at(g, seg, seg.l, c),
        (2, _) => ends_at(g, seg, seg.r, c),
        (3, true) => {
            let demands: Vec<(usize, T)> = view.iter().filter(|v| v.via_l).filter_map(|v| usable(&v.b_l).map(|b| (v.u, b))).collect();
            rooted_on(g, &seg.edges, seg.l, &demands, Some((seg.r, c.clone()))).0
        }
        (4, true) => {
            let demands: Vec<(usize, T)> = view.iter().filter(|v| !v.via_l).filter_map(|v| usable(&v.b_r).map(|b| (v.u, b))).collect();
            rooted_on(g, &seg.edges, seg.r, &demands, Some((seg.l, c.clone()))).0
        }
        (3, false) => {
            let k = seg.path.len();
            seg.path
                .iter()
                .enumerate()
                .map(|(i, &e)| {
                    let p = if k == 1 {
                        c.clone()
                    } else if i == 0 || i == k - 1 {
                        c.half()
                    } else {
                        T::zero()
                    };
                    (e, p)
                })
                .collect()
        }
        (4, false) => {
            let half = c.half();
            let small: Vec<&InvolvedView<T>> = view
                .iter()
                .filter(|v| {
                    let m = match (&v.b_l, &v.b_r) {
                        (Some(a), Some(b)) => Some(a.clone().max(b.clone())),
                        (Some(a), None) | (None, Some(a)) => Some(a.clone()),
                        (None, None) => None,
                    };
                    m.is_none_or(|m| m < half)
                })
                .collect();
            let verts = path_vertices(g, seg);
            let pos: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let k = seg.path.len();
            let mut best: Option<(T, Vec<(usize, T)>)> = None;
            for q in 0..k {
                let left: Vec<(usize, T)> = small.iter().filter(|v| pos[&v.u] <= q).filter_map(|v| usable(&v.b_l).map(|b| (v.u, b))).collect();
                let right: Vec<(usize, T)> = small.iter().filter(|v| pos[&v.u] > q).filter_map(|v| usable(&v.b_r).map(|b| (v.u, b))).collect();
                let (lp, lrev) = if q > 0 { rooted_on(g, &seg.path[..q], seg.l, &left, None) } else { (Vec::new(), T::zero()) };
                let (rp, rrev) = if q + 1 < k { rooted_on(g, &seg.path[q + 1..], seg.r, &right, None) } else { (Vec::new(), T::zero()) };
                let used = lp.iter().chain(rp.iter()).fold(T::zero(), |acc, (_, p)| acc + p.clone());
                let total = lrev + rrev;
                if best.as_ref().is_none_or(|(b, _)| total > *b) {
                    let mut prices = lp;
                    prices.extend(rp);
                    prices.push((seg.path[q], c.clone() - used));
                    best = Some((total, prices));
                }
            }
            let mut prices = best.expect("a path segment has an edge").1;
            prices.sort_by_key(|(e, _)| *e);
            prices
        }
        _ => panic!("pricing options are numbered 1 to 4"),
    }
}

fn dijkstra<N: Scalar>(adj: &[Vec<(usize, usize)>], price: &[N], src: usize) -> Vec<Option<N>> {
    let mut dist: Vec<Option<N>> = vec![None; adj.len()];
    dist[src] = Some(N::zero());
    let mut heap = BinaryHeap::from([Reverse((N::zero(), src))]);
    while let Some(Reverse((d, v))) = heap.pop() {
        if dist[v].as_ref().is_some_and(|x| *x < d) {
            continue;
        }
        for &(w, e) in &adj[v] {
            let nd = d.clone() + price[e].clone();
            if dist[w].as_ref().is_none_or(|x| nd < *x) {
                dist[w] = Some(nd.clone());
                heap.push(Reverse((nd, w)));
            }
        }
    }
    dist
}

#[derive(Debug, Clone)]
enum Other {
    /// Both terminals sit inside this segment.
    Same,
    /// The other terminal is interior to another relevant segment.
    Segment(usize),
    Vertex(usize),
}

#[derive(Debug, Clone)]
struct Involved {
    buyer: usize,
    u: usize,
    other: Other,
    via_l: bool,
}

/// One fragment's strategy space and per-strategy pricing.
#[derive(Debug, Clone)]
pub struct FragmentProblem<'a, N> {
    g: &'a CactusGraph,
    segs: &'a Segments,
    pub fragment: usize,
    /// `(repr of s, repr of t, budget)`.
    pub buyers: Vec<(usize, usize, N)>,
    /// Inner segments some buyer of the fragment can route through.
    pub rel_inner: Vec<usize>,
    pub free_inner: Vec<usize>,
    pub outer: Vec<OuterExtension>,
    /// Indices into `outer` of extensions some buyer can route through.
    pub rel_outer: Vec<usize>,
    adj: Vec<Vec<(usize, usize)>>,
    node: HashMap<usize, usize>,
    /// Local edge -> global edge, or `None` for an extension pseudo-edge.
    local_edge: Vec<Option<usize>>,
    pseudo_of: Vec<usize>,
    involved: Vec<Vec<Involved>>,
    /// Segment endpoints and extension endpoints, for the strategy metric.
    metric_nodes: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct StrategyOutcome<N> {
    pub score: N,
    /// Prices of the relevant inner segments' edges.
    pub prices: Vec<(usize, N)>,
}

type OptionCache<N> = HashMap<(usize, u8, N, Vec<InvolvedView<N>>), Vec<(usize, N)>>;

impl<'a, N: Scalar> FragmentProblem<'a, N> {
    pub fn new(g: &'a CactusGraph, segs: &'a Segments, fs: &FragmentSkeleton, buyers: Vec<(usize, usize, N)>) -> Self {
        let mut used = HashSet::new();
        for (a, b, _) in &buyers {
            used.extend(simple_path_edges(g, *a, *b));
        }
        let (rel_inner, free_inner): (Vec<usize>, Vec<usize>) =
            fs.inner.iter().copied().partition(|&s| segs.segments[s].edges.iter().any(|e| used.contains(e)));
        let rel_outer: Vec<usize> = (0..fs.outer.len()).filter(|&o| fs.outer[o].edges.iter().any(|e| used.contains(e))).collect();
        let covered: HashSet<usize> = rel_inner
            .iter()
            .flat_map(|&s| segs.segments[s].edges.iter().copied())
            .chain(rel_outer.iter().flat_map(|&o| fs.outer[o].edges.iter().copied()))
            .collect();
        assert!(used.iter().all(|e| covered.contains(e)), "buyer routes leave the fragment skeleton");

        let mut node = HashMap::new();
        let add = |v: usize, node: &mut HashMap<usize, usize>| {
            let next = node.len();
            *node.entry(v).or_insert(next)
        };
        let mut ends = Vec::new();
        let mut local_edge = Vec::new();
        let mut pseudo_of = Vec::new();
        let mut metric = BTreeSet::new();
        for &s in &rel_inner {
            let seg = &segs.segments[s];
            metric.insert(seg.l);
            metric.insert(seg.r);
            for &e in &seg.edges {
                let (a, b) = g.endpoints(e);
                ends.push((add(a, &mut node), add(b, &mut node)));
                local_edge.push(Some(e));
            }
        }
        for (k, &o) in rel_outer.iter().enumerate() {
            let ext = &fs.outer[o];
            metric.insert(ext.u);
            metric.insert(ext.v);
            ends.push((add(ext.u, &mut node), add(ext.v, &mut node)));
            local_edge.push(None);
            pseudo_of.push(k);
        }
        for (a, b, _) in &buyers {
            add(*a, &mut node);
            add(*b, &mut node);
        }
        let mut adj = vec![Vec::new(); node.len()];
        for (i, &(a, b)) in ends.iter().enumerate() {
            adj[a].push((b, i));
            adj[b].push((a, i));
        }

        let interior_of: HashMap<usize, usize> = rel_inner
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| {
                let seg = &segs.segments[s];
                seg.vertices(g).into_iter().filter(move |&v| v != seg.l && v != seg.r).map(move |v| (v, k))
            })
            .collect();
        let mut involved: Vec<Vec<Involved>> = vec![Vec::new(); rel_inner.len()];
        let mut l_side: HashMap<usize, HashSet<usize>> = HashMap::new();
        for (i, (a, b, _)) in buyers.iter().enumerate() {
            for (u, w) in [(*a, *b), (*b, *a)] {
                let Some(&k) = interior_of.get(&u) else { continue };
                let other = match interior_of.get(&w) {
                    Some(&k2) if k2 == k => Other::Same,
                    Some(&k2) => Other::Segment(k2),
                    None => Other::Vertex(w),
                };
                let seg = &segs.segments[rel_inner[k]];
                let via_l = seg.cyclic && {
                    let side = l_side.entry(k).or_insert_with(|| reach_avoiding(g, seg.l, &seg.edges));
                    side.contains(&w)
                };
                involved[k].push(Involved { buyer: i, u, other, via_l });
            }
        }

        FragmentProblem {
            g,
            segs,
            fragment: fs.fragment,
            buyers,
            rel_inner,
            free_inner,
            outer: fs.outer.clone(),
            rel_outer,
            adj,
            node,
            local_edge,
            pseudo_of,
            involved,
            metric_nodes: metric.into_iter().collect(),
        }
    }

    /// Radices of the strategy digits: grid index per relevant inner
    /// segment, then interval index per relevant extension.
    pub fn radix(&self, grid: &PriceGrid<N>) -> Vec<usize> {
        let mut r = vec![grid.p.len(); self.rel_inner.len()];
        r.extend(std::iter::repeat_n(grid.p_prime.len(), self.rel_outer.len()));
        r
    }

    pub fn strategy_count(&self, grid: &PriceGrid<N>) -> u128 {
        self.radix(grid).iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128))
    }

    /// Strategy count times the option combinations tried per strategy.
    pub fn work(&self, grid: &PriceGrid<N>) -> u128 {
        let involved = self.involved.iter().filter(|v| !v.is_empty()).count() as u32;
        self.strategy_count(grid).saturating_mul(4u128.saturating_pow(involved))
    }

    pub fn strategy(&self, grid: &PriceGrid<N>, index: u128) -> Strategy<N> {
        let d = decode(index, &self.radix(grid));
        let intervals = grid.intervals();
        let k = self.rel_inner.len();
        Strategy { inner: d[..k].iter().map(|&i| grid.p[i].clone()).collect(), outer: d[k..].iter().map(|&i| intervals[i].clone()).collect() }
    }

    /// Revenue from the fragment's buyers with the relevant extensions
    /// priced at their interval's upper end and the inner edges at `prices`.
    pub fn approximate_revenue(&self, strategy: &Strategy<N>, prices: &[(usize, N)]) -> N {
        let mut price = vec![N::zero(); self.local_edge.len()];
        let by_edge: HashMap<usize, &N> = prices.iter().map(|(e, p)| (*e, p)).collect();
        let mut k = 0;
        for (i, le) in self.local_edge.iter().enumerate() {
            match le {
                Some(e) => price[i] = by_edge.get(e).map(|p| (*p).clone()).unwrap_or_else(N::zero),
                None => {
                    price[i] = strategy.outer[self.pseudo_of[k]].upper();
                    k += 1;
                }
            }
        }
        self.revenue_with(&price)
    }

    fn revenue_with(&self, price: &[N]) -> N {
        let mut total = N::zero();
        let mut cached: Option<(usize, Vec<Option<N>>)> = None;
        let mut order: Vec<usize> = (0..self.buyers.len()).collect();
        order.sort_by_key(|&i| self.buyers[i].0);
        for i in order {
            let (a, b, budget) = &self.buyers[i];
            let src = self.node[a];
            if cached.as_ref().is_none_or(|(s, _)| *s != src) {
                cached = Some((src, dijkstra(&self.adj, price, src)));
            }
            if let Some(d) = &cached.as_ref().unwrap().1[self.node[b]] {
                if d <= budget {
                    total = total + d.clone();
                }
            }
        }
        total
    }

    /// All-pairs distances between metric nodes under the strategy.
    fn metric(&self, strategy: &Strategy<N>) -> HashMap<(usize, usize), N> {
        let idx: HashMap<usize, usize> = self.metric_nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = self.metric_nodes.len();
        let mut d: Vec<Vec<Option<N>>> = vec![vec![None; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = Some(N::zero());
        }
        let relax = |a: usize, b: usize, c: &N, d: &mut Vec<Vec<Option<N>>>| {
            let (x, y) = (idx[&a], idx[&b]);
            if d[x][y].as_ref().is_none_or(|v| c < v) {
                d[x][y] = Some(c.clone());
                d[y][x] = Some(c.clone());
            }
        };
        for (k, &s) in self.rel_inner.iter().enumerate() {
            let seg = &self.segs.segments[s];
            relax(seg.l, seg.r, &strategy.inner[k], &mut d);
        }
        for (k, &o) in self.rel_outer.iter().enumerate() {
            let ext = &self.outer[o];
            relax(ext.u, ext.v, &strategy.outer[k].upper(), &mut d);
        }
        #[allow(clippy::needless_range_loop)]
        for k in 0..n {
            for i in 0..n {
                let Some(ik) = d[i][k].clone() else { continue };
                for j in 0..n {
                    if let Some(kj) = &d[k][j] {
                        let via = ik.clone() + kj.clone();
                        if d[i][j].as_ref().is_none_or(|v| via < *v) {
                            d[i][j] = Some(via);
                        }
                    }
                }
            }
        }
        let mut out = HashMap::new();
        #[allow(clippy::needless_range_loop)]
        for i in 0..n {
            for j in 0..n {
                if let Some(v) = &d[i][j] {
                    out.insert((self.metric_nodes[i], self.metric_nodes[j]), v.clone());
                }
            }
        }
        out
    }

    fn views(&self, strategy: &Strategy<N>, k: usize) -> Vec<InvolvedView<N>> {
        if self.involved[k].is_empty() {
            return Vec::new();
        }
        let dist = self.metric(strategy);
        let seg = &self.segs.segments[self.rel_inner[k]];
        let residual = |end: usize, budget: &N, targets: &[usize]| -> Option<N> {
            targets.iter().filter_map(|t| dist.get(&(end, *t))).min().map(|d| budget.clone() - d.clone())
        };
        self.involved[k]
            .iter()
            .filter_map(|inv| {
                let budget = &self.buyers[inv.buyer].2;
                let targets = match inv.other {
                    Other::Same => return None,
                    Other::Segment(k2) => {
                        let s2 = &self.segs.segments[self.rel_inner[k2]];
                        vec![s2.l, s2.r]
                    }
                    Other::Vertex(w) => vec![w],
                };
                Some(InvolvedView { u: inv.u, b_l: residual(seg.l, budget, &targets), b_r: residual(seg.r, budget, &targets), via_l: inv.via_l })
            })
            .collect()
    }

    /// Best of the option combinations for a fixed strategy; ties go to the
    /// first combination in option order.
    pub fn solve_strategy(&self, strategy: &Strategy<N>) -> StrategyOutcome<N> {
        self.solve_strategy_cached(strategy, &mut HashMap::new())
    }

    fn solve_strategy_cached(&self, strategy: &Strategy<N>, cache: &mut OptionCache<N>) -> StrategyOutcome<N> {
        if self.buyers.is_empty() {
            let prices = self
                .rel_inner
                .iter()
                .enumerate()
                .flat_map(|(k, &s)| ends_at(self.g, &self.segs.segments[s], self.segs.segments[s].l, &strategy.inner[k]))
                .collect();
            return StrategyOutcome { score: N::zero(), prices };
        }
        let mut choices: Vec<Vec<Vec<(usize, N)>>> = Vec::with_capacity(self.rel_inner.len());
        for (k, &s) in self.rel_inner.iter().enumerate() {
            let seg = &self.segs.segments[s];
            let c = &strategy.inner[k];
            if self.involved[k].is_empty() {
                choices.push(vec![ends_at(self.g, seg, seg.l, c)]);
                continue;
            }
            let view = self.views(strategy, k);
            let mut opts: Vec<Vec<(usize, N)>> = Vec::new();
            for option in 1..=4u8 {
                let key = (s, option, c.clone(), view.clone());
                let prices = cache.entry(key).or_insert_with(|| price_segment(self.g, seg, c, &view, option)).clone();
                if !opts.contains(&prices) {
                    opts.push(prices);
                }
            }
            choices.push(opts);
        }
        let slot: HashMap<usize, usize> = self.local_edge.iter().enumerate().filter_map(|(i, e)| e.map(|e| (e, i))).collect();
        let mut price = vec![N::zero(); self.local_edge.len()];
        let mut k = 0;
        for (i, le) in self.local_edge.iter().enumerate() {
            if le.is_none() {
                price[i] = strategy.outer[self.pseudo_of[k]].upper();
                k += 1;
            }
        }
        let mut best: Option<(N, Vec<usize>)> = None;
        for combo in Odometer::new(choices.iter().map(|c| c.len()).collect()) {
            for (k, &o) in combo.iter().enumerate() {
                for (e, p) in &choices[k][o] {
                    price[slot[e]] = p.clone();
                }
            }
            let r = self.revenue_with(&price);
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, combo));
            }
        }
        let (score, combo) = best.expect("at least one combination");
        let prices = combo.iter().enumerate().flat_map(|(k, &o)| choices[k][o].iter().cloned()).collect();
        StrategyOutcome { score, prices }
    }
}

fn reach_avoiding(g: &CactusGraph, from: usize, avoid: &[usize]) -> HashSet<usize> {
    let avoid: HashSet<usize> = avoid.iter().copied().collect();
    let mut seen = HashSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in g.neighbors(v) {
            if !avoid.contains(&e) && seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Scores of every strategy of one fragment.
#[derive(Debug, Clone)]
pub struct StrategyTable<N> {
    pub fragment: usize,
    pub scores: Vec<N>,
}

pub fn score_strategies<N: Scalar>(problem: &FragmentProblem<'_, N>, grid: &PriceGrid<N>, limit: u128) -> Result<StrategyTable<N>, SkeletonError> {
    let count = problem.strategy_count(grid);
    if count > limit {
        return Err(SkeletonError::TooManyStrategies { fragment: problem.fragment, count, limit });
    }
    let scores = (0..count as u64)
        .into_par_iter()
        .map_init(HashMap::new, |cache, i| problem.solve_strategy_cached(&problem.strategy(grid, i as u128), cache).score)
        .collect();
    Ok(StrategyTable { fragment: problem.fragment, scores })
}

/// A fragment's part of one split cycle.
#[derive(Debug, Clone)]
struct OnCycle {
    fragment: usize,
    /// Positions in the fragment's `rel_inner` of segments on the cycle.
    rel: Vec<usize>,
    free: Vec<usize>,
    /// Position in the fragment's `rel_outer` of the extension along the cycle.
    ext: Option<usize>,
}

#[derive(Debug, Clone)]
struct CycleInfo {
    closing: OnCycle,
    /// Lower fragments in path order.
    lower: Vec<OnCycle>,
}

#[derive(Debug, Clone)]
struct Entry<N> {
    d: N,
    interval: Option<Interval<N>>,
    value: N,
    strategy: u128,
    free: usize,
}

type Choice = Option<(usize, Vec<usize>)>;

/// Best value with one entry index per lower fragment.
type Pick<N> = Option<(N, Vec<usize>)>;
/// Free-segment sums per (cycle, fragment): total cost and per-segment costs.
type FreeTables<N> = HashMap<(usize, usize), Vec<(N, Vec<N>)>>;
/// Strategy index and the prices it sets.
type Picked<N> = (u128, Vec<(usize, N)>);

/// Admissible arc costs: an optional lower bound (value, inclusive) and an
/// optional inclusive upper bound.
#[derive(Debug, Clone)]
struct Bounds<N> {
    lo: Option<(N, bool)>,
    hi: Option<N>,
}

impl<N: Scalar> Bounds<N> {
    fn all() -> Self {
        Bounds { lo: None, hi: None }
    }

    /// Restricts to `x` with `x + shift ∈ iv`.
    fn restrict(&mut self, iv: &Interval<N>, shift: &N) {
        let (lo, hi) = match iv {
            Interval::Zero => ((N::zero() - shift.clone(), true), N::zero() - shift.clone()),
            Interval::Range(a, b) => ((a.clone() - shift.clone(), false), b.clone() - shift.clone()),
        };
        if self.lo.as_ref().is_none_or(|(v, inc)| lo.0 > *v || (lo.0 == *v && *inc && !lo.1)) {
            self.lo = Some(lo);
        }
        if self.hi.as_ref().is_none_or(|v| hi < *v) {
            self.hi = Some(hi);
        }
    }
}

/// Entries of one interval, sorted by arc cost, with a sparse table for
/// range maxima.
struct RangeIndex<N> {
    d: Vec<N>,
    entry: Vec<usize>,
    table: Vec<Vec<usize>>,
}

impl<N: Scalar> RangeIndex<N> {
    fn new(mut items: Vec<(N, N, usize)>) -> Self {
        items.sort_by(|a, b| a.0.cmp(&b.0));
        let val: Vec<N> = items.iter().map(|x| x.1.clone()).collect();
        let mut table = vec![(0..items.len()).collect::<Vec<_>>()];
        let mut w = 1;
        while 2 * w <= items.len() {
            let prev = table.last().unwrap();
            let row = (0..=items.len() - 2 * w)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + w]);
                    if val[b] > val[a] {
                        b
                    } else {
                        a
                    }
                })
                .collect();
            table.push(row);
            w *= 2;
        }
        RangeIndex { d: items.iter().map(|x| x.0.clone()).collect(), entry: items.iter().map(|x| x.2).collect(), table }
    }

    /// Entry with the best value among arc costs within `bounds`.
    fn best(&self, bounds: &Bounds<N>, value: impl Fn(usize) -> N) -> Option<usize> {
        let a = match &bounds.lo {
            None => 0,
            Some((lo, true)) => self.d.partition_point(|x| x < lo),
            Some((lo, false)) => self.d.partition_point(|x| x <= lo),
        };
        let b = bounds.hi.as_ref().map_or(self.d.len(), |hi| self.d.partition_point(|x| x <= hi));
        if a >= b {
            return None;
        }
        let k = (usize::BITS - 1 - (b - a).leading_zeros()) as usize;
        let (x, y) = (self.entry[self.table[k][a]], self.entry[self.table[k][b - (1 << k)]]);
        Some(if value(y) > value(x) { y } else { x })
    }
}

/// Lower side of one split cycle.
///
/// Lower fragments whose extension along the cycle is irrelevant impose no
/// length constraint; their entries are merged into one sumset up front.
/// Among the constrained ones, all but the largest are enumerated and every
/// constraint becomes a range on the arc cost of the largest, answered by a
/// range-maximum index.
struct OpenTable<N> {
    entries: Vec<Vec<Entry<N>>>,
    /// Constrained lists; the last is the indexed one.
    constrained: Vec<usize>,
    unconstrained: Vec<usize>,
    /// Sum of unconstrained arc costs -> best value and picks.
    merged: BTreeMap<N, (N, Vec<usize>)>,
    index: HashMap<Interval<N>, RangeIndex<N>>,
    intervals: Vec<Interval<N>>,
    memo: HashMap<(N, Option<Interval<N>>), Pick<N>>,
}

impl<N: Scalar> OpenTable<N> {
    fn new(entries: Vec<Vec<Entry<N>>>, intervals: Vec<Interval<N>>, cap: N) -> Self {
        let (mut constrained, unconstrained): (Vec<usize>, Vec<usize>) = (0..entries.len()).partition(|&i| entries[i].iter().any(|e| e.interval.is_some()));
        if let Some(pos) = constrained.iter().enumerate().max_by_key(|(_, &i)| entries[i].len()).map(|(p, _)| p) {
            let last = constrained.remove(pos);
            constrained.push(last);
        }
        let mut merged: BTreeMap<N, (N, Vec<usize>)> = BTreeMap::from([(N::zero(), (N::zero(), Vec::new()))]);
        for &i in &unconstrained {
            let mut next: BTreeMap<N, (N, Vec<usize>)> = BTreeMap::new();
            for (sum, (val, picks)) in &merged {
                for (k, e) in entries[i].iter().enumerate() {
                    let s = sum.clone() + e.d.clone();
                    if s > cap {
                        continue;
                    }
                    let v = val.clone() + e.value.clone();
                    if next.get(&s).is_none_or(|(b, _)| v > *b) {
                        let mut p = picks.clone();
                        p.push(k);
                        next.insert(s, (v, p));
                    }
                }
            }
            merged = next;
        }
        let mut index = HashMap::new();
        if let Some(&last) = constrained.last() {
            let mut groups: HashMap<Interval<N>, Vec<(N, N, usize)>> = HashMap::new();
            for (k, e) in entries[last].iter().enumerate() {
                groups.entry(e.interval.clone().expect("constrained entry")).or_default().push((e.d.clone(), e.value.clone(), k));
            }
            index = groups.into_iter().map(|(iv, items)| (iv, RangeIndex::new(items))).collect();
        }
        OpenTable { entries, constrained, unconstrained, merged, index, intervals, memo: HashMap::new() }
    }

    fn assemble(&self, merged_picks: &[usize], constrained_picks: &[usize]) -> Vec<usize> {
        let mut out = vec![0; self.entries.len()];
        for (&i, &k) in self.unconstrained.iter().zip(merged_picks) {
            out[i] = k;
        }
        for (&i, &k) in self.constrained.iter().zip(constrained_picks) {
            out[i] = k;
        }
        out
    }

    /// Best lower-side combination for an upper arc of cost `up` whose
    /// extension interval is `interval` (`None`: any length). Returns the
    /// value and one entry index per lower fragment.
    fn query(&mut self, up: &N, interval: &Option<Interval<N>>) -> Pick<N> {
        let key = (up.clone(), interval.clone());
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let mut best: Option<(N, Vec<usize>)> = None;
        for (u, (uv, picks)) in &self.merged {
            if self.constrained.is_empty() {
                if interval.as_ref().is_none_or(|iv| iv.contains(u)) && best.as_ref().is_none_or(|(b, _)| uv > b) {
                    best = Some((uv.clone(), self.assemble(picks, &[])));
                }
                continue;
            }
            let mut chosen = Vec::new();
            let mut found: Option<(N, Vec<usize>)> = None;
            self.search(up, u, interval, &mut chosen, &mut found);
            if let Some((v, cpicks)) = found {
                let v = v + uv.clone();
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, self.assemble(picks, &cpicks)));
                }
            }
        }
        self.memo.insert(key, best.clone());
        best
    }

    /// Enumerates the non-indexed constrained lists, then queries the index.
    fn search(&self, up: &N, u: &N, interval: &Option<Interval<N>>, chosen: &mut Vec<usize>, best: &mut Pick<N>) {
        let q = self.constrained.len();
        let level = chosen.len();
        if level + 1 < q {
            for k in 0..self.entries[self.constrained[level]].len() {
                chosen.push(k);
                self.search(up, u, interval, chosen, best);
                chosen.pop();
            }
            return;
        }
        let prefix: Vec<&Entry<N>> = chosen.iter().enumerate().map(|(i, &k)| &self.entries[self.constrained[i]][k]).collect();
        let sum_d = prefix.iter().fold(N::zero(), |acc, e| acc + e.d.clone());
        // cycle length minus the indexed arc
        let base = up.clone() + u.clone() + sum_d.clone();
        let Some(j) = self.intervals.iter().find(|iv| iv.contains(&base)) else { return };
        let Some(ix) = self.index.get(j) else { return };
        let mut bounds = Bounds::all();
        for e in &prefix {
            bounds.restrict(e.interval.as_ref().expect("constrained entry"), &(base.clone() - e.d.clone()));
        }
        if let Some(iv) = interval {
            bounds.restrict(iv, &(u.clone() + sum_d));
        }
        let list = &self.entries[*self.constrained.last().unwrap()];
        let Some(k) = ix.best(&bounds, |k| list[k].value.clone()) else { return };
        let v = prefix.iter().fold(list[k].value.clone(), |acc, e| acc + e.value.clone());
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            let mut picks = chosen.clone();
            picks.push(k);
            *best = Some((v, picks));
        }
    }
}

/// Distinct sums of grid costs over `count` segments, capped at `cap`,
/// each with one witness assignment.
fn free_sums<N: Scalar>(count: usize, grid: &PriceGrid<N>, cap: &N) -> Vec<(N, Vec<N>)> {
    let mut sums: BTreeMap<N, Vec<N>> = BTreeMap::from([(N::zero(), Vec::new())]);
    for _ in 0..count {
        let mut next: BTreeMap<N, Vec<N>> = BTreeMap::new();
        for (s, w) in &sums {
            for p in &grid.p {
                let t = s.clone() + p.clone();
                if t > *cap {
                    continue;
                }
                next.entry(t).or_insert_with(|| {
                    let mut w2 = w.clone();
                    w2.push(p.clone());
                    w2
                });
            }
        }
        sums = next;
    }
    sums.into_iter().collect()
}

/// The chosen strategy of a fragment and the costs given to its free
/// segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChosenStrategy<T> {
    pub fragment: usize,
    pub strategy: Strategy<T>,
    pub score: T,
    /// Segment ids matching `strategy.inner`.
    pub inner_segments: Vec<usize>,
    /// Segment ids of each extension in `strategy.outer`.
    pub outer_segments: Vec<Vec<usize>>,
    /// Cost of every inner segment outside the strategy, by segment id.
    pub free_costs: Vec<(usize, T)>,
}

/// Output of the assembly: one strategy per fragment.
#[derive(Debug, Clone)]
pub struct Assembly<N> {
    pub chosen: Vec<ChosenStrategy<N>>,
    pub score: N,
}

/// Picks a valid combination of strategies with maximum total score by a
/// recursion over the forest of fragments and the cycles they share.
pub fn assemble_global<N: Scalar>(
    tree: &BcTree,
    d: &Decomposition,
    j: usize,
    segs: &Segments,
    problems: &[FragmentProblem<'_, N>],
    tables: &[StrategyTable<N>],
    grid: &PriceGrid<N>,
) -> Assembly<N> {
    let level = &d.levels[j];
    let fcount = level.fragments.len();
    let cap = grid.p_prime.last().cloned().unwrap_or_else(N::zero);
    let pos_rel: Vec<HashMap<usize, usize>> = problems.iter().map(|p| p.rel_inner.iter().enumerate().map(|(k, &s)| (s, k)).collect()).collect();

    let mut cycles: Vec<CycleInfo> = Vec::new();
    for c in split_cycles(tree, d, j) {
        let Component::Cycle { edges, .. } = &tree.components[c] else { unreachable!() };
        let closing = level.fragment_of_edge[edges[0]];
        let on = |f: usize, arc: &[usize]| -> OnCycle {
            let mut seg_ids: Vec<usize> = arc.iter().map(|&e| segs.segment_of_edge[e].expect("split cycles lie on the skeleton")).collect();
            let mut seen = HashSet::new();
            seg_ids.retain(|s| seen.insert(*s));
            let p = &problems[f];
            let rel = seg_ids.iter().filter_map(|s| pos_rel[f].get(s).copied()).collect();
            let free = seg_ids.iter().copied().filter(|s| !pos_rel[f].contains_key(s)).collect();
            let ext = p.rel_outer.iter().position(|&o| p.outer[o].cycle == c);
            OnCycle { fragment: f, rel, free, ext }
        };
        let k = edges.len();
        let start = (0..k).find(|&i| level.fragment_of_edge[edges[i]] == closing && level.fragment_of_edge[edges[(i + 1) % k]] != closing).unwrap();
        let mut arcs: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut i = (start + 1) % k;
        while level.fragment_of_edge[edges[i]] != closing {
            let f = level.fragment_of_edge[edges[i]];
            match arcs.last_mut() {
                Some((lf, arc)) if *lf == f => arc.push(edges[i]),
                _ => arcs.push((f, vec![edges[i]])),
            }
            i = (i + 1) % k;
        }
        let closing_arc: Vec<usize> = edges.iter().copied().filter(|&e| level.fragment_of_edge[e] == closing).collect();
        cycles.push(CycleInfo { closing: on(closing, &closing_arc), lower: arcs.iter().map(|(f, arc)| on(*f, arc)).collect() });
    }
    let mut parent_cycle: Vec<Option<usize>> = vec![None; fcount];
    let mut child_cycles: Vec<Vec<usize>> = vec![Vec::new(); fcount];
    for (ci, cy) in cycles.iter().enumerate() {
        child_cycles[cy.closing.fragment].push(ci);
        for lo in &cy.lower {
            assert!(parent_cycle[lo.fragment].is_none(), "fragment lies below two split cycles");
            parent_cycle[lo.fragment] = Some(ci);
        }
    }

    let digits = |f: usize, s: u128| decode(s, &problems[f].radix(grid));
    let interval_at = |f: usize, s: u128, ext: Option<usize>| -> Option<Interval<N>> {
        ext.map(|x| {
            let dg = digits(f, s);
            grid.intervals()[dg[problems[f].rel_inner.len() + x]].clone()
        })
    };
    let arc_cost = |f: usize, s: u128, on: &OnCycle| -> N {
        let dg = digits(f, s);
        on.rel.iter().fold(N::zero(), |acc, &k| acc + grid.p[dg[k]].clone())
    };

    // post-order over the forest
    let roots: Vec<usize> = (0..fcount).filter(|&f| parent_cycle[f].is_none()).collect();
    let mut order = Vec::new();
    let mut stack: Vec<(usize, bool)> = roots.iter().rev().map(|&f| (f, false)).collect();
    while let Some((f, done)) = stack.pop() {
        if done {
            order.push(f);
            continue;
        }
        stack.push((f, true));
        for &ci in child_cycles[f].iter().rev() {
            for lo in cycles[ci].lower.iter().rev() {
                stack.push((lo.fragment, false));
            }
        }
    }
    assert_eq!(order.len(), fcount, "fragment forest covers every fragment");

    let free_tables: FreeTables<N> = cycles
        .iter()
        .enumerate()
        .flat_map(|(ci, cy)| std::iter::once(&cy.closing).chain(cy.lower.iter()).map(move |on| ((ci, on.fragment), on.free.len())))
        .map(|(key, n)| (key, free_sums(n, grid, &cap)))
        .collect();

    let mut ext: Vec<Vec<Option<N>>> = vec![Vec::new(); fcount];
    let mut open: HashMap<usize, OpenTable<N>> = HashMap::new();
    for &f in &order {
        for &ci in &child_cycles[f] {
            let cy = &cycles[ci];
            let mut entries = Vec::new();
            for lo in &cy.lower {
                let frees = &free_tables[&(ci, lo.fragment)];
                let mut best: BTreeMap<(N, Option<Interval<N>>), Entry<N>> = BTreeMap::new();
                for (s, v) in ext[lo.fragment].iter().enumerate() {
                    let Some(v) = v else { continue };
                    let base = arc_cost(lo.fragment, s as u128, lo);
                    let iv = interval_at(lo.fragment, s as u128, lo.ext);
                    for (fi, (fs, _)) in frees.iter().enumerate() {
                        let dd = base.clone() + fs.clone();
                        if dd > cap {
                            continue;
                        }
                        let key = (dd.clone(), iv.clone());
                        if best.get(&key).is_none_or(|e| *v > e.value) {
                            best.insert(key, Entry { d: dd, interval: iv.clone(), value: v.clone(), strategy: s as u128, free: fi });
                        }
                    }
                }
                entries.push(best.into_values().collect::<Vec<_>>());
            }
            open.insert(ci, OpenTable::new(entries, grid.intervals(), cap.clone()));
        }
        let table = &tables[f];
        let mut vals = Vec::with_capacity(table.scores.len());
        for (s, score) in table.scores.iter().enumerate() {
            let mut total = Some(score.clone());
            for &ci in &child_cycles[f] {
                let best = best_for_child(&cycles[ci], ci, f, s as u128, &free_tables, open.get_mut(&ci).unwrap(), &arc_cost, &interval_at);
                total = match (total, best) {
                    (Some(t), Some((v, _))) => Some(t + v),
                    _ => None,
                };
            }
            vals.push(total);
        }
        ext[f] = vals;
    }

    // reconstruction
    let mut picked: Vec<Option<Picked<N>>> = vec![None; fcount];
    let mut work: Vec<(usize, u128)> = Vec::new();
    for &f in &roots {
        let s = best_index(&ext[f]).expect("the all-zero combination is valid");
        work.push((f, s));
    }
    let mut free_cost: HashMap<usize, N> = HashMap::new();
    while let Some((f, s)) = work.pop() {
        picked[f] = Some((s, Vec::new()));
        for &ci in &child_cycles[f] {
            let cy = &cycles[ci];
            let (_, choice) = best_for_child(cy, ci, f, s, &free_tables, open.get_mut(&ci).unwrap(), &arc_cost, &interval_at).unwrap();
            let (fi, picks) = choice.expect("a child choice");
            for (seg, cost) in cy.closing.free.iter().zip(free_tables[&(ci, f)][fi].1.iter()) {
                free_cost.insert(*seg, cost.clone());
            }
            let table = open.get(&ci).unwrap();
            for (li, lo) in cy.lower.iter().enumerate() {
                let e = &table.entries[li][picks[li]];
                for (seg, cost) in lo.free.iter().zip(free_tables[&(ci, lo.fragment)][e.free].1.iter()) {
                    free_cost.insert(*seg, cost.clone());
                }
                work.push((lo.fragment, e.strategy));
            }
        }
    }

    let mut chosen = Vec::with_capacity(fcount);
    let mut score = N::zero();
    for f in 0..fcount {
        let (s, _) = picked[f].clone().expect("every fragment is reached");
        let strategy = problems[f].strategy(grid, s);
        let sc = tables[f].scores[s as usize].clone();
        score = score + sc.clone();
        let free_costs = problems[f].free_inner.iter().map(|&seg| (seg, free_cost.get(&seg).cloned().unwrap_or_else(N::zero))).collect();
        let p = &problems[f];
        chosen.push(ChosenStrategy {
            fragment: f,
            strategy,
            score: sc,
            inner_segments: p.rel_inner.clone(),
            outer_segments: p.rel_outer.iter().map(|&o| p.outer[o].segments.clone()).collect(),
            free_costs,
        });
    }
    Assembly { chosen, score }
}

fn best_index<N: Scalar>(vals: &[Option<N>]) -> Option<u128> {
    let mut best: Option<(usize, &N)> = None;
    for (i, v) in vals.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i as u128)
}

#[allow(clippy::too_many_arguments)]
fn best_for_child<N: Scalar>(
    cy: &CycleInfo,
    ci: usize,
    f: usize,
    s: u128,
    free_tables: &FreeTables<N>,
    table: &mut OpenTable<N>,
    arc_cost: &impl Fn(usize, u128, &OnCycle) -> N,
    interval_at: &impl Fn(usize, u128, Option<usize>) -> Option<Interval<N>>,
) -> Option<(N, Choice)> {
    let base = arc_cost(f, s, &cy.closing);
    let iv = interval_at(f, s, cy.closing.ext);
    let mut best: Option<(N, Choice)> = None;
    for (fi, (fs, _)) in free_tables[&(ci, f)].iter().enumerate() {
        let up = base.clone() + fs.clone();
        if let Some((v, picks)) = table.query(&up, &iv) {
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, Some((fi, picks))));
            }
        }
    }
    best
}

/// Everything the skeleton solver reports for one level.
#[derive(Debug, Clone)]
pub struct SkeletonSolution<T> {
    pub level: usize,
    pub prices: Vec<T>,
    /// Sum of the chosen strategies' approximate revenues.
    pub score: T,
    /// Revenue from the level's buyers under `prices`.
    pub revenue: T,
    /// Every relevant extension's length lies in its interval and every
    /// inner segment has its strategy cost.
    pub valid: bool,
    /// `score ≥ b_max/512` implies `revenue ≥ score/4`.
    pub overpricing_holds: bool,
    pub b_max: T,
    pub chosen: Vec<ChosenStrategy<T>>,
    pub strategies: u128,
    /// Number of coarsening steps applied to the grids.
    pub coarsening: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkeletonConfig {
    /// Upper limit on strategies times option combinations for a single
    /// fragment; above it the grids are coarsened.
    pub work_limit: u128,
}

impl Default for SkeletonConfig {
    fn default() -> Self {
        SkeletonConfig { work_limit: 1 << 17 }
    }
}

/// Skeleton prices for level `j`.
#[allow(clippy::too_many_arguments)]
pub fn solve_skeleton<T: Scalar>(
    g: &CactusGraph,
    tree: &BcTree,
    d: &Decomposition,
    sk: &SkeletonLevel,
    segs: &Segments,
    buyers: &[Buyer<T>],
    levels: &BuyerLevels,
    config: &SkeletonConfig,
) -> Result<SkeletonSolution<T>, SkeletonError> {
    let j = sk.level;
    let m = g.edge_count();
    let at_level: Vec<usize> = levels.buyers_at_level[j].iter().copied().filter(|&i| buyers[i].is_active()).collect();
    let b_max = at_level.iter().map(|&i| buyers[i].budget.clone()).max().unwrap_or_else(T::zero);
    let empty = |b_max: T| SkeletonSolution {
        level: j,
        prices: vec![T::zero(); m],
        score: T::zero(),
        revenue: T::zero(),
        valid: true,
        overpricing_holds: true,
        b_max,
        chosen: Vec::new(),
        strategies: 0,
        coarsening: 0,
    };
    if at_level.is_empty() || b_max.is_zero() || segs.segments.is_empty() {
        return Ok(empty(b_max));
    }

    // exact integer arithmetic when every budget is a small-denominator rational
    let budgets: Vec<T> = at_level.iter().map(|&i| buyers[i].budget.clone()).collect();
    let (_, t2) = grid_exponents(m, at_level.len());
    let wide = integer_scale(&budgets, 4096).and_then(|den| {
        let scale = T::from_int(den) * T::pow2(t2 + 1);
        let top = b_max.clone() * scale.clone() * T::from_count(m * m * (m + at_level.len() + 4));
        (top.to_f64().is_some_and(|x| x < 1e36)).then_some(scale)
    });
    match wide {
        Some(scale) => {
            let to = |x: &T| (x.clone() * scale.clone()).to_i128().expect("scaled value is an integer");
            let scaled: Vec<Buyer<i128>> = buyers.iter().map(|b| Buyer::new(b.s, b.t, to(&b.budget))).collect();
            let sol = solve_skeleton_in(g, tree, d, sk, segs, &scaled, &at_level, config)?;
            let back = |x: &i128| from_i128::<T>(*x) / scale.clone();
            let prices: Vec<T> = sol.prices.iter().map(back).collect();
            Ok(finish(
                g,
                segs,
                buyers,
                &at_level,
                j,
                prices,
                back(&sol.score),
                b_max,
                sol.chosen.iter().map(|c| chosen_map(c, &back)).collect(),
                (sol.strategies, sol.coarsening),
            ))
        }
        None => {
            let sol = solve_skeleton_in(g, tree, d, sk, segs, buyers, &at_level, config)?;
            Ok(finish(g, segs, buyers, &at_level, j, sol.prices, sol.score, b_max, sol.chosen, (sol.strategies, sol.coarsening)))
        }
    }
}

fn chosen_map<N: Scalar, T: Scalar>(c: &ChosenStrategy<N>, f: &impl Fn(&N) -> T) -> ChosenStrategy<T> {
    ChosenStrategy {
        fragment: c.fragment,
        strategy: Strategy { inner: c.strategy.inner.iter().map(f).collect(), outer: c.strategy.outer.iter().map(|i| i.map(f)).collect() },
        score: f(&c.score),
        inner_segments: c.inner_segments.clone(),
        outer_segments: c.outer_segments.clone(),
        free_costs: c.free_costs.iter().map(|(s, x)| (*s, f(x))).collect(),
    }
}

struct Raw<N> {
    prices: Vec<N>,
    score: N,
    chosen: Vec<ChosenStrategy<N>>,
    strategies: u128,
    coarsening: usize,
}

#[allow(clippy::too_many_arguments)]
fn solve_skeleton_in<N: Scalar>(
    g: &CactusGraph,
    tree: &BcTree,
    d: &Decomposition,
    sk: &SkeletonLevel,
    segs: &Segments,
    buyers: &[Buyer<N>],
    at_level: &[usize],
    config: &SkeletonConfig,
) -> Result<Raw<N>, SkeletonError> {
    let j = sk.level;
    let m = g.edge_count();
    let level = &d.levels[j];
    let b_max = at_level.iter().map(|&i| buyers[i].budget.clone()).max().unwrap();
    let mut grid = make_grids(m, &b_max, at_level.len())?;

    let holders: Vec<Vec<usize>> = (0..g.vertex_count())
        .map(|v| {
            let mut fs: Vec<usize> = g.neighbors(v).iter().map(|&(_, e)| level.fragment_of_edge[e]).collect();
            fs.sort_unstable();
            fs.dedup();
            fs
        })
        .collect();
    let mut per_fragment: Vec<Vec<(usize, usize, N)>> = vec![Vec::new(); level.fragments.len()];
    for &i in at_level {
        let b = &buyers[i];
        let (a, c) = (sk.repr[b.s], sk.repr[b.t]);
        if a == c {
            continue;
        }
        let f = holders[a].iter().copied().find(|f| holders[c].contains(f)).expect("both representatives share a fragment");
        per_fragment[f].push((a, c, b.budget.clone()));
    }

    let skeletons: Vec<FragmentSkeleton> = (0..level.fragments.len()).map(|f| fragment_skeleton(g, tree, d, segs, j, f)).collect();
    let problems: Vec<FragmentProblem<'_, N>> = skeletons.iter().zip(per_fragment).map(|(fs, bs)| FragmentProblem::new(g, segs, fs, bs)).collect();
    let mut coarsening = 0;
    while let Some((f, work)) = problems.iter().map(|p| (p.fragment, p.work(&grid))).max_by_key(|x| x.1).filter(|x| x.1 > config.work_limit) {
        grid = grid.coarsened(&b_max).ok_or(SkeletonError::TooManyStrategies { fragment: f, count: work, limit: config.work_limit })?;
        coarsening += 1;
    }
    let mut tables = Vec::with_capacity(problems.len());
    let mut strategies = 0u128;
    for p in &problems {
        let t = score_strategies(p, &grid, u128::MAX)?;
        strategies += t.scores.len() as u128;
        tables.push(t);
    }
    let asm = assemble_global(tree, d, j, segs, &problems, &tables, &grid);

    let mut prices = vec![N::zero(); m];
    for (c, p) in asm.chosen.iter().zip(&problems) {
        for (e, x) in p.solve_strategy(&c.strategy).prices {
            prices[e] = x;
        }
        for (s, cost) in &c.free_costs {
            let seg = &segs.segments[*s];
            for (e, x) in ends_at(g, seg, seg.l, cost) {
                prices[e] = x;
            }
        }
    }
    Ok(Raw { prices, score: asm.score, chosen: asm.chosen, strategies, coarsening })
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    g: &CactusGraph,
    segs: &Segments,
    buyers: &[Buyer<T>],
    at_level: &[usize],
    j: usize,
    prices: Vec<T>,
    score: T,
    b_max: T,
    chosen: Vec<ChosenStrategy<T>>,
    (strategies, coarsening): (u128, usize),
) -> SkeletonSolution<T> {
    let revenue = revenue_restricted(g, &prices, buyers, at_level);
    let valid = check_validity(g, segs, &prices, &chosen);
    let overpricing_holds = score < b_max.clone() / T::from_int(512) || revenue.clone() * T::from_int(4) >= score;
    SkeletonSolution { level: j, prices, score, revenue, valid, overpricing_holds, b_max, chosen, strategies, coarsening }
}

/// Recomputes segment and extension lengths from `prices` and checks them
/// against the chosen strategies.
pub fn check_validity<T: Scalar>(g: &CactusGraph, segs: &Segments, prices: &[T], chosen: &[ChosenStrategy<T>]) -> bool {
    let lengths: Vec<T> = segs.segments.iter().map(|s| segment_length(g, prices, s)).collect();
    chosen.iter().all(|c| {
        let inner_ok = c.inner_segments.len() == c.strategy.inner.len() && c.inner_segments.iter().zip(&c.strategy.inner).all(|(s, cost)| lengths[*s] == *cost);
        let free_ok = c.free_costs.iter().all(|(s, cost)| lengths[*s] == *cost);
        let outer_ok = c.outer_segments.len() == c.strategy.outer.len()
            && c.outer_segments.iter().zip(&c.strategy.outer).all(|(ids, iv)| iv.contains(&ids.iter().fold(T::zero(), |acc, s| acc + lengths[*s].clone())));
        inner_ok && free_ok && outer_ok
    })
}
