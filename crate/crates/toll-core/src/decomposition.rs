//! Recursive balanced decomposition of a cactus into levels of edge-disjoint,
//! connected fragments.
//!
//! Level 0 is the whole graph. Every fragment with more than two edges is cut
//! in two phases: first into pieces of bounded edge count, then each piece
//! into at most three parts of bounded border count. Associated edge pairs
//! (the two top edges of a cycle) always stay together.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::graph::{BcTree, Buyer, CactusGraph, Component, Dsu, Subgraph};
use crate::scalar::Scalar;

/// `max(2, ⌈√(log₂ m)⌉)`.
pub fn balance_parameter(m: usize) -> usize {
    if m <= 1 {
        return 2;
    }
    let lg = (m as f64).log2();
    let mut k = lg.sqrt().ceil() as usize;
    // guard against float error at perfect squares
    while k > 1 && ((k - 1) * (k - 1)) as f64 >= lg {
        k -= 1;
    }
    k.max(2)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    /// Sorted edge ids of each fragment.
    pub fragments: Vec<Vec<usize>>,
    pub fragment_of_edge: Vec<usize>,
    /// Vertices shared by two fragments of the next level; every vertex on the last level.
    pub border_vertices: Vec<usize>,
    pub is_border: Vec<bool>,
    /// Index of the enclosing fragment one level up.
    pub parent_fragment: Vec<Option<usize>>,
}

impl Level {
    pub fn fragment_vertices(&self, g: &CactusGraph, f: usize) -> Vec<usize> {
        vertex_set(g, &self.fragments[f])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub k: usize,
    /// `levels[0]` is the whole graph.
    pub levels: Vec<Level>,
}

impl Decomposition {
    /// Number of levels, `L`.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Child fragments (indices into level `j + 1`) of fragment `f` of level `j`.
    pub fn children(&self, j: usize, f: usize) -> Vec<usize> {
        match self.levels.get(j + 1) {
            Some(next) => (0..next.fragments.len()).filter(|&c| next.parent_fragment[c] == Some(f)).collect(),
            None => Vec::new(),
        }
    }
}

pub fn vertex_set(g: &CactusGraph, edges: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = edges
        .iter()
        .flat_map(|&e| {
            let (a, b) = g.endpoints(e);
            [a, b]
        })
        .collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Vertices that appear in at least two of the edge sets.
pub fn shared_vertices(g: &CactusGraph, parts: &[Vec<usize>]) -> Vec<usize> {
    let mut count: HashMap<usize, usize> = HashMap::new();
    for p in parts {
        for v in vertex_set(g, p) {
            *count.entry(v).or_default() += 1;
        }
    }
    let mut out: Vec<usize> = count.into_iter().filter(|&(_, c)| c >= 2).map(|(v, _)| v).collect();
    out.sort_unstable();
    out
}

fn topmost_vertex(tree: &BcTree, vertices: &[usize]) -> usize {
    *vertices.iter().min_by_key(|&&v| (tree.depth[v], v)).expect("nonempty fragment")
}

fn whole_cycle_inside(tree: &BcTree, e: usize, inside: &HashSet<usize>) -> bool {
    match &tree.components[tree.component_of_edge[e]] {
        Component::Cycle { edges, .. } => edges.iter().all(|x| inside.contains(x)),
        _ => false,
    }
}

/// First phase: cut a fragment into pieces of at most `4⌈|F|/k⌉` edges.
///
/// One top edge of every cycle lying wholly inside the fragment is set aside,
/// leaving a tree. Vertices are processed bottom-up; each keeps at most one
/// open piece, which is closed once it reaches `⌈|F|/k⌉` edges. Set-aside
/// edges finally join the piece of their partner.
pub fn split_reduce_edges(g: &CactusGraph, tree: &BcTree, fragment: &[usize], k: usize) -> Vec<Vec<usize>> {
    if fragment.is_empty() {
        return Vec::new();
    }
    let inside: HashSet<usize> = fragment.iter().copied().collect();
    let threshold = fragment.len().div_ceil(k.max(1));
    let mut erased = Vec::new();
    for &e in fragment {
        if let Some(p) = tree.partner[e] {
            if e > p && inside.contains(&p) && whole_cycle_inside(tree, e, &inside) {
                erased.push(e);
            }
        }
    }
    let erased_set: HashSet<usize> = erased.iter().copied().collect();

    let vertices = vertex_set(g, fragment);
    let root = topmost_vertex(tree, &vertices);
    let mut parent_edge: HashMap<usize, usize> = HashMap::new();
    let mut depth: HashMap<usize, usize> = HashMap::from([(root, 0)]);
    let mut children: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &(w, e) in g.neighbors(v) {
            if inside.contains(&e) && !erased_set.contains(&e) && !depth.contains_key(&w) {
                depth.insert(w, depth[&v] + 1);
                parent_edge.insert(w, e);
                children.entry(v).or_default().push(w);
                queue.push_back(w);
            }
        }
    }
    debug_assert_eq!(depth.len(), vertices.len(), "fragment minus set-aside edges is a spanning tree");
    let mut order = vertices.clone();
    order.sort_by_key(|&v| (std::cmp::Reverse(depth[&v]), v));

    let mut parts: Vec<Vec<usize>> = Vec::new();
    let mut closed: Vec<bool> = Vec::new();
    let mut alive: Vec<bool> = Vec::new();
    let mut open_at: HashMap<usize, usize> = HashMap::new();
    for &v in &order {
        let mut kids = children.get(&v).cloned().unwrap_or_default();
        kids.sort_unstable();
        let mut formed: Vec<(usize, usize)> = Vec::new();
        for &u in &kids {
            let e = parent_edge[&u];
            let s = match open_at.get(&u) {
                Some(&s) => {
                    parts[s].push(e);
                    s
                }
                None => {
                    parts.push(vec![e]);
                    closed.push(false);
                    alive.push(true);
                    parts.len() - 1
                }
            };
            formed.push((e, s));
        }
        let mut dsu_local: Vec<usize> = formed.iter().map(|&(_, s)| s).collect();
        for i in 0..formed.len() {
            for j in i + 1..formed.len() {
                if tree.partner[formed[i].0] == Some(formed[j].0) {
                    let (a, b) = (dsu_local[i], dsu_local[j]);
                    if a != b {
                        let moved = std::mem::take(&mut parts[b]);
                        parts[a].extend(moved);
                        alive[b] = false;
                        for x in dsu_local.iter_mut() {
                            if *x == b {
                                *x = a;
                            }
                        }
                    }
                }
            }
        }
        let mut open: Vec<usize> = Vec::new();
        for &s in &dsu_local {
            if !open.contains(&s) {
                open.push(s);
            }
        }
        open.retain(|&s| {
            if parts[s].len() >= threshold {
                closed[s] = true;
            }
            !closed[s]
        });
        while open.len() >= 2 {
            let b = open.remove(1);
            let a = open[0];
            let moved = std::mem::take(&mut parts[b]);
            parts[a].extend(moved);
            alive[b] = false;
            if parts[a].len() >= threshold {
                closed[a] = true;
                open.remove(0);
            }
        }
        if let Some(&s) = open.first() {
            open_at.insert(v, s);
        }
    }
    let mut result: Vec<Vec<usize>> = (0..parts.len()).filter(|&s| alive[s]).map(|s| parts[s].clone()).collect();
    for &e in &erased {
        let p = tree.partner[e].unwrap();
        let holder = result.iter().position(|part| part.contains(&p)).expect("partner placed");
        result[holder].push(e);
    }
    normalize(result)
}

fn normalize(mut parts: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    parts.retain(|p| !p.is_empty());
    for p in &mut parts {
        p.sort_unstable();
    }
    parts.sort();
    parts
}

fn count_marked(g: &CactusGraph, edges: &[usize], marked: &[bool]) -> usize {
    vertex_set(g, edges).into_iter().filter(|&v| marked[v]).count()
}

/// Second phase with the default limit: parts with more than `18k` old
/// border vertices are cut into at most three.
pub fn split_reduce_border(g: &CactusGraph, tree: &BcTree, part: &[usize], old_border: &[bool], k: usize) -> Vec<Vec<usize>> {
    split_by_borders(g, tree, part, old_border, 18 * k)
}

/// Cuts `part` around a pivot component when it holds more than `limit`
/// old border vertices; otherwise returns it unchanged.
pub fn split_by_borders(g: &CactusGraph, tree: &BcTree, part: &[usize], old_border: &[bool], limit: usize) -> Vec<Vec<usize>> {
    let b = count_marked(g, part, old_border);
    if b <= limit || part.len() < 2 {
        return vec![part.to_vec()];
    }
    let vertices = vertex_set(g, part);
    let root = topmost_vertex(tree, &vertices);
    let sub = Subgraph::new(g, part, &[]);
    let local = BcTree::build(&sub.graph, sub.local_vertex[&root]);
    let global_v = |x: usize| sub.global_vertex[x];
    let global_e = |x: usize| sub.global_edge[x];

    // borders below each local component, and its size
    let count = local.components.len();
    let mut below = vec![0usize; count];
    let mut size = vec![0usize; count];
    for c in local.preorder().into_iter().rev() {
        let (edges, verts) = local.subtree_graph(&sub.graph, c);
        below[c] = verts.iter().filter(|&&x| old_border[global_v(x)]).count();
        size[c] = edges.len();
    }
    let pivot = (0..count).filter(|&c| below[c] > b / 2).min_by_key(|&c| (size[c], c)).expect("root component qualifies");

    let cut_at = match &local.components[pivot] {
        Component::Root(v) => global_v(*v),
        Component::Bridge(e) => global_v(sub.graph.other_end(*e, local.topmost[pivot])),
        Component::Cycle { edges, vertices } => {
            let cyc: HashSet<usize> = edges.iter().map(|&e| global_e(e)).collect();
            let rest: Vec<usize> = part.iter().copied().filter(|e| !cyc.contains(e)).collect();
            let mut dsu = Dsu::new(g.vertex_count());
            for &e in &rest {
                let (a, x) = g.endpoints(e);
                dsu.union(a, x);
            }
            let gv: Vec<usize> = vertices.iter().map(|&x| global_v(x)).collect();
            let weight: Vec<usize> = gv
                .iter()
                .map(|&w| {
                    let r = dsu.find(w);
                    vertices_of_rest(g, &rest, w).into_iter().filter(|&x| dsu.find(x) == r && old_border[x]).count().max(usize::from(old_border[w]))
                })
                .collect();
            match weight.iter().position(|&c| c > b / 2) {
                Some(i) => gv[i],
                None => {
                    if let Some(parts) = color_split(g, tree, part, &rest, &gv, &weight, b, &mut dsu) {
                        return parts;
                    }
                    gv[weight.iter().enumerate().max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i))).unwrap().0]
                }
            }
        }
    };
    cut_at_vertex(g, tree, part, old_border, cut_at, b)
}

fn vertices_of_rest(g: &CactusGraph, rest: &[usize], w: usize) -> Vec<usize> {
    let mut v = vertex_set(g, rest);
    v.push(w);
    v
}

/// Cycle pivot with no heavy hanging piece: colour a run of consecutive cycle
/// vertices (with everything hanging off them) black, the rest white.
#[allow(clippy::too_many_arguments)]
fn color_split(
    g: &CactusGraph,
    tree: &BcTree,
    part: &[usize],
    rest: &[usize],
    cycle_vertices: &[usize],
    weight: &[usize],
    b: usize,
    dsu: &mut Dsu,
) -> Option<Vec<Vec<usize>>> {
    let len = cycle_vertices.len();
    let (lo, hi) = (b / 3, (2 * b).div_ceil(3));
    let mut run = None;
    'search: for start in 0..len {
        let mut total = 0;
        for l in 1..len {
            total += weight[(start + l - 1) % len];
            if total > hi {
                break;
            }
            if total >= lo {
                run = Some((start, l));
                break 'search;
            }
        }
    }
    let (start, l) = run?;
    let black_roots: HashSet<usize> = (0..l).map(|i| dsu.find(cycle_vertices[(start + i) % len])).collect();
    let is_black = |x: usize, dsu: &mut Dsu| black_roots.contains(&dsu.find(x));
    let mut black = Vec::new();
    let mut white = Vec::new();
    let mut mixed = Vec::new();
    for &e in part {
        let (a, c) = g.endpoints(e);
        match (is_black(a, dsu), is_black(c, dsu)) {
            (true, true) => black.push(e),
            (false, false) => white.push(e),
            _ => mixed.push(e),
        }
    }
    let _ = rest;
    for e in mixed {
        let partner_black = tree.partner[e].is_some_and(|p| black.contains(&p));
        if partner_black {
            black.push(e);
        } else {
            white.push(e);
        }
    }
    if black.is_empty() || white.is_empty() {
        return None;
    }
    Some(normalize(vec![black, white]))
}

/// Cut at vertex `v`, repair split associated pairs, then merge pieces while
/// the union stays within `⌈b/2⌉ + 4` border vertices.
fn cut_at_vertex(g: &CactusGraph, tree: &BcTree, part: &[usize], old_border: &[bool], v: usize, b: usize) -> Vec<Vec<usize>> {
    let mut dsu = Dsu::new(g.vertex_count());
    for &e in part {
        let (a, c) = g.endpoints(e);
        if a != v && c != v {
            dsu.union(a, c);
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &e in part {
        let (a, c) = g.endpoints(e);
        let key = dsu.find(if a == v { c } else { a });
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, list)) => list.push(e),
            None => groups.push((key, vec![e])),
        }
    }
    let mut pieces: Vec<Vec<usize>> = groups.into_iter().map(|(_, l)| l).collect();

    let half_up = b.div_ceil(2);
    for &(x, y) in &tree.associated_pairs {
        let px = pieces.iter().position(|p| p.contains(&x));
        let py = pieces.iter().position(|p| p.contains(&y));
        if let (Some(px), Some(py)) = (px, py) {
            if px == py {
                continue;
            }
            let mut union = pieces[px].clone();
            union.extend(pieces[py].iter().copied());
            if count_marked(g, &union, old_border) <= half_up + 1 {
                let moved = std::mem::take(&mut pieces[py]);
                pieces[px].extend(moved);
            } else {
                pieces[py].retain(|&e| e != y);
                pieces[px].push(y);
            }
            pieces.retain(|p| !p.is_empty());
        }
    }

    let limit = half_up + 4;
    loop {
        let mut merged = false;
        'outer: for i in 0..pieces.len() {
            for j in i + 1..pieces.len() {
                let vi: BTreeSet<usize> = vertex_set(g, &pieces[i]).into_iter().collect();
                let vj: BTreeSet<usize> = vertex_set(g, &pieces[j]).into_iter().collect();
                if vi.is_disjoint(&vj) {
                    continue;
                }
                let others: HashSet<usize> = pieces.iter().enumerate().filter(|&(x, _)| x != i && x != j).flat_map(|(_, p)| vertex_set(g, p)).collect();
                let borders = vi.union(&vj).filter(|&&x| old_border[x] || others.contains(&x)).count();
                if borders <= limit {
                    let moved = std::mem::take(&mut pieces[j]);
                    pieces[i].extend(moved);
                    pieces.remove(j);
                    merged = true;
                    break 'outer;
                }
            }
        }
        if !merged {
            break;
        }
    }
    normalize(pieces)
}

/// Builds all levels until every fragment has at most two edges.
pub fn build_decomposition(g: &CactusGraph, tree: &BcTree) -> Decomposition {
    let m = g.edge_count();
    let n = g.vertex_count();
    let k = balance_parameter(m);
    let mut fragments_per_level: Vec<Vec<Vec<usize>>> = vec![vec![(0..m).collect()]];
    let mut parents: Vec<Vec<Option<usize>>> = vec![vec![None]];
    while fragments_per_level.last().unwrap().iter().any(|f| f.len() > 2) {
        let current = fragments_per_level.last().unwrap();
        let mut first: Vec<(usize, Vec<usize>)> = Vec::new();
        for (fi, f) in current.iter().enumerate() {
            if f.len() <= 2 {
                first.push((fi, f.clone()));
                continue;
            }
            let mut k_eff = k;
            let pieces = loop {
                let pieces = split_reduce_edges(g, tree, f, k_eff);
                if pieces.len() >= 2 {
                    break pieces;
                }
                k_eff *= 2;
            };
            first.extend(pieces.into_iter().map(|p| (fi, p)));
        }
        let all: Vec<Vec<usize>> = first.iter().map(|(_, p)| p.clone()).collect();
        let mut old_border = vec![false; n];
        for v in shared_vertices(g, &all) {
            old_border[v] = true;
        }
        let mut next: Vec<Vec<usize>> = Vec::new();
        let mut next_parent: Vec<Option<usize>> = Vec::new();
        let mut by_parent: Vec<Vec<Vec<usize>>> = vec![Vec::new(); current.len()];
        for (fi, p) in first {
            if current[fi].len() <= 2 {
                by_parent[fi].push(p);
            } else {
                by_parent[fi].extend(split_reduce_border(g, tree, &p, &old_border, k));
            }
        }
        for (fi, kids) in by_parent.into_iter().enumerate() {
            for kid in normalize(kids) {
                next.push(kid);
                next_parent.push(Some(fi));
            }
        }
        fragments_per_level.push(next);
        parents.push(next_parent);
    }

    let depth = fragments_per_level.len();
    let mut levels = Vec::with_capacity(depth);
    for j in 0..depth {
        let fragments = fragments_per_level[j].clone();
        let mut fragment_of_edge = vec![usize::MAX; m];
        for (fi, f) in fragments.iter().enumerate() {
            for &e in f {
                fragment_of_edge[e] = fi;
            }
        }
        let border_vertices = if j + 1 < depth { shared_vertices(g, &fragments_per_level[j + 1]) } else { (0..n).collect() };
        let mut is_border = vec![false; n];
        for &v in &border_vertices {
            is_border[v] = true;
        }
        levels.push(Level { fragments, fragment_of_edge, border_vertices, is_border, parent_fragment: parents[j].clone() });
    }
    Decomposition { k, levels }
}

/// A broken structural guarantee of a decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NotPartition { level: usize },
    Disconnected { level: usize, fragment: usize },
    PairSplit { level: usize, pair: (usize, usize) },
    TooManyChildren { level: usize, fragment: usize, children: usize, limit: usize },
    ChildTooLarge { level: usize, fragment: usize, edges: usize, limit: usize },
    TooManyBorders { level: usize, fragment: usize, borders: usize, limit: usize },
    TooManyShared { level: usize, fragment: usize, shared: usize, limit: usize },
    WrongParent { level: usize, fragment: usize },
    BordersNotNested { level: usize },
    LastLevelTooCoarse { fragment: usize },
}

/// Summary of one decomposition's sizes, used by reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionStats {
    pub depth: usize,
    pub k: usize,
    pub max_children: usize,
    pub max_borders: usize,
    /// Largest ratio numerator of shared vertices to the `2s - 2` bound, as (shared, s).
    pub worst_shared: (usize, usize),
}

/// Checks every structural guarantee: partition and connectivity of each
/// level, associated pairs kept together, at most `3k` children per
/// fragment, children of at most `4⌈|E|/k⌉` edges, at most `26k` borders per
/// fragment, at most `2s - 2` vertices shared among `s` children, and nested
/// border sets.
pub fn check_invariants(g: &CactusGraph, tree: &BcTree, d: &Decomposition) -> (Vec<Violation>, DecompositionStats) {
    let m = g.edge_count();
    let k = d.k;
    let mut out = Vec::new();
    let mut stats = DecompositionStats { depth: d.depth(), k, max_children: 0, max_borders: 0, worst_shared: (0, 1) };
    for (j, level) in d.levels.iter().enumerate() {
        let mut seen = vec![0usize; m];
        for f in &level.fragments {
            f.iter().for_each(|&e| seen[e] += 1);
        }
        if seen.iter().any(|&c| c != 1) || level.fragments.iter().enumerate().any(|(i, f)| f.iter().any(|&e| level.fragment_of_edge[e] != i)) {
            out.push(Violation::NotPartition { level: j });
        }
        for (i, f) in level.fragments.iter().enumerate() {
            if f.is_empty() || crate::graph::edge_components(g, f).len() != 1 {
                out.push(Violation::Disconnected { level: j, fragment: i });
            }
            let borders = vertex_set(g, f).into_iter().filter(|&v| level.is_border[v]).count();
            stats.max_borders = stats.max_borders.max(borders);
            if borders > 26 * k {
                out.push(Violation::TooManyBorders { level: j, fragment: i, borders, limit: 26 * k });
            }
            if j > 0 {
                let parent = level.parent_fragment[i];
                if parent.is_none_or(|p| f.iter().any(|&e| d.levels[j - 1].fragment_of_edge[e] != p)) {
                    out.push(Violation::WrongParent { level: j, fragment: i });
                }
            }
        }
        for &(a, b) in &tree.associated_pairs {
            if level.fragment_of_edge[a] != level.fragment_of_edge[b] {
                out.push(Violation::PairSplit { level: j, pair: (a, b) });
            }
        }
        if j + 1 < d.depth() {
            let next = &d.levels[j + 1];
            if level.border_vertices.iter().any(|&v| !next.is_border[v]) {
                out.push(Violation::BordersNotNested { level: j });
            }
            for (i, f) in level.fragments.iter().enumerate() {
                let kids: Vec<Vec<usize>> = d.children(j, i).into_iter().map(|c| next.fragments[c].clone()).collect();
                let s = kids.len();
                stats.max_children = stats.max_children.max(s);
                if s > 3 * k {
                    out.push(Violation::TooManyChildren { level: j, fragment: i, children: s, limit: 3 * k });
                }
                let limit = 4 * f.len().div_ceil(k);
                if let Some(big) = kids.iter().map(|c| c.len()).max().filter(|&e| e > limit) {
                    out.push(Violation::ChildTooLarge { level: j + 1, fragment: i, edges: big, limit });
                }
                let shared = shared_vertices(g, &kids).len();
                if s > 0 && shared * stats.worst_shared.1.max(1) > stats.worst_shared.0 * (2 * s - 2).max(1) {
                    stats.worst_shared = (shared, s);
                }
                if shared > (2 * s).saturating_sub(2) {
                    out.push(Violation::TooManyShared { level: j, fragment: i, shared, limit: (2 * s).saturating_sub(2) });
                }
            }
        } else {
            for (i, f) in level.fragments.iter().enumerate() {
                if f.len() > 2 {
                    out.push(Violation::LastLevelTooCoarse { fragment: i });
                }
            }
        }
    }
    (out, stats)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuyerLevels {
    /// Last level (0-based) at which the buyer's terminals share a fragment.
    pub level_of_buyer: Vec<usize>,
    /// Fragment at that level holding both terminals (smallest index).
    pub fragment_of_buyer: Vec<usize>,
    pub buyers_at_level: Vec<Vec<usize>>,
}

/// Assigns each buyer to the deepest level whose fragments still connect its
/// terminals. Fragments are connected, so sharing a fragment suffices.
pub fn assign_buyers<T: Scalar>(g: &CactusGraph, d: &Decomposition, buyers: &[Buyer<T>]) -> BuyerLevels {
    let n = g.vertex_count();
    let holders: Vec<Vec<HashSet<usize>>> = d
        .levels
        .iter()
        .map(|lvl| {
            let mut h = vec![HashSet::new(); n];
            for (fi, f) in lvl.fragments.iter().enumerate() {
                for &e in f {
                    let (a, b) = g.endpoints(e);
                    h[a].insert(fi);
                    h[b].insert(fi);
                }
            }
            h
        })
        .collect();
    let mut level_of_buyer = Vec::with_capacity(buyers.len());
    let mut fragment_of_buyer = Vec::with_capacity(buyers.len());
    let mut buyers_at_level = vec![Vec::new(); d.depth()];
    for (i, b) in buyers.iter().enumerate() {
        let level = (0..d.depth()).rev().find(|&j| !holders[j][b.s].is_disjoint(&holders[j][b.t])).unwrap_or(0);
        let fragment = holders[level][b.s].intersection(&holders[level][b.t]).min().copied().unwrap_or(0);
        level_of_buyer.push(level);
        fragment_of_buyer.push(fragment);
        buyers_at_level[level].push(i);
    }
    BuyerLevels { level_of_buyer, fragment_of_buyer, buyers_at_level }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;

    fn path(m: usize) -> CactusGraph {
        CactusGraph::new(m + 1, (0..m).map(|i| (i, i + 1)).collect()).unwrap()
    }

    #[test]
    fn balance_parameter_values() {
        assert_eq!(balance_parameter(1), 2);
        assert_eq!(balance_parameter(16), 2);
        assert_eq!(balance_parameter(17), 3);
        assert_eq!(balance_parameter(200), 3);
        assert_eq!(balance_parameter(512), 3);
        assert_eq!(balance_parameter(513), 4);
    }

    #[test]
    fn path_of_eight_splits_into_pairs() {
        let g = path(8);
        let t = BcTree::build(&g, 0);
        let parts = split_reduce_edges(&g, &t, &(0..8).collect::<Vec<_>>(), 4);
        assert_eq!(parts, vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7]]);
    }

    #[test]
    fn triangle_splits_off_the_bottom_edge() {
        let g = CactusGraph::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let t = BcTree::build(&g, 0);
        assert_eq!(split_reduce_edges(&g, &t, &[0, 1, 2], 4), vec![vec![0, 2], vec![1]]);
        assert_eq!(split_reduce_edges(&g, &t, &[0, 1, 2], 2), vec![vec![0, 1, 2]]);
        let d = build_decomposition(&g, &t);
        assert_eq!(d.depth(), 2);
        assert_eq!(d.levels[1].fragments, vec![vec![0, 2], vec![1]]);
        assert_eq!(d.levels[0].border_vertices, vec![1, 2]);
    }

    #[test]
    fn single_edge_has_one_level() {
        let g = path(1);
        let d = build_decomposition(&g, &BcTree::build(&g, 0));
        assert_eq!(d.depth(), 1);
        assert_eq!(d.levels[0].fragments, vec![vec![0]]);
        assert_eq!(d.levels[0].border_vertices, vec![0, 1]);
    }

    #[test]
    fn border_split_below_limit_is_identity() {
        let g = path(5);
        let t = BcTree::build(&g, 0);
        let marked = vec![true; 6];
        assert_eq!(split_by_borders(&g, &t, &[0, 1, 2, 3, 4], &marked, 6), vec![vec![0, 1, 2, 3, 4]]);
    }

    #[test]
    fn star_is_cut_at_its_center() {
        let leaves = 20;
        let g = CactusGraph::new(leaves + 1, (1..=leaves).map(|i| (0, i)).collect()).unwrap();
        let t = BcTree::build(&g, 0);
        let mut marked = vec![true; leaves + 1];
        marked[0] = false;
        let all: Vec<usize> = (0..leaves).collect();
        let parts = split_by_borders(&g, &t, &all, &marked, 4);
        assert_eq!(parts.len(), 2);
        for p in &parts {
            assert!(vertex_set(&g, p).contains(&0));
            // old borders plus the shared centre
            assert!(count_marked(&g, p, &marked) < leaves / 2 + 4);
        }
    }

    #[test]
    fn small_star_merges_back() {
        let g = CactusGraph::new(7, (1..=6).map(|i| (0, i)).collect()).unwrap();
        let t = BcTree::build(&g, 0);
        let mut marked = vec![true; 7];
        marked[0] = false;
        let parts = split_by_borders(&g, &t, &(0..6).collect::<Vec<_>>(), &marked, 2);
        assert_eq!(parts.len(), 1);
    }

    #[test]
    fn cycle_pivot_colors_consecutive_vertices() {
        // hexagon with a pendant border leaf at every cycle vertex
        let mut edges: Vec<(usize, usize)> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        edges.extend((0..6).map(|i| (i, 6 + i)));
        let g = CactusGraph::new(12, edges).unwrap();
        let t = BcTree::build(&g, 0);
        let mut marked = vec![false; 12];
        marked[6..].fill(true);
        let parts = split_by_borders(&g, &t, &(0..12).collect::<Vec<_>>(), &marked, 3);
        assert_eq!(parts.len(), 2);
        for p in &parts {
            let c = count_marked(&g, p, &marked);
            assert!((2..=4).contains(&c), "{parts:?}");
        }
        let pair = t.associated_pairs[0];
        assert!(parts.iter().any(|p| p.contains(&pair.0) && p.contains(&pair.1)));
    }

    #[test]
    fn buyers_land_on_deepest_shared_level() {
        let g = path(8);
        let t = BcTree::build(&g, 0);
        let d = build_decomposition(&g, &t);
        let buyers = vec![Buyer::new(0, 1, Rational::from_int(1)), Buyer::new(0, 8, Rational::from_int(1))];
        let bl = assign_buyers(&g, &d, &buyers);
        assert_eq!(bl.level_of_buyer[0], d.depth() - 1);
        assert_eq!(bl.level_of_buyer[1], 0);
    }
}
