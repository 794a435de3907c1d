//! Cactus graphs, validation and the rooted tree of biconnected components.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CactusError {
    #[error("graph has no vertices")]
    Empty,
    #[error("edge {edge} references vertex {vertex} outside [0, {count})")]
    VertexOutOfRange { edge: usize, vertex: usize, count: usize },
    #[error("edge {0} is a self-loop")]
    SelfLoop(usize),
    #[error("edge {0} is parallel to an earlier edge")]
    ParallelEdge(usize),
    #[error("graph is disconnected: vertex {0} unreachable from vertex 0")]
    Disconnected(usize),
    #[error("edge {0} lies on two simple cycles")]
    NotCactus(usize),
}

/// A validated cactus: simple, connected, every edge on at most one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CactusGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl CactusGraph {
    /// Validates a raw edge list.
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, CactusError> {
        if vertex_count == 0 {
            return Err(CactusError::Empty);
        }
        let mut seen = HashSet::new();
        let mut adj = vec![Vec::new(); vertex_count];
        for (e, &(u, v)) in edges.iter().enumerate() {
            for w in [u, v] {
                if w >= vertex_count {
                    return Err(CactusError::VertexOutOfRange { edge: e, vertex: w, count: vertex_count });
                }
            }
            if u == v {
                return Err(CactusError::SelfLoop(e));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(CactusError::ParallelEdge(e));
            }
            adj[u].push((v, e));
            adj[v].push((u, e));
        }
        let g = CactusGraph { n: vertex_count, edges, adj };
        g.check_connected()?;
        g.check_cactus()?;
        Ok(g)
    }

    fn check_connected(&self) -> Result<(), CactusError> {
        let dist = bfs_hops(self, 0);
        match dist.iter().position(|d| d.is_none()) {
            Some(v) => Err(CactusError::Disconnected(v)),
            None => Ok(()),
        }
    }

    fn check_cactus(&self) -> Result<(), CactusError> {
        let dfs = Dfs::run(self, 0);
        let mut covered = vec![false; self.edges.len()];
        for &(low, high, back) in &dfs.back_edges {
            covered[back] = true;
            let mut x = low;
            while x != high {
                let pe = dfs.parent_edge[x].expect("non-root has parent edge");
                if covered[pe] {
                    return Err(CactusError::NotCactus(pe));
                }
                covered[pe] = true;
                x = dfs.parent[x].expect("non-root has parent");
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// `(neighbor, edge)` pairs incident to `v`.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn other_end(&self, e: usize, v: usize) -> usize {
        let (a, b) = self.edges[e];
        if a == v {
            b
        } else {
            a
        }
    }
}

/// Hop distance from `src`; `None` for unreachable vertices.
pub fn bfs_hops(g: &CactusGraph, src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.vertex_count()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &(w, _) in g.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

struct Dfs {
    parent: Vec<Option<usize>>,
    parent_edge: Vec<Option<usize>>,
    /// `(descendant, ancestor, edge)` for every non-tree edge.
    back_edges: Vec<(usize, usize, usize)>,
}

impl Dfs {
    fn run(g: &CactusGraph, root: usize) -> Self {
        let n = g.vertex_count();
        let mut parent = vec![None; n];
        let mut parent_edge = vec![None; n];
        let mut depth = vec![usize::MAX; n];
        let mut back_edges = Vec::new();
        let mut next = vec![0usize; n];
        depth[root] = 0;
        let mut stack = vec![root];
        while let Some(&v) = stack.last() {
            if next[v] == g.neighbors(v).len() {
                stack.pop();
                continue;
            }
            let (w, e) = g.neighbors(v)[next[v]];
            next[v] += 1;
            if Some(e) == parent_edge[v] {
                continue;
            }
            if depth[w] == usize::MAX {
                depth[w] = depth[v] + 1;
                parent[w] = Some(v);
                parent_edge[w] = Some(e);
                stack.push(w);
            } else if depth[w] < depth[v] {
                back_edges.push((v, w, e));
            }
        }
        Dfs { parent, parent_edge, back_edges }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Component {
    /// The special single-vertex component at the root.
    Root(usize),
    Bridge(usize),
    /// Edges and vertices in cyclic order starting from the topmost vertex;
    /// `edges[i]` joins `vertices[i]` and `vertices[(i + 1) % len]`.
    Cycle {
        edges: Vec<usize>,
        vertices: Vec<usize>,
    },
}

impl Component {
    pub fn edges(&self) -> Vec<usize> {
        match self {
            Component::Root(_) => Vec::new(),
            Component::Bridge(e) => vec![*e],
            Component::Cycle { edges, .. } => edges.clone(),
        }
    }
}

/// Rooted tree of biconnected components.
#[derive(Debug, Clone)]
pub struct BcTree {
    pub root: usize,
    pub components: Vec<Component>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub topmost: Vec<usize>,
    /// Component in which the vertex is not topmost; the root component for the root.
    pub main_component: Vec<usize>,
    pub component_of_edge: Vec<usize>,
    pub associated_pairs: Vec<(usize, usize)>,
    /// Associated partner of an edge, if any.
    pub partner: Vec<Option<usize>>,
    /// Hop distance of each vertex from the root.
    pub depth: Vec<usize>,
}

impl BcTree {
    pub fn build(g: &CactusGraph, root: usize) -> Self {
        let n = g.vertex_count();
        let m = g.edge_count();
        let dfs = Dfs::run(g, root);

        let mut raw: Vec<(Component, usize)> = Vec::new();
        let mut on_cycle = vec![false; m];
        for &(low, high, back) in &dfs.back_edges {
            let mut path_vertices = vec![low];
            let mut path_edges = Vec::new();
            let mut x = low;
            while x != high {
                path_edges.push(dfs.parent_edge[x].unwrap());
                x = dfs.parent[x].unwrap();
                path_vertices.push(x);
            }
            // path runs low .. high; reverse so it starts at the topmost vertex
            path_vertices.reverse();
            path_edges.reverse();
            let mut vertices = path_vertices;
            let mut edges = path_edges;
            edges.push(back);
            if back < edges[0] {
                let top = vertices[0];
                vertices = std::iter::once(top).chain(vertices[1..].iter().rev().copied()).collect();
                edges.reverse();
            }
            for &e in &edges {
                on_cycle[e] = true;
            }
            raw.push((Component::Cycle { edges, vertices }, high));
        }
        for v in 0..n {
            if let Some(e) = dfs.parent_edge[v] {
                if !on_cycle[e] {
                    raw.push((Component::Bridge(e), dfs.parent[v].unwrap()));
                }
            }
        }
        raw.sort_by_key(|(c, _)| c.edges().into_iter().min());

        let mut components = vec![Component::Root(root)];
        let mut topmost = vec![root];
        for (c, top) in raw {
            components.push(c);
            topmost.push(top);
        }
        let count = components.len();
        let mut component_of_edge = vec![usize::MAX; m];
        let mut main_component = vec![0usize; n];
        let mut associated_pairs = Vec::new();
        let mut partner = vec![None; m];
        for (ci, c) in components.iter().enumerate() {
            match c {
                Component::Root(_) => {}
                Component::Bridge(e) => {
                    component_of_edge[*e] = ci;
                    let lower = g.other_end(*e, topmost[ci]);
                    main_component[lower] = ci;
                }
                Component::Cycle { edges, vertices } => {
                    for &e in edges {
                        component_of_edge[e] = ci;
                    }
                    for &v in &vertices[1..] {
                        main_component[v] = ci;
                    }
                    let a = edges[0];
                    let b = *edges.last().unwrap();
                    associated_pairs.push((a.min(b), a.max(b)));
                    partner[a] = Some(b);
                    partner[b] = Some(a);
                }
            }
        }
        associated_pairs.sort();
        let mut parent = vec![None; count];
        let mut children = vec![Vec::new(); count];
        for ci in 1..count {
            let p = main_component[topmost[ci]];
            parent[ci] = Some(p);
            children[p].push(ci);
        }
        let depth = bfs_hops(g, root).into_iter().map(|d| d.unwrap_or(usize::MAX)).collect();
        BcTree { root, components, parent, children, topmost, main_component, component_of_edge, associated_pairs, partner, depth }
    }

    /// Edges and vertices of all descendants of `c`, inclusive.
    pub fn subtree_graph(&self, g: &CactusGraph, c: usize) -> (Vec<usize>, Vec<usize>) {
        let mut edges = Vec::new();
        let mut vertices = HashSet::new();
        let mut stack = vec![c];
        while let Some(x) = stack.pop() {
            vertices.insert(self.topmost[x]);
            for e in self.components[x].edges() {
                let (a, b) = g.endpoints(e);
                vertices.insert(a);
                vertices.insert(b);
                edges.push(e);
            }
            stack.extend(self.children[x].iter().copied());
        }
        edges.sort_unstable();
        let mut vertices: Vec<usize> = vertices.into_iter().collect();
        vertices.sort_unstable();
        (edges, vertices)
    }

    /// Components in preorder (parents before children).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.components.len());
        let mut stack = vec![0];
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children[x].iter().rev().copied());
        }
        out
    }
}

/// Edges lying on at least one simple `s`–`t` path: the blocks along the
/// block-tree path between the two vertices.
pub fn simple_path_edges(g: &CactusGraph, s: usize, t: usize) -> Vec<usize> {
    if s == t {
        return Vec::new();
    }
    let tree = BcTree::build(g, s);
    let mut out = Vec::new();
    let mut c = tree.main_component[t];
    while c != 0 {
        out.extend(tree.components[c].edges());
        c = tree.parent[c].expect("non-root component has a parent");
    }
    out.sort_unstable();
    out
}

/// A connected edge subset of a larger graph, re-indexed as its own cactus.
///
/// Local vertex and edge ids follow ascending global ids.
#[derive(Debug, Clone)]
pub struct Subgraph {
    pub graph: CactusGraph,
    pub global_vertex: Vec<usize>,
    pub global_edge: Vec<usize>,
    pub local_vertex: HashMap<usize, usize>,
}

impl Subgraph {
    /// Builds the subgraph induced by `edges`; `extra` adds isolated-in-`edges`
    /// vertices (used for single-vertex subgraphs).
    pub fn new(g: &CactusGraph, edges: &[usize], extra: &[usize]) -> Self {
        let mut global_edge = edges.to_vec();
        global_edge.sort_unstable();
        global_edge.dedup();
        let mut verts: Vec<usize> = global_edge
            .iter()
            .flat_map(|&e| {
                let (a, b) = g.endpoints(e);
                [a, b]
            })
            .chain(extra.iter().copied())
            .collect();
        verts.sort_unstable();
        verts.dedup();
        let local_vertex: HashMap<usize, usize> = verts.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let local_edges = global_edge
            .iter()
            .map(|&e| {
                let (a, b) = g.endpoints(e);
                (local_vertex[&a], local_vertex[&b])
            })
            .collect();
        let graph = CactusGraph::new(verts.len().max(1), local_edges).expect("connected sub-cactus");
        Subgraph { graph, global_vertex: verts, global_edge, local_vertex }
    }
}

/// Connected components of the subgraph formed by `edges` (vertex sets, as
/// union-find labels over all vertices touched).
pub fn edge_components(g: &CactusGraph, edges: &[usize]) -> Vec<Vec<usize>> {
    let mut dsu = Dsu::new(g.vertex_count());
    let mut touched = HashSet::new();
    for &e in edges {
        let (a, b) = g.endpoints(e);
        dsu.union(a, b);
        touched.insert(a);
        touched.insert(b);
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for &e in edges {
        groups.entry(dsu.find(g.endpoints(e).0)).or_default().push(e);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    for c in &mut out {
        c.sort_unstable();
    }
    out.sort();
    out
}

#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buyer<T> {
    pub s: usize,
    pub t: usize,
    pub budget: T,
}

impl<T: Scalar> Buyer<T> {
    pub fn new(s: usize, t: usize, budget: T) -> Self {
        Buyer { s, t, budget }
    }

    /// Whether the buyer can contribute revenue at all.
    pub fn is_active(&self) -> bool {
        self.s != self.t && self.budget > T::zero()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Graph(#[from] CactusError),
    #[error("buyer {buyer} references vertex {vertex} outside the graph")]
    BuyerVertex { buyer: usize, vertex: usize },
    #[error("buyer {0} has a negative budget")]
    NegativeBudget(usize),
}

/// Graph plus buyers: the problem input.
#[derive(Debug, Clone)]
pub struct CactusInstance<T> {
    pub graph: CactusGraph,
    pub buyers: Vec<Buyer<T>>,
}

impl<T: Scalar> CactusInstance<T> {
    pub fn new(graph: CactusGraph, buyers: Vec<Buyer<T>>) -> Result<Self, InstanceError> {
        for (i, b) in buyers.iter().enumerate() {
            for v in [b.s, b.t] {
                if v >= graph.vertex_count() {
                    return Err(InstanceError::BuyerVertex { buyer: i, vertex: v });
                }
            }
            if b.budget < T::zero() {
                return Err(InstanceError::NegativeBudget(i));
            }
        }
        Ok(CactusInstance { graph, buyers })
    }

    pub fn max_budget(&self) -> T {
        self.buyers.iter().map(|b| b.budget.clone()).max().unwrap_or_else(T::zero)
    }
}
