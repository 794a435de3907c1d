//! Skeleton of a level: the part of the graph carrying paths between border
//! vertices, its compression into segments, and per-fragment views.

use std::collections::HashMap;

use crate::decomposition::{vertex_set, Decomposition};
use crate::graph::{BcTree, CactusGraph, Component, Dsu};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonSkeletonComponent {
    pub edges: Vec<usize>,
    pub anchor: usize,
    /// Fragment of the next level containing the component.
    pub fragment: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonLevel {
    pub level: usize,
    pub is_skeleton_edge: Vec<bool>,
    pub skeleton_edges: Vec<usize>,
    pub is_skeleton_vertex: Vec<bool>,
    pub components: Vec<NonSkeletonComponent>,
    pub component_of_edge: Vec<Option<usize>>,
    pub component_of_vertex: Vec<Option<usize>>,
    /// Skeleton representative of every vertex.
    pub repr: Vec<usize>,
}

/// Skeleton of level `j` (0-based).
///
/// A bridge belongs to the skeleton iff border vertices lie on both of its
/// sides; a cycle iff at least two of its vertices are borders or reach one
/// without using the cycle.
pub fn build_skeleton(g: &CactusGraph, tree: &BcTree, d: &Decomposition, j: usize) -> SkeletonLevel {
    let n = g.vertex_count();
    let m = g.edge_count();
    let level = &d.levels[j];
    let border = &level.is_border;
    let total = level.border_vertices.len();

    // borders strictly below each vertex, through components hanging from it
    let mut down = vec![0usize; n];
    let mut sub = vec![0usize; tree.components.len()];
    for c in tree.preorder().into_iter().rev() {
        let top = tree.topmost[c];
        let lower: Vec<usize> = match &tree.components[c] {
            Component::Root(_) => Vec::new(),
            Component::Bridge(e) => vec![g.other_end(*e, top)],
            Component::Cycle { vertices, .. } => vertices[1..].to_vec(),
        };
        sub[c] = usize::from(border[top]) + lower.iter().map(|&w| usize::from(border[w]) + down[w]).sum::<usize>();
        if c != 0 {
            down[top] += sub[c] - usize::from(border[top]);
        }
    }

    let mut is_skeleton_edge = vec![false; m];
    for c in 1..tree.components.len() {
        let top = tree.topmost[c];
        match &tree.components[c] {
            Component::Bridge(e) => {
                let low = g.other_end(*e, top);
                let below = usize::from(border[low]) + down[low];
                if below > 0 && total - below > 0 {
                    is_skeleton_edge[*e] = true;
                }
            }
            Component::Cycle { edges, vertices } => {
                let parts: Vec<usize> = vertices[1..].iter().map(|&w| usize::from(border[w]) + down[w]).collect();
                let top_part = total - parts.iter().sum::<usize>();
                let reaching = parts.iter().filter(|&&x| x > 0).count() + usize::from(top_part > 0);
                if reaching >= 2 {
                    for &e in edges {
                        is_skeleton_edge[e] = true;
                    }
                }
            }
            Component::Root(_) => {}
        }
    }
    let skeleton_edges: Vec<usize> = (0..m).filter(|&e| is_skeleton_edge[e]).collect();
    let mut is_skeleton_vertex = border.clone();
    for &e in &skeleton_edges {
        let (a, b) = g.endpoints(e);
        is_skeleton_vertex[a] = true;
        is_skeleton_vertex[b] = true;
    }

    let mut components = Vec::new();
    let mut component_of_edge = vec![None; m];
    let mut component_of_vertex = vec![None; n];
    let mut repr: Vec<usize> = (0..n).collect();
    if let Some(next) = d.levels.get(j + 1) {
        let mut dsu = Dsu::new(m);
        let mut at_vertex: HashMap<(usize, usize), usize> = HashMap::new();
        for e in (0..m).filter(|&e| !is_skeleton_edge[e]) {
            let f = next.fragment_of_edge[e];
            let (a, b) = g.endpoints(e);
            for v in [a, b] {
                match at_vertex.get(&(v, f)) {
                    Some(&o) => {
                        dsu.union(o, e);
                    }
                    None => {
                        at_vertex.insert((v, f), e);
                    }
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for e in (0..m).filter(|&e| !is_skeleton_edge[e]) {
            groups.entry(dsu.find(e)).or_default().push(e);
        }
        let mut lists: Vec<Vec<usize>> = groups.into_values().collect();
        lists.sort();
        for edges in lists {
            let verts = vertex_set(g, &edges);
            let anchor = verts.iter().copied().find(|&v| is_skeleton_vertex[v]).unwrap_or(verts[0]);
            let idx = components.len();
            for &e in &edges {
                component_of_edge[e] = Some(idx);
            }
            for &v in &verts {
                if !is_skeleton_vertex[v] {
                    component_of_vertex[v] = Some(idx);
                    repr[v] = anchor;
                }
            }
            components.push(NonSkeletonComponent { fragment: next.fragment_of_edge[edges[0]], edges, anchor });
        }
    }

    SkeletonLevel { level: j, is_skeleton_edge, skeleton_edges, is_skeleton_vertex, components, component_of_edge, component_of_vertex, repr }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Sorted edge ids.
    pub edges: Vec<usize>,
    /// Endpoints with `l < r`.
    pub l: usize,
    pub r: usize,
    /// Contains a cycle; otherwise a simple path.
    pub cyclic: bool,
    /// Fragment of the level that holds every edge of the segment.
    pub fragment: usize,
    /// Edges in order from `l` to `r` when the segment is a path.
    pub path: Vec<usize>,
}

impl Segment {
    pub fn vertices(&self, g: &CactusGraph) -> Vec<usize> {
        vertex_set(g, &self.edges)
    }

    pub fn other_end(&self, x: usize) -> usize {
        if x == self.l {
            self.r
        } else {
            self.l
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub segments: Vec<Segment>,
    pub segment_of_edge: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
struct SuperEdge {
    a: usize,
    b: usize,
    edges: Vec<usize>,
    cyclic: bool,
    fragment: usize,
    alive: bool,
}

/// Contracts the skeleton to a multigraph whose edges are segments.
///
/// Parallel edges inside one fragment are merged, and every non-border
/// vertex of degree two is dissolved, until neither applies.
pub fn compress_segments(g: &CactusGraph, d: &Decomposition, sk: &SkeletonLevel) -> Segments {
    let level = &d.levels[sk.level];
    let border = &level.is_border;
    let mut sup: Vec<SuperEdge> = sk
        .skeleton_edges
        .iter()
        .map(|&e| {
            let (a, b) = g.endpoints(e);
            SuperEdge { a, b, edges: vec![e], cyclic: false, fragment: level.fragment_of_edge[e], alive: true }
        })
        .collect();
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, s) in sup.iter().enumerate() {
        incident.entry(s.a).or_default().push(i);
        incident.entry(s.b).or_default().push(i);
    }
    loop {
        let mut changed = false;
        // parallel merge
        let mut by_ends: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for i in 0..sup.len() {
            if !sup[i].alive {
                continue;
            }
            let key = (sup[i].a.min(sup[i].b), sup[i].a.max(sup[i].b), sup[i].fragment);
            match by_ends.get(&key) {
                Some(&o) => {
                    let moved = std::mem::take(&mut sup[i].edges);
                    sup[o].edges.extend(moved);
                    sup[o].cyclic = true;
                    sup[i].alive = false;
                    for v in [sup[i].a, sup[i].b] {
                        incident.get_mut(&v).unwrap().retain(|&x| x != i);
                    }
                    changed = true;
                }
                None => {
                    by_ends.insert(key, i);
                }
            }
        }
        // series merge
        let mut verts: Vec<usize> = incident.keys().copied().collect();
        verts.sort_unstable();
        for v in verts {
            if border[v] {
                continue;
            }
            let inc = &incident[&v];
            if inc.len() != 2 {
                continue;
            }
            let (x, y) = (inc[0], inc[1]);
            let far_x = if sup[x].a == v { sup[x].b } else { sup[x].a };
            let far_y = if sup[y].a == v { sup[y].b } else { sup[y].a };
            if far_x == far_y || far_x == v || far_y == v {
                continue;
            }
            let moved = std::mem::take(&mut sup[y].edges);
            sup[x].edges.extend(moved);
            sup[x].cyclic |= sup[y].cyclic;
            sup[x].a = far_x;
            sup[x].b = far_y;
            sup[y].alive = false;
            incident.remove(&v);
            let list = incident.get_mut(&far_y).unwrap();
            for idx in list.iter_mut() {
                if *idx == y {
                    *idx = x;
                }
            }
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let mut segments: Vec<Segment> = sup
        .into_iter()
        .filter(|s| s.alive)
        .map(|mut s| {
            s.edges.sort_unstable();
            let (l, r) = (s.a.min(s.b), s.a.max(s.b));
            let path = if s.cyclic { Vec::new() } else { order_path(g, &s.edges, l) };
            Segment { edges: s.edges, l, r, cyclic: s.cyclic, fragment: s.fragment, path }
        })
        .collect();
    segments.sort_by(|a, b| a.edges.cmp(&b.edges));
    let mut segment_of_edge = vec![None; g.edge_count()];
    for (i, s) in segments.iter().enumerate() {
        for &e in &s.edges {
            segment_of_edge[e] = Some(i);
        }
    }
    Segments { segments, segment_of_edge }
}

fn order_path(g: &CactusGraph, edges: &[usize], start: usize) -> Vec<usize> {
    let mut left: Vec<usize> = edges.to_vec();
    let mut out = Vec::with_capacity(edges.len());
    let mut at = start;
    while !left.is_empty() {
        let pos = left
            .iter()
            .position(|&e| {
                let (a, b) = g.endpoints(e);
                a == at || b == at
            })
            .expect("segment is a path");
        let e = left.swap_remove(pos);
        at = g.other_end(e, at);
        out.push(e);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OuterExtension {
    /// Segment ids in path order from `u` to `v`.
    pub segments: Vec<usize>,
    pub u: usize,
    pub v: usize,
    /// Edges of the extension.
    pub edges: Vec<usize>,
    /// The split cycle (component id in the global block tree).
    pub cycle: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentSkeleton {
    pub fragment: usize,
    pub inner: Vec<usize>,
    pub outer: Vec<OuterExtension>,
}

/// Cycles of the skeleton whose edges lie in more than one fragment of the level.
pub fn split_cycles(tree: &BcTree, d: &Decomposition, j: usize) -> Vec<usize> {
    let level = &d.levels[j];
    (1..tree.components.len())
        .filter(|&c| match &tree.components[c] {
            Component::Cycle { edges, .. } => edges.iter().any(|&e| level.fragment_of_edge[e] != level.fragment_of_edge[edges[0]]),
            _ => false,
        })
        .collect()
}

/// Inner segments of fragment `f` and the off-fragment arcs of cycles it
/// shares with other fragments.
pub fn fragment_skeleton(g: &CactusGraph, tree: &BcTree, d: &Decomposition, segs: &Segments, j: usize, f: usize) -> FragmentSkeleton {
    let level = &d.levels[j];
    let inner: Vec<usize> = (0..segs.segments.len()).filter(|&s| segs.segments[s].fragment == f).collect();
    let mut outer = Vec::new();
    for c in split_cycles(tree, d, j) {
        let Component::Cycle { edges, vertices } = &tree.components[c] else { unreachable!() };
        let k = edges.len();
        let inside: Vec<bool> = edges.iter().map(|&e| level.fragment_of_edge[e] == f).collect();
        if !inside.iter().any(|&x| x) {
            continue;
        }
        // first position outside after an inside edge
        let start = (0..k).find(|&i| inside[i] && !inside[(i + 1) % k]).expect("proper arc");
        let mut path_edges = Vec::new();
        let mut i = (start + 1) % k;
        let u = vertices[(start + 1) % k];
        while !inside[i] {
            path_edges.push(edges[i]);
            i = (i + 1) % k;
        }
        let v = vertices[i];
        let mut seg_ids: Vec<usize> = Vec::new();
        for &e in &path_edges {
            let s = segs.segment_of_edge[e].expect("split cycles lie on the skeleton");
            if seg_ids.last() != Some(&s) {
                seg_ids.push(s);
            }
        }
        let (u, v, seg_ids) = if u <= v { (u, v, seg_ids) } else { (v, u, seg_ids.into_iter().rev().collect()) };
        let mut sorted = path_edges.clone();
        sorted.sort_unstable();
        outer.push(OuterExtension { segments: seg_ids, u, v, edges: sorted, cycle: c });
    }
    let _ = g;
    FragmentSkeleton { fragment: f, inner, outer }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_decomposition, Level};

    /// A one-level-deep decomposition with the given fragments below the root.
    fn manual(g: &CactusGraph, children: Vec<Vec<usize>>, border: Vec<usize>) -> Decomposition {
        let m = g.edge_count();
        let n = g.vertex_count();
        let mut is_border = vec![false; n];
        for &v in &border {
            is_border[v] = true;
        }
        let mut foe = vec![0; m];
        for (i, f) in children.iter().enumerate() {
            for &e in f {
                foe[e] = i;
            }
        }
        let top = Level { fragments: vec![(0..m).collect()], fragment_of_edge: vec![0; m], border_vertices: border, is_border, parent_fragment: vec![None] };
        let below = Level {
            parent_fragment: vec![Some(0); children.len()],
            fragments: children,
            fragment_of_edge: foe,
            border_vertices: (0..n).collect(),
            is_border: vec![true; n],
        };
        Decomposition { k: 2, levels: vec![top, below] }
    }

    #[test]
    fn path_between_two_borders() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let t = BcTree::build(&g, 0);
        let d = manual(&g, vec![vec![0], vec![1, 2]], vec![0, 3]);
        let sk = build_skeleton(&g, &t, &d, 0);
        assert_eq!(sk.skeleton_edges, vec![0, 1, 2]);
        let segs = compress_segments(&g, &d, &sk);
        assert_eq!(segs.segments.len(), 1);
        let s = &segs.segments[0];
        assert_eq!((s.l, s.r, s.cyclic), (0, 3, false));
        assert_eq!(s.path, vec![0, 1, 2]);
    }

    #[test]
    fn triangle_with_pendant() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        let t = BcTree::build(&g, 0);
        let d = manual(&g, vec![vec![0, 1, 2, 3]], vec![0, 3]);
        let sk = build_skeleton(&g, &t, &d, 0);
        assert_eq!(sk.skeleton_edges, vec![0, 1, 2, 3]);
    }

    #[test]
    fn no_borders_no_skeleton() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let t = BcTree::build(&g, 0);
        for border in [vec![], vec![2]] {
            let d = manual(&g, vec![vec![0, 1, 2]], border.clone());
            let sk = build_skeleton(&g, &t, &d, 0);
            assert!(sk.skeleton_edges.is_empty());
            if let Some(&b) = border.first() {
                assert!((0..4).all(|v| sk.repr[v] == b));
            }
        }
    }

    #[test]
    fn square_with_opposite_borders_is_one_cyclic_segment() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let t = BcTree::build(&g, 0);
        let d = manual(&g, vec![vec![0, 1, 2, 3]], vec![0, 2]);
        let sk = build_skeleton(&g, &t, &d, 0);
        let segs = compress_segments(&g, &d, &sk);
        assert_eq!(segs.segments.len(), 1);
        assert!(segs.segments[0].cyclic);
        assert_eq!((segs.segments[0].l, segs.segments[0].r), (0, 2));
    }

    #[test]
    fn square_with_three_borders() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let t = BcTree::build(&g, 0);
        let d = manual(&g, vec![vec![0, 1, 2, 3]], vec![0, 1, 2]);
        let sk = build_skeleton(&g, &t, &d, 0);
        let segs = compress_segments(&g, &d, &sk);
        assert_eq!(segs.segments.len(), 3);
        assert!(segs.segments.iter().all(|s| !s.cyclic));
    }

    #[test]
    fn split_cycle_has_mutual_extensions() {
        let g = CactusGraph::new(6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap();
        let t = BcTree::build(&g, 0);
        let mut d = manual(&g, vec![vec![0, 1, 5], vec![2, 3, 4]], vec![2, 5]);
        // make the split happen on the upper level itself
        d.levels[0].fragments = vec![vec![0, 1, 5], vec![2, 3, 4]];
        d.levels[0].fragment_of_edge = vec![0, 0, 1, 1, 1, 0];
        d.levels[0].parent_fragment = vec![None, None];
        let sk = build_skeleton(&g, &t, &d, 0);
        let segs = compress_segments(&g, &d, &sk);
        assert_eq!(segs.segments.len(), 2);
        let a = fragment_skeleton(&g, &t, &d, &segs, 0, 0);
        let b = fragment_skeleton(&g, &t, &d, &segs, 0, 1);
        assert_eq!(a.outer.len(), 1);
        assert_eq!(b.outer.len(), 1);
        assert_eq!(a.outer[0].segments, b.inner);
        assert_eq!(b.outer[0].segments, a.inner);
        assert_eq!((a.outer[0].u, a.outer[0].v), (2, 5));
    }

    #[test]
    fn whole_graph_fragment_has_no_extensions() {
        let g = CactusGraph::new(4, vec![(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        let t = BcTree::build(&g, 0);
        let d = build_decomposition(&g, &t);
        let sk = build_skeleton(&g, &t, &d, 0);
        let segs = compress_segments(&g, &d, &sk);
        let fs = fragment_skeleton(&g, &t, &d, &segs, 0, 0);
        assert!(fs.outer.is_empty());
        assert_eq!(fs.inner.len(), segs.segments.len());
    }
}
