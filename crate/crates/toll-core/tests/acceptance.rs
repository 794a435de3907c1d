//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use toll_core::decomposition::check_invariants;
use toll_core::engine::{prepare, solve_prepared, EngineConfig, Prepared, Solution};
use toll_core::evaluator::{allocate, revenue_restricted, Purchase};
use toll_core::generator::{random_instance, random_rooted, GenParams};
use toll_core::nonskeleton::solve_nonskeleton;
use toll_core::oracle::{oracle_grid, oracle_rooted, GridSpec};
use toll_core::rooted::solve_rooted;
use toll_core::skeleton::{build_skeleton, compress_segments, fragment_skeleton};
use toll_core::skeleton_solver::{check_validity, make_grids, round_prices, segment_length, solve_skeleton, SkeletonConfig};
use toll_core::{Buyer, CactusGraph, Instance, Rational, Scalar};

use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ROOTED_COUNT: u64 = 300;
const ROOTED_LIMIT: Duration = Duration::from_secs(60);
const ROOTED_GUARD: u128 = 1 << 40;

const CORPUS_SIZE: u64 = 100;
const CORPUS_LIMIT: Duration = Duration::from_secs(600);
/// Skeleton factor 2048 plus non-skeleton factor 4.
const GUARANTEE_FACTOR: i64 = 2052;
const NONSKELETON_FACTOR: i64 = 4;
const GRID_GUARD: u128 = 50_000_000;

const DECOMP_COUNT: u64 = 50;
const DECOMP_LIMIT: Duration = Duration::from_secs(30);

/// Exhaustive path checks run on instances up to this many edges.
const PATH_CHECK_EDGES: usize = 12;

const ROUNDING_VECTORS: u64 = 100;
const ROUNDING_ADDITIVE: i64 = 1024;
const OVERPRICING_THRESHOLD: i64 = 512;
const OVERPRICING_FACTOR: i64 = 4;

fn r(n: i64) -> Rational {
    Rational::from_int(n)
}

fn corpus_params(seed: u64) -> GenParams {
    GenParams { edges: 10, buyers: 5, max_budget: 8, cycle_prob: 0.5, seed }
}

struct Solved {
    inst: Instance,
    prep: Prepared,
    sol: Solution<Rational>,
}

fn corpus() -> Vec<Solved> {
    (0..CORPUS_SIZE)
        .map(|seed| {
            let inst: Instance = random_instance(&corpus_params(seed));
            let prep = prepare(&inst);
            let sol = solve_prepared(&inst, &prep, &EngineConfig::default()).expect("engine runs on the corpus");
            Solved { inst, prep, sol }
        })
        .collect()
}

/// Every vertex-simple `s`–`t` path as an edge list.
fn simple_paths(g: &CactusGraph, s: usize, t: usize) -> Vec<Vec<usize>> {
    fn go(g: &CactusGraph, at: usize, t: usize, seen: &mut Vec<bool>, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if at == t {
            out.push(path.clone());
            return;
        }
        for &(w, e) in g.neighbors(at) {
            if !seen[w] {
                seen[w] = true;
                path.push(e);
                go(g, w, t, seen, path, out);
                path.pop();
                seen[w] = false;
            }
        }
    }
    let mut seen = vec![false; g.vertex_count()];
    seen[s] = true;
    let mut out = Vec::new();
    go(g, s, t, &mut seen, &mut Vec::new(), &mut out);
    out
}

fn cost(prices: &[Rational], path: &[usize]) -> Rational {
    path.iter().fold(r(0), |acc, &e| acc + prices[e].clone())
}

fn active_at(inst: &Instance, prep: &Prepared, j: usize) -> Vec<usize> {
    prep.levels.buyers_at_level[j].iter().copied().filter(|&i| inst.buyers[i].is_active()).collect()
}

type Outcome = Result<String, String>;

fn rooted_exactness() -> Outcome {
    let start = Instant::now();
    for seed in 0..ROOTED_COUNT {
        let inst = random_rooted::<Rational>(seed, 8, 4, 6);
        let alg = solve_rooted(&inst).map_err(|e| format!("seed {seed}: {e}"))?.revenue;
        let opt = oracle_rooted(&inst, ROOTED_GUARD).map_err(|e| format!("seed {seed}: {e}"))?.revenue;
        if alg != opt {
            return Err(format!("seed {seed}: solver {alg}, oracle {opt}"));
        }
    }
    let t = start.elapsed();
    if t > ROOTED_LIMIT {
        return Err(format!("took {t:.1?}"));
    }
    Ok(format!("{ROOTED_COUNT} instances equal, {t:.1?}"))
}

fn guarantee(corpus: &[Solved], solve_time: Duration) -> Outcome {
    let start = Instant::now();
    let mut worst: Option<(Rational, u64)> = None;
    for (seed, c) in corpus.iter().enumerate() {
        let g = &c.inst.graph;
        let grid = GridSpec::default_for(g.edge_count(), &c.inst.buyers);
        let opt = oracle_grid(g, &c.inst.buyers, &grid, &[], GRID_GUARD).map_err(|e| format!("seed {seed}: {e}"))?.revenue;
        let l = c.sol.depth as i64;
        if c.sol.revenue.clone() * r(GUARANTEE_FACTOR * l) < opt {
            return Err(format!("seed {seed}: ALG {} · {GUARANTEE_FACTOR} · {l} < oracle {opt}", c.sol.revenue));
        }
        if !opt.is_zero() {
            let ratio = if c.sol.revenue.is_zero() { return Err(format!("seed {seed}: ALG 0, oracle {opt}")) } else { opt / c.sol.revenue.clone() };
            if worst.as_ref().is_none_or(|(w, _)| ratio > *w) {
                worst = Some((ratio, seed as u64));
            }
        }
    }
    let t = solve_time + start.elapsed();
    if t > CORPUS_LIMIT {
        return Err(format!("took {t:.1?}"));
    }
    let (w, s) = worst.unwrap_or((r(1), 0));
    Ok(format!("worst oracle/ALG {w} (≈{:.3}, seed {s}), {t:.1?}", w.to_f64().unwrap()))
}

fn nonskeleton_factor(corpus: &[Solved]) -> Outcome {
    let mut checked = 0;
    let mut worst = r(0);
    for (seed, c) in corpus.iter().enumerate() {
        let g = &c.inst.graph;
        let d = &c.prep.decomposition;
        for j in 0..d.depth().saturating_sub(1) {
            let at = active_at(&c.inst, &c.prep, j);
            if at.is_empty() {
                continue;
            }
            let sk = build_skeleton(g, &c.prep.tree, d, j);
            let plan = solve_nonskeleton(g, d, &sk, &c.inst.buyers, &c.prep.levels);
            let alg = revenue_restricted(g, &plan.prices, &c.inst.buyers, &at);
            let level_buyers: Vec<Buyer<Rational>> = at.iter().map(|&i| c.inst.buyers[i].clone()).collect();
            let grid = GridSpec::default_for(g.edge_count(), &level_buyers);
            let opt = oracle_grid(g, &level_buyers, &grid, &sk.skeleton_edges, GRID_GUARD).map_err(|e| format!("seed {seed} level {j}: {e}"))?.revenue;
            if alg.clone() * r(NONSKELETON_FACTOR) < opt {
                return Err(format!("seed {seed} level {j}: non-skeleton {alg}, oracle {opt}"));
            }
            if !alg.is_zero() && opt.clone() / alg.clone() > worst {
                worst = opt / alg;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} levels, worst oracle/ALG {worst}"))
}

fn decomposition_invariants() -> Outcome {
    let start = Instant::now();
    let mut deepest = 0;
    let mut borders = 0;
    for seed in 0..DECOMP_COUNT {
        let m = 20 + (seed as usize * 37) % 181;
        let inst: Instance = random_instance(&GenParams { edges: m, buyers: 0, max_budget: 1, cycle_prob: 0.5, seed });
        let prep = prepare(&inst);
        let (violations, stats) = check_invariants(&inst.graph, &prep.tree, &prep.decomposition);
        if let Some(v) = violations.first() {
            return Err(format!("seed {seed} (m = {m}): {v:?}"));
        }
        deepest = deepest.max(stats.depth);
        borders = borders.max(stats.max_borders);
    }
    let t = start.elapsed();
    if t > DECOMP_LIMIT {
        return Err(format!("took {t:.1?}"));
    }
    Ok(format!("{DECOMP_COUNT} cacti, depth ≤ {deepest}, borders per fragment ≤ {borders}, {t:.1?}"))
}

fn skeleton_structure(corpus: &[Solved]) -> Outcome {
    let mut levels = 0;
    for (seed, c) in corpus.iter().enumerate().filter(|(_, c)| c.inst.graph.edge_count() <= PATH_CHECK_EDGES) {
        let g = &c.inst.graph;
        let d = &c.prep.decomposition;
        let fail = |j: usize, what: String| Err(format!("seed {seed} level {j}: {what}"));
        for j in 0..d.depth() {
            let level = &d.levels[j];
            let sk = build_skeleton(g, &c.prep.tree, d, j);

            // skeleton = union of simple paths between borders
            let mut union = BTreeSet::new();
            for (a, &u) in level.border_vertices.iter().enumerate() {
                for &v in &level.border_vertices[a + 1..] {
                    for p in simple_paths(g, u, v) {
                        if let Some(e) = p.iter().find(|&&e| !sk.is_skeleton_edge[e]) {
                            return fail(j, format!("path {u}-{v} leaves the skeleton at edge {e}"));
                        }
                        union.extend(p);
                    }
                }
            }
            if union.into_iter().collect::<Vec<_>>() != sk.skeleton_edges {
                return fail(j, "skeleton has edges on no border-to-border path".into());
            }

            for (ci, comp) in sk.components.iter().enumerate() {
                let vs: BTreeSet<usize> = comp
                    .edges
                    .iter()
                    .flat_map(|&e| {
                        let (a, b) = g.endpoints(e);
                        [a, b]
                    })
                    .collect();
                let on_sk: Vec<usize> = vs.iter().copied().filter(|&v| sk.is_skeleton_vertex[v]).collect();
                if on_sk != vec![comp.anchor] {
                    return fail(j, format!("component {ci} touches skeleton vertices {on_sk:?}"));
                }
                for &v in vs.iter().filter(|&&v| v != comp.anchor) {
                    if sk.repr[v] != comp.anchor {
                        return fail(j, format!("vertex {v} represented by {} instead of {}", sk.repr[v], comp.anchor));
                    }
                    for w in (0..g.vertex_count()).filter(|&w| sk.is_skeleton_vertex[w] && w != comp.anchor) {
                        if simple_paths(g, v, w).iter().any(|p| {
                            !p.iter().any(|&e| {
                                let (a, b) = g.endpoints(e);
                                a == comp.anchor || b == comp.anchor
                            })
                        }) {
                            return fail(j, format!("path {v}-{w} avoids anchor {}", comp.anchor));
                        }
                    }
                }
            }

            let segs = compress_segments(g, d, &sk);
            let mut owner = vec![None; g.edge_count()];
            for f in 0..level.fragments.len() {
                let fs = fragment_skeleton(g, &c.prep.tree, d, &segs, j, f);
                for &s in &fs.inner {
                    for &e in &segs.segments[s].edges {
                        if level.fragment_of_edge[e] != f || owner[e].replace(f).is_some() {
                            return fail(j, format!("inner segment {s} of fragment {f} misplaced"));
                        }
                    }
                }
                let mut used = BTreeSet::new();
                for ext in &fs.outer {
                    if ext.edges.iter().any(|&e| level.fragment_of_edge[e] == f || !used.insert(e)) {
                        return fail(j, format!("outer extension {}-{} of fragment {f} overlaps", ext.u, ext.v));
                    }
                    let mut p: Vec<Vec<usize>> = simple_paths(g, ext.u, ext.v);
                    p.iter_mut().for_each(|x| x.sort_unstable());
                    if !p.contains(&ext.edges) {
                        return fail(j, format!("outer extension {}-{} of fragment {f} is not a simple path", ext.u, ext.v));
                    }
                }
            }
            if let Some(e) = sk.skeleton_edges.iter().find(|&&e| owner[e].is_none()) {
                return fail(j, format!("skeleton edge {e} in no inner segment"));
            }
            levels += 1;
        }
    }
    Ok(format!("{levels} levels checked"))
}

fn rounding(corpus: &[Solved]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut done = 0;
    let mut tries = 0;
    while done < ROUNDING_VECTORS {
        tries += 1;
        let c = &corpus[rng.gen_range(0..corpus.len())];
        let (g, d) = (&c.inst.graph, &c.prep.decomposition);
        let j = rng.gen_range(0..d.depth());
        let at = active_at(&c.inst, &c.prep, j);
        let sk = build_skeleton(g, &c.prep.tree, d, j);
        if at.is_empty() || sk.skeleton_edges.is_empty() {
            continue;
        }
        let segs = compress_segments(g, d, &sk);
        let b_max = at.iter().map(|&i| c.inst.buyers[i].budget.clone()).max().unwrap();
        let grid = make_grids(g.edge_count(), &b_max, at.len()).unwrap();
        // terminals moved onto the skeleton
        let buyers: Vec<Buyer<Rational>> = at
            .iter()
            .map(|&i| {
                let b = &c.inst.buyers[i];
                Buyer::new(sk.repr[b.s], sk.repr[b.t], b.budget.clone())
            })
            .collect();
        let all: Vec<usize> = (0..buyers.len()).collect();
        let prices: Vec<Rational> = (0..g.edge_count())
            .map(|e| {
                if !sk.is_skeleton_edge[e] {
                    return r(0);
                }
                match rng.gen_range(0..4) {
                    0 => r(0),
                    1 => Rational::new(1.into(), rng.gen_range(1000..1_000_000i64).into()),
                    _ => Rational::new(rng.gen_range(0..=24i64).into(), rng.gen_range(1..=7i64).into()),
                }
            })
            .collect();
        let before = revenue_restricted(g, &prices, &buyers, &all);
        let after_prices = round_prices(g, &prices, &segs, &grid, &b_max);
        for (si, s) in segs.segments.iter().enumerate() {
            let len = segment_length(g, &after_prices, s);
            if !grid.p.contains(&len) {
                return Err(format!("segment {si} has length {len} off the grid"));
            }
        }
        let after = revenue_restricted(g, &after_prices, &buyers, &all);
        let bound = before.clone() / r(2) - b_max.clone() / r(ROUNDING_ADDITIVE);
        if after < bound {
            return Err(format!("rounded revenue {after} below {bound} (from {before})"));
        }
        done += 1;
    }
    Ok(format!("{done} vectors ({tries} draws)"))
}

fn assembly_validity(corpus: &[Solved]) -> Outcome {
    let (mut runs, mut tested, mut coarse) = (0, 0, 0);
    for (seed, c) in corpus.iter().enumerate() {
        let (g, d) = (&c.inst.graph, &c.prep.decomposition);
        for j in 0..d.depth() {
            let at = active_at(&c.inst, &c.prep, j);
            if at.is_empty() {
                continue;
            }
            let sk = build_skeleton(g, &c.prep.tree, d, j);
            let segs = compress_segments(g, d, &sk);
            let sol = solve_skeleton(g, &c.prep.tree, d, &sk, &segs, &c.inst.buyers, &c.prep.levels, &SkeletonConfig::default())
                .map_err(|e| format!("seed {seed} level {j}: {e}"))?;
            if !check_validity(g, &segs, &sol.prices, &sol.chosen) {
                return Err(format!("seed {seed} level {j}: invalid combination"));
            }
            let revenue = revenue_restricted(g, &sol.prices, &c.inst.buyers, &at);
            if sol.score >= sol.b_max.clone() / r(OVERPRICING_THRESHOLD) {
                tested += 1;
                if revenue.clone() * r(OVERPRICING_FACTOR) < sol.score {
                    return Err(format!("seed {seed} level {j}: revenue {revenue} < score {} / {OVERPRICING_FACTOR}", sol.score));
                }
            }
            runs += 1;
            coarse += usize::from(sol.coarsening > 0);
        }
    }
    Ok(format!("{runs} runs valid, {tested} above threshold, {coarse} on coarsened grids"))
}

fn envy_freeness(corpus: &[Solved]) -> Outcome {
    let mut buyers = 0;
    for (seed, c) in corpus.iter().enumerate().filter(|(_, c)| c.inst.graph.edge_count() <= PATH_CHECK_EDGES) {
        let g = &c.inst.graph;
        let prices = &c.sol.prices;
        let alloc = allocate(g, prices, &c.inst.buyers);
        for (i, (b, p)) in c.inst.buyers.iter().zip(&alloc.purchases).enumerate() {
            let paths = simple_paths(g, b.s, b.t);
            let best = paths.iter().map(|p| cost(prices, p)).min().expect("connected");
            match p {
                Purchase::Bought { path, paid } => {
                    let mut sorted = path.clone();
                    sorted.sort_unstable();
                    let is_path = paths.iter().any(|q| {
                        let mut q = q.clone();
                        q.sort_unstable();
                        q == sorted
                    });
                    if !is_path || cost(prices, path) != *paid || *paid != best || best > b.budget {
                        return Err(format!("seed {seed} buyer {i}: bought {path:?} for {paid}, cheapest {best}, budget {}", b.budget));
                    }
                }
                Purchase::Nothing => {
                    if best <= b.budget {
                        return Err(format!("seed {seed} buyer {i}: left out with affordable path at {best}"));
                    }
                }
            }
            buyers += 1;
        }
    }
    Ok(format!("{buyers} buyers envy-free"))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
    });
    match outcome {
        Ok(msg) => {
            println!("PASS {id} {name}: {msg}");
            true
        }
        Err(msg) => {
            println!("FAIL {id} {name}: {msg}");
            false
        }
    }
}

fn main() {
    let start = Instant::now();
    let corpus = corpus();
    let solve_time = start.elapsed();
    let results = [
        run(1, "rooted solver exactness", rooted_exactness),
        run(2, "end-to-end guarantee", || guarantee(&corpus, solve_time)),
        run(3, "non-skeleton factor", || nonskeleton_factor(&corpus)),
        run(4, "decomposition invariants", decomposition_invariants),
        run(5, "skeleton structure", || skeleton_structure(&corpus)),
        run(6, "rounding", || rounding(&corpus)),
        run(7, "assembly validity", || assembly_validity(&corpus)),
        run(8, "envy-freeness", || envy_freeness(&corpus)),
    ];
    if results.iter().any(|ok| !ok) {
        std::process::exit(1);
    }
}
