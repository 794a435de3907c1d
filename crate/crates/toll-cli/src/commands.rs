//! The subcommands, as functions from arguments to output text.

use std::fmt::Write as _;
use std::time::Instant;

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use toll_core::decomposition::check_invariants;
use toll_core::engine::{prepare, solve_prepared, EngineConfig, EngineError};
use toll_core::generator::{random_cactus, random_instance, GenParams};
use toll_core::oracle::{oracle_grid, GridSpec, OracleError};
use toll_core::skeleton::{build_skeleton, compress_segments};
use toll_core::{BcTree, Instance, Rational, Scalar};

use crate::io::{num, FileError, InstanceFile, SolutionFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("guarantee violated: {0}")]
    Guarantee(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } | CliError::File(FileError::Json(_)) | CliError::File(FileError::Number(_)) => 2,
            _ => 1,
        }
    }
}

pub fn read_instance(path: &str) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Ok(InstanceFile::from_json(&text)?.to_instance()?)
}

pub fn check(path: &str) -> Result<String, CliError> {
    let inst = read_instance(path)?;
    Ok(format!("ok: {} vertices, {} edges, {} buyers\n", inst.graph.vertex_count(), inst.graph.edge_count(), inst.buyers.len()))
}

pub fn solve(inst: &Instance) -> Result<SolutionFile, CliError> {
    let prep = prepare(inst);
    let sol = solve_prepared(inst, &prep, &EngineConfig::default())?;
    Ok(SolutionFile::new(inst, &sol.prices, sol.winner.map(|(j, s)| (j, s.to_string()))))
}

pub fn gen(p: &GenParams) -> Result<String, CliError> {
    if p.edges == 0 || !(0.0..=1.0).contains(&p.cycle_prob) || p.max_budget == 0 {
        return Err(CliError::Usage("need edges ≥ 1, max budget ≥ 1 and cycle probability in [0, 1]".into()));
    }
    let inst = random_instance::<Rational>(p);
    Ok(serde_json::to_string(&InstanceFile::from_instance(&inst)).expect("serializable") + "\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GridKind {
    Default,
    Budgets,
}

/// Algorithm against grid oracle on one instance.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub alg: Rational,
    pub oracle: Rational,
    pub levels: usize,
    pub holds: bool,
    pub millis: u128,
}

impl Comparison {
    /// `oracle / alg`, or `-` when the algorithm earns nothing.
    pub fn ratio(&self) -> String {
        if self.alg.is_zero() {
            "-".into()
        } else {
            num(&(self.oracle.clone() / self.alg.clone()))
        }
    }
}

/// Factor of the end-to-end guarantee, per level.
pub const GUARANTEE_FACTOR: i64 = 2048 + 4;

pub fn compare_instance(inst: &Instance, grid: GridKind, max_space: u128) -> Result<Comparison, CliError> {
    let start = Instant::now();
    let prep = prepare(inst);
    let sol = solve_prepared(inst, &prep, &EngineConfig::default())?;
    let m = inst.graph.edge_count();
    let spec = match grid {
        GridKind::Default => GridSpec::default_for(m, &inst.buyers),
        GridKind::Budgets => GridSpec::budgets_for(m, &inst.buyers),
    };
    let oracle = oracle_grid(&inst.graph, &inst.buyers, &spec, &[], max_space)?.revenue;
    let levels = sol.depth;
    let holds = sol.revenue.clone() * Rational::from_int(GUARANTEE_FACTOR) * Rational::from_count(levels) >= oracle;
    Ok(Comparison { alg: sol.revenue, oracle, levels, holds, millis: start.elapsed().as_millis() })
}

pub const COMPARE_HEADER: &str = "instance,alg,oracle,ratio,levels,runtime_ms";

pub fn compare(path: &str, grid: GridKind, max_space: u128) -> Result<String, CliError> {
    let inst = read_instance(path)?;
    let c = compare_instance(&inst, grid, max_space)?;
    let row = format!("{path},{},{},{},{},{}", num(&c.alg), num(&c.oracle), c.ratio(), c.levels, c.millis);
    if !c.holds {
        return Err(CliError::Guarantee(row));
    }
    Ok(format!("{COMPARE_HEADER}\n{row}\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Small,
    Decomp,
}

pub const SMALL_HEADER: &str = "seed,edges,buyers,levels,alg,oracle,ratio,holds";
pub const DECOMP_HEADER: &str = "seed,edges,k,levels,max_children,max_borders,violations";

/// Instances of the `small` suite.
pub fn small_corpus() -> Vec<GenParams> {
    (0..20u64).map(|seed| GenParams { edges: 3 + (seed as usize % 6), buyers: 3, max_budget: 6, cycle_prob: 0.5, seed }).collect()
}

/// Returns the CSV text and whether every row passed.
pub fn bench(suite: Suite) -> Result<(String, bool), CliError> {
    let mut out = String::new();
    let mut ok = true;
    match suite {
        Suite::Small => {
            out.push_str(SMALL_HEADER);
            out.push('\n');
            for p in small_corpus() {
                let inst = random_instance::<Rational>(&p);
                let c = compare_instance(&inst, GridKind::Default, u128::MAX)?;
                ok &= c.holds;
                writeln!(out, "{},{},{},{},{},{},{},{}", p.seed, p.edges, p.buyers, c.levels, num(&c.alg), num(&c.oracle), c.ratio(), c.holds).unwrap();
            }
        }
        Suite::Decomp => {
            out.push_str(DECOMP_HEADER);
            out.push('\n');
            for seed in 0..50u64 {
                let m = 20 + (seed as usize * 37) % 181;
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
                let g = random_cactus(&mut rng, m, 0.5);
                let tree = BcTree::build(&g, 0);
                let d = toll_core::decomposition::build_decomposition(&g, &tree);
                let (violations, stats) = check_invariants(&g, &tree, &d);
                ok &= violations.is_empty();
                writeln!(out, "{seed},{m},{},{},{},{},{}", stats.k, stats.depth, stats.max_children, stats.max_borders, violations.len()).unwrap();
            }
        }
    }
    Ok((out, ok))
}

#[derive(Debug, Serialize)]
struct FragmentDump {
    edges: Vec<usize>,
    borders: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct SegmentDump {
    edges: Vec<usize>,
    ends: [usize; 2],
    cyclic: bool,
    fragment: usize,
}

#[derive(Debug, Serialize)]
struct LevelDump {
    level: usize,
    fragments: Vec<FragmentDump>,
    skeleton_edges: Vec<usize>,
    segments: Vec<SegmentDump>,
    buyers: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct InspectDump {
    k: usize,
    levels: Vec<LevelDump>,
}

/// Decomposition, skeletons and buyer levels as JSON.
pub fn inspect(inst: &Instance) -> String {
    let g = &inst.graph;
    let prep = prepare(inst);
    let d = &prep.decomposition;
    let levels = (0..d.depth())
        .map(|j| {
            let level = &d.levels[j];
            let sk = build_skeleton(g, &prep.tree, d, j);
            let segs = compress_segments(g, d, &sk);
            LevelDump {
                level: j,
                fragments: (0..level.fragments.len())
                    .map(|f| FragmentDump {
                        edges: level.fragments[f].clone(),
                        borders: level.fragment_vertices(g, f).into_iter().filter(|&v| level.is_border[v]).collect(),
                    })
                    .collect(),
                skeleton_edges: sk.skeleton_edges.clone(),
                segments: segs
                    .segments
                    .iter()
                    .map(|s| SegmentDump { edges: s.edges.clone(), ends: [s.l, s.r], cyclic: s.cyclic, fragment: s.fragment })
                    .collect(),
                buyers: prep.levels.buyers_at_level[j].clone(),
            }
        })
        .collect();
    serde_json::to_string_pretty(&InspectDump { k: d.k, levels }).expect("serializable") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use toll_core::{Buyer, CactusGraph};

    #[test]
    fn triangle_comparison_holds() {
        let g = CactusGraph::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let inst = Instance::new(g, vec![Buyer::new(0, 1, Rational::from_int(4))]).unwrap();
        let c = compare_instance(&inst, GridKind::Default, u128::MAX).unwrap();
        assert!(c.holds);
        assert!(c.alg <= c.oracle);
    }

    #[test]
    fn empty_buyers_compare_to_zero() {
        let g = CactusGraph::new(2, vec![(0, 1)]).unwrap();
        let inst = Instance::new(g, vec![]).unwrap();
        let c = compare_instance(&inst, GridKind::Budgets, u128::MAX).unwrap();
        assert!(c.alg.is_zero() && c.oracle.is_zero() && c.holds);
        assert_eq!(c.ratio(), "-");
    }

    #[test]
    fn guard_trip_is_reported() {
        let p = GenParams { edges: 8, buyers: 4, max_budget: 6, cycle_prob: 0.5, seed: 3 };
        let inst = random_instance::<Rational>(&p);
        let err = compare_instance(&inst, GridKind::Default, 1).unwrap_err();
        assert!(matches!(err, CliError::Oracle(OracleError::TooLarge { .. })));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn inspect_lists_every_level() {
        let p = GenParams { edges: 7, buyers: 2, max_budget: 4, cycle_prob: 0.5, seed: 1 };
        let inst = random_instance::<Rational>(&p);
        let v: serde_json::Value = serde_json::from_str(&inspect(&inst)).unwrap();
        assert_eq!(v["levels"].as_array().unwrap().len(), prepare(&inst).decomposition.depth());
    }
}
