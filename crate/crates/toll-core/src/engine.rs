//! The full pipeline: decompose, price every level's skeleton and
//! non-skeleton parts separately, keep the best price vector overall.

use thiserror::Error;

use crate::decomposition::{assign_buyers, build_decomposition, BuyerLevels, Decomposition};
use crate::evaluator::revenue;
use crate::graph::{BcTree, CactusInstance};
use crate::nonskeleton::solve_nonskeleton;
use crate::scalar::Scalar;
use crate::skeleton::{build_skeleton, compress_segments};
use crate::skeleton_solver::{solve_skeleton, SkeletonConfig, SkeletonError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("skeleton pricing at level {level}: {source}")]
    Skeleton { level: usize, source: SkeletonError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subproblem {
    Skeleton,
    NonSkeleton,
}

impl std::fmt::Display for Subproblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Subproblem::Skeleton => "skeleton",
            Subproblem::NonSkeleton => "non-skeleton",
        })
    }
}

/// Candidates of one level, each evaluated on every buyer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelReport<T> {
    pub level: usize,
    /// Number of active buyers assigned to the level.
    pub buyers: usize,
    pub skeleton: Option<T>,
    pub nonskeleton: Option<T>,
    /// Grid coarsening steps used by the skeleton solver.
    pub coarsening: usize,
    /// Skeleton combination passed the validity recheck.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Solution<T> {
    pub prices: Vec<T>,
    pub revenue: T,
    /// Level and subproblem of the winning candidate; `None` when no level
    /// has buyers.
    pub winner: Option<(usize, Subproblem)>,
    pub levels: Vec<LevelReport<T>>,
    /// Number of levels `L`.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EngineConfig {
    pub skeleton: SkeletonConfig,
}

/// Decomposition and buyer assignment shared by the solvers.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub tree: BcTree,
    pub decomposition: Decomposition,
    pub levels: BuyerLevels,
}

pub fn prepare<T: Scalar>(inst: &CactusInstance<T>) -> Prepared {
    let tree = BcTree::build(&inst.graph, 0);
    let decomposition = build_decomposition(&inst.graph, &tree);
    let levels = assign_buyers(&inst.graph, &decomposition, &inst.buyers);
    Prepared { tree, decomposition, levels }
}

pub fn solve<T: Scalar>(inst: &CactusInstance<T>, config: &EngineConfig) -> Result<Solution<T>, EngineError> {
    let prep = prepare(inst);
    solve_prepared(inst, &prep, config)
}

pub fn solve_prepared<T: Scalar>(inst: &CactusInstance<T>, prep: &Prepared, config: &EngineConfig) -> Result<Solution<T>, EngineError> {
    let g = &inst.graph;
    let d = &prep.decomposition;
    let depth = d.depth();
    let mut best: Option<(T, Vec<T>, usize, Subproblem)> = None;
    let mut reports = Vec::new();
    let mut offer = |rev: T, prices: Vec<T>, level: usize, sub: Subproblem| {
        if best.as_ref().is_none_or(|(b, ..)| rev > *b) {
            best = Some((rev, prices, level, sub));
        }
    };
    for j in 0..depth {
        let active = prep.levels.buyers_at_level[j].iter().filter(|&&i| inst.buyers[i].is_active()).count();
        if active == 0 {
            continue;
        }
        let sk = build_skeleton(g, &prep.tree, d, j);
        let segs = compress_segments(g, d, &sk);
        let sol = solve_skeleton(g, &prep.tree, d, &sk, &segs, &inst.buyers, &prep.levels, &config.skeleton)
            .map_err(|source| EngineError::Skeleton { level: j, source })?;
        let sk_rev = revenue(g, &sol.prices, &inst.buyers);
        let mut report =
            LevelReport { level: j, buyers: active, skeleton: Some(sk_rev.clone()), nonskeleton: None, coarsening: sol.coarsening, valid: sol.valid };
        offer(sk_rev, sol.prices, j, Subproblem::Skeleton);
        if j + 1 < depth {
            let plan = solve_nonskeleton(g, d, &sk, &inst.buyers, &prep.levels);
            let ns_rev = revenue(g, &plan.prices, &inst.buyers);
            report.nonskeleton = Some(ns_rev.clone());
            offer(ns_rev, plan.prices, j, Subproblem::NonSkeleton);
        }
        reports.push(report);
    }
    Ok(match best {
        Some((revenue, prices, level, sub)) => Solution { prices, revenue, winner: Some((level, sub)), levels: reports, depth },
        None => Solution { prices: vec![T::zero(); g.edge_count()], revenue: T::zero(), winner: None, levels: reports, depth },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Buyer, CactusGraph};
    use crate::Rational;

    fn r(n: i64) -> Rational {
        Rational::from_int(n)
    }

    #[test]
    fn single_edge_sells_at_budget() {
        let g = CactusGraph::new(2, vec![(0, 1)]).unwrap();
        let inst = CactusInstance::new(g, vec![Buyer::new(0, 1, r(7))]).unwrap();
        let sol = solve(&inst, &EngineConfig::default()).unwrap();
        assert_eq!(sol.revenue, r(7));
        assert_eq!(sol.prices, vec![r(7)]);
    }

    #[test]
    fn no_buyers_no_revenue() {
        let g = CactusGraph::new(3, vec![(0, 1), (1, 2), (2, 0)]).unwrap();
        let inst: CactusInstance<Rational> = CactusInstance::new(g, vec![]).unwrap();
        let sol = solve(&inst, &EngineConfig::default()).unwrap();
        assert_eq!(sol.revenue, r(0));
        assert_eq!(sol.winner, None);
        assert!(sol.levels.is_empty());
    }

    #[test]
    fn revenue_is_the_best_candidate() {
        let p = crate::generator::GenParams { edges: 9, buyers: 4, max_budget: 6, cycle_prob: 0.5, seed: 5 };
        let inst = crate::generator::random_instance::<Rational>(&p);
        let a = solve(&inst, &EngineConfig::default()).unwrap();
        let b = solve(&inst, &EngineConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.revenue, revenue(&inst.graph, &a.prices, &inst.buyers));
        for l in &a.levels {
            assert!(l.skeleton.iter().chain(l.nonskeleton.iter()).all(|x| *x <= a.revenue));
        }
    }
}
