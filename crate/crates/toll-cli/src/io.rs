//! JSON instance and solution files. Numbers are exact: integers or
//! `"p/q"` strings, written in lowest terms.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use toll_core::evaluator::{allocate, Purchase};
use toll_core::graph::InstanceError;
use toll_core::{Buyer, CactusGraph, Instance, Rational};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad number {0:?}")]
    Number(String),
    #[error(transparent)]
    Invalid(#[from] InstanceError),
}

/// An exact number as it appears in a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Int(i64),
    Text(String),
}

impl Num {
    pub fn parse(&self) -> Result<Rational, FileError> {
        match self {
            Num::Int(n) => Ok(Rational::from_integer((*n).into())),
            Num::Text(s) => Rational::from_str(s.trim()).map_err(|_| FileError::Number(s.clone())),
        }
    }
}

pub fn num(x: &Rational) -> String {
    x.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerEntry {
    pub s: usize,
    pub t: usize,
    pub budget: Num,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    pub buyers: Vec<BuyerEntry>,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self, FileError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Parses numbers and validates the graph and buyers.
    pub fn to_instance(&self) -> Result<Instance, FileError> {
        let graph = CactusGraph::new(self.vertices, self.edges.iter().map(|e| (e[0], e[1])).collect()).map_err(InstanceError::from)?;
        let buyers = self.buyers.iter().map(|b| Ok(Buyer::new(b.s, b.t, b.budget.parse()?))).collect::<Result<Vec<_>, FileError>>()?;
        Ok(Instance::new(graph, buyers)?)
    }

    pub fn from_instance(inst: &Instance) -> Self {
        InstanceFile {
            vertices: inst.graph.vertex_count(),
            edges: inst.graph.edges().iter().map(|&(a, b)| [a, b]).collect(),
            buyers: inst
                .buyers
                .iter()
                .map(|b| BuyerEntry {
                    s: b.s,
                    t: b.t,
                    budget: if b.budget.is_integer() && b.budget.numer().bits() < 63 {
                        Num::Int(b.budget.numer().try_into().expect("fits in i64"))
                    } else {
                        Num::Text(num(&b.budget))
                    },
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AllocationEntry {
    Bought { buyer: usize, path: Vec<usize>, paid: String },
    Nothing { buyer: usize, buys: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub prices: Vec<String>,
    pub revenue: String,
    pub level: Option<usize>,
    pub subproblem: Option<String>,
    pub allocation: Vec<AllocationEntry>,
}

impl SolutionFile {
    pub fn new(inst: &Instance, prices: &[Rational], winner: Option<(usize, String)>) -> Self {
        let alloc = allocate(&inst.graph, prices, &inst.buyers);
        SolutionFile {
            prices: prices.iter().map(num).collect(),
            revenue: num(&alloc.revenue),
            level: winner.as_ref().map(|w| w.0),
            subproblem: winner.map(|w| w.1),
            allocation: alloc
                .purchases
                .iter()
                .enumerate()
                .map(|(i, p)| match p {
                    Purchase::Bought { path, paid } => AllocationEntry::Bought { buyer: i, path: path.clone(), paid: num(paid) },
                    Purchase::Nothing => AllocationEntry::Nothing { buyer: i, buys: "nothing".into() },
                })
                .collect(),
        }
    }

    pub fn parsed_prices(&self) -> Result<Vec<Rational>, FileError> {
        self.prices.iter().map(|p| Num::Text(p.clone()).parse()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_parse_exactly() {
        assert_eq!(Num::Int(3).parse().unwrap(), Rational::from_integer(3.into()));
        assert_eq!(Num::Text("6/4".into()).parse().unwrap(), Rational::new(3.into(), 2.into()));
        assert!(Num::Text("1.5".into()).parse().is_err());
        assert_eq!(num(&Rational::new(6.into(), 4.into())), "3/2");
    }

    #[test]
    fn instance_round_trip() {
        let text = r#"{"vertices":3,"edges":[[0,1],[1,2],[2,0]],"buyers":[{"s":0,"t":2,"budget":"5/2"},{"s":1,"t":2,"budget":4}]}"#;
        let file = InstanceFile::from_json(text).unwrap();
        let inst = file.to_instance().unwrap();
        let back = InstanceFile::from_instance(&inst);
        assert_eq!(back, file);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn k4_is_rejected() {
        let text = r#"{"vertices":4,"edges":[[0,1],[0,2],[0,3],[1,2],[1,3],[2,3]],"buyers":[]}"#;
        let err = InstanceFile::from_json(text).unwrap().to_instance().unwrap_err();
        assert!(matches!(err, FileError::Invalid(InstanceError::Graph(toll_core::CactusError::NotCactus(_)))));
    }

    #[test]
    fn solution_round_trip() {
        let text = r#"{"vertices":2,"edges":[[0,1]],"buyers":[{"s":0,"t":1,"budget":3},{"s":1,"t":0,"budget":1}]}"#;
        let inst = InstanceFile::from_json(text).unwrap().to_instance().unwrap();
        let prices = vec![Rational::from_integer(3.into())];
        let sol = SolutionFile::new(&inst, &prices, Some((0, "skeleton".into())));
        let json = serde_json::to_string(&sol).unwrap();
        let back: SolutionFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sol);
        assert_eq!(back.parsed_prices().unwrap(), prices);
        assert_eq!(sol.revenue, "3");
        assert!(matches!(sol.allocation[1], AllocationEntry::Nothing { .. }));
    }
}
