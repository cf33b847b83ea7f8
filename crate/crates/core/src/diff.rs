//! Golden versus faulty differencing of loop sensitive graphs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lsg::{build_all_lsgs, EdgeKey, Lsg};
use crate::node::NodeId;
use crate::trace::{FunctionRecord, RunTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiffEdge {
    pub golden_count: u64,
    pub faulty_count: u64,
}

impl DiffEdge {
    pub fn weight(&self) -> u64 {
        self.golden_count.abs_diff(self.faulty_count)
    }
}

/// Union of two LSGs of the same function; each edge weight is the absolute
/// difference of execution counts, an edge missing on one side counting 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffLsg {
    pub function_index: usize,
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeMap<EdgeKey, DiffEdge>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiffError {
    #[error("cannot diff function {golden} against function {faulty}")]
    FunctionMismatch { golden: usize, faulty: usize },
    #[error("golden and faulty runs have different symbol tables")]
    SymbolTableMismatch,
    #[error("faulty run `{0}` carries no injection site")]
    MissingInjectionSite(String),
    #[error("invalid diff for function {function}: {reason}")]
    Invalid { function: usize, reason: String },
}

impl DiffLsg {
    pub fn max_weight(&self) -> u64 {
        self.edges.values().map(DiffEdge::weight).max().unwrap_or(0)
    }

    /// `(from, to, weight)` of the heaviest edge, first in canonical order on ties.
    pub fn heaviest_edge(&self) -> Option<(NodeId, NodeId, u64)> {
        self.edges
            .iter()
            .map(|(&(f, t), e)| (f, t, e.weight()))
            .fold(None, |best, cur| match best {
                Some(b) if b.2 >= cur.2 => Some(b),
                _ => Some(cur),
            })
    }

    pub fn is_match(&self) -> bool {
        self.edges.values().all(|e| e.weight() == 0)
    }

    pub fn block_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_block()).count()
    }

    pub fn validate(&self) -> Result<(), DiffError> {
        let invalid = |reason: String| {
            Err(DiffError::Invalid {
                function: self.function_index,
                reason,
            })
        };
        if !self.nodes.contains(&NodeId::Head) || !self.nodes.contains(&NodeId::Tail) {
            return invalid("missing head or tail".into());
        }
        for (&(from, to), e) in &self.edges {
            if e.golden_count == 0 && e.faulty_count == 0 {
                return invalid(format!("edge {from} -> {to} absent from both runs"));
            }
            if !self.nodes.contains(&from) || !self.nodes.contains(&to) {
                return invalid(format!("edge {from} -> {to} references an unknown node"));
            }
        }
        Ok(())
    }
}

pub fn diff_lsg(golden: &Lsg, faulty: &Lsg) -> Result<DiffLsg, DiffError> {
    if golden.function_index != faulty.function_index {
        return Err(DiffError::FunctionMismatch {
            golden: golden.function_index,
            faulty: faulty.function_index,
        });
    }
    let mut edges: BTreeMap<EdgeKey, DiffEdge> = golden
        .edges
        .iter()
        .map(|(&k, &golden_count)| {
            (
                k,
                DiffEdge {
                    golden_count,
                    faulty_count: 0,
                },
            )
        })
        .collect();
    for (&k, &faulty_count) in &faulty.edges {
        edges
            .entry(k)
            .or_insert(DiffEdge {
                golden_count: 0,
                faulty_count: 0,
            })
            .faulty_count = faulty_count;
    }
    Ok(DiffLsg {
        function_index: golden.function_index,
        nodes: golden.nodes.union(&faulty.nodes).copied().collect(),
        edges,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Match,
    Differ,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionStatus {
    pub function_index: usize,
    pub name: String,
    pub status: Status,
    pub is_injection_site: bool,
}

/// Status for one function from its diff. Since absent edges count as zero,
/// any topology change yields a non-zero weight and therefore `Differ`.
pub fn status_of(diff: &DiffLsg) -> Status {
    if diff.is_match() {
        Status::Match
    } else {
        Status::Differ
    }
}

/// One status per function of the faulty run, in definition order.
pub fn function_statuses(
    golden_run: &RunTrace,
    faulty_run: &RunTrace,
) -> Result<Vec<FunctionStatus>, DiffError> {
    let site = faulty_run
        .injection
        .ok_or_else(|| DiffError::MissingInjectionSite(faulty_run.run_id.clone()))?;
    let diffs = diff_runs(golden_run, faulty_run)?;
    statuses_from_diffs(&faulty_run.symbols, site.function_index, &diffs)
}

/// Per-function diffs of two runs of the same program.
pub fn diff_runs(
    golden_run: &RunTrace,
    faulty_run: &RunTrace,
) -> Result<BTreeMap<usize, DiffLsg>, DiffError> {
    if golden_run.symbols != faulty_run.symbols {
        return Err(DiffError::SymbolTableMismatch);
    }
    let golden = build_all_lsgs(golden_run);
    let faulty = build_all_lsgs(faulty_run);
    golden
        .iter()
        .map(|(&f, g)| diff_lsg(g, &faulty[&f]).map(|d| (f, d)))
        .collect()
}

pub fn statuses_from_diffs(
    symbols: &[FunctionRecord],
    injection_function: usize,
    diffs: &BTreeMap<usize, DiffLsg>,
) -> Result<Vec<FunctionStatus>, DiffError> {
    symbols
        .iter()
        .map(|sym| {
            let diff = diffs
                .get(&sym.index)
                .ok_or(DiffError::SymbolTableMismatch)?;
            Ok(FunctionStatus {
                function_index: sym.index,
                name: sym.name.clone(),
                status: status_of(diff),
                is_injection_site: sym.index == injection_function,
            })
        })
        .collect()
}

pub fn affected_count(statuses: &[FunctionStatus]) -> usize {
    statuses
        .iter()
        .filter(|s| s.status == Status::Differ)
        .count()
}

#[derive(Serialize, Deserialize)]
struct DiffWire {
    function_index: usize,
    nodes: Vec<NodeId>,
    edges: Vec<DiffEdgeWire>,
    max_weight: u64,
}

#[derive(Serialize, Deserialize)]
struct DiffEdgeWire {
    from: NodeId,
    to: NodeId,
    weight: u64,
    golden_count: u64,
    faulty_count: u64,
}

impl Serialize for DiffLsg {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DiffWire {
            function_index: self.function_index,
            nodes: self.nodes.iter().copied().collect(),
            edges: self
                .edges
                .iter()
                .map(|(&(from, to), e)| DiffEdgeWire {
                    from,
                    to,
                    weight: e.weight(),
                    golden_count: e.golden_count,
                    faulty_count: e.faulty_count,
                })
                .collect(),
            max_weight: self.max_weight(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DiffLsg {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = DiffWire::deserialize(deserializer)?;
        let mut edges = BTreeMap::new();
        for e in wire.edges {
            let edge = DiffEdge {
                golden_count: e.golden_count,
                faulty_count: e.faulty_count,
            };
            if edge.weight() != e.weight {
                return Err(D::Error::custom(format!(
                    "edge {} -> {}: weight {} but |{} - {}| = {}",
                    e.from,
                    e.to,
                    e.weight,
                    e.golden_count,
                    e.faulty_count,
                    edge.weight()
                )));
            }
            if edges.insert((e.from, e.to), edge).is_some() {
                return Err(D::Error::custom(format!(
                    "duplicate edge {} -> {}",
                    e.from, e.to
                )));
            }
        }
        let diff = DiffLsg {
            function_index: wire.function_index,
            nodes: wire.nodes.into_iter().collect(),
            edges,
        };
        if diff.max_weight() != wire.max_weight {
            return Err(D::Error::custom("max_weight does not match edges"));
        }
        Ok(diff)
    }
}
