//! Critical vector graphs: the per-function accumulation of many faulty-run
//! diffs. Each edge keeps the vector of its per-run diff weights together with
//! frequency, maximum, mean and a normalised criticality score.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::DiffLsg;
use crate::lsg::EdgeKey;
use crate::node::NodeId;
use crate::trace::BlockAddr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeVector {
    /// One entry per accumulated run, aligned with [`Cvg::run_ids`].
    pub weights: Vec<u64>,
    /// Fraction of runs with a non-zero weight.
    pub freq: f64,
    pub max_w: u64,
    pub mean_w: f64,
    /// `freq * max_w / global_max_w`, or 0 when the whole graph is zero.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cvg {
    pub function_index: usize,
    pub run_ids: Vec<String>,
    pub nodes: BTreeSet<NodeId>,
    pub edges: BTreeMap<EdgeKey, EdgeVector>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CvgError {
    #[error("cannot accumulate an empty list of diffs")]
    EmptyCampaign,
    #[error("diff for function {found} in a CVG of function {expected}")]
    FunctionMismatch { expected: usize, found: usize },
    #[error("invalid CVG for function {function}: {reason}")]
    Invalid { function: usize, reason: String },
}

impl EdgeVector {
    fn from_weights(weights: Vec<u64>) -> Self {
        let n = weights.len() as f64;
        let nonzero = weights.iter().filter(|&&w| w > 0).count();
        let sum: u64 = weights.iter().sum();
        EdgeVector {
            freq: nonzero as f64 / n,
            max_w: weights.iter().copied().max().unwrap_or(0),
            mean_w: sum as f64 / n,
            score: 0.0,
            weights,
        }
    }
}

/// Accumulates per-run diffs of one function, in the given order.
pub fn accumulate<'a, I>(diffs: I) -> Result<Cvg, CvgError>
where
    I: IntoIterator<Item = (&'a str, &'a DiffLsg)>,
{
    let diffs: Vec<(&str, &DiffLsg)> = diffs.into_iter().collect();
    let Some(&(_, first)) = diffs.first() else {
        return Err(CvgError::EmptyCampaign);
    };
    let function_index = first.function_index;
    if let Some(&(_, d)) = diffs
        .iter()
        .find(|(_, d)| d.function_index != function_index)
    {
        return Err(CvgError::FunctionMismatch {
            expected: function_index,
            found: d.function_index,
        });
    }

    let nodes: BTreeSet<NodeId> = diffs
        .iter()
        .flat_map(|(_, d)| d.nodes.iter().copied())
        .collect();
    let keys: BTreeSet<EdgeKey> = diffs
        .iter()
        .flat_map(|(_, d)| d.edges.keys().copied())
        .collect();
    let mut edges: BTreeMap<EdgeKey, EdgeVector> = keys
        .into_iter()
        .map(|k| {
            let weights = diffs
                .iter()
                .map(|(_, d)| d.edges.get(&k).map_or(0, |e| e.weight()))
                .collect();
            (k, EdgeVector::from_weights(weights))
        })
        .collect();
    let global_max = edges.values().map(|v| v.max_w).max().unwrap_or(0);
    if global_max > 0 {
        for v in edges.values_mut() {
            v.score = v.freq * (v.max_w as f64 / global_max as f64);
        }
    }
    Ok(Cvg {
        function_index,
        run_ids: diffs.iter().map(|(id, _)| id.to_string()).collect(),
        nodes,
        edges,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedEdge {
    pub function_index: usize,
    pub from: NodeId,
    pub to: NodeId,
    pub score: f64,
    pub freq: f64,
    pub max_w: u64,
    pub mean_w: f64,
}

/// Score descending, then freq descending, then max weight descending, then
/// function index and edge in canonical order.
pub fn rank_order(a: &RankedEdge, b: &RankedEdge) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.freq.total_cmp(&a.freq))
        .then(b.max_w.cmp(&a.max_w))
        .then(a.function_index.cmp(&b.function_index))
        .then((a.from, a.to).cmp(&(b.from, b.to)))
}

impl Cvg {
    pub fn global_max_w(&self) -> u64 {
        self.edges.values().map(|v| v.max_w).max().unwrap_or(0)
    }

    /// Every edge, in ranking order.
    pub fn ranked_edges(&self) -> Vec<RankedEdge> {
        let mut all: Vec<RankedEdge> = self
            .edges
            .iter()
            .map(|(&(from, to), v)| RankedEdge {
                function_index: self.function_index,
                from,
                to,
                score: v.score,
                freq: v.freq,
                max_w: v.max_w,
                mean_w: v.mean_w,
            })
            .collect();
        all.sort_by(rank_order);
        all
    }

    /// Criticality of a block: the highest score among its incident edges.
    pub fn block_criticality(&self) -> BTreeMap<BlockAddr, f64> {
        let mut out: BTreeMap<BlockAddr, f64> = BTreeMap::new();
        for (&(from, to), v) in &self.edges {
            for n in [from, to] {
                if let NodeId::Block(addr) = n {
                    let slot = out.entry(addr).or_insert(0.0);
                    *slot = slot.max(v.score);
                }
            }
        }
        out
    }

    /// Recomputes every aggregate from the weight vectors and compares.
    pub fn validate(&self) -> Result<(), CvgError> {
        let invalid = |reason: String| {
            Err(CvgError::Invalid {
                function: self.function_index,
                reason,
            })
        };
        let n = self.run_ids.len();
        if n == 0 {
            return invalid("no runs".into());
        }
        let global = self.global_max_w();
        for (&(from, to), v) in &self.edges {
            if v.weights.len() != n {
                return invalid(format!(
                    "edge {from} -> {to} has {} weights for {n} runs",
                    v.weights.len()
                ));
            }
            if !self.nodes.contains(&from) || !self.nodes.contains(&to) {
                return invalid(format!("edge {from} -> {to} references an unknown node"));
            }
            let mut expect = EdgeVector::from_weights(v.weights.clone());
            if global > 0 {
                expect.score = expect.freq * (expect.max_w as f64 / global as f64);
            }
            if &expect != v {
                return invalid(format!(
                    "aggregates of edge {from} -> {to} do not match its weights"
                ));
            }
        }
        Ok(())
    }
}

/// Top `k` edges of one CVG; `k` beyond the edge count returns them all.
pub fn criticality_ranking(cvg: &Cvg, k: usize) -> Vec<RankedEdge> {
    let mut all = cvg.ranked_edges();
    all.truncate(k);
    all
}

#[derive(Serialize, Deserialize)]
struct CvgWire {
    function_index: usize,
    run_ids: Vec<String>,
    nodes: Vec<NodeId>,
    edges: Vec<CvgEdgeWire>,
    global_max_w: u64,
}

#[derive(Serialize, Deserialize)]
struct CvgEdgeWire {
    from: NodeId,
    to: NodeId,
    #[serde(flatten)]
    vector: EdgeVector,
}

impl Serialize for Cvg {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        CvgWire {
            function_index: self.function_index,
            run_ids: self.run_ids.clone(),
            nodes: self.nodes.iter().copied().collect(),
            edges: self
                .edges
                .iter()
                .map(|(&(from, to), v)| CvgEdgeWire {
                    from,
                    to,
                    vector: v.clone(),
                })
                .collect(),
            global_max_w: self.global_max_w(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Cvg {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = CvgWire::deserialize(deserializer)?;
        let mut edges = BTreeMap::new();
        for e in wire.edges {
            if edges.insert((e.from, e.to), e.vector).is_some() {
                return Err(serde::de::Error::custom(format!(
                    "duplicate edge {} -> {}",
                    e.from, e.to
                )));
            }
        }
        let cvg = Cvg {
            function_index: wire.function_index,
            run_ids: wire.run_ids,
            nodes: wire.nodes.into_iter().collect(),
            edges,
        };
        if cvg.global_max_w() != wire.global_max_w {
            return Err(serde::de::Error::custom(
                "global_max_w does not match edges",
            ));
        }
        Ok(cvg)
    }
}
